use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::Plane;
use crate::error::{Error, Result};

pub const BLOCK: usize = 8;

/// Block-DCT uniform quantizer standing in for a real encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecProxyConfig {
    pub qp: u32,
}

impl CodecProxyConfig {
    pub fn new(qp: u32) -> Result<Self> {
        if qp > 63 {
            return Err(Error::InvalidConfig(format!("qp {qp} out of range 0..=63")));
        }
        Ok(CodecProxyConfig { qp })
    }

    /// `2^((qp - 4) / 6)`: the step doubles every 6 QP and is 1 at QP 4.
    pub fn qstep(&self) -> f64 {
        ((self.qp as f64 - 4.0) / 6.0).exp2()
    }
}

/// Orthonormal DCT-II basis, `basis[k][n]`.
fn basis() -> &'static [[f64; BLOCK]; BLOCK] {
    static B: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    B.get_or_init(|| {
        let mut b = [[0.0; BLOCK]; BLOCK];
        let n = BLOCK as f64;
        for (k, row) in b.iter_mut().enumerate() {
            let a = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for (i, v) in row.iter_mut().enumerate() {
                *v = a * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * n)).cos();
            }
        }
        b
    })
}

type Block = [[f64; BLOCK]; BLOCK];

pub fn dct2(x: &Block) -> Block {
    let b = basis();
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    for (r, row) in x.iter().enumerate() {
        for k in 0..BLOCK {
            tmp[r][k] = (0..BLOCK).map(|i| b[k][i] * row[i]).sum();
        }
    }
    let mut out = [[0.0; BLOCK]; BLOCK];
    for k in 0..BLOCK {
        for c in 0..BLOCK {
            out[k][c] = (0..BLOCK).map(|r| b[k][r] * tmp[r][c]).sum();
        }
    }
    out
}

pub fn idct2(c: &Block) -> Block {
    let b = basis();
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    for r in 0..BLOCK {
        for i in 0..BLOCK {
            tmp[r][i] = (0..BLOCK).map(|k| b[k][i] * c[r][k]).sum();
        }
    }
    let mut out = [[0.0; BLOCK]; BLOCK];
    for r in 0..BLOCK {
        for c2 in 0..BLOCK {
            out[r][c2] = (0..BLOCK).map(|k| b[k][r] * tmp[k][c2]).sum();
        }
    }
    out
}

fn code_block(pixels: &Block, qstep: f64) -> [[u8; BLOCK]; BLOCK] {
    let mut s = *pixels;
    s.iter_mut().flatten().for_each(|v| *v -= 128.0);
    let mut c = dct2(&s);
    c.iter_mut().flatten().for_each(|v| *v = (*v / qstep).round() * qstep);
    let r = idct2(&c);
    let mut out = [[0u8; BLOCK]; BLOCK];
    for (o, v) in out.iter_mut().flatten().zip(r.iter().flatten()) {
        *o = (v + 128.0).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Symmetric reflection of an out-of-range index into `0..len`.
fn reflect(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let m = i % period;
    if m < len {
        m
    } else {
        period - m
    }
}

/// Samples of one block, `w`×`h` valid entries in row-major order.
type Tile = Vec<u8>;

/// One quantization pass over a (possibly partial) block. Partial blocks are
/// reflect-padded from their own samples to 8×8 and cropped afterwards.
fn code_tile(tile: &[u8], w: usize, h: usize, qstep: f64) -> Tile {
    let mut px = [[0.0; BLOCK]; BLOCK];
    for (r, row) in px.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = f64::from(tile[reflect(r, h) * w + reflect(c, w)]);
        }
    }
    let coded = code_block(&px, qstep);
    (0..h).flat_map(|r| coded[r][..w].to_vec()).collect()
}

/// Iterations allowed while looking for a repeated state.
const MAX_ROUNDS: usize = 256;

/// Iterates [`code_tile`] until a state repeats and returns the smallest
/// member of the cycle reached. Every member of a cycle leads to the same
/// cycle, so applying this twice gives the same result as applying it once.
fn settle_tile(tile: &[u8], w: usize, h: usize, qstep: f64) -> Tile {
    let mut seen: Vec<Tile> = vec![code_tile(tile, w, h, qstep)];
    for _ in 0..MAX_ROUNDS {
        let next = code_tile(seen.last().expect("non-empty"), w, h, qstep);
        if let Some(start) = seen.iter().position(|t| *t == next) {
            return seen.drain(start..).min().expect("cycle non-empty");
        }
        seen.push(next);
    }
    // Cycles that long have not been observed; fall back to the last pass.
    seen.pop().expect("non-empty")
}

/// Degrades `plane` block by block: level shift, orthonormal 8×8 DCT,
/// uniform quantization with step [`CodecProxyConfig::qstep`], inverse DCT,
/// rounding and clamping to 8 bits. Border blocks of planes whose sides are
/// not multiples of 8 are reflect-padded and cropped back.
///
/// Rounding and clamping can move a decoded block off the quantization
/// lattice, so a single pass is not idempotent. Each block is therefore
/// re-coded until it settles on a fixed point or a short cycle, and a
/// canonical member of that cycle is kept; as a result
/// `codec_proxy(codec_proxy(x)) == codec_proxy(x)`.
pub fn codec_proxy(plane: &Plane<u8>, cfg: &CodecProxyConfig) -> Plane<u8> {
    run_blocks(plane, cfg, settle_tile)
}

/// A single quantization pass, without settling.
pub fn code_once(plane: &Plane<u8>, cfg: &CodecProxyConfig) -> Plane<u8> {
    run_blocks(plane, cfg, code_tile)
}

fn run_blocks(
    plane: &Plane<u8>,
    cfg: &CodecProxyConfig,
    f: fn(&[u8], usize, usize, f64) -> Tile,
) -> Plane<u8> {
    let (w, h) = (plane.width(), plane.height());
    let qstep = cfg.qstep();
    let mut out = plane.clone();
    for y0 in (0..h).step_by(BLOCK) {
        for x0 in (0..w).step_by(BLOCK) {
            let (bw, bh) = (BLOCK.min(w - x0), BLOCK.min(h - y0));
            let tile = plane.crop(x0, y0, bw, bh).expect("block inside plane");
            let coded = f(tile.data(), bw, bh, qstep);
            for (i, &v) in coded.iter().enumerate() {
                out.set(x0 + i % bw, y0 + i / bw, v);
            }
        }
    }
    out
}
