//! Binary model checkpoints.
//!
//! Layout (all integers u32 little-endian, floats f32 little-endian):
//!
//! ```text
//! "MSCN" version
//! sha256(config toml)[32] len config-toml
//! layer-count  layer-record * layer-count   (current branch)
//!              layer-record * layer-count   (reference branch)
//! head-flag    [layer-record]
//! "GATE" mode pool-window tensor-record bias-record
//!
//! layer-record  = tensor-record bias-record
//! tensor-record = n c h w  f32 * (n*c*h*w)
//! bias-record   = len      f32 * len
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fusion::{FusionMode, FusionParameters};
use crate::model::Mscnn;
use crate::network::{BranchParameters, LayerParameters, NetworkConfig};
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"MSCN";
pub const VERSION: u32 = 1;
const GATE_TAG: &[u8; 4] = b"GATE";

pub fn encode(model: &Mscnn<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    let text = model.config().to_toml();
    out.extend_from_slice(&Sha256::digest(text.as_bytes()));
    put_u32(&mut out, text.len() as u32);
    out.extend_from_slice(text.as_bytes());

    put_u32(&mut out, model.current.layers.len() as u32);
    for layer in model.current.layers.iter().chain(&model.reference.layers) {
        put_layer(&mut out, layer);
    }
    match &model.head {
        None => put_u32(&mut out, 0),
        Some(h) => {
            put_u32(&mut out, 1);
            put_layer(&mut out, h);
        }
    }
    out.extend_from_slice(GATE_TAG);
    put_u32(
        &mut out,
        match model.fusion.mode {
            FusionMode::Additive => 0,
            FusionMode::Multiplicative => 1,
        },
    );
    put_u32(&mut out, model.fusion.pool_window as u32);
    put_tensor(&mut out, &model.fusion.gate_weights);
    put_floats(&mut out, &model.fusion.gate_bias);
    out
}

pub fn decode(bytes: &[u8]) -> Result<Mscnn<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let digest = r.take(32)?.to_vec();
    let len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(len)?).map_err(|_| bad("config is not UTF-8"))?;
    if Sha256::digest(text.as_bytes()).as_slice() != digest.as_slice() {
        return Err(bad("config digest mismatch"));
    }
    let config = NetworkConfig::from_toml(text)?;

    let count = r.u32()? as usize;
    if count > 1024 {
        return Err(bad(format!("implausible layer count {count}")));
    }
    let read_branch = |r: &mut Reader| -> Result<BranchParameters<f32>> {
        let layers = (0..count).map(|_| r.layer()).collect::<Result<_>>()?;
        Ok(BranchParameters { layers })
    };
    let current = read_branch(&mut r)?;
    let reference = read_branch(&mut r)?;
    let head = match r.u32()? {
        0 => None,
        1 => Some(r.layer()?),
        f => return Err(bad(format!("bad head flag {f}"))),
    };
    if r.take(4)? != GATE_TAG {
        return Err(bad("missing gate section"));
    }
    let mode = match r.u32()? {
        0 => FusionMode::Additive,
        1 => FusionMode::Multiplicative,
        m => return Err(bad(format!("unknown fusion mode {m}"))),
    };
    let pool_window = r.u32()? as usize;
    let gate_weights = r.tensor()?;
    let gate_bias = r.floats()?;
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let fusion = FusionParameters {
        gate_weights,
        gate_bias,
        pool_window,
        mode,
    };
    Mscnn::from_parts(config, current, reference, fusion, head)
}

/// Writes `model` to `path` via a temporary file and rename, so a reader
/// never sees a half-written checkpoint.
pub fn save(model: &Mscnn<f32>, path: &Path) -> Result<()> {
    write_atomic(path, &encode(model))
}

pub fn load(path: &Path) -> Result<Mscnn<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    fs::write(tmp, bytes).map_err(|e| Error::io(tmp, e))?;
    fs::rename(tmp, path).map_err(|e| Error::io(path, e))
}

fn bad(detail: impl Into<String>) -> Error {
    Error::format("checkpoint", detail)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_floats(out: &mut Vec<u8>, v: &[f32]) {
    put_u32(out, v.len() as u32);
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor<f32>) {
    let s = t.shape();
    for d in [s.n, s.c, s.h, s.w] {
        put_u32(out, d as u32);
    }
    for x in t.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_layer(out: &mut Vec<u8>, layer: &LayerParameters<f32>) {
    put_tensor(out, &layer.weights);
    put_floats(out, &layer.bias);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| bad("length overflow"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn floats(&mut self) -> Result<Vec<f32>> {
        let n = self.u32()? as usize;
        self.f32s(n)
    }

    fn tensor(&mut self) -> Result<Tensor<f32>> {
        let dims = [self.u32()?, self.u32()?, self.u32()?, self.u32()?].map(|d| d as usize);
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let data = self.f32s(shape.len())?;
        Tensor::from_vec(shape, data)
    }

    fn layer(&mut self) -> Result<LayerParameters<f32>> {
        Ok(LayerParameters {
            weights: self.tensor()?,
            bias: self.floats()?,
        })
    }
}
