//! 2-D convolution and its adjoint, lowered to GEMM through im2col.
//!
//! The reduction index of every GEMM runs over (channel, kernel row, kernel
//! column) in that order, and batch contributions to weight gradients are
//! summed in batch order, so results are bit-reproducible.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{map_items, Scalar, Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    /// Zero padding chosen so that `output = ceil(input / stride)`. Any odd
    /// leftover goes to the bottom/right edge.
    Same,
    Explicit(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
    pub transposed: bool,
}

impl ConvSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: Padding::Same,
            transposed: false,
        }
    }

    pub fn transposed(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        ConvSpec {
            transposed: true,
            ..Self::conv(in_channels, out_channels, kernel, stride)
        }
    }

    pub fn with_padding(self, padding: Padding) -> Self {
        ConvSpec { padding, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        // Even kernels have no centred "same" alignment; they are accepted
        // only with explicit padding (e.g. a 2x2 stride-2 upsampler).
        if self.kernel == 0 || (self.kernel % 2 == 0 && self.padding == Padding::Same) {
            return Err(Error::InvalidConfig(format!(
                "kernel must be odd and positive with same padding, got {}",
                self.kernel
            )));
        }
        if self.stride != 1 && self.stride != 2 {
            return Err(Error::InvalidConfig(format!(
                "stride must be 1 or 2, got {}",
                self.stride
            )));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidConfig("channel counts must be positive".into()));
        }
        Ok(())
    }

    /// Conv weights are (out, in, k, k). Transposed weights are (in, out, k, k),
    /// so one tensor serves both a convolution and its adjoint.
    pub fn weight_shape(&self) -> Shape {
        let k = self.kernel;
        if self.transposed {
            Shape::new(self.in_channels, self.out_channels, k, k)
        } else {
            Shape::new(self.out_channels, self.in_channels, k, k)
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.in_channels * self.kernel * self.kernel * self.out_channels + self.out_channels
    }

    pub fn output_spatial(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.transposed {
            let (bh, bw) = (
                transposed_extent(h, self)?,
                transposed_extent(w, self)?,
            );
            Ok((bh, bw))
        } else {
            let g = Geometry::forward(self, h, w)?;
            Ok((g.out_h, g.out_w))
        }
    }

}

/// Sampling geometry of a forward convolution from an (in_h, in_w) grid to an
/// (out_h, out_w) grid.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    k: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
}

fn same_extent(input: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out.max(1) - 1) * stride + k).saturating_sub(input);
    (out, total / 2)
}

fn explicit_extent(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if input + 2 * pad < k {
        return Err(Error::shape(
            "conv2d",
            format!("input extent {input} with padding {pad} is smaller than kernel {k}"),
        ));
    }
    Ok((input + 2 * pad - k) / stride + 1)
}

fn transposed_extent(small: usize, spec: &ConvSpec) -> Result<usize> {
    match spec.padding {
        Padding::Same => Ok(small * spec.stride),
        Padding::Explicit(p) => {
            let big = (small.max(1) - 1) * spec.stride + spec.kernel;
            big.checked_sub(2 * p).filter(|&b| b > 0).ok_or_else(|| {
                Error::shape(
                    "transposed_conv2d",
                    format!("padding {p} too large for input extent {small}"),
                )
            })
        }
    }
}

impl Geometry {
    fn forward(spec: &ConvSpec, in_h: usize, in_w: usize) -> Result<Self> {
        let (k, s) = (spec.kernel, spec.stride);
        let (out_h, pad_top, out_w, pad_left) = match spec.padding {
            Padding::Same => {
                let (oh, pt) = same_extent(in_h, k, s);
                let (ow, pl) = same_extent(in_w, k, s);
                (oh, pt, ow, pl)
            }
            Padding::Explicit(p) => (
                explicit_extent(in_h, k, s, p)?,
                p,
                explicit_extent(in_w, k, s, p)?,
                p,
            ),
        };
        Ok(Geometry {
            in_h,
            in_w,
            out_h,
            out_w,
            k,
            stride: s,
            pad_top,
            pad_left,
        })
    }

    /// Geometry of the forward convolution whose adjoint maps an
    /// (h, w) grid up to the transposed output grid.
    fn transposed(spec: &ConvSpec, h: usize, w: usize) -> Result<Self> {
        let (bh, bw) = (transposed_extent(h, spec)?, transposed_extent(w, spec)?);
        let g = Self::forward(spec, bh, bw)?;
        debug_assert_eq!((g.out_h, g.out_w), (h, w));
        Ok(g)
    }

    fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }

    fn in_len(&self) -> usize {
        self.in_h * self.in_w
    }

    fn is_identity(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad_top == 0 && self.pad_left == 0
    }

    /// Range of output columns `ox` for which `ox*stride + kx - pad_left`
    /// lands inside the input row.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = self.pad_left.saturating_sub(kx).div_ceil(s);
        let limit = self.in_w + self.pad_left;
        let hi = if limit > kx {
            ((limit - kx - 1) / s + 1).min(self.out_w)
        } else {
            0
        };
        (lo.min(hi), hi)
    }
}

/// Unfolds (C, H, W) into (C·k·k, rows·out_w) with zero padding, for the
/// output rows in `rows`.
fn im2col<T: Scalar>(src: &[T], channels: usize, g: &Geometry, rows: Range<usize>, cols: &mut [T]) {
    let (k, s) = (g.k, g.stride);
    let p = rows.len() * g.out_w;
    for c in 0..channels {
        let plane = &src[c * g.in_len()..(c + 1) * g.in_len()];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((c * k + ky) * k + kx) * p..][..p];
                let (lo, hi) = g.valid_cols(kx);
                for (r, oy) in rows.clone().enumerate() {
                    let dst = &mut row[r * g.out_w..(r + 1) * g.out_w];
                    let iy = (oy * s + ky) as isize - g.pad_top as isize;
                    if iy < 0 || iy >= g.in_h as isize || lo >= hi {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.in_w..][..g.in_w];
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    let x0 = lo * s + kx - g.pad_left;
                    if s == 1 {
                        dst[lo..hi].copy_from_slice(&src_row[x0..x0 + (hi - lo)]);
                    } else {
                        for (j, d) in dst[lo..hi].iter_mut().enumerate() {
                            *d = src_row[x0 + j * s];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: folds the columns of output rows `rows` back,
/// adding into `dst`.
fn col2im<T: Scalar>(cols: &[T], channels: usize, g: &Geometry, rows: Range<usize>, dst: &mut [T]) {
    let (k, s) = (g.k, g.stride);
    let p = rows.len() * g.out_w;
    for c in 0..channels {
        let plane = &mut dst[c * g.in_len()..(c + 1) * g.in_len()];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((c * k + ky) * k + kx) * p..][..p];
                let (lo, hi) = g.valid_cols(kx);
                if lo >= hi {
                    continue;
                }
                for (r, oy) in rows.clone().enumerate() {
                    let iy = (oy * s + ky) as isize - g.pad_top as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let src = &row[r * g.out_w..(r + 1) * g.out_w];
                    let dst_row = &mut plane[iy as usize * g.in_w..][..g.in_w];
                    let x0 = lo * s + kx - g.pad_left;
                    if s == 1 {
                        for (d, &v) in dst_row[x0..x0 + (hi - lo)].iter_mut().zip(&src[lo..hi]) {
                            *d = *d + v;
                        }
                    } else {
                        for (j, &v) in src[lo..hi].iter().enumerate() {
                            let d = &mut dst_row[x0 + j * s];
                            *d = *d + v;
                        }
                    }
                }
            }
        }
    }
}

/// Elements of unfolded columns kept live at once (about 1 MiB of f32),
/// so a block stays in cache between unfolding and multiplication.
const COL_BUDGET: usize = 1 << 18;

/// Output-row blocks sized so that `kk` unfolded rows fit the budget.
fn row_blocks(kk: usize, g: &Geometry) -> impl Iterator<Item = Range<usize>> {
    let per = (COL_BUDGET / (kk * g.out_w).max(1)).clamp(1, g.out_h.max(1));
    let h = g.out_h;
    (0..h).step_by(per).map(move |r| r..(r + per).min(h))
}

fn check_conv_operands<T: Scalar>(
    op: &'static str,
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias_len: Option<usize>,
    spec: &ConvSpec,
    input_channels: usize,
) -> Result<()> {
    spec.validate()?;
    if input.shape().c != input_channels {
        return Err(Error::shape(
            op,
            format!(
                "input has {} channels, spec expects {input_channels}",
                input.shape().c
            ),
        ));
    }
    weights.expect_shape(op, spec.weight_shape())?;
    if let Some(len) = bias_len {
        if len != spec.out_channels {
            return Err(Error::shape(
                op,
                format!("bias has {len} entries for {} filters", spec.out_channels),
            ));
        }
    }
    Ok(())
}

fn assemble<T: Scalar>(shape: Shape, items: Vec<Vec<T>>) -> Tensor<T> {
    let mut data = Vec::with_capacity(shape.len());
    for item in items {
        data.extend_from_slice(&item);
    }
    Tensor::from_vec(shape, data).expect("per-item buffers sized from shape")
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        for v in chunk {
            *v = *v + b;
        }
    }
}

fn sum_planes<T: Scalar>(src: &[T], plane: usize) -> Vec<T> {
    src.chunks(plane)
        .map(|c| c.iter().fold(T::zero(), |a, &v| a + v))
        .collect()
}

/// Sums per-item gradients in batch order.
fn reduce_in_order<T: Scalar>(parts: impl IntoIterator<Item = Vec<T>>, len: usize) -> Vec<T> {
    let mut acc = vec![T::zero(); len];
    for part in parts {
        for (a, v) in acc.iter_mut().zip(part) {
            *a = *a + v;
        }
    }
    acc
}

/// Gradients of a convolution (or transposed convolution) with respect to
/// its input, weights and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T: Scalar = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

/// Forward convolution: each output element is the windowed inner product
/// plus the filter's bias.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    if spec.transposed {
        return Err(Error::InvalidArgument(
            "conv2d called with a transposed spec".into(),
        ));
    }
    check_conv_operands("conv2d", input, weights, Some(bias.len()), spec, spec.in_channels)?;
    let s = input.shape();
    let g = Geometry::forward(spec, s.h, s.w)?;
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let kk = cin * g.k * g.k;
    let w = weights.data();
    let items = map_items(s.n, |n| {
        let src = input.item(n);
        let p = g.out_len();
        let mut out = vec![T::zero(); cout * p];
        if g.is_identity() {
            T::gemm(cout, kk, p, w, false, src, false, &mut out, false);
        } else {
            let mut cols = Vec::new();
            for rows in row_blocks(kk, &g) {
                let nb = rows.len() * g.out_w;
                cols.resize(kk * nb, T::zero());
                im2col(src, cin, &g, rows.clone(), &mut cols);
                let dst = &mut out[rows.start * g.out_w..];
                T::gemm_strided(cout, kk, nb, w, (kk, 1), &cols, (nb, 1), dst, p, false);
            }
        }
        add_bias(&mut out, bias, g.out_len());
        out
    });
    assemble(Shape::new(s.n, cout, g.out_h, g.out_w), items).finite("conv2d")
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<ConvGrads<T>> {
    let (gi, gw, gb) = conv2d_backward_impl(input, weights, grad_out, spec, true)?;
    Ok(ConvGrads {
        input: gi.expect("input gradient requested"),
        weights: gw,
        bias: gb,
    })
}

type BackwardParts<T> = (Option<Tensor<T>>, Tensor<T>, Vec<T>);

/// Backward pass of [`conv2d`]; skips the input gradient when `want_input`
/// is false (first layer of a network).
pub(crate) fn conv2d_backward_impl<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    spec: &ConvSpec,
    want_input: bool,
) -> Result<BackwardParts<T>> {
    if spec.transposed {
        return Err(Error::InvalidArgument(
            "conv2d_backward called with a transposed spec".into(),
        ));
    }
    check_conv_operands("conv2d_backward", input, weights, None, spec, spec.in_channels)?;
    let s = input.shape();
    let g = Geometry::forward(spec, s.h, s.w)?;
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    grad_out.expect_shape("conv2d_backward", Shape::new(s.n, cout, g.out_h, g.out_w))?;
    let kk = cin * g.k * g.k;
    let p = g.out_len();
    let w = weights.data();

    let parts = map_items(s.n, |n| {
        let src = input.item(n);
        let go = grad_out.item(n);
        let gb = sum_planes(go, p);
        let mut gw = vec![T::zero(); cout * kk];
        if g.is_identity() {
            T::gemm(cout, p, kk, go, false, src, true, &mut gw, false);
            let gx = want_input.then(|| {
                let mut gx = vec![T::zero(); kk * p];
                T::gemm(kk, cout, p, w, true, go, false, &mut gx, false);
                gx
            });
            return (gx, gw, gb);
        }
        let mut gx = want_input.then(|| vec![T::zero(); cin * g.in_len()]);
        let (mut cols, mut gcols) = (Vec::new(), Vec::new());
        for rows in row_blocks(kk, &g) {
            let nb = rows.len() * g.out_w;
            let go_blk = &go[rows.start * g.out_w..];
            cols.resize(kk * nb, T::zero());
            im2col(src, cin, &g, rows.clone(), &mut cols);
            T::gemm_strided(cout, nb, kk, go_blk, (p, 1), &cols, (1, nb), &mut gw, kk, true);
            if let Some(gx) = gx.as_mut() {
                gcols.resize(kk * nb, T::zero());
                T::gemm_strided(kk, cout, nb, w, (1, kk), go_blk, (p, 1), &mut gcols, nb, false);
                col2im(&gcols, cin, &g, rows, gx);
            }
        }
        (gx, gw, gb)
    });

    let mut gxs = Vec::with_capacity(s.n);
    let mut gws = Vec::with_capacity(s.n);
    let mut gbs = Vec::with_capacity(s.n);
    for (gx, gw, gb) in parts {
        gxs.push(gx);
        gws.push(gw);
        gbs.push(gb);
    }
    let grad_input = if want_input {
        Some(assemble(s, gxs.into_iter().map(Option::unwrap).collect()).finite("conv2d_backward")?)
    } else {
        None
    };
    let grad_w = Tensor::from_vec(spec.weight_shape(), reduce_in_order(gws, cout * kk))?
        .finite("conv2d_backward")?;
    let grad_b = reduce_in_order(gbs, cout);
    Ok((grad_input, grad_w, grad_b))
}

/// A stride-1 transposed convolution equals an ordinary convolution with the
/// kernel flipped and its channel axes swapped. Returns that convolution's
/// spec when the padding allows it.
fn flipped_equivalent(spec: &ConvSpec, g: &Geometry) -> Option<ConvSpec> {
    if spec.stride != 1 || g.pad_top != g.pad_left || g.pad_top + 1 > g.k {
        return None;
    }
    Some(
        ConvSpec::conv(spec.in_channels, spec.out_channels, spec.kernel, 1)
            .with_padding(Padding::Explicit(g.k - 1 - g.pad_top)),
    )
}

/// Maps (a, b, ky, kx) to (b, a, k-1-ky, k-1-kx). It is its own inverse.
fn flip_swap<T: Scalar>(w: &Tensor<T>) -> Tensor<T> {
    let s = w.shape();
    let k = s.h;
    Tensor::from_fn(Shape::new(s.c, s.n, k, k), |b, a, y, x| {
        w.get(a, b, k - 1 - y, k - 1 - x)
    })
}

/// Transposed convolution (learned upsampling), the exact adjoint of
/// [`conv2d`] with the same weights and geometry.
pub fn transposed_conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    if !spec.transposed {
        return Err(Error::InvalidArgument(
            "transposed_conv2d requires a transposed spec".into(),
        ));
    }
    check_conv_operands(
        "transposed_conv2d",
        input,
        weights,
        Some(bias.len()),
        spec,
        spec.in_channels,
    )?;
    let s = input.shape();
    let g = Geometry::transposed(spec, s.h, s.w)?;
    if let Some(eq) = flipped_equivalent(spec, &g) {
        return conv2d(input, &flip_swap(weights), bias, &eq)
            .map_err(|e| rename_non_finite(e, "transposed_conv2d"));
    }

    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let kk = cout * g.k * g.k;
    let p = g.out_len();
    let w = weights.data();
    let items = map_items(s.n, |n| {
        let mut cols = vec![T::zero(); kk * p];
        T::gemm(kk, cin, p, w, true, input.item(n), false, &mut cols, false);
        let mut out = vec![T::zero(); cout * g.in_len()];
        col2im(&cols, cout, &g, 0..g.out_h, &mut out);
        add_bias(&mut out, bias, g.in_len());
        out
    });
    assemble(Shape::new(s.n, cout, g.in_h, g.in_w), items).finite("transposed_conv2d")
}

fn rename_non_finite(e: Error, op: &'static str) -> Error {
    match e {
        Error::NonFinite { .. } => Error::NonFinite { op },
        other => other,
    }
}

pub fn transposed_conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<ConvGrads<T>> {
    let (gi, gw, gb) = transposed_conv2d_backward_impl(input, weights, grad_out, spec, true)?;
    Ok(ConvGrads {
        input: gi.expect("input gradient requested"),
        weights: gw,
        bias: gb,
    })
}

pub(crate) fn transposed_conv2d_backward_impl<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    spec: &ConvSpec,
    want_input: bool,
) -> Result<BackwardParts<T>> {
    if !spec.transposed {
        return Err(Error::InvalidArgument(
            "transposed_conv2d_backward requires a transposed spec".into(),
        ));
    }
    check_conv_operands(
        "transposed_conv2d_backward",
        input,
        weights,
        None,
        spec,
        spec.in_channels,
    )?;
    let s = input.shape();
    let g = Geometry::transposed(spec, s.h, s.w)?;
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    grad_out.expect_shape(
        "transposed_conv2d_backward",
        Shape::new(s.n, cout, g.in_h, g.in_w),
    )?;

    if let Some(eq) = flipped_equivalent(spec, &g) {
        let (gi, gw, gb) =
            conv2d_backward_impl(input, &flip_swap(weights), grad_out, &eq, want_input)?;
        return Ok((gi, flip_swap(&gw), gb));
    }

    let kk = cout * g.k * g.k;
    let p = g.out_len();
    let w = weights.data();
    let parts = map_items(s.n, |n| {
        let go = grad_out.item(n);
        let mut cols = vec![T::zero(); kk * p];
        im2col(go, cout, &g, 0..g.out_h, &mut cols);
        let mut gw = vec![T::zero(); cin * kk];
        T::gemm(cin, p, kk, input.item(n), false, &cols, true, &mut gw, false);
        let gb = sum_planes(go, g.in_len());
        let gx = want_input.then(|| {
            let mut gx = vec![T::zero(); cin * p];
            T::gemm(cin, kk, p, w, false, &cols, false, &mut gx, false);
            gx
        });
        (gx, gw, gb)
    });

    let mut gxs = Vec::with_capacity(s.n);
    let mut gws = Vec::with_capacity(s.n);
    let mut gbs = Vec::with_capacity(s.n);
    for (gx, gw, gb) in parts {
        gxs.push(gx);
        gws.push(gw);
        gbs.push(gb);
    }
    let grad_input = if want_input {
        Some(
            assemble(s, gxs.into_iter().map(Option::unwrap).collect())
                .finite("transposed_conv2d_backward")?,
        )
    } else {
        None
    };
    let grad_w = Tensor::from_vec(spec.weight_shape(), reduce_in_order(gws, cin * kk))?
        .finite("transposed_conv2d_backward")?;
    let grad_b = reduce_in_order(gbs, cout);
    Ok((grad_input, grad_w, grad_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
    }

    /// Direct six-nested-loop convolution with explicit zero padding.
    fn reference_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], spec: &ConvSpec) -> Tensor<f64> {
        let s = x.shape();
        let k = spec.kernel as isize;
        let st = spec.stride as isize;
        let (oh, pt, ow, pl) = match spec.padding {
            Padding::Same => {
                let oh = s.h.div_ceil(spec.stride);
                let ow = s.w.div_ceil(spec.stride);
                let th = ((oh as isize - 1) * st + k - s.h as isize).max(0);
                let tw = ((ow as isize - 1) * st + k - s.w as isize).max(0);
                (oh, th / 2, ow, tw / 2)
            }
            Padding::Explicit(p) => {
                let p = p as isize;
                (
                    ((s.h as isize + 2 * p - k) / st + 1) as usize,
                    p,
                    ((s.w as isize + 2 * p - k) / st + 1) as usize,
                    p,
                )
            }
        };
        let mut out = Tensor::zeros(Shape::new(s.n, spec.out_channels, oh, ow));
        for n in 0..s.n {
            for o in 0..spec.out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b[o];
                        for c in 0..spec.in_channels {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = oy as isize * st + ky - pt;
                                    let ix = ox as isize * st + kx - pl;
                                    if iy >= 0 && ix >= 0 && iy < s.h as isize && ix < s.w as isize {
                                        acc += x.get(n, c, iy as usize, ix as usize)
                                            * w.get(o, c, ky as usize, kx as usize);
                                    }
                                }
                            }
                        }
                        out.set(n, o, oy, ox, acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn scalar_affine() {
        let x = Tensor::<f32>::from_vec(Shape::new(1, 1, 1, 1), vec![2.0]).unwrap();
        let w = Tensor::<f32>::from_vec(Shape::new(1, 1, 1, 1), vec![3.0]).unwrap();
        let y = conv2d(&x, &w, &[1.0], &ConvSpec::conv(1, 1, 1, 1)).unwrap();
        assert_eq!(y.data(), &[7.0]);

        let g = Tensor::<f32>::from_vec(Shape::new(1, 1, 1, 1), vec![1.0]).unwrap();
        let grads = conv2d_backward(&x, &w, &g, &ConvSpec::conv(1, 1, 1, 1)).unwrap();
        assert_eq!(grads.weights.data(), &[2.0]);
        assert_eq!(grads.input.data(), &[3.0]);
        assert_eq!(grads.bias, vec![1.0]);
    }

    #[test]
    fn all_ones_kernel_sums_neighbourhood() {
        let x = Tensor::<f32>::from_vec(Shape::new(1, 1, 3, 3), (1..=9).map(|v| v as f32).collect())
            .unwrap();
        let w = Tensor::full(Shape::new(1, 1, 3, 3), 1.0f32);
        let y = conv2d(&x, &w, &[0.0], &ConvSpec::conv(1, 1, 3, 1)).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 3, 3));
        assert_eq!(y.get(0, 0, 1, 1), 45.0);
        assert_eq!(y.get(0, 0, 0, 0), 1.0 + 2.0 + 4.0 + 5.0);
    }

    #[test]
    fn matches_loop_oracle_across_geometries() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(k, stride, padding, h, w) in &[
            (5, 1, Padding::Same, 8, 8),
            (3, 2, Padding::Same, 8, 8),
            (3, 2, Padding::Same, 7, 9),
            (1, 1, Padding::Same, 4, 5),
            (1, 2, Padding::Same, 5, 4),
            (3, 1, Padding::Explicit(0), 6, 7),
            (5, 2, Padding::Explicit(1), 9, 8),
            (7, 1, Padding::Explicit(4), 3, 3),
        ] {
            let spec = ConvSpec::conv(3, 4, k, stride).with_padding(padding);
            let x = random(Shape::new(2, 3, h, w), &mut rng);
            let wt = random(spec.weight_shape(), &mut rng);
            let b: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = conv2d(&x, &wt, &b, &spec).unwrap();
            let slow = reference_conv(&x, &wt, &b, &spec);
            assert_eq!(fast.shape(), slow.shape(), "{spec:?}");
            for (a, e) in fast.data().iter().zip(slow.data()) {
                assert!((a - e).abs() < 1e-10, "{spec:?}: {a} vs {e}");
            }
        }
    }

    /// Loop-form gradients of [`reference_conv`]: (input, weights).
    fn reference_conv_backward(
        x: &Tensor<f64>,
        w: &Tensor<f64>,
        go: &Tensor<f64>,
        spec: &ConvSpec,
    ) -> (Tensor<f64>, Tensor<f64>) {
        let s = x.shape();
        let o = go.shape();
        let (k, st) = (spec.kernel as isize, spec.stride as isize);
        let pad = |len: usize, out: usize| match spec.padding {
            Padding::Same => (((out as isize - 1) * st + k - len as isize).max(0)) / 2,
            Padding::Explicit(p) => p as isize,
        };
        let (pt, pl) = (pad(s.h, o.h), pad(s.w, o.w));
        let mut gx = Tensor::zeros(s);
        let mut gw = Tensor::zeros(w.shape());
        for n in 0..s.n {
            for oc in 0..o.c {
                for oy in 0..o.h {
                    for ox in 0..o.w {
                        let g = go.get(n, oc, oy, ox);
                        for c in 0..s.c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = oy as isize * st + ky - pt;
                                    let ix = ox as isize * st + kx - pl;
                                    if iy >= 0 && ix >= 0 && iy < s.h as isize && ix < s.w as isize {
                                        let (iy, ix, ky, kx) = (iy as usize, ix as usize, ky as usize, kx as usize);
                                        gw.set(oc, c, ky, kx, gw.get(oc, c, ky, kx) + g * x.get(n, c, iy, ix));
                                        gx.set(n, c, iy, ix, gx.get(n, c, iy, ix) + g * w.get(oc, c, ky, kx));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        (gx, gw)
    }

    #[test]
    fn blocked_unfolding_matches_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for stride in [1, 2] {
            let spec = ConvSpec::conv(16, 3, 9, stride);
            let x = random(Shape::new(2, 16, 40, 36), &mut rng);
            let g = Geometry::forward(&spec, 40, 36).unwrap();
            assert!(row_blocks(16 * 81, &g).count() > 1);
            let wt = random(spec.weight_shape(), &mut rng);
            let b = [0.1, -0.2, 0.3];
            let fast = conv2d(&x, &wt, &b, &spec).unwrap();
            let slow = reference_conv(&x, &wt, &b, &spec);
            for (a, e) in fast.data().iter().zip(slow.data()) {
                assert!((a - e).abs() < 1e-10);
            }
            let go = random(fast.shape(), &mut rng);
            let grads = conv2d_backward(&x, &wt, &go, &spec).unwrap();
            let (gx, gw) = reference_conv_backward(&x, &wt, &go, &spec);
            for (a, e) in grads.input.data().iter().zip(gx.data()) {
                assert!((a - e).abs() < 1e-9);
            }
            for (a, e) in grads.weights.data().iter().zip(gw.data()) {
                assert!((a - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_grad_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = ConvSpec::conv(2, 3, 3, 2);
        let x = random(Shape::new(1, 2, 6, 6), &mut rng);
        let w = random(spec.weight_shape(), &mut rng);
        let g = Tensor::zeros(Shape::new(1, 3, 3, 3));
        let grads = conv2d_backward(&x, &w, &g, &spec).unwrap();
        assert!(grads.input.data().iter().all(|&v| v == 0.0));
        assert!(grads.weights.data().iter().all(|&v| v == 0.0));
        assert!(grads.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_site_scatter() {
        let x = Tensor::<f64>::from_vec(Shape::new(1, 1, 1, 1), vec![2.0]).unwrap();
        let k = Tensor::<f64>::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let spec = ConvSpec::transposed(1, 1, 2, 2).with_padding(Padding::Explicit(0));
        let y = transposed_conv2d(&x, &k, &[0.0], &spec).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        assert_eq!(y.data(), &[2.0, -4.0, 6.0, 1.0]);
    }

    #[test]
    fn even_kernel_needs_explicit_padding() {
        assert!(ConvSpec::transposed(1, 1, 2, 2).validate().is_err());
        assert!(ConvSpec::transposed(1, 1, 2, 2)
            .with_padding(Padding::Explicit(0))
            .validate()
            .is_ok());
    }

    #[test]
    fn zero_input_broadcasts_bias() {
        let spec = ConvSpec::transposed(2, 3, 3, 2);
        let x = Tensor::<f32>::zeros(Shape::new(1, 2, 3, 3));
        let w = Tensor::full(spec.weight_shape(), 0.5f32);
        let y = transposed_conv2d(&x, &w, &[1.0, -2.0, 0.25], &spec).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 3, 6, 6));
        for c in 0..3 {
            assert!(y.plane(0, c).iter().all(|&v| v == [1.0, -2.0, 0.25][c]));
        }
    }

    #[test]
    fn transposed_is_adjoint_for_both_routes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(k, stride, padding) in &[
            (3, 1, Padding::Same),
            (5, 1, Padding::Same),
            (3, 2, Padding::Same),
            (5, 2, Padding::Same),
            (3, 1, Padding::Explicit(0)),
            (3, 2, Padding::Explicit(1)),
        ] {
            // Forward conv maps 4 channels to 2; its adjoint maps 2 back to 4.
            let t = ConvSpec::transposed(2, 4, k, stride).with_padding(padding);
            let f = ConvSpec::conv(4, 2, k, stride).with_padding(padding);
            let w = random(t.weight_shape(), &mut rng);
            let small = random(Shape::new(1, 2, 4, 4), &mut rng);
            let (bh, bw) = t.output_spatial(4, 4).unwrap();
            let big = random(Shape::new(1, 4, bh, bw), &mut rng);
            let zeros2 = [0.0; 2];
            let zeros4 = [0.0; 4];
            let lhs = conv2d(&big, &w, &zeros2, &f).unwrap();
            assert_eq!(lhs.shape(), small.shape());
            let rhs = transposed_conv2d(&small, &w, &zeros4, &t).unwrap();
            let a = lhs.dot(&small).unwrap();
            let b = big.dot(&rhs).unwrap();
            assert!((a - b).abs() < 1e-10, "{t:?}: {a} vs {b}");
        }
    }

    #[test]
    fn rejects_bad_specs_and_shapes() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 2, 4, 4));
        let spec = ConvSpec::conv(2, 1, 4, 1);
        assert!(conv2d(&x, &Tensor::zeros(spec.weight_shape()), &[0.0], &spec).is_err());
        let spec = ConvSpec::conv(2, 1, 3, 3);
        assert!(conv2d(&x, &Tensor::zeros(spec.weight_shape()), &[0.0], &spec).is_err());
        let spec = ConvSpec::conv(3, 1, 3, 1);
        assert!(conv2d(&x, &Tensor::zeros(spec.weight_shape()), &[0.0], &spec).is_err());
        let spec = ConvSpec::conv(2, 1, 3, 1);
        assert!(conv2d(&x, &Tensor::zeros(spec.weight_shape()), &[0.0, 0.0], &spec).is_err());
        let bad_grad = Tensor::<f32>::zeros(Shape::new(1, 1, 3, 3));
        assert!(conv2d_backward(&x, &Tensor::zeros(spec.weight_shape()), &bad_grad, &spec).is_err());
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let x = Tensor::<f32>::from_vec(Shape::new(1, 1, 1, 1), vec![f32::MAX]).unwrap();
        let w = Tensor::<f32>::from_vec(Shape::new(1, 1, 1, 1), vec![10.0]).unwrap();
        let r = conv2d(&x, &w, &[0.0], &ConvSpec::conv(1, 1, 1, 1));
        assert!(matches!(r, Err(Error::NonFinite { op: "conv2d" })));
    }
}
