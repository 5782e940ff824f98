use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PoolOptions {
    /// Pad odd edges with -inf instead of rejecting odd spatial sizes.
    pub pad_odd: bool,
}

/// Argmax bookkeeping from a 2x2 max-pool: for every pooled cell, the
/// position (0..4, row-major `dy*2 + dx`) of the winner inside its window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolSwitches {
    input_shape: Shape,
    output_shape: Shape,
    indices: Vec<u8>,
}

impl PoolSwitches {
    pub fn from_parts(input_shape: Shape, output_shape: Shape, indices: Vec<u8>) -> Result<Self> {
        let expected = Shape::new(
            input_shape.n,
            input_shape.c,
            input_shape.h.div_ceil(2),
            input_shape.w.div_ceil(2),
        );
        if output_shape != expected || indices.len() != output_shape.len() {
            return Err(Error::shape(
                "pool switches",
                format!("{input_shape} cannot pool to {output_shape} with {} switches", indices.len()),
            ));
        }
        Ok(PoolSwitches {
            input_shape,
            output_shape,
            indices,
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn output_shape(&self) -> Shape {
        self.output_shape
    }

    pub fn indices(&self) -> &[u8] {
        &self.indices
    }

    /// Reuses these switches for a tensor with `channels` channels; channel
    /// `c` follows the switches of channel `c mod self.channels`.
    pub fn tile_channels(&self, channels: usize) -> PoolSwitches {
        if channels == self.output_shape.c {
            return self.clone();
        }
        let src_c = self.output_shape.c;
        let plane = self.output_shape.plane();
        let mut indices = Vec::with_capacity(self.output_shape.n * channels * plane);
        for n in 0..self.output_shape.n {
            for c in 0..channels {
                let start = (n * src_c + c % src_c) * plane;
                indices.extend_from_slice(&self.indices[start..start + plane]);
            }
        }
        PoolSwitches {
            input_shape: self.input_shape.with_channels(channels),
            output_shape: self.output_shape.with_channels(channels),
            indices,
        }
    }

    /// Source (y, x) of pooled cell (oy, ox), validated against the window
    /// and the source extent.
    fn source(&self, cell: usize, oy: usize, ox: usize) -> Result<(usize, usize)> {
        let idx = self.indices[cell];
        if idx >= 4 {
            return Err(Error::SwitchOutOfWindow { cell, index: idx });
        }
        let (y, x) = (oy * 2 + (idx as usize >> 1), ox * 2 + (idx as usize & 1));
        if y >= self.input_shape.h || x >= self.input_shape.w {
            return Err(Error::SwitchOutOfWindow { cell, index: idx });
        }
        Ok((y, x))
    }
}

pub fn maxpool2x2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolSwitches)> {
    maxpool2x2_with(input, PoolOptions::default())
}

/// 2x2 max-pool over disjoint windows. Ties go to the lowest in-window index.
pub fn maxpool2x2_with<T: Scalar>(
    input: &Tensor<T>,
    opts: PoolOptions,
) -> Result<(Tensor<T>, PoolSwitches)> {
    let s = input.shape();
    if !opts.pad_odd && (s.h % 2 != 0 || s.w % 2 != 0) {
        return Err(Error::shape(
            "maxpool2x2",
            format!("odd spatial size {}x{} without padding", s.h, s.w),
        ));
    }
    let out_shape = Shape::new(s.n, s.c, s.h.div_ceil(2), s.w.div_ceil(2));
    let mut out = Vec::with_capacity(out_shape.len());
    let mut idx = Vec::with_capacity(out_shape.len());
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = input.plane(n, c);
            for oy in 0..out_shape.h {
                for ox in 0..out_shape.w {
                    let mut best = T::neg_infinity();
                    let mut best_i = 0u8;
                    let mut seen = false;
                    for i in 0..4u8 {
                        let (y, x) = (oy * 2 + (i as usize >> 1), ox * 2 + (i as usize & 1));
                        if y >= s.h || x >= s.w {
                            continue;
                        }
                        let v = plane[y * s.w + x];
                        if !seen || v > best {
                            best = v;
                            best_i = i;
                            seen = true;
                        }
                    }
                    out.push(best);
                    idx.push(best_i);
                }
            }
        }
    }
    let switches = PoolSwitches {
        input_shape: s,
        output_shape: out_shape,
        indices: idx,
    };
    Ok((Tensor::from_vec(out_shape, out)?, switches))
}

/// Places each value at its recorded switch position in a zeroed map of the
/// pre-pool size.
pub fn unpool2x2<T: Scalar>(input: &Tensor<T>, switches: &PoolSwitches) -> Result<Tensor<T>> {
    input.expect_shape("unpool2x2", switches.output_shape)?;
    let (os, is) = (switches.output_shape, switches.input_shape);
    let mut out = Tensor::zeros(is);
    let mut cell = 0;
    for n in 0..os.n {
        for c in 0..os.c {
            for oy in 0..os.h {
                for ox in 0..os.w {
                    let (y, x) = switches.source(cell, oy, ox)?;
                    out.set(n, c, y, x, input.data()[cell]);
                    cell += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of [`unpool2x2`]: gathers the upstream gradient at each switch.
pub fn unpool2x2_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    switches: &PoolSwitches,
) -> Result<Tensor<T>> {
    grad_out.expect_shape("unpool2x2_backward", switches.input_shape)?;
    let os = switches.output_shape;
    let mut data = Vec::with_capacity(os.len());
    let mut cell = 0;
    for n in 0..os.n {
        for c in 0..os.c {
            for oy in 0..os.h {
                for ox in 0..os.w {
                    let (y, x) = switches.source(cell, oy, ox)?;
                    data.push(grad_out.get(n, c, y, x));
                    cell += 1;
                }
            }
        }
    }
    Tensor::from_vec(os, data)
}

/// Gradient of the max-pool: routes each pooled gradient back to its argmax.
pub fn maxpool2x2_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    switches: &PoolSwitches,
) -> Result<Tensor<T>> {
    unpool2x2(grad_out, switches)
}

/// Shape-preserving mean over a `window`x`window` neighbourhood. Borders are
/// zero padded and the divisor is always the full window area, so a corner
/// of a constant map reads lower than the interior.
pub fn avgpool_same<T: Scalar>(input: &Tensor<T>, window: usize) -> Result<Tensor<T>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "average-pool window must be odd, got {window}"
        )));
    }
    let s = input.shape();
    let r = (window / 2) as isize;
    let inv = T::one() / T::from_f64((window * window) as f64);
    let mut out = Vec::with_capacity(s.len());
    let mut row_sums = vec![T::zero(); s.plane()];
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = input.plane(n, c);
            // Horizontal pass, then vertical; both sum in ascending index order.
            for y in 0..s.h {
                for x in 0..s.w {
                    let mut acc = T::zero();
                    for dx in -r..=r {
                        let xx = x as isize + dx;
                        if xx >= 0 && xx < s.w as isize {
                            acc = acc + plane[y * s.w + xx as usize];
                        }
                    }
                    row_sums[y * s.w + x] = acc;
                }
            }
            for y in 0..s.h {
                for x in 0..s.w {
                    let mut acc = T::zero();
                    for dy in -r..=r {
                        let yy = y as isize + dy;
                        if yy >= 0 && yy < s.h as isize {
                            acc = acc + row_sums[yy as usize * s.w + x];
                        }
                    }
                    out.push(acc * inv);
                }
            }
        }
    }
    Tensor::from_vec(s, out)
}

/// The zero-padded box filter is symmetric, so it is its own adjoint.
pub fn avgpool_same_backward<T: Scalar>(grad_out: &Tensor<T>, window: usize) -> Result<Tensor<T>> {
    avgpool_same(grad_out, window)
}
