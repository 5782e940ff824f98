//! Gated fusion of the current-frame and reference-frame branch outputs.
//!
//! The two maps are stacked, smoothed with a shape-preserving average pool,
//! projected by a 1x1 convolution and squashed by a sigmoid into a gate map
//! `G`. The current branch is weighted by `G`, the reference branch by
//! `1 - G`.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::init_layer;
use crate::tensor::{
    avgpool_same, avgpool_same_backward, conv2d, conv2d_backward_impl, sigmoid, sigmoid_backward,
    ConvSpec, Scalar, Shape, Tensor,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// `G*cur + (1-G)*ref`, a per-pixel convex combination.
    #[default]
    Additive,
    /// `(G*cur) * ((1-G)*ref)`, the literal Hadamard product of both gated
    /// maps.
    Multiplicative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionParameters<T: Scalar = f32> {
    /// Shape (c, 2c, 1, 1).
    pub gate_weights: Tensor<T>,
    pub gate_bias: Vec<T>,
    pub pool_window: usize,
    pub mode: FusionMode,
}

impl<T: Scalar> FusionParameters<T> {
    pub fn zeros(channels: usize, pool_window: usize, mode: FusionMode) -> Self {
        FusionParameters {
            gate_weights: Tensor::zeros(Shape::new(channels, 2 * channels, 1, 1)),
            gate_bias: vec![T::zero(); channels],
            pool_window,
            mode,
        }
    }

    /// Gate weights drawn like any other layer; bias zero.
    pub fn init(channels: usize, pool_window: usize, mode: FusionMode, rng: &mut ChaCha8Rng) -> Self {
        let layer = init_layer(&Self::spec_for(channels), rng);
        FusionParameters {
            gate_weights: layer.weights,
            gate_bias: layer.bias,
            pool_window,
            mode,
        }
    }

    pub fn channels(&self) -> usize {
        self.gate_weights.shape().n
    }

    fn spec_for(channels: usize) -> ConvSpec {
        ConvSpec::conv(2 * channels, channels, 1, 1)
    }

    fn spec(&self) -> ConvSpec {
        Self::spec_for(self.channels())
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        self.gate_weights
            .expect_shape("fusion parameters", Shape::new(c, 2 * c, 1, 1))?;
        if self.gate_bias.len() != c {
            return Err(Error::shape(
                "fusion parameters",
                format!("gate bias has {} entries for {c} channels", self.gate_bias.len()),
            ));
        }
        if self.pool_window == 0 || self.pool_window % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "gate pool window must be odd, got {}",
                self.pool_window
            )));
        }
        Ok(())
    }

    pub fn squared_norm(&self) -> f64 {
        self.gate_weights.squared_norm()
            + self.gate_bias.iter().map(|b| b.as_f64().powi(2)).sum::<f64>()
    }

    pub fn cast<U: Scalar>(&self) -> FusionParameters<U> {
        FusionParameters {
            gate_weights: self.gate_weights.cast(),
            gate_bias: self.gate_bias.iter().map(|&b| U::from_f64(b.as_f64())).collect(),
            pool_window: self.pool_window,
            mode: self.mode,
        }
    }
}

/// Intermediate values of one fusion forward pass.
#[derive(Clone, Debug)]
pub struct GateBundle<T: Scalar = f32> {
    /// Current and reference maps stacked along channels, (N, 2c, h, w).
    pub fused_concat: Tensor<T>,
    pooled: Tensor<T>,
    gate: Tensor<T>,
    gate_ref: Tensor<T>,
}

impl<T: Scalar> GateBundle<T> {
    /// Gate map `G`, every value in (0, 1) before floating-point saturation.
    pub fn gate(&self) -> &Tensor<T> {
        &self.gate
    }

    pub fn gate_cur(&self) -> &Tensor<T> {
        &self.gate
    }

    /// `1 - G`.
    pub fn gate_ref(&self) -> &Tensor<T> {
        &self.gate_ref
    }
}

fn check_inputs<T: Scalar>(
    op: &'static str,
    f_cur: &Tensor<T>,
    f_ref: &Tensor<T>,
    params: &FusionParameters<T>,
) -> Result<()> {
    params.validate()?;
    if f_cur.shape() != f_ref.shape() {
        return Err(Error::shape(
            op,
            format!("current {} vs reference {}", f_cur.shape(), f_ref.shape()),
        ));
    }
    if f_cur.shape().c != params.channels() {
        return Err(Error::shape(
            op,
            format!(
                "inputs have {} channels, gate expects {}",
                f_cur.shape().c,
                params.channels()
            ),
        ));
    }
    Ok(())
}

pub fn fuse_forward<T: Scalar>(
    f_cur: &Tensor<T>,
    f_ref: &Tensor<T>,
    params: &FusionParameters<T>,
) -> Result<(Tensor<T>, GateBundle<T>)> {
    check_inputs("fuse_forward", f_cur, f_ref, params)?;
    let fused_concat = Tensor::concat_channels(f_cur, f_ref)?;
    let pooled = avgpool_same(&fused_concat, params.pool_window)?;
    let logits = conv2d(&pooled, &params.gate_weights, &params.gate_bias, &params.spec())?;
    let gate = sigmoid(&logits);
    let gate_ref = gate.map(|g| T::one() - g);

    let fused = match params.mode {
        FusionMode::Additive => Tensor::from_vec(
            gate.shape(),
            gate.data()
                .iter()
                .zip(gate_ref.data())
                .zip(f_cur.data().iter().zip(f_ref.data()))
                .map(|((&g, &h), (&a, &b))| {
                    // Rounding may step an ulp outside [min, max]; pin it.
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    let v = g * a + h * b;
                    if v < lo {
                        lo
                    } else if v > hi {
                        hi
                    } else {
                        v
                    }
                })
                .collect(),
        )?,
        FusionMode::Multiplicative => Tensor::from_vec(
            gate.shape(),
            gate.data()
                .iter()
                .zip(gate_ref.data())
                .zip(f_cur.data().iter().zip(f_ref.data()))
                .map(|((&g, &h), (&a, &b))| (g * a) * (h * b))
                .collect(),
        )?,
    };
    let bundle = GateBundle {
        fused_concat,
        pooled,
        gate,
        gate_ref,
    };
    Ok((fused.finite("fuse_forward")?, bundle))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionGrads<T: Scalar = f32> {
    pub cur: Tensor<T>,
    pub reference: Tensor<T>,
    pub gate_weights: Tensor<T>,
    pub gate_bias: Vec<T>,
}

pub fn fuse_backward<T: Scalar>(
    bundle: &GateBundle<T>,
    f_cur: &Tensor<T>,
    f_ref: &Tensor<T>,
    params: &FusionParameters<T>,
    grad_fused: &Tensor<T>,
) -> Result<FusionGrads<T>> {
    check_inputs("fuse_backward", f_cur, f_ref, params)?;
    grad_fused.expect_shape("fuse_backward", f_cur.shape())?;
    bundle.gate.expect_shape("fuse_backward", f_cur.shape())?;

    let len = f_cur.len();
    let mut grad_cur = Vec::with_capacity(len);
    let mut grad_ref = Vec::with_capacity(len);
    let mut grad_gate = Vec::with_capacity(len);
    let two = T::from_f64(2.0);
    for i in 0..len {
        let (g, h) = (bundle.gate.data()[i], bundle.gate_ref.data()[i]);
        let (a, b) = (f_cur.data()[i], f_ref.data()[i]);
        let d = grad_fused.data()[i];
        match params.mode {
            FusionMode::Additive => {
                grad_cur.push(d * g);
                grad_ref.push(d * h);
                grad_gate.push(d * (a - b));
            }
            FusionMode::Multiplicative => {
                let gh = g * h;
                grad_cur.push(d * gh * b);
                grad_ref.push(d * gh * a);
                grad_gate.push(d * (T::one() - two * g) * a * b);
            }
        }
    }
    let shape = f_cur.shape();
    let grad_gate = Tensor::from_vec(shape, grad_gate)?;
    let grad_logits = sigmoid_backward(&bundle.gate, &grad_gate)?;
    let (grad_pooled, gw, gb) = conv2d_backward_impl(
        &bundle.pooled,
        &params.gate_weights,
        &grad_logits,
        &params.spec(),
        true,
    )?;
    let grad_concat = avgpool_same_backward(&grad_pooled.expect("requested"), params.pool_window)?;
    let (via_gate_cur, via_gate_ref) = grad_concat.split_channels(shape.c)?;

    let mut cur = Tensor::from_vec(shape, grad_cur)?;
    cur.add_assign(&via_gate_cur)?;
    let mut reference = Tensor::from_vec(shape, grad_ref)?;
    reference.add_assign(&via_gate_ref)?;
    Ok(FusionGrads {
        cur: cur.finite("fuse_backward")?,
        reference: reference.finite("fuse_backward")?,
        gate_weights: gw,
        gate_bias: gb,
    })
}

/// Per-channel summary of a gate map, for training logs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateStats {
    pub channel: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn gate_statistics<T: Scalar>(bundle: &GateBundle<T>) -> Vec<GateStats> {
    let s = bundle.gate.shape();
    (0..s.c)
        .map(|c| {
            let mut sum = 0.0;
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for n in 0..s.n {
                for &v in bundle.gate.plane(n, c) {
                    let v = v.as_f64();
                    sum += v;
                    min = min.min(v);
                    max = max.max(v);
                }
            }
            GateStats {
                channel: c,
                mean: sum / (s.n * s.plane()) as f64,
                min,
                max,
            }
        })
        .collect()
}
