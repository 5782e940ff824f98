use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::NetworkConfig;
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, Scalar, Tensor};

/// Weights and bias of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParameters<T: Scalar = f32> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LayerParameters<T> {
    pub fn zeros(spec: &ConvSpec) -> Self {
        LayerParameters {
            weights: Tensor::zeros(spec.weight_shape()),
            bias: vec![T::zero(); spec.out_channels],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights.squared_norm() + self.bias.iter().map(|b| b.as_f64().powi(2)).sum::<f64>()
    }

    pub fn cast<U: Scalar>(&self) -> LayerParameters<U> {
        LayerParameters {
            weights: self.weights.cast(),
            bias: self.bias.iter().map(|&b| U::from_f64(b.as_f64())).collect(),
        }
    }

    pub(crate) fn check(&self, spec: &ConvSpec) -> Result<()> {
        self.weights.expect_shape("layer parameters", spec.weight_shape())?;
        if self.bias.len() != spec.out_channels {
            return Err(Error::shape(
                "layer parameters",
                format!("bias length {} for {} filters", self.bias.len(), spec.out_channels),
            ));
        }
        Ok(())
    }
}

/// Learned parameters of one branch, one entry per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchParameters<T: Scalar = f32> {
    pub layers: Vec<LayerParameters<T>>,
}

impl<T: Scalar> BranchParameters<T> {
    pub fn zeros(config: &NetworkConfig) -> Self {
        BranchParameters {
            layers: config.layer_specs().iter().map(LayerParameters::zeros).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> BranchParameters<U> {
        BranchParameters {
            layers: self.layers.iter().map(LayerParameters::cast).collect(),
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.layers.iter().map(LayerParameters::squared_norm).sum()
    }
}

/// Zero-mean normal weights with standard deviation `1/sqrt(fan_in)`,
/// `fan_in = in_channels * kernel^2`; zero biases.
pub fn init_layer<T: Scalar>(spec: &ConvSpec, rng: &mut ChaCha8Rng) -> LayerParameters<T> {
    let fan_in = (spec.in_channels * spec.kernel * spec.kernel) as f64;
    let normal = Normal::new(0.0, fan_in.sqrt().recip()).expect("positive std");
    let mut layer = LayerParameters::zeros(spec);
    for w in layer.weights.data_mut() {
        *w = T::from_f64(normal.sample(rng));
    }
    layer
}

/// Draws every layer of `config` from a ChaCha stream seeded with `seed`.
pub fn init_parameters<T: Scalar>(config: &NetworkConfig, seed: u64) -> BranchParameters<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BranchParameters {
        layers: config
            .layer_specs()
            .iter()
            .map(|spec| init_layer(spec, &mut rng))
            .collect(),
    }
}

/// `n_{i-1} * f_i^2 * n_i + n_i` for every layer, with `n_0` the input
/// channel count.
pub fn layer_parameter_counts(config: &NetworkConfig) -> Vec<usize> {
    config.layer_specs().iter().map(ConvSpec::parameter_count).collect()
}

/// Parameters of one branch under dense channel chaining.
pub fn parameter_count(config: &NetworkConfig) -> usize {
    layer_parameter_counts(config).iter().sum()
}
