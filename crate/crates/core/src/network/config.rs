use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fusion::FusionMode;
use crate::tensor::ConvSpec;

/// Filter counts of the ten canonical layers.
pub const CANONICAL_FILTERS: [usize; 10] = [96, 32, 64, 32, 16, 128, 64, 32, 64, 1];
/// Kernel sides of the ten canonical layers.
pub const CANONICAL_KERNELS: [usize; 10] = [9, 7, 5, 3, 1, 3, 5, 7, 9, 1];
/// Total parameter count printed in the reference layer table. The table's
/// per-layer rows do not follow dense channel chaining, so
/// [`parameter_count`](super::parameter_count) does not reproduce it.
pub const REFERENCE_TABLE_TOTAL: usize = 70_596;
/// Why the computed count and [`REFERENCE_TABLE_TOTAL`] differ.
pub const PARAMETER_COUNT_NOTE: &str = "the published total does not follow from its own layer rows; \
the count here chains every layer's input channels to the previous layer's filters \
(n_{i-1} * f_i^2 * n_i + n_i summed over the ten layers)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Conv,
    TransposedConv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: Activation,
}

/// Where the parameter-free resampling steps sit relative to the layers.
/// Indices refer to positions in [`NetworkConfig::layers`]; an index may
/// repeat to stack several steps. Unpools consume pool switches last-in,
/// first-out.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolPlan {
    pub pools_after: Vec<usize>,
    pub unpools_before: Vec<usize>,
    #[serde(default)]
    pub upsamples_before: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionPoint {
    /// Fuse the two single-channel reconstructions.
    #[default]
    Reconstruction,
    /// Fuse the penultimate feature maps, then apply one shared final layer
    /// and the residual add.
    Features,
}

/// Decoder ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DecoderVariant {
    /// Switch unpooling with the full transposed-convolution stack.
    #[default]
    Full,
    /// Nearest-neighbour upsampling in place of every unpool.
    PaddingUpsampling,
    /// Uniform 2x2 spreading (value / 4) in place of every unpool.
    AverageUpPooling,
    /// Decoder of depth 1..=5 counting the final 1x1 projection; depth 5 is
    /// the full decoder.
    DeConv(u8),
}

impl fmt::Display for DecoderVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecoderVariant::Full => f.write_str("full"),
            DecoderVariant::PaddingUpsampling => f.write_str("padding-upsampling"),
            DecoderVariant::AverageUpPooling => f.write_str("average-up-pooling"),
            DecoderVariant::DeConv(n) => write!(f, "deconv-{n}"),
        }
    }
}

impl FromStr for DecoderVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(DecoderVariant::Full),
            "padding-upsampling" => Ok(DecoderVariant::PaddingUpsampling),
            "average-up-pooling" => Ok(DecoderVariant::AverageUpPooling),
            _ => s
                .strip_prefix("deconv-")
                .and_then(|n| n.parse::<u8>().ok())
                .filter(|n| (1..=5).contains(n))
                .map(DecoderVariant::DeConv)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown decoder variant {s:?}"))),
        }
    }
}

impl TryFrom<String> for DecoderVariant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DecoderVariant> for String {
    fn from(v: DecoderVariant) -> String {
        v.to_string()
    }
}

/// How the decoder realises each unpool slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum UnpoolKind {
    Switch,
    Nearest,
    Spread,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Stage {
    Layer(usize),
    Pool,
    Unpool,
    Upsample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
    pub pool_plan: PoolPlan,
    #[serde(default)]
    pub fusion_point: FusionPoint,
    #[serde(default)]
    pub fusion_mode: FusionMode,
    #[serde(default = "default_gate_window")]
    pub gate_pool_window: usize,
    #[serde(default)]
    pub decoder_variant: DecoderVariant,
}

fn default_gate_window() -> usize {
    3
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::canonical(1)
    }
}

fn relu_layer(kind: LayerKind, filters: usize, kernel: usize, stride: usize) -> LayerSpec {
    LayerSpec {
        kind,
        filters,
        kernel,
        stride,
        activation: Activation::Relu,
    }
}

impl NetworkConfig {
    /// The ten-layer network with three max-pools after layers 1-3, a
    /// stride-2 convolution at layer 4, a stride-2 transposed convolution at
    /// layer 6 and three unpools before layers 7-9.
    pub fn canonical(input_channels: usize) -> Self {
        Self::build(
            input_channels,
            DecoderVariant::Full,
            CANONICAL_FILTERS,
            CANONICAL_KERNELS,
        )
        .expect("canonical variant is valid")
    }

    /// Canonical geometry with overridden filter counts and kernels, reshaped
    /// for a decoder variant.
    pub fn build(
        input_channels: usize,
        variant: DecoderVariant,
        filters: [usize; 10],
        kernels: [usize; 10],
    ) -> Result<Self> {
        use LayerKind::{Conv, TransposedConv};
        let strides = [1, 1, 1, 2, 1, 2, 1, 1, 1, 1];
        let kinds = [
            Conv,
            Conv,
            Conv,
            Conv,
            Conv,
            TransposedConv,
            TransposedConv,
            TransposedConv,
            TransposedConv,
            Conv,
        ];
        let all: Vec<LayerSpec> = (0..10)
            .map(|i| relu_layer(kinds[i], filters[i], kernels[i], strides[i]))
            .collect();
        let projection = LayerSpec {
            activation: Activation::Identity,
            ..all[9]
        };

        let depth = match variant {
            DecoderVariant::DeConv(n) if !(1..=5).contains(&n) => {
                return Err(Error::InvalidConfig(format!("decoder depth {n} not in 1..=5")))
            }
            DecoderVariant::DeConv(n) => n as usize,
            _ => 5,
        };
        // Keep the encoder (layers 1-5), the first `depth - 1` transposed
        // convolutions, then the 1x1 projection.
        let mut layers: Vec<LayerSpec> = all[..5 + depth - 1].to_vec();
        layers.push(projection);
        let proj = layers.len() - 1;
        // Unpool slots nominally precede layers 7, 8, 9; a slot whose layer
        // was dropped moves to the projection.
        let unpools_before = [6, 7, 8].iter().map(|&i: &usize| i.min(proj)).collect();
        let upsamples_before = if depth == 1 { vec![proj] } else { vec![] };

        let config = NetworkConfig {
            input_channels,
            layers,
            pool_plan: PoolPlan {
                pools_after: vec![0, 1, 2],
                unpools_before,
                upsamples_before,
            },
            fusion_point: FusionPoint::default(),
            fusion_mode: FusionMode::default(),
            gate_pool_window: default_gate_window(),
            decoder_variant: variant,
        };
        config.validate()?;
        Ok(config)
    }

    /// True for the unmodified ten-layer geometry.
    pub fn is_canonical(&self) -> bool {
        self.layers.len() == 10
            && self.decoder_variant == DecoderVariant::Full
            && self
                .layers
                .iter()
                .enumerate()
                .all(|(i, l)| l.filters == CANONICAL_FILTERS[i] && l.kernel == CANONICAL_KERNELS[i])
    }

    pub fn layer_specs(&self) -> Vec<ConvSpec> {
        let mut in_ch = self.input_channels;
        self.layers
            .iter()
            .map(|l| {
                let spec = match l.kind {
                    LayerKind::Conv => ConvSpec::conv(in_ch, l.filters, l.kernel, l.stride),
                    LayerKind::TransposedConv => {
                        ConvSpec::transposed(in_ch, l.filters, l.kernel, l.stride)
                    }
                };
                in_ch = l.filters;
                spec
            })
            .collect()
    }

    pub(crate) fn unpool_kind(&self) -> UnpoolKind {
        match self.decoder_variant {
            DecoderVariant::PaddingUpsampling => UnpoolKind::Nearest,
            DecoderVariant::AverageUpPooling => UnpoolKind::Spread,
            DecoderVariant::Full | DecoderVariant::DeConv(_) => UnpoolKind::Switch,
        }
    }

    pub(crate) fn stages(&self) -> Vec<Stage> {
        let count = |list: &[usize], i: usize| list.iter().filter(|&&j| j == i).count();
        let plan = &self.pool_plan;
        let mut stages = Vec::new();
        for i in 0..self.layers.len() {
            stages.extend(std::iter::repeat_n(
                Stage::Upsample,
                count(&plan.upsamples_before, i),
            ));
            stages.extend(std::iter::repeat_n(Stage::Unpool, count(&plan.unpools_before, i)));
            stages.push(Stage::Layer(i));
            stages.extend(std::iter::repeat_n(Stage::Pool, count(&plan.pools_after, i)));
        }
        stages
    }

    /// Channel count where the two branches meet.
    pub fn fusion_channels(&self) -> usize {
        match self.fusion_point {
            FusionPoint::Reconstruction => 1,
            FusionPoint::Features => self.layers[self.layers.len() - 2].filters,
        }
    }

    /// Spatial sizes must be multiples of this factor.
    pub fn downsampling_factor(&self) -> usize {
        self.resolution_trace().map(|(_, max)| 1 << max).unwrap_or(0)
    }

    /// Walks the stage list tracking the resolution level (0 = input) and
    /// returns the final level and the deepest level reached.
    fn resolution_trace(&self) -> Result<(i64, i64)> {
        let mut level = 0i64;
        let mut deepest = 0i64;
        let mut pools: Vec<i64> = Vec::new();
        for stage in self.stages() {
            match stage {
                Stage::Layer(i) => {
                    let l = &self.layers[i];
                    if l.stride == 2 {
                        level += if l.kind == LayerKind::Conv { 1 } else { -1 };
                    }
                }
                Stage::Pool => {
                    level += 1;
                    pools.push(level);
                }
                Stage::Unpool => {
                    let pooled = pools.pop().ok_or_else(|| {
                        Error::InvalidConfig("unpool without a matching pool".into())
                    })?;
                    if pooled != level {
                        return Err(Error::InvalidConfig(format!(
                            "unpool at resolution level {level} pairs with a pool at level {pooled}"
                        )));
                    }
                    level -= 1;
                }
                Stage::Upsample => level -= 1,
            }
            if level < 0 {
                return Err(Error::InvalidConfig(
                    "decoder upsamples beyond the input resolution".into(),
                ));
            }
            deepest = deepest.max(level);
        }
        if !pools.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "{} pool(s) without a matching unpool",
                pools.len()
            )));
        }
        Ok((level, deepest))
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 {
            return Err(Error::InvalidConfig("input_channels must be positive".into()));
        }
        if self.layers.len() < 2 {
            return Err(Error::InvalidConfig("at least two layers are required".into()));
        }
        for spec in self.layer_specs() {
            spec.validate()?;
        }
        let n = self.layers.len();
        let plan = &self.pool_plan;
        if let Some(&bad) = plan
            .pools_after
            .iter()
            .chain(&plan.unpools_before)
            .chain(&plan.upsamples_before)
            .find(|&&i| i >= n)
        {
            return Err(Error::InvalidConfig(format!("pool plan refers to layer {bad} of {n}")));
        }
        if self.layers[n - 1].filters != 1 {
            return Err(Error::InvalidConfig(
                "the last layer must produce one channel for the residual add".into(),
            ));
        }
        if self.gate_pool_window == 0 || self.gate_pool_window % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "gate_pool_window must be odd, got {}",
                self.gate_pool_window
            )));
        }
        let (level, _) = self.resolution_trace()?;
        if level != 0 {
            return Err(Error::InvalidConfig(
                "downsampling and upsampling do not balance; output size would differ from input"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("network config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: NetworkConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }
}
