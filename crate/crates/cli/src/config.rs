//! The run configuration file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mscnn::data::DatasetSpec;
use mscnn::fusion::FusionMode;
use mscnn::network::{DecoderVariant, FusionPoint, NetworkConfig, CANONICAL_FILTERS, CANONICAL_KERNELS};
use mscnn::training::{LossConfig, TrainConfig};
use serde::{Deserialize, Serialize};

/// Network geometry: the canonical ten-layer layout, optionally with other
/// filter counts and kernel sizes, reshaped for a decoder variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub input_channels: usize,
    pub filters: [usize; 10],
    pub kernels: [usize; 10],
    pub decoder_variant: DecoderVariant,
    pub fusion_point: FusionPoint,
    pub fusion_mode: FusionMode,
    pub gate_pool_window: usize,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let c = NetworkConfig::canonical(1);
        NetworkSection {
            input_channels: 1,
            filters: CANONICAL_FILTERS,
            kernels: CANONICAL_KERNELS,
            decoder_variant: c.decoder_variant,
            fusion_point: c.fusion_point,
            fusion_mode: c.fusion_mode,
            gate_pool_window: c.gate_pool_window,
        }
    }
}

impl NetworkSection {
    pub fn build(&self) -> Result<NetworkConfig> {
        let mut cfg = NetworkConfig::build(self.input_channels, self.decoder_variant, self.filters, self.kernels)?;
        cfg.fusion_point = self.fusion_point;
        cfg.fusion_mode = self.fusion_mode;
        cfg.gate_pool_window = self.gate_pool_window;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Where training material comes from and how it is cut.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Image files, raw 4:2:0 `.yuv` files, or directories of them.
    pub sources: Vec<PathBuf>,
    /// Frame size of `.yuv` sources.
    pub yuv_width: Option<usize>,
    pub yuv_height: Option<usize>,
    /// Patch store; relative paths resolve against the output directory.
    pub dataset_dir: PathBuf,
    /// QPs at which the codec proxy degrades the sources.
    pub qps: Vec<u32>,
    pub patch_size: usize,
    pub stride: usize,
    pub augmentation: mscnn::data::AugmentationSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        let d = DatasetSpec::default();
        DataSection {
            sources: Vec::new(),
            yuv_width: None,
            yuv_height: None,
            dataset_dir: PathBuf::from("dataset"),
            qps: d.qps,
            patch_size: d.patch_size,
            stride: d.stride,
            augmentation: d.augmentation,
        }
    }
}

impl DataSection {
    pub fn spec(&self) -> DatasetSpec {
        DatasetSpec {
            qps: self.qps.clone(),
            augmentation: self.augmentation.clone(),
            patch_size: self.patch_size,
            stride: self.stride,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds model initialization and batch sampling.
    pub seed: u64,
    /// Every command writes only below this directory.
    pub out: PathBuf,
    pub network: NetworkSection,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub data: DataSection,
}

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig {
                out: PathBuf::from("mscnn-out"),
                ..RunConfig::default()
            });
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(cfg)
    }

    /// Applies command-line overrides and checks every section.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out = o;
        }
        if self.out.as_os_str().is_empty() {
            bail!("no output directory: pass --out or set `out` in the config");
        }
        self.train.seed = self.seed;
        self.network.build()?;
        self.train.validate()?;
        self.loss.validate()?;
        self.data.spec().augmentation.validate()?;
        Ok(self)
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.out.join(&self.data.dataset_dir)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Writes the effective configuration next to the command's outputs.
    pub fn echo(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(RESOLVED_CONFIG_FILE);
        std::fs::write(&path, self.to_toml()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
