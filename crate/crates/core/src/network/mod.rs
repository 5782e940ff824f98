//! The dual-branch convolution/deconvolution network: configuration,
//! parameters, and the per-branch forward and backward passes.

mod branch;
mod config;
mod params;

pub use branch::{branch_backward, branch_forward, BranchActivations, BranchGradients};
pub(crate) use branch::{backward_layers, forward_layers, BranchPlan, FeaturePenalty};
pub use config::{
    Activation, DecoderVariant, FusionPoint, LayerKind, LayerSpec, NetworkConfig, PoolPlan,
    CANONICAL_FILTERS, CANONICAL_KERNELS, PARAMETER_COUNT_NOTE, REFERENCE_TABLE_TOTAL,
};
pub use params::{
    init_layer, init_parameters, layer_parameter_counts, parameter_count, BranchParameters,
    LayerParameters,
};
