use super::config::{Activation, Stage, UnpoolKind};
use super::{BranchParameters, LayerParameters, NetworkConfig};
use crate::error::{Error, Result};
use crate::tensor::{
    conv2d, conv2d_backward_impl, maxpool2x2, maxpool2x2_backward, relu, relu_backward,
    spread2x2, spread2x2_backward, transposed_conv2d, transposed_conv2d_backward_impl, unpool2x2,
    unpool2x2_backward, upsample_nearest2x, upsample_nearest2x_backward, ConvSpec, PoolSwitches,
    Scalar, Tensor,
};

/// Resolved execution plan for a run of layers.
#[derive(Clone, Debug)]
pub(crate) struct BranchPlan {
    specs: Vec<ConvSpec>,
    activations: Vec<Activation>,
    stages: Vec<Stage>,
    unpool: UnpoolKind,
    residual: bool,
    factor: usize,
}

impl BranchPlan {
    /// Every layer, ending with the residual add.
    pub(crate) fn full(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        Ok(BranchPlan {
            specs: config.layer_specs(),
            activations: config.layers.iter().map(|l| l.activation).collect(),
            stages: config.stages(),
            unpool: config.unpool_kind(),
            residual: true,
            factor: config.downsampling_factor(),
        })
    }

    /// Everything before the final layer, without the residual add.
    pub(crate) fn trunk(config: &NetworkConfig) -> Result<Self> {
        let mut plan = Self::full(config)?;
        let last = plan.specs.len() - 1;
        let cut = plan
            .stages
            .iter()
            .position(|s| *s == Stage::Layer(last))
            .expect("last layer is staged");
        plan.stages.truncate(cut);
        plan.specs.pop();
        plan.activations.pop();
        plan.residual = false;
        Ok(plan)
    }

    /// Switch index used by each stage (pools push, unpools pop).
    fn switch_slots(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        let mut stack = Vec::new();
        self.stages
            .iter()
            .map(|s| match s {
                Stage::Pool => {
                    stack.push(next);
                    next += 1;
                    Some(next - 1)
                }
                Stage::Unpool => stack.pop(),
                _ => None,
            })
            .collect()
    }

    fn check_params<T: Scalar>(&self, params: &BranchParameters<T>) -> Result<()> {
        if params.layers.len() != self.specs.len() {
            return Err(Error::shape(
                "branch",
                format!("{} parameter layers for {} layers", params.layers.len(), self.specs.len()),
            ));
        }
        for (p, spec) in params.layers.iter().zip(&self.specs) {
            p.check(spec)?;
        }
        Ok(())
    }
}

/// Everything a branch's forward pass keeps for its backward pass.
#[derive(Clone, Debug)]
pub struct BranchActivations<T: Scalar = f32> {
    input: Tensor<T>,
    /// Input of each layer when it differs from the previous layer's output
    /// (after a pool, unpool or upsample).
    layer_inputs: Vec<Option<Tensor<T>>>,
    features: Vec<Tensor<T>>,
    switches: Vec<PoolSwitches>,
    reconstruction: Option<Tensor<T>>,
}

impl<T: Scalar> BranchActivations<T> {
    /// The patch the branch was run on.
    pub fn input(&self) -> &Tensor<T> {
        &self.input
    }

    /// Post-activation output of every layer, first to last.
    pub fn features(&self) -> &[Tensor<T>] {
        &self.features
    }

    pub fn switches(&self) -> &[PoolSwitches] {
        &self.switches
    }

    /// Last-layer output plus the input's first channel; `None` for a
    /// truncated branch.
    pub fn reconstruction(&self) -> Option<&Tensor<T>> {
        self.reconstruction.as_ref()
    }

    /// The reconstruction, or the last feature map of a truncated branch.
    pub fn output(&self) -> &Tensor<T> {
        self.reconstruction
            .as_ref()
            .unwrap_or_else(|| self.features.last().expect("at least one layer"))
    }

    fn layer_input(&self, i: usize) -> &Tensor<T> {
        match &self.layer_inputs[i] {
            Some(t) => t,
            None if i == 0 => &self.input,
            None => &self.features[i - 1],
        }
    }
}

/// Parameter gradients per layer, plus the gradient with respect to the
/// branch input when requested.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchGradients<T: Scalar = f32> {
    pub layers: Vec<LayerParameters<T>>,
    pub input: Option<Tensor<T>>,
}

fn add_first_channel<T: Scalar>(x: &Tensor<T>, patch: &Tensor<T>) -> Result<Tensor<T>> {
    let s = patch.shape();
    x.expect_shape("residual add", s.with_channels(1))?;
    let mut out = x.clone();
    for n in 0..s.n {
        for (o, &p) in out.item_mut(n).iter_mut().zip(patch.plane(n, 0)) {
            *o = *o + p;
        }
    }
    out.finite("residual add")
}

fn resample<T: Scalar>(
    x: &Tensor<T>,
    kind: UnpoolKind,
    switches: Option<&PoolSwitches>,
) -> Result<Tensor<T>> {
    match kind {
        UnpoolKind::Switch => {
            let s = switches.expect("switch unpool has switches");
            unpool2x2(x, &s.tile_channels(x.shape().c))
        }
        UnpoolKind::Nearest => Ok(upsample_nearest2x(x)),
        UnpoolKind::Spread => Ok(spread2x2(x)),
    }
}

pub(crate) fn forward_layers<T: Scalar>(
    params: &BranchParameters<T>,
    plan: &BranchPlan,
    patch: &Tensor<T>,
) -> Result<BranchActivations<T>> {
    plan.check_params(params)?;
    let s = patch.shape();
    if s.c != plan.specs[0].in_channels {
        return Err(Error::shape(
            "branch_forward",
            format!("patch has {} channels, network expects {}", s.c, plan.specs[0].in_channels),
        ));
    }
    if s.h % plan.factor != 0 || s.w % plan.factor != 0 || s.h == 0 || s.w == 0 {
        return Err(Error::shape(
            "branch_forward",
            format!(
                "patch {}x{} is not a multiple of the downsampling factor {}",
                s.h, s.w, plan.factor
            ),
        ));
    }

    let n_layers = plan.specs.len();
    let mut layer_inputs = Vec::with_capacity(n_layers);
    let mut features: Vec<Tensor<T>> = Vec::with_capacity(n_layers);
    let mut switches = Vec::new();
    let mut stack = Vec::new();
    // `None` while the running value is the last feature map (or the patch).
    let mut pending: Option<Tensor<T>> = None;

    for stage in &plan.stages {
        let current = || -> &Tensor<T> {
            features.last().unwrap_or(patch)
        };
        match *stage {
            Stage::Layer(i) => {
                let x = pending.as_ref().unwrap_or_else(current);
                let (spec, p) = (&plan.specs[i], &params.layers[i]);
                let pre = if spec.transposed {
                    transposed_conv2d(x, &p.weights, &p.bias, spec)?
                } else {
                    conv2d(x, &p.weights, &p.bias, spec)?
                };
                let out = match plan.activations[i] {
                    Activation::Relu => relu(&pre),
                    Activation::Identity => pre,
                };
                layer_inputs.push(pending.take());
                features.push(out);
            }
            Stage::Pool => {
                let x = pending.as_ref().unwrap_or_else(current);
                let (y, sw) = maxpool2x2(x)?;
                stack.push(switches.len());
                switches.push(sw);
                pending = Some(y);
            }
            Stage::Unpool => {
                let x = pending.as_ref().unwrap_or_else(current);
                let slot = stack.pop().expect("validated plan");
                pending = Some(resample(x, plan.unpool, Some(&switches[slot]))?);
            }
            Stage::Upsample => {
                let x = pending.as_ref().unwrap_or_else(current);
                pending = Some(upsample_nearest2x(x));
            }
        }
    }
    debug_assert!(pending.is_none(), "plan ends with a layer");

    let reconstruction = if plan.residual {
        Some(add_first_channel(features.last().expect("layers"), patch)?)
    } else {
        None
    };
    Ok(BranchActivations {
        input: patch.clone(),
        layer_inputs,
        features,
        switches,
        reconstruction,
    })
}

/// Feature-norm penalty applied during backward: for the first `layers`
/// layers, `lambda * ||F||^2 / numel(F)` is added to the objective.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FeaturePenalty {
    pub lambda: f64,
    pub layers: usize,
}

pub(crate) fn backward_layers<T: Scalar>(
    params: &BranchParameters<T>,
    plan: &BranchPlan,
    acts: &BranchActivations<T>,
    grad_output: &Tensor<T>,
    penalty: Option<FeaturePenalty>,
    want_input: bool,
) -> Result<BranchGradients<T>> {
    plan.check_params(params)?;
    let n_layers = plan.specs.len();
    let stale = |detail: String| Err(Error::shape("branch_backward", format!("stale activations: {detail}")));
    if acts.features.len() != n_layers || acts.layer_inputs.len() != n_layers {
        return stale(format!("{} recorded layers for {n_layers}", acts.features.len()));
    }
    for (i, spec) in plan.specs.iter().enumerate() {
        if acts.features[i].shape().c != spec.out_channels
            || acts.layer_input(i).shape().c != spec.in_channels
        {
            return stale(format!("layer {i} channels changed"));
        }
    }
    let pools = plan.stages.iter().filter(|s| **s == Stage::Pool).count();
    if acts.switches.len() != pools {
        return stale(format!("{} switches for {pools} pools", acts.switches.len()));
    }
    grad_output.expect_shape("branch_backward", acts.output().shape())?;

    let slots = plan.switch_slots();
    let mut grads: Vec<Option<LayerParameters<T>>> = vec![None; n_layers];
    let mut grad = grad_output.clone();
    let mut input_grad = None;

    for (stage, slot) in plan.stages.iter().zip(&slots).rev() {
        match *stage {
            Stage::Layer(i) => {
                let feature = &acts.features[i];
                if let Some(pen) = penalty.filter(|p| i < p.layers && p.lambda != 0.0) {
                    let k = T::from_f64(2.0 * pen.lambda / feature.len() as f64);
                    for (g, &f) in grad.data_mut().iter_mut().zip(feature.data()) {
                        *g = *g + k * f;
                    }
                }
                let grad_pre = match plan.activations[i] {
                    Activation::Relu => relu_backward(feature, &grad)?,
                    Activation::Identity => grad,
                };
                let (spec, p) = (&plan.specs[i], &params.layers[i]);
                let need_input = i > 0 || want_input;
                let input = acts.layer_input(i);
                let (gi, gw, gb) = if spec.transposed {
                    transposed_conv2d_backward_impl(input, &p.weights, &grad_pre, spec, need_input)?
                } else {
                    conv2d_backward_impl(input, &p.weights, &grad_pre, spec, need_input)?
                };
                grads[i] = Some(LayerParameters {
                    weights: gw,
                    bias: gb,
                });
                match gi {
                    Some(g) => grad = g,
                    None => {
                        input_grad = None;
                        break;
                    }
                }
                if i == 0 {
                    input_grad = Some(grad.clone());
                }
            }
            Stage::Pool => {
                let sw = &acts.switches[slot.expect("pool slot")];
                grad = maxpool2x2_backward(&grad, sw)?;
            }
            Stage::Unpool => {
                grad = match plan.unpool {
                    UnpoolKind::Switch => {
                        let sw = &acts.switches[slot.expect("unpool slot")];
                        unpool2x2_backward(&grad, &sw.tile_channels(grad.shape().c))?
                    }
                    UnpoolKind::Nearest => upsample_nearest2x_backward(&grad)?,
                    UnpoolKind::Spread => spread2x2_backward(&grad)?,
                };
            }
            Stage::Upsample => grad = upsample_nearest2x_backward(&grad)?,
        }
    }

    if want_input && plan.residual {
        let g = input_grad.as_mut().expect("input gradient computed");
        let s = g.shape();
        for n in 0..s.n {
            let plane = s.plane();
            let dst = &mut g.item_mut(n)[..plane];
            for (d, &r) in dst.iter_mut().zip(grad_output.item(n)) {
                *d = *d + r;
            }
        }
    }

    Ok(BranchGradients {
        layers: grads
            .into_iter()
            .map(|g| g.expect("every layer visited"))
            .collect(),
        input: if want_input { input_grad } else { None },
    })
}

/// Runs one branch: the encoder/decoder stack followed by the residual add
/// of the patch's first channel.
pub fn branch_forward<T: Scalar>(
    params: &BranchParameters<T>,
    config: &NetworkConfig,
    patch: &Tensor<T>,
) -> Result<BranchActivations<T>> {
    forward_layers(params, &BranchPlan::full(config)?, patch)
}

/// Exact reverse-mode gradients of [`branch_forward`] given the gradient of
/// the reconstruction.
pub fn branch_backward<T: Scalar>(
    params: &BranchParameters<T>,
    config: &NetworkConfig,
    activations: &BranchActivations<T>,
    grad_reconstruction: &Tensor<T>,
) -> Result<BranchGradients<T>> {
    backward_layers(
        params,
        &BranchPlan::full(config)?,
        activations,
        grad_reconstruction,
        None,
        true,
    )
}
