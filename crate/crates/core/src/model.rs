//! The complete filter: a current-frame branch and a reference-frame branch
//! joined by gated fusion.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fusion::{fuse_backward, fuse_forward, FusionParameters, GateBundle};
use crate::network::{
    backward_layers, forward_layers, init_parameters, BranchActivations, BranchParameters,
    BranchPlan, FeaturePenalty, FusionPoint, LayerParameters, NetworkConfig,
};
use crate::tensor::{conv2d, conv2d_backward_impl, ConvSpec, Scalar, Tensor};

/// Learning-rate group of a parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Base,
    /// The final layer of each branch, the shared head and the gate.
    LastLayer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mscnn<T: Scalar = f32> {
    config: NetworkConfig,
    pub current: BranchParameters<T>,
    pub reference: BranchParameters<T>,
    pub fusion: FusionParameters<T>,
    /// Shared final layer, present when fusing feature maps.
    pub head: Option<LayerParameters<T>>,
}

#[derive(Clone, Debug)]
pub struct ModelActivations<T: Scalar = f32> {
    pub current: BranchActivations<T>,
    pub reference: BranchActivations<T>,
    pub bundle: GateBundle<T>,
    /// Output of the gate.
    pub fused: Tensor<T>,
    /// Filtered patch.
    pub output: Tensor<T>,
}

impl<T: Scalar> ModelActivations<T> {
    /// Post-activation maps of the current branch's intermediate layers (all
    /// but the network's final layer), the operands of the feature penalty.
    pub fn penalized_features(&self) -> &[Tensor<T>] {
        let f = self.current.features();
        match self.current.reconstruction() {
            Some(_) => &f[..f.len() - 1],
            None => f,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGradients<T: Scalar = f32> {
    pub current: Vec<LayerParameters<T>>,
    pub reference: Vec<LayerParameters<T>>,
    pub gate_weights: Tensor<T>,
    pub gate_bias: Vec<T>,
    pub head: Option<LayerParameters<T>>,
}

impl<T: Scalar> ModelGradients<T> {
    /// Gradient buffers in [`Mscnn::visit_params_mut`] order.
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for layer in self.current.iter().chain(&self.reference) {
            out.push(layer.weights.data());
            out.push(&layer.bias);
        }
        out.push(self.gate_weights.data());
        out.push(&self.gate_bias);
        if let Some(h) = &self.head {
            out.push(h.weights.data());
            out.push(&h.bias);
        }
        out
    }
}

impl<T: Scalar> Mscnn<T> {
    /// Fresh model: current branch from `seed`, reference branch from
    /// `seed + 1`, gate from `seed + 2`.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut current = init_parameters(&config, seed);
        let mut reference = init_parameters(&config, seed.wrapping_add(1));
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
        let fusion = FusionParameters::init(
            config.fusion_channels(),
            config.gate_pool_window,
            config.fusion_mode,
            &mut rng,
        );
        let head = match config.fusion_point {
            FusionPoint::Reconstruction => None,
            FusionPoint::Features => {
                reference.layers.pop();
                current.layers.pop()
            }
        };
        Self::from_parts(config, current, reference, fusion, head)
    }

    /// All-zero model: both branches predict a zero residual and the gate
    /// sits at 1/2. Fusing features, the output is the current patch; fusing
    /// reconstructions, it is the mean of the current and reference patches.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut current = BranchParameters::zeros(&config);
        let mut reference = BranchParameters::zeros(&config);
        let fusion = FusionParameters::zeros(
            config.fusion_channels(),
            config.gate_pool_window,
            config.fusion_mode,
        );
        let head = match config.fusion_point {
            FusionPoint::Reconstruction => None,
            FusionPoint::Features => {
                reference.layers.pop();
                current.layers.pop()
            }
        };
        Self::from_parts(config, current, reference, fusion, head)
    }

    pub fn from_parts(
        config: NetworkConfig,
        current: BranchParameters<T>,
        reference: BranchParameters<T>,
        fusion: FusionParameters<T>,
        head: Option<LayerParameters<T>>,
    ) -> Result<Self> {
        config.validate()?;
        let model = Mscnn {
            config,
            current,
            reference,
            fusion,
            head,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        let specs = self.config.layer_specs();
        let branch_len = match self.config.fusion_point {
            FusionPoint::Reconstruction => specs.len(),
            FusionPoint::Features => specs.len() - 1,
        };
        for branch in [&self.current, &self.reference] {
            if branch.layers.len() != branch_len {
                return Err(Error::shape(
                    "model",
                    format!("branch has {} layers, expected {branch_len}", branch.layers.len()),
                ));
            }
            for (p, spec) in branch.layers.iter().zip(&specs) {
                p.check(spec)?;
            }
        }
        self.fusion.validate()?;
        if self.fusion.channels() != self.config.fusion_channels()
            || self.fusion.mode != self.config.fusion_mode
            || self.fusion.pool_window != self.config.gate_pool_window
        {
            return Err(Error::InvalidConfig(
                "fusion parameters do not match the network configuration".into(),
            ));
        }
        match (&self.head, self.config.fusion_point) {
            (None, FusionPoint::Reconstruction) => Ok(()),
            (Some(h), FusionPoint::Features) => h.check(&specs[specs.len() - 1]),
            _ => Err(Error::InvalidConfig(
                "shared head must be present exactly when fusing features".into(),
            )),
        }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    fn plan(&self) -> Result<BranchPlan> {
        match self.config.fusion_point {
            FusionPoint::Reconstruction => BranchPlan::full(&self.config),
            FusionPoint::Features => BranchPlan::trunk(&self.config),
        }
    }

    fn head_spec(&self) -> ConvSpec {
        *self.config.layer_specs().last().expect("layers")
    }

    pub fn forward(&self, current: &Tensor<T>, reference: &Tensor<T>) -> Result<ModelActivations<T>> {
        if current.shape() != reference.shape() {
            return Err(Error::shape(
                "model forward",
                format!("current {} vs reference {}", current.shape(), reference.shape()),
            ));
        }
        let plan = self.plan()?;
        let cur = forward_layers(&self.current, &plan, current)?;
        let rf = forward_layers(&self.reference, &plan, reference)?;
        let (fused, bundle) = fuse_forward(cur.output(), rf.output(), &self.fusion)?;
        let output = match &self.head {
            None => fused.clone(),
            Some(h) => {
                let mut y = conv2d(&fused, &h.weights, &h.bias, &self.head_spec())?;
                let s = current.shape();
                for n in 0..s.n {
                    for (o, &p) in y.item_mut(n).iter_mut().zip(current.plane(n, 0)) {
                        *o = *o + p;
                    }
                }
                y.finite("residual add")?
            }
        };
        Ok(ModelActivations {
            current: cur,
            reference: rf,
            bundle,
            fused,
            output,
        })
    }

    /// Filtered patch only.
    pub fn infer(&self, current: &Tensor<T>, reference: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(current, reference)?.output)
    }

    /// Gradients of `objective(output) + lambda1 * feature penalty` given
    /// `d objective / d output`.
    pub fn backward(
        &self,
        acts: &ModelActivations<T>,
        grad_output: &Tensor<T>,
        lambda1: f64,
    ) -> Result<ModelGradients<T>> {
        grad_output.expect_shape("model backward", acts.output.shape())?;
        let plan = self.plan()?;
        let (grad_fused, head) = match &self.head {
            None => (grad_output.clone(), None),
            Some(h) => {
                let (gi, gw, gb) = conv2d_backward_impl(
                    &acts.fused,
                    &h.weights,
                    grad_output,
                    &self.head_spec(),
                    true,
                )?;
                (
                    gi.expect("requested"),
                    Some(LayerParameters {
                        weights: gw,
                        bias: gb,
                    }),
                )
            }
        };
        let fg = fuse_backward(
            &acts.bundle,
            acts.current.output(),
            acts.reference.output(),
            &self.fusion,
            &grad_fused,
        )?;
        let penalty = FeaturePenalty {
            lambda: lambda1,
            layers: acts.penalized_features().len(),
        };
        let cur = backward_layers(&self.current, &plan, &acts.current, &fg.cur, Some(penalty), false)?;
        let rf = backward_layers(&self.reference, &plan, &acts.reference, &fg.reference, None, false)?;
        Ok(ModelGradients {
            current: cur.layers,
            reference: rf.layers,
            gate_weights: fg.gate_weights,
            gate_bias: fg.gate_bias,
            head,
        })
    }

    /// Visits every parameter buffer with its learning-rate group, in a
    /// fixed order shared with [`ModelGradients::slices`].
    pub fn visit_params_mut(&mut self, mut f: impl FnMut(ParamGroup, &mut [T]) -> Result<()>) -> Result<()> {
        let last = match self.config.fusion_point {
            FusionPoint::Reconstruction => Some(self.current.layers.len() - 1),
            FusionPoint::Features => None,
        };
        for branch in [&mut self.current, &mut self.reference] {
            for (i, layer) in branch.layers.iter_mut().enumerate() {
                let group = if Some(i) == last {
                    ParamGroup::LastLayer
                } else {
                    ParamGroup::Base
                };
                f(group, layer.weights.data_mut())?;
                f(group, &mut layer.bias)?;
            }
        }
        f(ParamGroup::LastLayer, self.fusion.gate_weights.data_mut())?;
        f(ParamGroup::LastLayer, &mut self.fusion.gate_bias)?;
        if let Some(h) = &mut self.head {
            f(ParamGroup::LastLayer, h.weights.data_mut())?;
            f(ParamGroup::LastLayer, &mut h.bias)?;
        }
        Ok(())
    }

    /// Sizes of the parameter buffers in visiting order.
    pub fn param_lens(&self) -> Vec<usize> {
        let mut lens = Vec::new();
        let mut copy = self.clone();
        copy.visit_params_mut(|_, s| {
            lens.push(s.len());
            Ok(())
        })
        .expect("infallible visitor");
        lens
    }

    pub fn squared_norm(&self) -> f64 {
        self.current.squared_norm()
            + self.reference.squared_norm()
            + self.fusion.squared_norm()
            + self.head.as_ref().map_or(0.0, LayerParameters::squared_norm)
    }

    pub fn cast<U: Scalar>(&self) -> Mscnn<U> {
        Mscnn {
            config: self.config.clone(),
            current: self.current.cast(),
            reference: self.reference.cast(),
            fusion: self.fusion.cast(),
            head: self.head.as_ref().map(LayerParameters::cast),
        }
    }
}
