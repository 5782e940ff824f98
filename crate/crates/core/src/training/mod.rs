//! Regularized loss, momentum SGD with per-group learning rates, and the
//! epoch loop with its one-shot learning-rate drop.

mod loss;
mod run;

pub use loss::{total_loss, LossBreakdown, LossConfig};
pub use run::{train, EpochReport, LossRecord, TrainOutcome, CHECKPOINT_FILE, LOSS_CURVE_FILE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelGradients, Mscnn, ParamGroup};
use crate::tensor::{sgd_momentum_update, Scalar, SgdHyper, Tensor};

/// QPs a model can be trained for; one model per QP.
pub const TRAINING_QPS: [u32; 4] = [22, 27, 32, 37];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub base_lr: f64,
    /// Rate for the final layer of each branch and the fusion parameters.
    pub last_layer_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// `None` means one pass over the dataset per epoch.
    pub iterations_per_epoch: Option<usize>,
    pub lr_drop_factor: f64,
    pub stability_window: usize,
    pub stability_threshold: f64,
    pub qp: u32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 1e-3,
            last_layer_lr: 1e-4,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 32,
            epochs: 1,
            iterations_per_epoch: None,
            lr_drop_factor: 100.0,
            stability_window: 3,
            stability_threshold: 0.01,
            qp: 37,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.base_lr > 0.0 && self.last_layer_lr > 0.0) {
            return bad(format!(
                "learning rates must be positive (base {}, last layer {})",
                self.base_lr, self.last_layer_lr
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.iterations_per_epoch == Some(0) {
            return bad("iterations_per_epoch must be at least 1".into());
        }
        if !(self.lr_drop_factor >= 1.0) {
            return bad(format!("lr_drop_factor = {}", self.lr_drop_factor));
        }
        if self.stability_window == 0 || !(self.stability_threshold >= 0.0) {
            return bad("stability window must be >= 1 and threshold >= 0".into());
        }
        if !TRAINING_QPS.contains(&self.qp) {
            return bad(format!("qp {} is not one of {:?}", self.qp, TRAINING_QPS));
        }
        self.hyper(ParamGroup::Base, 1.0).validate()
    }

    fn hyper(&self, group: ParamGroup, scale: f64) -> SgdHyper {
        let lr = match group {
            ParamGroup::Base => self.base_lr,
            ParamGroup::LastLayer => self.last_layer_lr,
        };
        SgdHyper {
            lr: lr * scale,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }
}

/// Aligned (degraded current, degraded reference, ground truth) patches.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T: Scalar = f32> {
    pub current: Tensor<T>,
    pub reference: Tensor<T>,
    pub ground_truth: Tensor<T>,
}

/// Random-access source of training triples.
pub trait PatchSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stacks the triples at `indices`, in order, into one batch.
    fn batch(&self, indices: &[usize]) -> Result<Batch<f32>>;
}

#[derive(Clone, Debug)]
pub struct TrainState<T: Scalar = f32> {
    pub model: Mscnn<T>,
    velocities: Vec<Vec<T>>,
    epoch: usize,
    iteration: usize,
    epoch_sum: f64,
    epoch_count: usize,
    history: Vec<f64>,
    lr_scale: f64,
    dropped: bool,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(model: Mscnn<T>) -> Self {
        let velocities = model.param_lens().into_iter().map(|n| vec![T::zero(); n]).collect();
        TrainState {
            model,
            velocities,
            epoch: 0,
            iteration: 0,
            epoch_sum: 0.0,
            epoch_count: 0,
            history: Vec::new(),
            lr_scale: 1.0,
            dropped: false,
        }
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Steps taken so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Epoch-mean total losses, oldest first.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// Multiplier currently applied to every group's learning rate.
    pub fn lr_scale(&self) -> f64 {
        self.lr_scale
    }

    pub fn lr_dropped(&self) -> bool {
        self.dropped
    }

    pub fn velocities(&self) -> &[Vec<T>] {
        &self.velocities
    }

    /// Closes the running epoch and records its mean loss.
    pub fn finish_epoch(&mut self) -> Option<f64> {
        let mean = (self.epoch_count > 0).then(|| self.epoch_sum / self.epoch_count as f64);
        if let Some(m) = mean {
            self.history.push(m);
        }
        self.epoch += 1;
        self.epoch_sum = 0.0;
        self.epoch_count = 0;
        mean
    }
}

/// Loss and parameter gradients of the objective on one batch. Weight decay
/// is not included; it enters in the update.
pub fn compute_gradients<T: Scalar>(
    model: &Mscnn<T>,
    batch: &Batch<T>,
    loss_cfg: &LossConfig,
) -> Result<(LossBreakdown, ModelGradients<T>)> {
    if batch.current.shape().n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let acts = model.forward(&batch.current, &batch.reference)?;
    let loss = total_loss(&acts.output, &batch.ground_truth, acts.penalized_features(), loss_cfg)?;
    let grad = loss::data_term_gradient(&acts.output, &batch.ground_truth)?;
    let grads = model.backward(&acts, &grad, loss_cfg.lambda1)?;
    Ok((loss, grads))
}

/// One forward/backward pass and momentum update. On failure the state is
/// left untouched.
pub fn train_step<T: Scalar>(
    state: &mut TrainState<T>,
    batch: &Batch<T>,
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let iteration = state.iteration;
    let diverged = |reason: String| Error::Divergence { iteration, reason };
    let (loss, grads) = compute_gradients(&state.model, batch, loss_cfg).map_err(|e| match e {
        Error::NonFinite { op } => diverged(format!("non-finite values in {op}")),
        other => other,
    })?;
    if !loss.total.is_finite() {
        return Err(diverged(format!("loss is {}", loss.total)));
    }
    let grad_slices = grads.slices();
    if grad_slices.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(diverged("non-finite gradient".into()));
    }

    let scale = state.lr_scale;
    let mut next = state.model.clone();
    let mut velocities = state.velocities.clone();
    let mut k = 0;
    next.visit_params_mut(|group, params| {
        let hp = cfg.hyper(group, scale);
        let r = sgd_momentum_update(params, grad_slices[k], &mut velocities[k], &hp);
        k += 1;
        r
    })
    .map_err(|e| match e {
        Error::NonFinite { op } => diverged(format!("non-finite values in {op}")),
        other => other,
    })?;

    state.model = next;
    state.velocities = velocities;
    state.iteration += 1;
    state.epoch_sum += loss.total;
    state.epoch_count += 1;
    Ok(loss)
}

/// Whether the last `window` consecutive epoch-to-epoch relative changes of
/// `history` are all below `threshold`.
pub fn is_stable(history: &[f64], window: usize, threshold: f64) -> bool {
    if window == 0 || history.len() < window + 1 {
        return false;
    }
    history[history.len() - window - 1..].windows(2).all(|w| {
        let (prev, cur) = (w[0], w[1]);
        let denom = prev.abs().max(f64::MIN_POSITIVE);
        ((cur - prev) / denom).abs() < threshold
    })
}

/// Divides all learning rates by `lr_drop_factor` once the epoch-mean loss
/// has settled. Returns whether the drop happened on this call.
pub fn maybe_drop_lr<T: Scalar>(state: &mut TrainState<T>, cfg: &TrainConfig) -> bool {
    if state.dropped || !is_stable(&state.history, cfg.stability_window, cfg.stability_threshold) {
        return false;
    }
    state.lr_scale /= cfg.lr_drop_factor;
    state.dropped = true;
    true
}
