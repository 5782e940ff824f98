use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{maybe_drop_lr, train_step, LossBreakdown, LossConfig, PatchSource, TrainConfig, TrainState};
use crate::checkpoint::{self, write_atomic};
use crate::error::{Error, Result};
use crate::model::Mscnn;

pub const CHECKPOINT_FILE: &str = "checkpoint.mscn";
pub const LOSS_CURVE_FILE: &str = "loss.csv";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub iteration: usize,
    pub loss: LossBreakdown,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Base-group learning rate in effect at the end of the epoch.
    pub lr: f64,
    pub lr_dropped: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Mscnn<f32>,
    pub checkpoint: PathBuf,
    pub loss_curve: PathBuf,
    pub records: Vec<LossRecord>,
    pub epoch_means: Vec<f64>,
}

/// Shuffled index stream: a fresh permutation of the dataset for each pass,
/// all drawn from one seeded generator.
struct Sampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl Sampler {
    fn new(len: usize, seed: u64) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..len).collect(),
            cursor: len,
        }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                if self.cursor == self.order.len() {
                    self.order.shuffle(&mut self.rng);
                    self.cursor = 0;
                }
                self.cursor += 1;
                self.order[self.cursor - 1]
            })
            .collect()
    }
}

fn loss_csv(records: &[LossRecord]) -> String {
    let mut s = String::from("epoch,iter,data_term,reg_term,total\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{:e},{:e},{:e}",
            r.epoch, r.iteration, r.loss.data_term, r.loss.reg_term, r.loss.total
        );
    }
    s
}

/// Runs the full schedule. A checkpoint and the loss curve are rewritten at
/// every epoch end; on divergence they are rewritten with the last good
/// parameters before the error is returned.
pub fn train(
    model: Mscnn<f32>,
    data: &dyn PatchSource,
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    out_dir: &Path,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    loss_cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training dataset is empty".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let checkpoint_path = out_dir.join(CHECKPOINT_FILE);
    let curve_path = out_dir.join(LOSS_CURVE_FILE);
    let persist = |state: &TrainState<f32>, records: &[LossRecord]| -> Result<()> {
        checkpoint::save(&state.model, &checkpoint_path)?;
        write_atomic(&curve_path, loss_csv(records).as_bytes())
    };

    let iterations = cfg
        .iterations_per_epoch
        .unwrap_or_else(|| data.len().div_ceil(cfg.batch_size));
    let mut sampler = Sampler::new(data.len(), cfg.seed);
    let mut state = TrainState::new(model);
    let mut records = Vec::new();
    persist(&state, &records)?;

    for epoch in 0..cfg.epochs {
        for _ in 0..iterations {
            let batch = data.batch(&sampler.next_batch(cfg.batch_size))?;
            let iteration = state.iteration();
            match train_step(&mut state, &batch, cfg, loss_cfg) {
                Ok(loss) => records.push(LossRecord {
                    epoch,
                    iteration,
                    loss,
                }),
                Err(e @ Error::Divergence { .. }) => {
                    persist(&state, &records)?;
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
        }
        let mean_loss = state.finish_epoch().unwrap_or(f64::NAN);
        let dropped = maybe_drop_lr(&mut state, cfg);
        log::info!("epoch {epoch}: mean loss {mean_loss:.6e}");
        persist(&state, &records)?;
        on_epoch(&EpochReport {
            epoch,
            mean_loss,
            lr: cfg.base_lr * state.lr_scale(),
            lr_dropped: dropped,
        });
    }

    Ok(TrainOutcome {
        epoch_means: state.history().to_vec(),
        model: state.model,
        checkpoint: checkpoint_path,
        loss_curve: curve_path,
        records,
    })
}
