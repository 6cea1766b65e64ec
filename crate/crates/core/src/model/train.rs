use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{grad_with, sample_mask, LossSpec, TaskTarget};
use super::{FreezeMode, ModelError, ModelParams, Objective, PatchSeq, Weights};

pub const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub patches: PatchSeq,
    pub target: Option<TaskTarget>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainObjective {
    /// The model config's self-supervised objective.
    Pretrain,
    /// Supervised loss on the task head; every example needs a target.
    Task,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub freeze: FreezeMode,
    pub objective: TrainObjective,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            steps: 300,
            batch: 4,
            seed: 0,
            freeze: FreezeMode::Full,
            objective: TrainObjective::Pretrain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss before each update.
    pub loss_trace: Vec<f64>,
}

struct Adam {
    m: Weights,
    v: Weights,
    t: i32,
}

impl Adam {
    fn new(w: &Weights) -> Self {
        Self {
            m: Weights::zeros_like(w),
            v: Weights::zeros_like(w),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, g: &Weights, lr: f64) {
        self.t += 1;
        let (b1, b2) = ADAM_BETAS;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let frozen = params.frozen.clone();
        let grads = g.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for ((((name, w), (_, gt)), (_, m)), (_, v)) in
            params.weights.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs)
        {
            if frozen.contains(&name) {
                continue;
            }
            for i in 0..w.data.len() {
                let gi = gt.data[i];
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                w.data[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Deterministic minibatch Adam. Batches are drawn with replacement from
/// `data` by a generator seeded from `cfg.seed`; masks for the masked
/// objective come from the same stream.
pub fn train(
    mut params: ModelParams,
    data: &[Example],
    cfg: &TrainerConfig,
) -> Result<(ModelParams, TrainReport), ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyData);
    }
    if cfg.batch == 0 || !(cfg.lr > 0.0) {
        return Err(ModelError::InvalidConfig("batch and lr must be positive".into()));
    }
    params.set_freeze(cfg.freeze);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&params.weights);
    let mut trace = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let mut acc = Weights::zeros_like(&params.weights);
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch {
            let ex = &data[rng.random_range(0..data.len())];
            let spec = match cfg.objective {
                TrainObjective::Pretrain => {
                    let mask = if params.config.objective == Objective::MaskedMse {
                        sample_mask(ex.patches.n_patches(), params.config.mask_fraction, rng.next_u64())?
                    } else {
                        Vec::new()
                    };
                    LossSpec::Pretrain { mask }
                }
                TrainObjective::Task => {
                    LossSpec::Task(ex.target.clone().ok_or(ModelError::MissingTarget)?)
                }
            };
            let (l, g) = grad_with(&params, &ex.patches, &spec)?;
            batch_loss += l;
            for ((_, a), (_, b)) in acc.tensors_mut().into_iter().zip(g.tensors()) {
                a.add_assign(b);
            }
        }
        let inv = 1.0 / cfg.batch as f64;
        for (_, a) in acc.tensors_mut() {
            a.scale(inv);
        }
        trace.push(batch_loss * inv);
        adam.step(&mut params, &acc, cfg.lr);
    }
    Ok((params, TrainReport { loss_trace: trace }))
}
