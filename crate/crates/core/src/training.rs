//! Denoising cross-entropy pretraining, the weighted fine-tuning objective,
//! and the outer resample/update loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::buffer::{BufferMode, ReplayBuffer};
use crate::diffusion::{resample_with_mask, NoiseSchedule, Remasked};
use crate::dist::{DistSampler, DistTable};
use crate::error::{Error, Result};
use crate::mcts::{self, MctsConfig, SearchContext, Tree};
use crate::oracle::{divergences, exact_terminal_marginal};
use crate::policy::{Example, PolicyHandle};
use crate::rewards::RewardSpec;
use crate::rng::{derive_path, seeded, stream};
use crate::seqspace::Sequence;
use crate::weights::normalize;

pub const DEFAULT_LR: f64 = 1e-2;
pub const DEFAULT_CLIP: f64 = 10.0;

/// Loss and gradient of `Σ_i item_weight_i · mean_r (1/λ_ir) Σ_ℓ −log p(·)`
/// over the given remaskings.
pub fn weighted_dce(
    model: &PolicyHandle,
    targets: &[Sequence],
    item_weights: &[f64],
    remasked: &[Remasked],
    reps: usize,
) -> Result<(f64, Vec<f64>)> {
    if targets.len() != item_weights.len() {
        return Err(Error::LengthMismatch { expected: targets.len(), got: item_weights.len() });
    }
    let examples: Vec<Example> = remasked
        .iter()
        .map(|r| {
            let w = item_weights[r.source] / (reps as f64 * r.lambda);
            Example::masked(r.masked.clone(), targets[r.source].clone(), w)
        })
        .collect();
    model.loss_and_grad(&examples)
}

/// Mean denoising cross-entropy over `batch` with `reps` stratified remaskings each.
pub fn dce_loss(model: &PolicyHandle, batch: &[Sequence], reps: usize, rng: &mut crate::rng::Rng) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let remasked = resample_with_mask(batch, reps, rng)?;
    let w = vec![1.0 / batch.len() as f64; batch.len()];
    weighted_dce(model, batch, &w, &remasked, reps)
}

/// Weighted objective over a replay buffer; weights are the normalized
/// trajectory totals.
pub fn wdce_loss(
    model: &PolicyHandle,
    buffer: &ReplayBuffer,
    reps: usize,
    rng: &mut crate::rng::Rng,
) -> Result<(f64, Vec<f64>)> {
    if buffer.is_empty() {
        return Err(Error::Empty("replay buffer"));
    }
    let targets: Vec<Sequence> = buffer.entries().iter().map(|e| e.sequence.clone()).collect();
    let w = normalize(&buffer.totals())?;
    let remasked = resample_with_mask(&targets, reps, rng)?;
    weighted_dce(model, &targets, &w, &remasked, reps)
}

/// Gradient step with global norm clipping; returns the pre-clip norm.
pub fn sgd_step(model: &mut PolicyHandle, grad: &[f64], lr: f64, clip: f64) -> Result<f64> {
    let params = model.params_mut()?;
    if params.len() != grad.len() {
        return Err(Error::DimensionMismatch(params.len(), grad.len()));
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let scale = if norm > clip { clip / norm } else { 1.0 };
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * scale * g;
    }
    Ok(norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub reps: usize,
    pub lr: f64,
    pub clip: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { steps: 2000, batch: 32, reps: 4, lr: 0.1, clip: DEFAULT_CLIP, seed: 0 }
    }
}

/// Train `model` on draws from `data`; returns the loss of each step.
pub fn pretrain(model: &mut PolicyHandle, data: &DistSampler, cfg: &PretrainConfig) -> Result<Vec<f64>> {
    if cfg.batch == 0 || cfg.reps == 0 {
        return Err(Error::InvalidArgument("batch and R must be >= 1".into()));
    }
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut rng = stream(cfg.seed, step as u64);
        let batch: Vec<Sequence> = (0..cfg.batch).map(|_| data.sample(&mut rng)).collect();
        let (loss, grad) = dce_loss(model, &batch, cfg.reps, &mut rng)?;
        sgd_step(model, &grad, cfg.lr, cfg.clip)?;
        losses.push(loss);
    }
    Ok(losses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub alpha: f64,
    /// Buffer capacity `B`; in Pareto mode `None` keeps the whole front.
    pub buffer_size: Option<usize>,
    /// Remaskings per buffer entry (`R`).
    pub reps: usize,
    pub epochs: usize,
    pub inner_steps: usize,
    pub resample_every: usize,
    pub lr: f64,
    pub clip: f64,
    pub seed: u64,
    pub mcts: MctsConfig,
    /// Fill the buffer by tree search; otherwise by independent rollouts.
    pub use_mcts: bool,
    /// Rollouts for the independent arm; defaults to `M · N_iter`.
    pub iid_budget: Option<usize>,
    /// Rollouts drawn from the model each epoch for the sample reward.
    pub eval_samples: usize,
    /// Exact marginal every this many epochs (and at the last); 0 disables.
    pub oracle_every: usize,
    pub pareto_reference: Option<Vec<f64>>,
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            buffer_size: Some(160),
            reps: 16,
            epochs: 100,
            inner_steps: 1,
            resample_every: 5,
            lr: DEFAULT_LR,
            clip: DEFAULT_CLIP,
            seed: 0,
            mcts: MctsConfig::default(),
            use_mcts: true,
            iid_budget: None,
            eval_samples: 256,
            oracle_every: 0,
            pareto_reference: None,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidArgument("alpha must be > 0".into()));
        }
        if self.buffer_size == Some(0) || self.reps == 0 || self.inner_steps == 0 || self.resample_every == 0 {
            return Err(Error::InvalidArgument("B, R, N_step and N_resample must be >= 1".into()));
        }
        if self.mcts.mode == BufferMode::Scalar && self.buffer_size.is_none() {
            return Err(Error::InvalidArgument("scalar buffer needs a capacity".into()));
        }
        if !(self.lr > 0.0) || !(self.clip > 0.0) {
            return Err(Error::InvalidArgument("lr and clip must be > 0".into()));
        }
        self.mcts.validate()
    }

    fn iid_count(&self) -> usize {
        self.iid_budget.unwrap_or(self.mcts.children * self.mcts.iterations)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_buffer_reward: f64,
    /// Per-objective buffer means (vector rewards only).
    pub buffer_objectives: Vec<f64>,
    pub buffer_hypervolume: Option<f64>,
    pub mean_sample_reward: f64,
    pub kl_to_target: Option<f64>,
    pub kl_target_model: Option<f64>,
    pub tv_to_target: Option<f64>,
    pub loss: f64,
    pub wall_ms: Option<u64>,
    pub seed: u64,
}

/// Problem definition shared by every epoch.
pub struct Task<'a> {
    pub pre: &'a PolicyHandle,
    pub reward: &'a RewardSpec,
    pub schedule: &'a NoiseSchedule,
    /// Exact tilted target, when enumerable.
    pub target: Option<&'a DistTable>,
}

/// Called after each buffer regeneration with the epoch, buffer and tree.
pub type ResampleHook<'h> = dyn FnMut(usize, &ReplayBuffer, Option<&Tree>) -> Result<()> + 'h;

fn fresh_buffer(cfg: &TrainConfig, dims: usize) -> Result<ReplayBuffer> {
    match cfg.mcts.mode {
        BufferMode::Scalar => ReplayBuffer::scalar(cfg.buffer_size.expect("validated")),
        BufferMode::Pareto => {
            let reference = cfg.pareto_reference.clone().unwrap_or_else(|| vec![0.0; dims]);
            ReplayBuffer::pareto(cfg.buffer_size, reference, crate::pareto::DEFAULT_DOM_EPS)
        }
    }
}

/// Mean total reward of `n` rollouts from the fully masked state.
pub fn sample_mean_reward(
    model: &PolicyHandle,
    reward: &RewardSpec,
    schedule: &NoiseSchedule,
    n: usize,
    seed: u64,
) -> Result<f64> {
    use rayon::prelude::*;
    if n == 0 {
        return Ok(f64::NAN);
    }
    let len = model.len();
    let d = model.alphabet_size();
    let start = schedule.start_level(len);
    let total: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let (x, _) = schedule.rollout_from_level(&Sequence::fully_masked(len, d), start, model, model, &mut rng)?;
            reward.evaluate_total(&x)
        })
        .collect::<Result<_>>()?;
    Ok(total.iter().sum::<f64>() / n as f64)
}

/// Fine-tune `model` toward the reward-tilted target of `task.pre`.
pub fn finetune(
    model: &mut PolicyHandle,
    task: &Task<'_>,
    cfg: &TrainConfig,
    mut on_resample: Option<&mut ResampleHook<'_>>,
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    if !task.pre.is_frozen() {
        return Err(Error::InvalidArgument("reference model must be frozen".into()));
    }
    if model.is_frozen() {
        return Err(Error::Frozen);
    }
    let dims = task.reward.dims();
    let mut buffer = fresh_buffer(cfg, dims)?;
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let e = epoch as u64;
        if epoch % cfg.resample_every == 0 {
            let snapshot = model.snapshot_frozen();
            buffer = fresh_buffer(cfg, dims)?;
            let ctx = SearchContext {
                policy: &snapshot,
                pre: task.pre,
                reward: task.reward,
                alpha: cfg.alpha,
                schedule: task.schedule,
            };
            let seed = derive_path(cfg.seed, &[e, 0]);
            let tree = if cfg.use_mcts {
                let mut tree = Tree::new(model.len(), model.alphabet_size(), *task.schedule, match cfg.mcts.mode {
                    BufferMode::Scalar => 1,
                    BufferMode::Pareto => dims,
                });
                mcts::run(&mut tree, &ctx, &mut buffer, &cfg.mcts, seed)?;
                Some(tree)
            } else {
                mcts::iid_rollouts(model.len(), cfg.iid_count(), &ctx, &mut buffer, seed)?;
                None
            };
            if let Some(hook) = on_resample.as_deref_mut() {
                hook(epoch, &buffer, tree.as_ref())?;
            }
        }
        let mut loss = f64::NAN;
        if !buffer.is_empty() {
            let mut rng = seeded(derive_path(cfg.seed, &[e, 1]));
            for _ in 0..cfg.inner_steps {
                let (l, grad) = wdce_loss(model, &buffer, cfg.reps, &mut rng)?;
                sgd_step(model, &grad, cfg.lr, cfg.clip)?;
                loss = l;
            }
        }
        let mean_sample_reward =
            sample_mean_reward(model, task.reward, task.schedule, cfg.eval_samples, derive_path(cfg.seed, &[e, 2]))?;
        let run_oracle = cfg.oracle_every > 0 && (epoch % cfg.oracle_every == 0 || epoch + 1 == cfg.epochs);
        let (kl, kl_rev, tv) = match (task.target, run_oracle) {
            (Some(target), true) => {
                let marginal = exact_terminal_marginal(model, model.len(), model.alphabet_size())?;
                let fwd = divergences(&marginal, target)?;
                let rev = divergences(target, &marginal)?;
                (Some(fwd.kl), Some(rev.kl), Some(fwd.tv))
            }
            _ => (None, None, None),
        };
        metrics.push(EpochMetrics {
            epoch,
            mean_buffer_reward: buffer.mean_total_reward(),
            buffer_objectives: if dims > 1 { buffer.mean_reward() } else { Vec::new() },
            buffer_hypervolume: match buffer.mode() {
                BufferMode::Pareto => Some(buffer.hypervolume()?),
                BufferMode::Scalar => None,
            },
            mean_sample_reward,
            kl_to_target: kl,
            kl_target_model: kl_rev,
            tv_to_target: tv,
            loss,
            wall_ms: cfg.record_wall_time.then(|| started.elapsed().as_millis() as u64),
            seed: cfg.seed,
        });
    }
    Ok(metrics)
}
