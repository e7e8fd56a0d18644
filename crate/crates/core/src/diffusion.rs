//! Masked diffusion kernels: schedule, forward masking, reverse steps, rollouts
//! and stratified remasking.
//!
//! Generation runs the mask level `m` (probability a position is still masked)
//! from 1 down to 0. On a grid of `n_steps` the level after `j` remaining steps
//! is `j / n_steps`, and a step of size `Δ` from level `m` unmasks each masked
//! position independently with probability `Δ / m`. The one-at-a-time mode
//! instead unmasks exactly one uniformly chosen masked position per step.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyHandle;
use crate::rng::Rng;
use crate::seqspace::{Sequence, Token};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_N_STEPS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    Grid,
    OneAtATime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSchedule {
    pub epsilon: f64,
    pub n_steps: usize,
    pub mode: StepMode,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self { epsilon: DEFAULT_EPSILON, n_steps: DEFAULT_N_STEPS, mode: StepMode::Grid }
    }
}

impl NoiseSchedule {
    pub fn grid(epsilon: f64, n_steps: usize) -> Result<Self> {
        let s = Self { epsilon, n_steps, mode: StepMode::Grid };
        s.validate()?;
        Ok(s)
    }

    pub fn one_at_a_time() -> Self {
        Self { mode: StepMode::OneAtATime, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidArgument(format!("epsilon {} not in [0, 1)", self.epsilon)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Log-linear noise level `−log(1 − (1−ε) m)`.
    pub fn sigma(&self, m: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::InvalidArgument(format!("mask level {m} outside [0, 1]")));
        }
        Ok(-(1.0 - (1.0 - self.epsilon) * m).ln())
    }

    /// Level index of a fresh, fully masked sequence of length `len`.
    pub fn start_level(&self, len: usize) -> usize {
        match self.mode {
            StepMode::Grid => self.n_steps,
            StepMode::OneAtATime => len,
        }
    }

    /// Mask level `m` for a level index.
    pub fn mask_level(&self, level: usize, len: usize) -> f64 {
        match self.mode {
            StepMode::Grid => level as f64 / self.n_steps as f64,
            StepMode::OneAtATime => level as f64 / len as f64,
        }
    }

    /// One reverse step from level index `level` to `level − 1`.
    pub fn step(
        &self,
        x: &Sequence,
        level: usize,
        policy: &PolicyHandle,
        pre: &PolicyHandle,
        rng: &mut Rng,
        gumbel: bool,
    ) -> Result<StepRecord> {
        if level == 0 {
            return Err(Error::InvalidArgument("no steps remain at level 0".into()));
        }
        match self.mode {
            StepMode::Grid => {
                let n = self.n_steps as f64;
                single_reverse_step(x, level as f64 / n, 1.0 / n, policy, pre, rng, gumbel)
            }
            StepMode::OneAtATime => Ok(one_at_a_time_step(x, policy, pre, rng, gumbel)),
        }
    }

    /// Complete `x` from level index `level`, returning the clean sequence and
    /// `Σ (log_pre − log_policy)` over the steps.
    pub fn rollout_from_level(
        &self,
        x: &Sequence,
        level: usize,
        policy: &PolicyHandle,
        pre: &PolicyHandle,
        rng: &mut Rng,
    ) -> Result<(Sequence, f64)> {
        let mut x = x.clone();
        let mut w = 0.0;
        let mut level = level;
        while level > 0 && !x.is_clean() {
            let rec = self.step(&x, level, policy, pre, rng, false)?;
            w += rec.log_pre - rec.log_policy;
            x = rec.x_next;
            level -= 1;
        }
        if !x.is_clean() {
            // Only reachable when the caller starts at level 0 with masks left.
            return Err(Error::NotClean);
        }
        Ok((x, w))
    }
}

/// Result of one reverse step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub x_next: Sequence,
    /// Sum of `log p_policy` over the newly unmasked tokens.
    pub log_policy: f64,
    /// Same under the pre-trained model.
    pub log_pre: f64,
}

impl StepRecord {
    pub fn log_rnd(&self) -> f64 {
        self.log_pre - self.log_policy
    }
}

/// Standard Gumbel variate from a uniform draw.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    -(-u.ln()).ln()
}

/// Mask each position independently with probability `lambda`.
pub fn forward_mask(x: &Sequence, lambda: f64, rng: &mut Rng) -> Sequence {
    let positions: Vec<usize> = (0..x.len()).filter(|_| rng.gen::<f64>() < lambda).collect();
    x.masked_at(&positions)
}

fn sample_row(row: &[f64], rng: &mut Rng, gumbel: bool) -> Token {
    if gumbel {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (t, &p) in row.iter().enumerate() {
            let g = gumbel_from_uniform(open_unit(rng));
            if p > 0.0 && p.ln() + g > best.0 {
                best = (p.ln() + g, t);
            }
        }
        return best.1 as Token;
    }
    let u = rng.gen::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (t, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = t;
            if u < acc {
                return t as Token;
            }
        }
    }
    last as Token
}

fn open_unit(rng: &mut Rng) -> f64 {
    loop {
        let u = rng.gen::<f64>();
        if u > 0.0 {
            return u;
        }
    }
}

fn finish_step(
    x: &Sequence,
    chosen: &[usize],
    policy: &PolicyHandle,
    pre: &PolicyHandle,
    rng: &mut Rng,
    gumbel: bool,
) -> StepRecord {
    if chosen.is_empty() {
        return StepRecord { x_next: x.clone(), log_policy: 0.0, log_pre: 0.0 };
    }
    let d = policy.alphabet_size();
    let table = policy.eval_conditionals(x);
    let pre_table = (!policy.same_model(pre)).then(|| pre.eval_conditionals(x));
    let mut next = x.clone();
    let mut log_policy = 0.0;
    let mut log_pre = 0.0;
    for &pos in chosen {
        let tok = sample_row(table.row(pos), rng, gumbel);
        let lp = table.get(pos, tok).ln();
        log_policy += lp;
        log_pre += pre_table.as_ref().map_or(lp, |t| t.get(pos, tok).ln());
        debug_assert!((tok as usize) < d);
        next = next.substitute(pos, tok).expect("chosen positions are masked");
    }
    StepRecord { x_next: next, log_policy, log_pre }
}

/// Step from mask level `m` to `m − Δ`.
pub fn single_reverse_step(
    x: &Sequence,
    m: f64,
    delta: f64,
    policy: &PolicyHandle,
    pre: &PolicyHandle,
    rng: &mut Rng,
    gumbel: bool,
) -> Result<StepRecord> {
    if !(delta > 0.0 && delta <= m && m <= 1.0) {
        return Err(Error::InvalidArgument(format!("need 0 < delta <= m <= 1 (delta={delta}, m={m})")));
    }
    let p = delta / m;
    let chosen: Vec<usize> = x
        .masked_positions()
        .into_iter()
        .filter(|_| p >= 1.0 || rng.gen::<f64>() < p)
        .collect();
    Ok(finish_step(x, &chosen, policy, pre, rng, gumbel))
}

/// Unmask exactly one uniformly chosen masked position.
pub fn one_at_a_time_step(
    x: &Sequence,
    policy: &PolicyHandle,
    pre: &PolicyHandle,
    rng: &mut Rng,
    gumbel: bool,
) -> StepRecord {
    let masked = x.masked_positions();
    if masked.is_empty() {
        return finish_step(x, &[], policy, pre, rng, gumbel);
    }
    let pos = masked[rng.gen_range(0..masked.len())];
    finish_step(x, &[pos], policy, pre, rng, gumbel)
}

/// Complete `x` starting at mask level `m_start`.
///
/// In grid mode the steps follow `m_start, m_start − 1/n, …` with a final
/// partial step to 0. One-at-a-time mode ignores `m_start`.
pub fn rollout(
    x: &Sequence,
    m_start: f64,
    policy: &PolicyHandle,
    pre: &PolicyHandle,
    sch: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<(Sequence, f64)> {
    if !(0.0..=1.0).contains(&m_start) {
        return Err(Error::InvalidArgument(format!("mask level {m_start} outside [0, 1]")));
    }
    if sch.mode == StepMode::OneAtATime {
        return sch.rollout_from_level(x, x.num_masked(), policy, pre, rng);
    }
    let n = sch.n_steps as f64;
    let scaled = m_start * n;
    if (scaled - scaled.round()).abs() < 1e-9 {
        return sch.rollout_from_level(x, scaled.round() as usize, policy, pre, rng);
    }
    // Off-grid start: one partial step down to the grid, then the grid.
    let below = scaled.floor();
    let rec = single_reverse_step(x, m_start, m_start - below / n, policy, pre, rng, false)?;
    let (clean, w) = sch.rollout_from_level(&rec.x_next, below as usize, policy, pre, rng)?;
    Ok((clean, w + rec.log_rnd()))
}

/// A remasked copy of a clean sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Remasked {
    pub masked: Sequence,
    pub lambda: f64,
    pub source: usize,
}

/// Stratified mask probability for replicate `r ∈ 1..=reps` and `u ∈ [0, 1)`.
pub fn stratified_lambda(r: usize, reps: usize, u: f64) -> f64 {
    (r as f64 - u) / reps as f64
}

/// `reps` stratified remaskings of every sequence in `batch`, source-major.
pub fn resample_with_mask(batch: &[Sequence], reps: usize, rng: &mut Rng) -> Result<Vec<Remasked>> {
    if reps == 0 {
        return Err(Error::InvalidArgument("R must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(batch.len() * reps);
    for (source, x) in batch.iter().enumerate() {
        if !x.is_clean() {
            return Err(Error::NotClean);
        }
        for r in 1..=reps {
            let lambda = stratified_lambda(r, reps, rng.gen::<f64>());
            out.push(Remasked { masked: forward_mask(x, lambda, rng), lambda, source });
        }
    }
    Ok(out)
}
