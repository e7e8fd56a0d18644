//! Conditional unmasking models.
//!
//! Two kinds share one evaluation contract: an exact tabular model built from an
//! explicit distribution, and a one-hidden-layer tanh MLP with hand-written
//! gradients. Both return an `L × D` table of per-position token
//! probabilities; rows at already unmasked positions are one-hot.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;

use crate::dist::DistTable;
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::seqspace::{check_cap, Sequence, Token};

/// Largest `(D+1)^L` partial-state table the tabular model will build.
pub const PARTIAL_STATE_CAP: u128 = 1 << 24;

pub const DEFAULT_HIDDEN: usize = 64;
pub const INIT_SCALE: f64 = 0.05;

const MODEL_MAGIC: &[u8; 8] = b"TLTMLP\0\0";
const MODEL_VERSION: u32 = 1;
const GRAD_CHUNK: usize = 32;

/// Row-stochastic `L × D` table, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    len: usize,
    alphabet_size: usize,
    probs: Vec<f64>,
}

impl ConditionalTable {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn row(&self, pos: usize) -> &[f64] {
        &self.probs[pos * self.alphabet_size..(pos + 1) * self.alphabet_size]
    }

    pub fn get(&self, pos: usize, token: Token) -> f64 {
        self.probs[pos * self.alphabet_size + token as usize]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

/// One term of the per-token cross-entropy objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Sequence,
    pub target: Sequence,
    pub positions: Vec<usize>,
    pub weight: f64,
}

impl Example {
    /// All masked positions of `input` contribute.
    pub fn masked(input: Sequence, target: Sequence, weight: f64) -> Self {
        let positions = input.masked_positions();
        Self { input, target, positions, weight }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    TabularExact,
    Parametric,
}

/// Exact conditionals of an explicit distribution.
///
/// `mass[i]` is the probability that a clean draw agrees with the partial
/// state of partial index `i` on its unmasked positions.
#[derive(Debug, Clone)]
pub struct Tabular {
    len: usize,
    alphabet_size: usize,
    mass: Vec<f64>,
}

impl Tabular {
    pub fn build(p: &DistTable) -> Result<Self> {
        let (len, d) = (p.len(), p.alphabet_size());
        let b = d + 1;
        let states = (0..len).fold(1u128, |acc, _| acc.saturating_mul(b as u128));
        check_cap(states, PARTIAL_STATE_CAP)?;
        let mut mass = vec![0.0; states as usize];
        for (i, &pi) in p.probs().iter().enumerate() {
            mass[Sequence::from_clean_index(i, len, d).partial_index()] = pi;
        }
        // Superset sum, one coordinate at a time.
        let mut stride = 1usize;
        for _ in 0..len {
            let block = stride * b;
            mass.par_chunks_mut(block).for_each(|chunk| {
                for off in 0..stride {
                    let s: f64 = (0..d).map(|t| chunk[t * stride + off]).sum();
                    chunk[d * stride + off] = s;
                }
            });
            stride = block;
        }
        Ok(Self { len, alphabet_size: d, mass })
    }

    fn fill(&self, x: &Sequence, out: &mut [f64]) {
        let d = self.alphabet_size;
        let b = d + 1;
        let idx = x.partial_index();
        let mut stride = 1usize;
        for pos in (0..self.len).rev() {
            let row = &mut out[pos * d..(pos + 1) * d];
            let tok = x.get(pos) as usize;
            if tok != d {
                row.fill(0.0);
                row[tok] = 1.0;
            } else {
                let base = idx - d * stride;
                let total = self.mass[idx];
                if total > 0.0 {
                    for (t, r) in row.iter_mut().enumerate() {
                        *r = self.mass[base + t * stride] / total;
                    }
                } else {
                    row.fill(1.0 / d as f64);
                }
            }
            stride *= b;
        }
    }

    /// Marginal mass of the partial state `x`.
    pub fn mass(&self, x: &Sequence) -> f64 {
        self.mass[x.partial_index()]
    }
}

/// One-hot `L × (D+1)` input, tanh hidden layer, `L × D` logits.
///
/// Parameter order: `W1` (input-major, `L(D+1) × H`), `b1` (`H`), `W2`
/// (`LD × H`), `b2` (`LD`).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    len: usize,
    alphabet_size: usize,
    hidden: usize,
    seed: u64,
    params: Vec<f64>,
}

struct Forward {
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl Mlp {
    pub fn new(len: usize, alphabet_size: usize, hidden: usize, seed: u64) -> Result<Self> {
        if len == 0 || alphabet_size < 2 || hidden == 0 {
            return Err(Error::InvalidArgument(format!(
                "mlp dims must be positive (L={len}, D={alphabet_size}, H={hidden})"
            )));
        }
        let n = Self::param_count(len, alphabet_size, hidden);
        let mut rng = seeded(seed);
        let params = (0..n).map(|_| rng.gen_range(-INIT_SCALE..=INIT_SCALE)).collect();
        Ok(Self { len, alphabet_size, hidden, seed, params })
    }

    pub fn param_count(len: usize, alphabet_size: usize, hidden: usize) -> usize {
        let input = len * (alphabet_size + 1);
        let out = len * alphabet_size;
        input * hidden + hidden + out * hidden + out
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let h = self.hidden;
        let input = self.len * (self.alphabet_size + 1);
        let out = self.len * self.alphabet_size;
        let b1 = input * h;
        let w2 = b1 + h;
        let b2 = w2 + out * h;
        (b1, w2, b2)
    }

    fn input_row(&self, pos: usize, tok: Token) -> usize {
        pos * (self.alphabet_size + 1) + tok as usize
    }

    fn forward(&self, x: &Sequence) -> Forward {
        let h = self.hidden;
        let (b1, w2, b2) = self.offsets();
        let p = &self.params;
        let mut hidden = p[b1..b1 + h].to_vec();
        for (pos, &tok) in x.tokens().iter().enumerate() {
            let r = self.input_row(pos, tok) * h;
            for (a, w) in hidden.iter_mut().zip(&p[r..r + h]) {
                *a += w;
            }
        }
        hidden.iter_mut().for_each(|a| *a = a.tanh());
        let out = self.len * self.alphabet_size;
        let logits = (0..out)
            .map(|o| {
                let w = &p[w2 + o * h..w2 + (o + 1) * h];
                p[b2 + o] + w.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Forward { hidden, logits }
    }

    fn fill(&self, x: &Sequence, out: &mut [f64]) {
        let d = self.alphabet_size;
        let f = self.forward(x);
        for pos in 0..self.len {
            let row = &mut out[pos * d..(pos + 1) * d];
            let tok = x.get(pos) as usize;
            if tok != d {
                row.fill(0.0);
                row[tok] = 1.0;
            } else {
                softmax_into(&f.logits[pos * d..(pos + 1) * d], row);
            }
        }
    }

    /// Adds `weight · Σ −log p` and its gradient for one example.
    fn accumulate(&self, ex: &Example, grad: &mut [f64]) -> f64 {
        let d = self.alphabet_size;
        let h = self.hidden;
        let (b1, w2, b2) = self.offsets();
        let f = self.forward(&ex.input);
        let mut loss = 0.0;
        let mut dh = vec![0.0; h];
        for &pos in &ex.positions {
            let z = &f.logits[pos * d..(pos + 1) * d];
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            let t = ex.target.get(pos) as usize;
            loss += ex.weight * (lse - z[t]);
            for (k, &zk) in z.iter().enumerate() {
                let o = pos * d + k;
                let g = ex.weight * ((zk - lse).exp() - if k == t { 1.0 } else { 0.0 });
                if g == 0.0 {
                    continue;
                }
                grad[b2 + o] += g;
                let w = &self.params[w2 + o * h..w2 + (o + 1) * h];
                let gw = &mut grad[w2 + o * h..w2 + (o + 1) * h];
                for j in 0..h {
                    gw[j] += g * f.hidden[j];
                    dh[j] += g * w[j];
                }
            }
        }
        for (j, v) in dh.iter_mut().enumerate() {
            *v *= 1.0 - f.hidden[j] * f.hidden[j];
        }
        for (g, v) in grad[b1..b1 + h].iter_mut().zip(&dh) {
            *g += v;
        }
        for (pos, &tok) in ex.input.tokens().iter().enumerate() {
            let r = self.input_row(pos, tok) * h;
            for (g, v) in grad[r..r + h].iter_mut().zip(&dh) {
                *g += v;
            }
        }
        loss
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        for v in [self.len, self.alphabet_size, self.hidden] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let io = |e: std::io::Error| Error::ModelFormat(e.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::ModelFormat("bad magic".into()));
        }
        let mut u32b = [0u8; 4];
        let mut read_u32 = |r: &mut dyn Read| -> Result<u32> {
            r.read_exact(&mut u32b).map_err(io)?;
            Ok(u32::from_le_bytes(u32b))
        };
        let version = read_u32(&mut r)?;
        if version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let len = read_u32(&mut r)? as usize;
        let d = read_u32(&mut r)? as usize;
        let hidden = read_u32(&mut r)? as usize;
        let mut u64b = [0u8; 8];
        r.read_exact(&mut u64b).map_err(io)?;
        let seed = u64::from_le_bytes(u64b);
        r.read_exact(&mut u64b).map_err(io)?;
        let count = u64::from_le_bytes(u64b) as usize;
        let mut model = Self::new(len, d, hidden, seed)?;
        if count != model.params.len() {
            return Err(Error::ModelFormat(format!(
                "expected {} parameters, header says {count}",
                model.params.len()
            )));
        }
        for p in model.params.iter_mut() {
            r.read_exact(&mut u64b).map_err(io)?;
            *p = f64::from_le_bytes(u64b);
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra).map_err(io)? != 0 {
            return Err(Error::ModelFormat("trailing bytes".into()));
        }
        Ok(model)
    }
}

fn softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

#[derive(Debug, Clone)]
enum Model {
    Tabular(Arc<Tabular>),
    Parametric(Arc<Mlp>),
}

/// A conditional model plus a frozen flag.
///
/// Cloning is cheap; parameters are copied on the first write after a clone,
/// so snapshots never observe later updates.
#[derive(Debug, Clone)]
pub struct PolicyHandle {
    model: Model,
    frozen: bool,
}

impl PolicyHandle {
    /// Exact tabular conditionals of `p`, frozen.
    pub fn build_tabular(p: &DistTable) -> Result<Self> {
        Ok(Self { model: Model::Tabular(Arc::new(Tabular::build(p)?)), frozen: true })
    }

    pub fn parametric(mlp: Mlp) -> Self {
        Self { model: Model::Parametric(Arc::new(mlp)), frozen: false }
    }

    pub fn kind(&self) -> PolicyKind {
        match self.model {
            Model::Tabular(_) => PolicyKind::TabularExact,
            Model::Parametric(_) => PolicyKind::Parametric,
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn len(&self) -> usize {
        match &self.model {
            Model::Tabular(t) => t.len,
            Model::Parametric(m) => m.len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn alphabet_size(&self) -> usize {
        match &self.model {
            Model::Tabular(t) => t.alphabet_size,
            Model::Parametric(m) => m.alphabet_size,
        }
    }

    pub fn mlp(&self) -> Option<&Mlp> {
        match &self.model {
            Model::Parametric(m) => Some(m),
            Model::Tabular(_) => None,
        }
    }

    pub fn tabular(&self) -> Option<&Tabular> {
        match &self.model {
            Model::Tabular(t) => Some(t),
            Model::Parametric(_) => None,
        }
    }

    pub fn params(&self) -> Option<&[f64]> {
        self.mlp().map(Mlp::params)
    }

    pub fn num_params(&self) -> usize {
        self.params().map_or(0, <[f64]>::len)
    }

    pub fn params_mut(&mut self) -> Result<&mut [f64]> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        match &mut self.model {
            Model::Parametric(m) => Ok(&mut Arc::make_mut(m).params),
            Model::Tabular(_) => Err(Error::NotParametric),
        }
    }

    pub fn eval_conditionals(&self, x: &Sequence) -> ConditionalTable {
        let mut probs = vec![0.0; self.len() * self.alphabet_size()];
        self.eval_into(x, &mut probs);
        ConditionalTable { len: self.len(), alphabet_size: self.alphabet_size(), probs }
    }

    /// Fill a caller-provided `L × D` buffer.
    pub fn eval_into(&self, x: &Sequence, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.len());
        match &self.model {
            Model::Tabular(t) => t.fill(x, out),
            Model::Parametric(m) => m.fill(x, out),
        }
    }

    /// `Σ_items weight · Σ_{ℓ ∈ positions} −log p(input)_{ℓ, target[ℓ]}` and its
    /// exact gradient.
    pub fn loss_and_grad(&self, batch: &[Example]) -> Result<(f64, Vec<f64>)> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        let mlp = self.mlp().ok_or(Error::NotParametric)?;
        for ex in batch {
            self.check_example(ex)?;
        }
        let n = mlp.params.len();
        // Fixed chunking keeps the summation order independent of thread count.
        let parts: Vec<(f64, Vec<f64>)> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut grad = vec![0.0; n];
                let loss = chunk
                    .iter()
                    .filter(|ex| ex.weight != 0.0)
                    .map(|ex| mlp.accumulate(ex, &mut grad))
                    .sum::<f64>();
                (loss, grad)
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; n];
        for (l, g) in parts {
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        Ok((loss, grad))
    }

    fn check_example(&self, ex: &Example) -> Result<()> {
        let len = self.len();
        for x in [&ex.input, &ex.target] {
            if x.len() != len {
                return Err(Error::LengthMismatch { expected: len, got: x.len() });
            }
            if x.alphabet_size() != self.alphabet_size() {
                return Err(Error::DimensionMismatch(self.alphabet_size(), x.alphabet_size()));
            }
        }
        if !ex.weight.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite example weight {}", ex.weight)));
        }
        for &pos in &ex.positions {
            if pos >= len {
                return Err(Error::PositionOutOfRange { pos, len });
            }
            if !ex.input.is_masked(pos) {
                return Err(Error::NotMasked(pos));
            }
            if ex.target.is_masked(pos) {
                return Err(Error::NotClean);
            }
        }
        Ok(())
    }

    /// Frozen copy that does not see later updates to `self`.
    pub fn snapshot_frozen(&self) -> Self {
        Self { model: self.model.clone(), frozen: true }
    }

    /// Unfrozen copy of a parametric handle.
    pub fn thawed(&self) -> Result<Self> {
        match &self.model {
            Model::Parametric(_) => Ok(Self { model: self.model.clone(), frozen: false }),
            Model::Tabular(_) => Err(Error::NotParametric),
        }
    }

    /// True when both handles share the same underlying model.
    pub fn same_model(&self, other: &Self) -> bool {
        match (&self.model, &other.model) {
            (Model::Tabular(a), Model::Tabular(b)) => Arc::ptr_eq(a, b),
            (Model::Parametric(a), Model::Parametric(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}
