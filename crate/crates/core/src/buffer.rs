//! Replay buffers: top-B by reward, or a Pareto front of reward vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pareto::{exclusive_contributions, hypervolume, ParetoFront, DEFAULT_DOM_EPS};
use crate::seqspace::Sequence;
use crate::weights::TrajectoryWeight;

#[derive(Debug, Clone, PartialEq)]
pub struct BufferEntry {
    pub sequence: Sequence,
    pub weight: TrajectoryWeight,
    /// Reward components (length 1 in scalar mode).
    pub reward: Vec<f64>,
    /// Tree node the trajectory was expanded into, when it came from search.
    pub node: Option<usize>,
    /// Log-RND accumulated by the rollout after that node.
    pub rollout_w: f64,
}

impl BufferEntry {
    pub fn reward_total(&self) -> f64 {
        self.reward.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferMode {
    Scalar,
    Pareto,
}

#[derive(Debug, Clone)]
enum Store {
    /// Sorted by (reward desc, total weight desc, arrival asc).
    Ranked(Vec<(BufferEntry, u64)>),
    Front(ParetoFront<BufferEntry>),
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    store: Store,
    capacity: Option<usize>,
    reference: Vec<f64>,
    arrivals: u64,
    prunes: usize,
}

impl ReplayBuffer {
    pub fn scalar(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("buffer capacity must be >= 1".into()));
        }
        Ok(Self {
            store: Store::Ranked(Vec::new()),
            capacity: Some(capacity),
            reference: vec![0.0],
            arrivals: 0,
            prunes: 0,
        })
    }

    /// Pareto buffer; `capacity = None` never prunes.
    pub fn pareto(capacity: Option<usize>, reference: Vec<f64>, eps: f64) -> Result<Self> {
        if capacity == Some(0) {
            return Err(Error::InvalidArgument("buffer capacity must be >= 1".into()));
        }
        if reference.is_empty() {
            return Err(Error::Empty("reference point"));
        }
        Ok(Self {
            store: Store::Front(ParetoFront::new(eps)),
            capacity,
            reference,
            arrivals: 0,
            prunes: 0,
        })
    }

    pub fn pareto_default(capacity: Option<usize>, dims: usize) -> Result<Self> {
        Self::pareto(capacity, vec![0.0; dims], DEFAULT_DOM_EPS)
    }

    pub fn mode(&self) -> BufferMode {
        match self.store {
            Store::Ranked(_) => BufferMode::Scalar,
            Store::Front(_) => BufferMode::Pareto,
        }
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    /// Number of exclusive-hypervolume evictions so far.
    pub fn prunes(&self) -> usize {
        self.prunes
    }

    pub fn len(&self) -> usize {
        match &self.store {
            Store::Ranked(v) => v.len(),
            Store::Front(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        match &mut self.store {
            Store::Ranked(v) => v.clear(),
            Store::Front(f) => *f = ParetoFront::new(f.eps()),
        }
        self.arrivals = 0;
    }

    pub fn entries(&self) -> Vec<&BufferEntry> {
        match &self.store {
            Store::Ranked(v) => v.iter().map(|(e, _)| e).collect(),
            Store::Front(f) => f.items().iter().map(|(e, _)| e).collect(),
        }
    }

    pub fn totals(&self) -> Vec<f64> {
        self.entries().iter().map(|e| e.weight.total).collect()
    }

    /// Offer a candidate; returns whether it is in the buffer afterwards.
    pub fn offer(&mut self, entry: BufferEntry) -> Result<bool> {
        let arrival = self.arrivals;
        self.arrivals += 1;
        match &mut self.store {
            Store::Ranked(v) => {
                let r = entry.reward_total();
                let t = entry.weight.total;
                // Keys compare as (reward desc, total desc, arrival asc).
                let pos = v.partition_point(|(e, a)| {
                    let (er, et) = (e.reward_total(), e.weight.total);
                    er > r || (er == r && (et > t || (et == t && *a < arrival)))
                });
                if let Some(cap) = self.capacity {
                    if pos >= cap {
                        return Ok(false);
                    }
                }
                v.insert(pos, (entry, arrival));
                if let Some(cap) = self.capacity {
                    v.truncate(cap);
                }
                Ok(true)
            }
            Store::Front(f) => {
                if entry.reward.len() != self.reference.len() {
                    return Err(Error::DimensionMismatch(self.reference.len(), entry.reward.len()));
                }
                if f.items().iter().any(|(e, _)| e.sequence == entry.sequence) {
                    return Ok(false);
                }
                let reward = entry.reward.clone();
                let seq = entry.sequence.clone();
                if !f.update(entry, reward)? {
                    return Ok(false);
                }
                if let Some(cap) = self.capacity {
                    while f.len() > cap {
                        let contrib = exclusive_contributions(&self.reference, &f.rewards())?;
                        let worst = contrib
                            .iter()
                            .enumerate()
                            .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
                            .map(|(i, _)| i)
                            .expect("non-empty front");
                        f.remove(worst);
                        self.prunes += 1;
                    }
                    return Ok(f.items().iter().any(|(e, _)| e.sequence == seq));
                }
                Ok(true)
            }
        }
    }

    /// Mean of each reward component over entries.
    pub fn mean_reward(&self) -> Vec<f64> {
        let entries = self.entries();
        let k = self.reference.len();
        if entries.is_empty() {
            return vec![f64::NAN; k];
        }
        let mut acc = vec![0.0; entries[0].reward.len()];
        for e in &entries {
            for (a, r) in acc.iter_mut().zip(&e.reward) {
                *a += r;
            }
        }
        acc.iter().map(|a| a / entries.len() as f64).collect()
    }

    /// Mean of the summed reward over entries.
    pub fn mean_total_reward(&self) -> f64 {
        let e = self.entries();
        if e.is_empty() {
            return f64::NAN;
        }
        e.iter().map(|x| x.reward_total()).sum::<f64>() / e.len() as f64
    }

    pub fn hypervolume(&self) -> Result<f64> {
        let pts: Vec<Vec<f64>> = self.entries().iter().map(|e| e.reward.clone()).collect();
        hypervolume(&self.reference, &pts)
    }
}
