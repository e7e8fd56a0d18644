//! Explicit distributions over the clean sequences of a fixed `(L, D)`.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::seqspace::{check_cap, clean_count, Alphabet, Sequence, DEFAULT_ENUM_CAP};

const NORM_TOL: f64 = 1e-9;

/// Probabilities indexed by [`Sequence::clean_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct DistTable {
    len: usize,
    alphabet_size: usize,
    probs: Vec<f64>,
}

impl DistTable {
    pub fn new(len: usize, alphabet_size: usize, probs: Vec<f64>) -> Result<Self> {
        let n = clean_count(len, alphabet_size);
        check_cap(n, DEFAULT_ENUM_CAP)?;
        if probs.len() as u128 != n {
            return Err(Error::LengthMismatch { expected: n as usize, got: probs.len() });
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument("probabilities must be finite and non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self { len, alphabet_size, probs })
    }

    /// Normalize non-negative weights.
    pub fn from_weights(len: usize, alphabet_size: usize, mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::NotNormalized(total));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(len, alphabet_size, weights)
    }

    /// Normalize `exp(log_weights)` with max-subtraction.
    pub fn from_log_weights(len: usize, alphabet_size: usize, log_weights: &[f64]) -> Result<Self> {
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::InvalidArgument("no finite log-weight".into()));
        }
        Self::from_weights(len, alphabet_size, log_weights.iter().map(|w| (w - max).exp()).collect())
    }

    pub fn uniform(len: usize, alphabet_size: usize) -> Result<Self> {
        let n = clean_count(len, alphabet_size);
        check_cap(n, DEFAULT_ENUM_CAP)?;
        Self::new(len, alphabet_size, vec![1.0 / n as f64; n as usize])
    }

    pub fn point(x: &Sequence) -> Result<Self> {
        let n = clean_count(x.len(), x.alphabet_size());
        check_cap(n, DEFAULT_ENUM_CAP)?;
        let mut probs = vec![0.0; n as usize];
        probs[x.clean_index()?] = 1.0;
        Self::new(x.len(), x.alphabet_size(), probs)
    }

    /// Order-1 Markov chain with initial law `init` and row-stochastic `trans`.
    pub fn markov(len: usize, init: &[f64], trans: &[Vec<f64>]) -> Result<Self> {
        let d = init.len();
        if trans.len() != d || trans.iter().any(|row| row.len() != d) {
            return Err(Error::DimensionMismatch(d, trans.len()));
        }
        let n = clean_count(len, d);
        check_cap(n, DEFAULT_ENUM_CAP)?;
        let probs = (0..n as usize)
            .map(|i| {
                let x = Sequence::from_clean_index(i, len, d);
                let t = x.tokens();
                let mut p = init[t[0] as usize];
                for w in t.windows(2) {
                    p *= trans[w[0] as usize][w[1] as usize];
                }
                p
            })
            .collect();
        Self::new(len, d, probs)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, x: &Sequence) -> Result<f64> {
        if x.len() != self.len {
            return Err(Error::LengthMismatch { expected: self.len, got: x.len() });
        }
        Ok(self.probs[x.clean_index()?])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Sequence, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (Sequence::from_clean_index(i, self.len, self.alphabet_size), p))
    }

    pub fn expectation(&self, mut f: impl FnMut(&Sequence) -> f64) -> f64 {
        self.iter().map(|(x, p)| if p > 0.0 { p * f(&x) } else { 0.0 }).sum()
    }

    /// `(sequence string, probability)` rows sorted by the string.
    pub fn rows(&self, alphabet: &Alphabet) -> Result<Vec<(String, f64)>> {
        let mut rows = self
            .iter()
            .map(|(x, p)| Ok((alphabet.render(&x)?, p)))
            .collect::<Result<Vec<_>>>()?;
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(rows)
    }

    pub fn sampler(&self) -> DistSampler {
        let mut acc = 0.0;
        let cdf = self
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        DistSampler { cdf, len: self.len, alphabet_size: self.alphabet_size }
    }
}

/// Inverse-CDF sampler over a [`DistTable`].
#[derive(Debug, Clone)]
pub struct DistSampler {
    cdf: Vec<f64>,
    len: usize,
    alphabet_size: usize,
}

impl DistSampler {
    pub fn sample(&self, rng: &mut Rng) -> Sequence {
        let total = *self.cdf.last().expect("non-empty table");
        let u = rng.gen::<f64>() * total;
        let i = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        Sequence::from_clean_index(i, self.len, self.alphabet_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn rejects_unnormalized() {
        assert!(matches!(DistTable::new(1, 2, vec![0.5, 0.6]), Err(Error::NotNormalized(_))));
        assert!(DistTable::new(1, 2, vec![0.5]).is_err());
    }

    #[test]
    fn markov_is_normalized() {
        let t = vec![vec![0.9, 0.1], vec![0.3, 0.7]];
        let p = DistTable::markov(3, &[0.5, 0.5], &t).unwrap();
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p.probs()[0] - 0.5 * 0.9 * 0.9).abs() < 1e-15);
    }

    #[test]
    fn sampler_hits_point_mass() {
        let x = Sequence::new(vec![1, 0, 1], 2).unwrap();
        let s = DistTable::point(&x).unwrap().sampler();
        let mut rng = seeded(3);
        assert!((0..100).all(|_| s.sample(&mut rng) == x));
    }

    #[test]
    fn rows_sorted_by_string() {
        let a = Alphabet::with_letters("TA").unwrap();
        let p = DistTable::uniform(1, 2).unwrap();
        let rows = p.rows(&a).unwrap();
        assert_eq!(rows[0].0, "A");
        assert_eq!(rows[1].0, "T");
    }
}
