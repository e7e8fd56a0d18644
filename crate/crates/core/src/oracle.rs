//! Brute-force reference computations on enumerable instances.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::DistTable;
use crate::error::{Error, Result};
use crate::pareto::{dominates_unchecked, hypervolume};
use crate::policy::PolicyHandle;
use crate::rng::{derive_seed, seeded};
use crate::seqspace::{check_cap, clean_count, Sequence, DEFAULT_ENUM_CAP};

pub use crate::soc::{soc_verify, CtmcSystem, SocReport};

/// Cap on `(D+1)^L` for the layered marginal computation.
pub const MARGINAL_STATE_CAP: u128 = 1 << 22;
/// Cap on `L! · D^L` for the order-enumeration oracle.
pub const ORDER_PATH_CAP: u128 = 50_000_000;

/// `p_target(x) ∝ p_data(x) · exp(r(x)/α)`.
pub fn exact_target(
    p_data: &DistTable,
    reward: impl Fn(&Sequence) -> f64,
    alpha: f64,
) -> Result<DistTable> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let logw: Vec<f64> = p_data
        .iter()
        .map(|(x, p)| if p > 0.0 { p.ln() + reward(&x) / alpha } else { f64::NEG_INFINITY })
        .collect();
    DistTable::from_log_weights(p_data.len(), p_data.alphabet_size(), &logw)
}

/// Terminal law of one-token-per-event generation with a uniformly random
/// unmasking order.
///
/// Mass is pushed layer by layer from the fully masked state; each child
/// state pulls from its parents, so the summation order is fixed.
pub fn exact_terminal_marginal(model: &PolicyHandle, len: usize, alphabet_size: usize) -> Result<DistTable> {
    check_shape(model, len, alphabet_size)?;
    let d = alphabet_size;
    let b = d + 1;
    check_cap(clean_count(len, d), DEFAULT_ENUM_CAP)?;
    let states = clean_count(len, b);
    check_cap(states, MARGINAL_STATE_CAP)?;
    let states = states as usize;
    let strides: Vec<usize> = (0..len).map(|pos| b.pow((len - 1 - pos) as u32)).collect();
    let masks_of = |idx: usize| -> usize { strides.iter().filter(|&&s| (idx / s) % b == d).count() };

    let mut layers: Vec<Vec<usize>> = vec![Vec::new(); len + 1];
    for idx in 0..states {
        layers[masks_of(idx)].push(idx);
    }
    let mut mass = vec![0.0f64; states];
    mass[states - 1] = 1.0;
    let mut slot = vec![u32::MAX; states];
    for k in (1..=len).rev() {
        let parents = &layers[k];
        for (i, &idx) in parents.iter().enumerate() {
            slot[idx] = i as u32;
        }
        // Conditionals of every live parent, scaled by mass / k.
        let tables: Vec<Option<Vec<f64>>> = parents
            .par_iter()
            .map(|&idx| {
                let m = mass[idx];
                (m > 0.0).then(|| {
                    let x = Sequence::from_partial_index(idx, len, d);
                    let mut t = vec![0.0; len * d];
                    model.eval_into(&x, &mut t);
                    t.iter_mut().for_each(|v| *v *= m / k as f64);
                    t
                })
            })
            .collect();
        let children = &layers[k - 1];
        let pulled: Vec<f64> = children
            .par_iter()
            .map(|&idx| {
                let mut acc = 0.0;
                for (pos, &s) in strides.iter().enumerate() {
                    let tok = (idx / s) % b;
                    if tok == d {
                        continue;
                    }
                    let parent = idx + (d - tok) * s;
                    if let Some(t) = &tables[slot[parent] as usize] {
                        acc += t[pos * d + tok];
                    }
                }
                acc
            })
            .collect();
        for (&idx, v) in children.iter().zip(pulled) {
            mass[idx] = v;
        }
    }
    let probs: Vec<f64> = (0..clean_count(len, d) as usize)
        .map(|i| mass[Sequence::from_clean_index(i, len, d).partial_index()])
        .collect();
    let total: f64 = probs.iter().sum();
    DistTable::new(len, d, probs.into_iter().map(|p| p / total).collect())
}

/// Same law by explicit enumeration of all unmasking orders and tokens.
pub fn exact_terminal_marginal_by_orders(
    model: &PolicyHandle,
    len: usize,
    alphabet_size: usize,
) -> Result<DistTable> {
    check_shape(model, len, alphabet_size)?;
    let d = alphabet_size;
    let fact: u128 = (1..=len as u128).product();
    check_cap(fact.saturating_mul(clean_count(len, d)), ORDER_PATH_CAP)?;
    let mut probs = vec![0.0; clean_count(len, d) as usize];
    fn rec(model: &PolicyHandle, x: &Sequence, weight: f64, probs: &mut [f64]) {
        let masked = x.masked_positions();
        if masked.is_empty() {
            probs[x.clean_index().expect("clean")] += weight;
            return;
        }
        let table = model.eval_conditionals(x);
        let share = weight / masked.len() as f64;
        for &pos in &masked {
            for (tok, &p) in table.row(pos).iter().enumerate() {
                if p > 0.0 {
                    let y = x.substitute(pos, tok as u16).expect("masked");
                    rec(model, &y, share * p, probs);
                }
            }
        }
    }
    rec(model, &Sequence::fully_masked(len, d), 1.0, &mut probs);
    DistTable::new(len, d, probs)
}

fn check_shape(model: &PolicyHandle, len: usize, d: usize) -> Result<()> {
    if model.len() != len {
        return Err(Error::LengthMismatch { expected: model.len(), got: len });
    }
    if model.alphabet_size() != d {
        return Err(Error::DimensionMismatch(model.alphabet_size(), d));
    }
    Ok(())
}

pub const KL_FLOOR: f64 = 1e-300;
pub const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    /// `KL(p ‖ q)` with `q` floored at [`KL_FLOOR`].
    pub kl: f64,
    pub tv: f64,
    /// `p` has mass where `q < 1e-12`.
    pub support_mismatch: bool,
}

pub fn divergences(p: &DistTable, q: &DistTable) -> Result<Divergence> {
    if p.len() != q.len() || p.alphabet_size() != q.alphabet_size() {
        return Err(Error::DimensionMismatch(p.probs().len(), q.probs().len()));
    }
    Ok(divergences_raw(p.probs(), q.probs()))
}

pub fn divergences_raw(p: &[f64], q: &[f64]) -> Divergence {
    let mut kl = 0.0;
    let mut tv = 0.0;
    let mut support_mismatch = false;
    for (&a, &b) in p.iter().zip(q) {
        tv += (a - b).abs();
        if a > 0.0 {
            if b < SUPPORT_TOL {
                support_mismatch = true;
            }
            kl += a * (a / b.max(KL_FLOOR)).ln();
        }
    }
    Divergence { kl: kl.max(0.0), tv: tv / 2.0, support_mismatch }
}

/// Pairwise non-dominated filter, keeping input order.
pub fn brute_front(points: &[Vec<f64>], eps: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let dominated = points.iter().enumerate().any(|(j, q)| j != i && dominates_unchecked(q, p, eps));
        if !dominated {
            out.push(p.clone());
        }
    }
    out
}

/// Hypervolume estimate and standard error by uniform sampling in the box
/// from `reference` to the coordinate-wise maximum.
pub fn mc_hypervolume(reference: &[f64], set: &[Vec<f64>], n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    let k = reference.len();
    if set.is_empty() || n_samples == 0 {
        return Ok((0.0, 0.0));
    }
    let mut upper = reference.to_vec();
    for p in set {
        if p.len() != k {
            return Err(Error::DimensionMismatch(k, p.len()));
        }
        for (u, v) in upper.iter_mut().zip(p) {
            *u = u.max(*v);
        }
    }
    let volume: f64 = upper.iter().zip(reference).map(|(u, r)| u - r).product();
    if volume <= 0.0 {
        return Ok((0.0, 0.0));
    }
    const CHUNK: usize = 1 << 14;
    let chunks = n_samples.div_ceil(CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seeded(derive_seed(seed, c as u64));
            let n = CHUNK.min(n_samples - c * CHUNK);
            let mut s = vec![0.0; k];
            let mut hits = 0usize;
            for _ in 0..n {
                for ((v, r), u) in s.iter_mut().zip(reference).zip(&upper) {
                    *v = r + (u - r) * rng.gen::<f64>();
                }
                if set.iter().any(|p| p.iter().zip(&s).all(|(a, b)| a >= b)) {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let p = hits as f64 / n_samples as f64;
    Ok((volume * p, volume * (p * (1.0 - p) / n_samples as f64).sqrt()))
}

/// Exact hypervolume when the engine allows it, else a Monte-Carlo estimate.
pub fn hypervolume_any(reference: &[f64], set: &[Vec<f64>], seed: u64) -> Result<f64> {
    match hypervolume(reference, set) {
        Err(Error::ExactEngineLimit { .. }) => Ok(mc_hypervolume(reference, set, 1_000_000, seed)?.0),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Mlp;
    use crate::rng::stream;
    use crate::seqspace::enumerate_clean;

    fn ones(x: &Sequence) -> f64 {
        x.tokens().iter().filter(|&&t| t == 1).count() as f64
    }

    #[test]
    fn target_examples() {
        let u = DistTable::uniform(2, 2).unwrap();
        assert_eq!(exact_target(&u, |_| 0.0, 1.0).unwrap(), u);
        let t = exact_target(&u, ones, 1.0).unwrap();
        let e = std::f64::consts::E;
        let z = (1.0 + e) * (1.0 + e);
        assert!((t.probs()[3] - e * e / z).abs() < 1e-12);
        assert!((t.probs()[3] - 0.534447).abs() < 1e-6);
        assert!((t.probs()[0] - 0.072330).abs() < 1e-6);
        assert!((t.probs()[1] - 0.196612).abs() < 1e-6);
        let flat = exact_target(&u, ones, 1e6).unwrap();
        assert!(divergences(&flat, &u).unwrap().tv < 1e-5);
        assert!(exact_target(&u, ones, 0.0).is_err());
    }

    #[test]
    fn extreme_tilt_does_not_overflow() {
        let u = DistTable::uniform(3, 2).unwrap();
        let t = exact_target(&u, |x| 1e3 * ones(x), 1e-3).unwrap();
        assert!((t.probs()[7] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn marginal_recovers_table() {
        let mut rng = stream(3, 1);
        for (len, d) in [(1, 3), (2, 2), (3, 3), (4, 2)] {
            let w: Vec<f64> = (0..clean_count(len, d)).map(|_| rng.gen::<f64>()).collect();
            let p = DistTable::from_weights(len, d, w).unwrap();
            let h = PolicyHandle::build_tabular(&p).unwrap();
            for m in [exact_terminal_marginal(&h, len, d).unwrap(), exact_terminal_marginal_by_orders(&h, len, d).unwrap()] {
                let err = m.probs().iter().zip(p.probs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-10, "L={len} D={d}: {err}");
            }
        }
    }

    #[test]
    fn marginal_methods_agree_on_mlp() {
        let h = PolicyHandle::parametric(Mlp::new(4, 3, 6, 21).unwrap());
        let a = exact_terminal_marginal(&h, 4, 3).unwrap();
        let b = exact_terminal_marginal_by_orders(&h, 4, 3).unwrap();
        let err = a.probs().iter().zip(b.probs()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn marginal_point_and_single_position() {
        let pt = Sequence::new(vec![2, 0, 1], 3).unwrap();
        let h = PolicyHandle::build_tabular(&DistTable::point(&pt).unwrap()).unwrap();
        assert_eq!(exact_terminal_marginal(&h, 3, 3).unwrap().prob(&pt).unwrap(), 1.0);
        let m = PolicyHandle::parametric(Mlp::new(1, 4, 3, 2).unwrap());
        let row = m.eval_conditionals(&Sequence::fully_masked(1, 4));
        let marg = exact_terminal_marginal(&m, 1, 4).unwrap();
        for t in 0..4 {
            assert!((marg.probs()[t] - row.get(0, t as u16)).abs() < 1e-15);
        }
    }

    #[test]
    fn marginal_cap() {
        let h = PolicyHandle::parametric(Mlp::new(12, 4, 2, 0).unwrap());
        assert!(matches!(exact_terminal_marginal(&h, 12, 4), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn divergence_examples() {
        let p = [1.0, 0.0];
        let q = [0.5, 0.5];
        let d = divergences_raw(&p, &q);
        assert!((d.kl - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(d.tv, 0.5);
        assert_eq!(divergences_raw(&q, &p).tv, 0.5);
        assert!(divergences_raw(&q, &p).support_mismatch);
        let z = divergences_raw(&q, &q);
        assert_eq!((z.kl, z.tv), (0.0, 0.0));
    }

    #[test]
    fn brute_front_examples() {
        assert_eq!(brute_front(&[vec![1.0, 1.0]], 0.0), vec![vec![1.0, 1.0]]);
        let pts = vec![vec![2.0, 1.0], vec![1.0, 2.0], vec![1.0, 1.0]];
        assert_eq!(brute_front(&pts, 0.0), vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        let same = vec![vec![1.0, 3.0]; 3];
        let mut f = brute_front(&same, 0.0);
        f.dedup();
        assert_eq!(f, vec![vec![1.0, 3.0]]);
    }

    #[test]
    fn mc_hypervolume_examples() {
        let (est, se) = mc_hypervolume(&[0.0, 0.0], &[vec![1.0, 1.0]], 1000, 1).unwrap();
        assert_eq!((est, se), (1.0, 0.0));
        let two = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let (est, se) = mc_hypervolume(&[0.0, 0.0], &two, 1_000_000, 2).unwrap();
        assert!((est - 3.0).abs() <= 3.0 * se, "{est} ± {se}");
        assert_eq!(mc_hypervolume(&[5.0, 5.0], &two, 1000, 3).unwrap().0, 0.0);
        assert_eq!(mc_hypervolume(&[0.0, 0.0], &[], 1000, 3).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn enumerate_matches_table_order() {
        let all = enumerate_clean(3, 2).unwrap();
        let p = DistTable::uniform(3, 2).unwrap();
        for ((x, _), y) in p.iter().zip(&all) {
            assert_eq!(&x, y);
        }
    }
}
