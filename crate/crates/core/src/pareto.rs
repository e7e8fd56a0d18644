//! Pareto dominance, front maintenance and exact hypervolume.

use crate::error::{Error, Result};

pub const DEFAULT_DOM_EPS: f64 = 1e-9;
pub const EXACT_MAX_POINTS: usize = 20;
pub const EXACT_MAX_DIMS: usize = 4;

/// `a` dominates `b`: no worse anywhere (within `eps`) and better somewhere
/// (by more than `eps`).
pub fn dominates(a: &[f64], b: &[f64], eps: f64) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    Ok(dominates_unchecked(a, b, eps))
}

pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64], eps: f64) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if *x < y - eps {
            return false;
        }
        if *x > y + eps {
            strict = true;
        }
    }
    strict
}

/// Mutually non-dominated `(payload, reward vector)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoFront<P> {
    items: Vec<(P, Vec<f64>)>,
    eps: f64,
}

impl<P> Default for ParetoFront<P> {
    fn default() -> Self {
        Self::new(DEFAULT_DOM_EPS)
    }
}

impl<P> ParetoFront<P> {
    pub fn new(eps: f64) -> Self {
        Self { items: Vec::new(), eps }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[(P, Vec<f64>)] {
        &self.items
    }

    pub fn rewards(&self) -> Vec<Vec<f64>> {
        self.items.iter().map(|(_, r)| r.clone()).collect()
    }

    /// Insert unless dominated; evict members the candidate dominates.
    /// Returns whether the candidate was inserted.
    pub fn update(&mut self, payload: P, reward: Vec<f64>) -> Result<bool> {
        if let Some((_, r)) = self.items.first() {
            if r.len() != reward.len() {
                return Err(Error::DimensionMismatch(r.len(), reward.len()));
            }
        }
        if reward.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("reward vector must be finite".into()));
        }
        if self.items.iter().any(|(_, r)| dominates_unchecked(r, &reward, self.eps)) {
            return Ok(false);
        }
        let eps = self.eps;
        self.items.retain(|(_, r)| !dominates_unchecked(&reward, r, eps));
        self.items.push((payload, reward));
        Ok(true)
    }

    pub fn remove(&mut self, index: usize) -> (P, Vec<f64>) {
        self.items.remove(index)
    }

    pub fn into_items(self) -> Vec<(P, Vec<f64>)> {
        self.items
    }
}

/// Clip to the reference box, drop duplicates and strictly dominated points,
/// and drop points with no volume.
fn prepare(reference: &[f64], set: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = reference.len();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(set.len());
    for p in set {
        if p.len() != k {
            return Err(Error::DimensionMismatch(k, p.len()));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("hypervolume point must be finite".into()));
        }
        let c: Vec<f64> = p.iter().zip(reference).map(|(v, r)| v.max(*r)).collect();
        if c.iter().zip(reference).all(|(v, r)| v > r) {
            pts.push(c);
        }
    }
    pts.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    pts.dedup();
    let keep: Vec<bool> = pts
        .iter()
        .map(|p| !pts.iter().any(|q| dominates_unchecked(q, p, 0.0)))
        .collect();
    Ok(pts.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect())
}

/// Measure of the union of boxes `[reference, p]`.
///
/// One and two objectives use an exact sweep with no size limit; three or four
/// objectives use inclusion–exclusion over at most [`EXACT_MAX_POINTS`]
/// non-dominated points.
pub fn hypervolume(reference: &[f64], set: &[Vec<f64>]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Empty("reference point"));
    }
    let pts = prepare(reference, set)?;
    match reference.len() {
        1 => Ok(pts.first().map_or(0.0, |p| p[0] - reference[0])),
        2 => Ok(sweep_2d(reference, pts)),
        _ => inclusion_exclusion(reference, &pts),
    }
}

fn sweep_2d(reference: &[f64], mut pts: Vec<Vec<f64>>) -> f64 {
    // Non-dominated and sorted by x descending, so y is ascending.
    pts.sort_by(|a, b| b[0].partial_cmp(&a[0]).expect("finite"));
    let mut area = 0.0;
    let mut y_prev = reference[1];
    for p in &pts {
        area += (p[0] - reference[0]) * (p[1] - y_prev);
        y_prev = p[1];
    }
    area
}

/// Inclusion–exclusion over the meets of non-dominated points.
pub fn hypervolume_inclusion_exclusion(reference: &[f64], set: &[Vec<f64>]) -> Result<f64> {
    let pts = prepare(reference, set)?;
    inclusion_exclusion(reference, &pts)
}

fn inclusion_exclusion(reference: &[f64], pts: &[Vec<f64>]) -> Result<f64> {
    let k = reference.len();
    if k > EXACT_MAX_DIMS || pts.len() > EXACT_MAX_POINTS {
        return Err(Error::ExactEngineLimit {
            points: pts.len(),
            dims: k,
            max_points: EXACT_MAX_POINTS,
            max_dims: EXACT_MAX_DIMS,
        });
    }
    fn rec(reference: &[f64], pts: &[Vec<f64>], start: usize, meet: &[f64], sign: f64) -> f64 {
        let mut acc = 0.0;
        for j in start..pts.len() {
            let m: Vec<f64> = meet.iter().zip(&pts[j]).map(|(a, b)| a.min(*b)).collect();
            let vol: f64 = m.iter().zip(reference).map(|(a, r)| a - r).product();
            if vol > 0.0 {
                acc += sign * vol + rec(reference, pts, j + 1, &m, -sign);
            }
        }
        acc
    }
    Ok(rec(reference, pts, 0, &vec![f64::INFINITY; k], 1.0))
}

/// Volume lost by removing each point individually.
pub fn exclusive_contributions(reference: &[f64], set: &[Vec<f64>]) -> Result<Vec<f64>> {
    let total = hypervolume(reference, set)?;
    (0..set.len())
        .map(|i| {
            let rest: Vec<Vec<f64>> =
                set.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| p.clone()).collect();
            Ok(total - hypervolume(reference, &rest)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dominance_examples() {
        assert!(dominates(&[2.0, 2.0], &[1.0, 2.0], 0.0).unwrap());
        assert!(!dominates(&[2.0, 1.0], &[1.0, 2.0], 0.0).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[2.0, 1.0], 0.0).unwrap());
        assert!(!dominates(&[1.0, 1.0], &[1.0, 1.0], 0.0).unwrap());
        assert!(dominates(&[1.0], &[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn update_examples() {
        let mut f = ParetoFront::new(0.0);
        assert!(f.update((), vec![1.0, 1.0]).unwrap());
        assert_eq!(f.rewards(), vec![vec![1.0, 1.0]]);
        let mut f = ParetoFront::new(0.0);
        f.update((), vec![2.0, 2.0]).unwrap();
        assert!(!f.update((), vec![1.0, 1.0]).unwrap());
        assert_eq!(f.rewards(), vec![vec![2.0, 2.0]]);
        let mut f = ParetoFront::new(0.0);
        f.update((), vec![2.0, 1.0]).unwrap();
        f.update((), vec![1.0, 2.0]).unwrap();
        assert!(f.update((), vec![2.0, 2.0]).unwrap());
        assert_eq!(f.rewards(), vec![vec![2.0, 2.0]]);
    }

    #[test]
    fn hypervolume_examples() {
        let r = [0.0, 0.0];
        assert_eq!(hypervolume(&r, &[vec![1.0, 1.0]]).unwrap(), 1.0);
        let two = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        assert_eq!(hypervolume(&r, &two).unwrap(), 3.0);
        assert_eq!(hypervolume_inclusion_exclusion(&r, &two).unwrap(), 3.0);
        let mut three = two.clone();
        three.push(vec![1.0, 1.0]);
        assert_eq!(hypervolume(&r, &three).unwrap(), 3.0);
        assert_eq!(hypervolume(&[5.0, 5.0], &two).unwrap(), 0.0);
        assert_eq!(hypervolume(&r, &[]).unwrap(), 0.0);
    }

    #[test]
    fn exact_engine_limits() {
        let pts: Vec<Vec<f64>> = (0..21)
            .map(|i| {
                let t = (i + 1) as f64 / 22.0;
                vec![t, 1.0 - t, 0.5 + 0.01 * i as f64]
            })
            .collect();
        assert!(matches!(hypervolume(&[0.0; 3], &pts), Err(Error::ExactEngineLimit { .. })));
        assert!(matches!(
            hypervolume(&[0.0; 5], &[vec![1.0; 5]]),
            Err(Error::ExactEngineLimit { .. })
        ));
    }

    #[test]
    fn exclusive_contribution_of_corner() {
        let pts = vec![vec![2.0, 1.0], vec![1.0, 2.0], vec![1.0, 1.0]];
        assert_eq!(exclusive_contributions(&[0.0, 0.0], &pts).unwrap(), vec![1.0, 1.0, 0.0]);
    }

    fn points(k: usize, max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(0.0f64..4.0, k), 0..max)
    }

    proptest! {
        #[test]
        fn sweep_matches_inclusion_exclusion(set in points(2, 12)) {
            let a = hypervolume(&[0.0, 0.0], &set).unwrap();
            let b = hypervolume_inclusion_exclusion(&[0.0, 0.0], &set).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn permutation_and_dominated_invariance(set in points(3, 10), extra in proptest::collection::vec(0.0f64..1.0, 3)) {
            prop_assume!(!set.is_empty());
            let r = [0.0; 3];
            let hv = hypervolume(&r, &set).unwrap();
            let mut rev = set.clone();
            rev.reverse();
            prop_assert_eq!(hypervolume(&r, &rev).unwrap().to_bits(), hypervolume(&r, &set).unwrap().to_bits());
            // A point inside an existing box adds nothing.
            let inner: Vec<f64> = set[0].iter().zip(&extra).map(|(p, e)| p * e).collect();
            let mut more = set.clone();
            more.push(inner);
            prop_assert!((hypervolume(&r, &more).unwrap() - hv).abs() < 1e-12 * (1.0 + hv));
        }

        #[test]
        fn update_never_loses_volume(set in points(3, 12), cand in proptest::collection::vec(0.0f64..4.0, 3)) {
            let mut f = ParetoFront::new(DEFAULT_DOM_EPS);
            for p in set {
                f.update((), p).unwrap();
            }
            let before = hypervolume(&[0.0; 3], &f.rewards()).unwrap();
            f.update((), cand).unwrap();
            let after = hypervolume(&[0.0; 3], &f.rewards()).unwrap();
            prop_assert!(after >= before - 1e-12 * (1.0 + before));
        }
    }
}
