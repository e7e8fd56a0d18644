//! Trajectory importance weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rewards::RewardValue;

/// `total = w_path + reward_term`, where `w_path` sums the per-step
/// `log p_pre − log p_policy` and `reward_term` is the (summed) reward over α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryWeight {
    pub w_path: f64,
    pub reward_term: f64,
    pub total: f64,
}

pub fn finalize_weight(w_path: f64, reward: &RewardValue, alpha: f64) -> Result<TrajectoryWeight> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let reward_term = reward.total() / alpha;
    let total = w_path + reward_term;
    if !total.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite trajectory weight {total}")));
    }
    Ok(TrajectoryWeight { w_path, reward_term, total })
}

/// Softmax of the log-weights; entries are non-negative and sum to 1.
pub fn normalize(totals: &[f64]) -> Result<Vec<f64>> {
    if totals.is_empty() {
        return Err(Error::Empty("weight batch"));
    }
    let max = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = totals.iter().map(|t| (t - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn finalize_examples() {
        assert_eq!(finalize_weight(0.0, &RewardValue::Scalar(2.0), 1.0).unwrap().total, 2.0);
        let w = finalize_weight(0.5, &RewardValue::Vector(vec![1.0, 2.0]), 0.1).unwrap();
        assert!((w.total - 30.5).abs() < 1e-12);
        let r = 0.7;
        let w = finalize_weight(0.0, &RewardValue::Scalar(r), 0.3).unwrap();
        assert_eq!(w.total, r / 0.3);
        assert_eq!(finalize_weight(0.0, &RewardValue::Scalar(0.0), 0.3).unwrap().reward_term, 0.0);
        assert!(finalize_weight(0.0, &RewardValue::Scalar(1.0), 0.0).is_err());
        assert!(finalize_weight(0.0, &RewardValue::Scalar(1.0), -1.0).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let w = normalize(&[1f64.ln(), 3f64.ln()]).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
        assert_eq!(normalize(&[4.2]).unwrap(), vec![1.0]);
        assert_eq!(normalize(&[]), Err(Error::Empty("weight batch")));
    }

    proptest! {
        #[test]
        fn shift_invariant(v in proptest::collection::vec(-50.0f64..50.0, 1..20), c in -100.0f64..100.0) {
            let a = normalize(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = normalize(&shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(a.iter().all(|&x| x >= 0.0));
        }
    }
}
