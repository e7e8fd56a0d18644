//! Enumerable desk tasks used by the examples, the CLI and the tests.

use rand::Rng as _;

use crate::dist::DistTable;
use crate::error::Result;
use crate::oracle::exact_target;
use crate::rewards::RewardSpec;
use crate::rng::seeded;

pub const MICRO_DNA_LEN: usize = 8;
pub const MICRO_DNA_ALPHABET: usize = 4;
pub const MICRO_DNA_ALPHA: f64 = 0.1;
pub const MICRO_DNA_CHAIN_SEED: u64 = 0x5EED_D7A;

/// Random order-1 Markov chain over `d` tokens with entries bounded away from 0.
pub fn seeded_markov(len: usize, d: usize, seed: u64) -> Result<DistTable> {
    let mut rng = seeded(seed);
    let row = |rng: &mut crate::rng::Rng| {
        let raw: Vec<f64> = (0..d).map(|_| 0.2 - (1.0 - rng.gen::<f64>()).ln()).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect::<Vec<f64>>()
    };
    let init = row(&mut rng);
    let trans: Vec<Vec<f64>> = (0..d).map(|_| row(&mut rng)).collect();
    DistTable::markov(len, &init, &trans)
}

/// Base distribution of the single-objective DNA task.
pub fn micro_dna_data() -> Result<DistTable> {
    seeded_markov(MICRO_DNA_LEN, MICRO_DNA_ALPHABET, MICRO_DNA_CHAIN_SEED)
}

/// `(p_data, reward, p_target)` of the single-objective DNA task.
pub fn micro_dna() -> Result<(DistTable, RewardSpec, DistTable)> {
    let data = micro_dna_data()?;
    let reward = RewardSpec::micro_dna();
    let target = exact_target(&data, |x| reward.evaluate_total(x).expect("clean sequence"), MICRO_DNA_ALPHA)?;
    Ok((data, reward, target))
}

/// `(p_data, reward)` of the conflicting two-objective DNA task.
pub fn two_objective_dna() -> Result<(DistTable, RewardSpec)> {
    Ok((micro_dna_data()?, RewardSpec::two_objective_dna()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_peaks_away_from_data_mode() {
        let (data, reward, target) = micro_dna().unwrap();
        let mode = data.iter().max_by(|a, b| a.1.partial_cmp(&b.1).unwrap()).unwrap().0;
        let best = data
            .iter()
            .map(|(x, _)| reward.evaluate_total(&x).unwrap())
            .fold(f64::MIN, f64::max);
        assert!(reward.evaluate_total(&mode).unwrap() < best);
        let rd = data.expectation(|x| reward.evaluate_total(x).unwrap());
        let rt = target.expectation(|x| reward.evaluate_total(x).unwrap());
        assert!(rt > rd);
    }

    #[test]
    fn chain_is_fixed() {
        assert_eq!(micro_dna_data().unwrap(), micro_dna_data().unwrap());
    }
}
