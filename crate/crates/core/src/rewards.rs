//! Synthetic, exactly computable rewards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqspace::{Sequence, Token};

/// A reward value: scalar, or one entry per objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RewardValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl RewardValue {
    pub fn dims(&self) -> usize {
        match self {
            Self::Scalar(_) => 1,
            Self::Vector(v) => v.len(),
        }
    }

    /// Sum of components (the scalar itself in scalar mode).
    pub fn total(&self) -> f64 {
        match self {
            Self::Scalar(r) => *r,
            Self::Vector(v) => v.iter().sum(),
        }
    }

    pub fn components(&self) -> Vec<f64> {
        match self {
            Self::Scalar(r) => vec![*r],
            Self::Vector(v) => v.clone(),
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardSpec {
    /// Overlapping occurrences of `motif`.
    MotifCount {
        motif: Vec<Token>,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Fraction of tokens in `subset`.
    GcFraction {
        subset: Vec<Token>,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Positions equal to the template; `None` entries are ignored.
    PositionMatch {
        template: Vec<Option<Token>>,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Sum of scalar terms.
    WeightedSum { terms: Vec<RewardSpec> },
    /// One objective per scalar component.
    CompositeVector { components: Vec<RewardSpec> },
}

impl RewardSpec {
    pub fn motif(motif: &[Token], scale: f64) -> Self {
        Self::MotifCount { motif: motif.to_vec(), scale }
    }

    pub fn gc(subset: &[Token], scale: f64) -> Self {
        Self::GcFraction { subset: subset.to_vec(), scale }
    }

    /// `motif_count(ACG) + 0.5 · gc_fraction` over `A=0, C=1, G=2, T=3`.
    pub fn micro_dna() -> Self {
        Self::WeightedSum { terms: vec![Self::motif(&[0, 1, 2], 1.0), Self::gc(&[1, 2], 0.5)] }
    }

    /// `(gc_fraction, 0.25 · motif_count(AT))`: the AT motif is GC-poor, so the
    /// two objectives conflict.
    pub fn two_objective_dna() -> Self {
        Self::CompositeVector { components: vec![Self::gc(&[1, 2], 1.0), Self::motif(&[0, 3], 0.25)] }
    }

    pub fn dims(&self) -> usize {
        match self {
            Self::CompositeVector { components } => components.len(),
            _ => 1,
        }
    }

    pub fn validate(&self, alphabet_size: usize) -> Result<()> {
        let check_tokens = |ts: &mut dyn Iterator<Item = Token>| -> Result<()> {
            for t in ts {
                if t as usize >= alphabet_size {
                    return Err(Error::InvalidToken { token: t as u32, size: alphabet_size as u32 });
                }
            }
            Ok(())
        };
        let check_scale = |s: f64| -> Result<()> {
            if s.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument("reward scale must be finite".into()))
            }
        };
        match self {
            Self::MotifCount { motif, scale } => {
                if motif.is_empty() {
                    return Err(Error::Empty("motif"));
                }
                check_tokens(&mut motif.iter().copied())?;
                check_scale(*scale)
            }
            Self::GcFraction { subset, scale } => {
                check_tokens(&mut subset.iter().copied())?;
                check_scale(*scale)
            }
            Self::PositionMatch { template, scale } => {
                check_tokens(&mut template.iter().flatten().copied())?;
                check_scale(*scale)
            }
            Self::WeightedSum { terms } | Self::CompositeVector { components: terms } => {
                if terms.is_empty() {
                    return Err(Error::Empty("reward components"));
                }
                for t in terms {
                    if matches!(t, Self::CompositeVector { .. }) {
                        return Err(Error::InvalidArgument("nested vector reward".into()));
                    }
                    t.validate(alphabet_size)?;
                }
                Ok(())
            }
        }
    }

    pub fn evaluate(&self, x: &Sequence) -> Result<RewardValue> {
        if !x.is_clean() {
            return Err(Error::NotClean);
        }
        Ok(match self {
            Self::CompositeVector { components } => RewardValue::Vector(
                components.iter().map(|c| c.scalar_unchecked(x)).collect::<Result<_>>()?,
            ),
            _ => RewardValue::Scalar(self.scalar_unchecked(x)?),
        })
    }

    /// Reward vector of a clean sequence (length 1 in scalar mode).
    pub fn evaluate_components(&self, x: &Sequence) -> Result<Vec<f64>> {
        Ok(self.evaluate(x)?.components())
    }

    /// Scalarized reward: the scalar itself, or the sum of components.
    pub fn evaluate_total(&self, x: &Sequence) -> Result<f64> {
        Ok(self.evaluate(x)?.total())
    }

    fn scalar_unchecked(&self, x: &Sequence) -> Result<f64> {
        let t = x.tokens();
        Ok(match self {
            Self::MotifCount { motif, scale } => {
                scale * t.windows(motif.len()).filter(|w| *w == &motif[..]).count() as f64
            }
            Self::GcFraction { subset, scale } => {
                scale * t.iter().filter(|tok| subset.contains(tok)).count() as f64 / t.len() as f64
            }
            Self::PositionMatch { template, scale } => {
                if template.len() != t.len() {
                    return Err(Error::LengthMismatch { expected: template.len(), got: t.len() });
                }
                scale * template.iter().zip(t).filter(|(a, b)| **a == Some(**b)).count() as f64
            }
            Self::WeightedSum { terms } => {
                terms.iter().map(|s| s.scalar_unchecked(x)).sum::<Result<f64>>()?
            }
            Self::CompositeVector { .. } => {
                return Err(Error::InvalidArgument("vector reward used as scalar".into()))
            }
        })
    }
}
