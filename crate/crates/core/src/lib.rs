//! Reward-tilted fine-tuning of masked discrete diffusion models.
//!
//! The crate covers the full loop on enumerable toy problems: exact and
//! parametric conditional models, the masked reverse sampler, trajectory
//! importance weights, weighted denoising cross-entropy training, tree search
//! that curates a replay buffer (scalar top-B or Pareto), and brute-force
//! oracles for checking all of it, including a small continuous-time
//! stochastic-optimal-control verification suite.

pub mod buffer;
pub mod diffusion;
pub mod dist;
pub mod mcts;
pub mod error;
pub mod oracle;
pub mod pareto;
pub mod policy;
pub mod rewards;
pub mod rng;
pub mod seqspace;
pub mod soc;
pub mod tasks;
pub mod training;
pub mod weights;

pub use error::{Error, Result};
