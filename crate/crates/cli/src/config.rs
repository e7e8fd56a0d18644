//! Experiment configuration: JSON file, defaults and `--set` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use tiltlab::buffer::BufferMode;
use tiltlab::diffusion::NoiseSchedule;
use tiltlab::dist::DistTable;
use tiltlab::mcts::MctsConfig;
use tiltlab::oracle::{exact_target, MARGINAL_STATE_CAP};
use tiltlab::rewards::RewardSpec;
use tiltlab::seqspace::{Alphabet, DEFAULT_ENUM_CAP};
use tiltlab::soc::CtmcSystem;
use tiltlab::tasks::{MICRO_DNA_ALPHA, MICRO_DNA_CHAIN_SEED};
use tiltlab::training::{TrainConfig, DEFAULT_CLIP, DEFAULT_LR};

use crate::CliError;

pub const SCHEMA_REVISION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlphabetConfig {
    pub size: usize,
    /// One character per token; derived from `size` when absent.
    pub letters: Option<String>,
}

impl Default for AlphabetConfig {
    fn default() -> Self {
        Self { size: 4, letters: None }
    }
}

impl AlphabetConfig {
    pub fn build(&self) -> tiltlab::Result<Alphabet> {
        let a = match &self.letters {
            Some(l) => Alphabet::with_letters(l)?,
            None => Alphabet::new(self.size)?,
        };
        if a.size() != self.size {
            return Err(tiltlab::Error::Alphabet(format!(
                "{} letters given for alphabet size {}",
                a.size(),
                self.size
            )));
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: tiltlab::policy::DEFAULT_HIDDEN, seed: 0 }
    }
}

/// Base distribution `p_data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Uniform,
    Point { sequence: String },
    Markov { init: Vec<f64>, trans: Vec<Vec<f64>> },
    SeededMarkov { seed: u64 },
    /// CSV with `sequence,probability` rows covering every clean sequence.
    Table { path: String },
}

impl DataSpec {
    pub fn build(&self, alphabet: &Alphabet, len: usize) -> Result<DistTable, CliError> {
        let d = alphabet.size();
        Ok(match self {
            DataSpec::Uniform => DistTable::uniform(len, d)?,
            DataSpec::Point { sequence } => {
                let x = alphabet.parse(sequence)?;
                if x.len() != len {
                    return Err(tiltlab::Error::LengthMismatch { expected: len, got: x.len() }.into());
                }
                DistTable::point(&x)?
            }
            DataSpec::Markov { init, trans } => {
                if init.len() != d {
                    return Err(tiltlab::Error::DimensionMismatch(d, init.len()).into());
                }
                DistTable::markov(len, init, trans)?
            }
            DataSpec::SeededMarkov { seed } => tiltlab::tasks::seeded_markov(len, d, *seed)?,
            DataSpec::Table { path } => read_table(Path::new(path), alphabet, len)?,
        })
    }
}

fn read_table(path: &Path, alphabet: &Alphabet, len: usize) -> Result<DistTable, CliError> {
    let d = alphabet.size();
    let n = tiltlab::seqspace::clean_count(len, d);
    tiltlab::seqspace::check_cap(n, DEFAULT_ENUM_CAP)?;
    let mut probs = vec![0.0; n as usize];
    let mut seen = vec![false; n as usize];
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    for row in rdr.records() {
        let row = row.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if row.len() != 2 {
            return Err(CliError::Config(format!("{}: expected 2 columns", path.display())));
        }
        let x = alphabet.parse(&row[0])?;
        if x.len() != len {
            return Err(tiltlab::Error::LengthMismatch { expected: len, got: x.len() }.into());
        }
        let i = x.clean_index()?;
        if seen[i] {
            return Err(CliError::Config(format!("duplicate row for {}", &row[0])));
        }
        seen[i] = true;
        probs[i] = row[1]
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("bad probability {:?}", &row[1])))?;
    }
    Ok(DistTable::new(len, d, probs)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSection {
    pub steps: usize,
    pub batch: usize,
    pub reps: usize,
    pub lr: f64,
    pub clip: f64,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self { steps: 3000, batch: 64, reps: 4, lr: 0.1, clip: DEFAULT_CLIP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub buffer_size: Option<usize>,
    pub reps: usize,
    pub epochs: usize,
    pub inner_steps: usize,
    pub resample_every: usize,
    pub lr: f64,
    pub clip: f64,
    pub use_mcts: bool,
    pub iid_budget: Option<usize>,
    pub eval_samples: usize,
    pub pareto_reference: Option<Vec<f64>>,
    pub record_wall_time: bool,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            buffer_size: Some(160),
            reps: 16,
            epochs: 200,
            inner_steps: 1,
            resample_every: 5,
            lr: DEFAULT_LR,
            clip: DEFAULT_CLIP,
            use_mcts: true,
            iid_budget: None,
            eval_samples: 256,
            pareto_reference: None,
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub enabled: bool,
    /// Exact marginal every this many epochs, and at the last.
    pub every: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { enabled: true, every: 25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub n: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { n: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    TwoState,
    FourState,
}

impl Fixture {
    pub fn system(self) -> CtmcSystem {
        match self {
            Fixture::TwoState => CtmcSystem::two_state(),
            Fixture::FourState => CtmcSystem::four_state(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SocConfig {
    pub fixture: Fixture,
    pub n_grid: usize,
    pub hjb_tol: f64,
    pub kfe_tol: f64,
    pub path_tol: f64,
    pub min_order: f64,
}

impl Default for SocConfig {
    fn default() -> Self {
        Self { fixture: Fixture::TwoState, n_grid: 200, hjb_tol: 1e-6, kfe_tol: 1e-6, path_tol: 1e-9, min_order: 3.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParetoDemoConfig {
    pub reward: RewardSpec,
    pub iterations: usize,
    pub children: usize,
    pub exploration: f64,
    pub reference: Option<Vec<f64>>,
}

impl Default for ParetoDemoConfig {
    fn default() -> Self {
        Self {
            reward: RewardSpec::two_objective_dna(),
            iterations: 40,
            children: 16,
            exploration: 0.1,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_revision: u32,
    pub alphabet: AlphabetConfig,
    pub len: usize,
    pub schedule: NoiseSchedule,
    pub model: ModelConfig,
    pub data: DataSpec,
    pub reward: RewardSpec,
    pub alpha: f64,
    pub pretrain: PretrainSection,
    pub training: TrainingSection,
    pub mcts: MctsConfig,
    pub oracle: OracleConfig,
    pub sample: SampleConfig,
    pub soc: SocConfig,
    pub pareto_demo: ParetoDemoConfig,
    pub output_dir: String,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_revision: SCHEMA_REVISION,
            alphabet: AlphabetConfig::default(),
            len: tiltlab::tasks::MICRO_DNA_LEN,
            schedule: NoiseSchedule::default(),
            model: ModelConfig::default(),
            data: DataSpec::SeededMarkov { seed: MICRO_DNA_CHAIN_SEED },
            reward: RewardSpec::micro_dna(),
            alpha: MICRO_DNA_ALPHA,
            pretrain: PretrainSection::default(),
            training: TrainingSection::default(),
            mcts: MctsConfig::default(),
            oracle: OracleConfig::default(),
            sample: SampleConfig::default(),
            soc: SocConfig::default(),
            pareto_demo: ParetoDemoConfig::default(),
            output_dir: "out".into(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Read `path` (or start from defaults), apply `key=value` overrides and validate.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let base: Self = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?
            }
            None => Self::default(),
        };
        let mut value = serde_json::to_value(&base).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_revision != SCHEMA_REVISION {
            return Err(CliError::Config(format!(
                "schema_revision {} unsupported (expected {SCHEMA_REVISION})",
                self.schema_revision
            )));
        }
        if self.len == 0 {
            return Err(CliError::Config("len must be >= 1".into()));
        }
        self.alphabet.build()?;
        self.schedule.validate()?;
        self.reward.validate(self.alphabet.size)?;
        self.pareto_demo.reward.validate(self.alphabet.size)?;
        if self.model.hidden == 0 {
            return Err(CliError::Config("model.hidden must be >= 1".into()));
        }
        if self.pretrain.batch == 0 || self.pretrain.reps == 0 {
            return Err(CliError::Config("pretrain.batch and pretrain.reps must be >= 1".into()));
        }
        self.train_config(self.mcts.mode).validate()?;
        Ok(())
    }

    pub fn train_config(&self, mode: BufferMode) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            alpha: self.alpha,
            buffer_size: t.buffer_size,
            reps: t.reps,
            epochs: t.epochs,
            inner_steps: t.inner_steps,
            resample_every: t.resample_every,
            lr: t.lr,
            clip: t.clip,
            seed: self.seed,
            mcts: MctsConfig { mode, ..self.mcts },
            use_mcts: t.use_mcts,
            iid_budget: t.iid_budget,
            eval_samples: t.eval_samples,
            oracle_every: if self.oracle.enabled { self.oracle.every } else { 0 },
            pareto_reference: t.pareto_reference.clone(),
            record_wall_time: t.record_wall_time,
        }
    }

    /// Exact tilted target when the oracle is on and the instance is enumerable.
    pub fn target(&self, data: &DistTable) -> Result<Option<DistTable>, CliError> {
        if !self.oracle.enabled || !self.enumerable() {
            return Ok(None);
        }
        let reward = &self.reward;
        Ok(Some(exact_target(data, |x| reward.evaluate_total(x).expect("clean sequence"), self.alpha)?))
    }

    pub fn enumerable(&self) -> bool {
        (self.alphabet.size as u128 + 1).checked_pow(self.len as u32).is_some_and(|n| n <= MARGINAL_STATE_CAP)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

/// Set `dotted.key` inside `value`; the right-hand side is parsed as JSON and
/// falls back to a string.
pub fn apply_override(value: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let parsed: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match cur {
            Value::Object(m) => m,
            Value::Null => {
                *cur = Value::Object(Default::default());
                cur.as_object_mut().expect("just created")
            }
            _ => return Err(CliError::Config(format!("{key}: {part} is not an object"))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Err(CliError::Config("empty override key".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_dna_column() {
        let c = ExperimentConfig::default();
        assert_eq!(c.mcts.exploration, 0.1);
        assert_eq!(c.training.reps, 16);
        assert_eq!(c.alpha, 0.1);
        assert_eq!(c.schedule.n_steps, 128);
        assert_eq!((c.mcts.children, c.mcts.iterations), (32, 5));
        assert_eq!(c.training.resample_every, 5);
        assert_eq!(c.training.buffer_size, Some(160));
        assert_eq!(c.mcts.k(), 32);
        c.validate().unwrap();
    }

    #[test]
    fn round_trip() {
        let c = ExperimentConfig::load(None, &["mcts.mode=pareto".into(), "seed=9".into()]).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.mcts.mode, BufferMode::Pareto);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::load(None, &["training.bogus=1".into()]).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"nope": 1}"#).is_err());
    }

    #[test]
    fn overrides_parse_json_or_string() {
        let c = ExperimentConfig::load(None, &["data={\"kind\":\"uniform\"}".into(), "output_dir=runs/a".into()])
            .unwrap();
        assert_eq!(c.data, DataSpec::Uniform);
        assert_eq!(c.output_dir, "runs/a");
        assert!(ExperimentConfig::load(None, &["alpha=0".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["alpha".into()]).is_err());
    }

    #[test]
    fn partial_sections_take_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"schedule": {"mode": "one_at_a_time"}}"#).unwrap();
        assert_eq!(c.schedule.n_steps, 128);
        assert_eq!(c.training, TrainingSection::default());
    }
}
