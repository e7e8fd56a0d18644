//! Subcommand implementations.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use tiltlab::buffer::{BufferMode, ReplayBuffer};
use tiltlab::dist::DistTable;
use tiltlab::mcts::{self, MctsConfig, SearchContext, Tree};
use tiltlab::oracle::{divergences, exact_target, exact_terminal_marginal};
use tiltlab::policy::{Mlp, PolicyHandle};
use tiltlab::rng::{derive_seed, stream};
use tiltlab::seqspace::{Alphabet, Sequence};
use tiltlab::soc::{convergence_orders, soc_verify, SocReport};
use tiltlab::training::{self, EpochMetrics, PretrainConfig, Task};
use tiltlab::weights::normalize;

use crate::config::ExperimentConfig;
use crate::output::{fmt_f64, fmt_opt, write_csv, write_json};
use crate::CliError;

const PRETRAIN_STREAM: u64 = 1;
const SAMPLE_STREAM: u64 = 3;
const PARETO_STREAM: u64 = 4;

struct Setup {
    alphabet: Alphabet,
    data: DistTable,
    pre: PolicyHandle,
    out: PathBuf,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let out = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    std::fs::write(out.join("config.json"), cfg.to_json())?;
    let alphabet = cfg.alphabet.build()?;
    let data = cfg.data.build(&alphabet, cfg.len)?;
    let pre = PolicyHandle::build_tabular(&data)?;
    Ok(Setup { alphabet, data, pre, out })
}

fn pretrained(cfg: &ExperimentConfig, s: &Setup) -> Result<PolicyHandle, CliError> {
    let mut model =
        PolicyHandle::parametric(Mlp::new(cfg.len, cfg.alphabet.size, cfg.model.hidden, cfg.model.seed)?);
    let p = &cfg.pretrain;
    let pc = PretrainConfig {
        steps: p.steps,
        batch: p.batch,
        reps: p.reps,
        lr: p.lr,
        clip: p.clip,
        seed: derive_seed(cfg.seed, PRETRAIN_STREAM),
    };
    let losses = training::pretrain(&mut model, &s.data.sampler(), &pc)?;
    let rows: Vec<Vec<String>> = losses.iter().enumerate().map(|(i, l)| vec![i.to_string(), fmt_f64(*l)]).collect();
    write_csv(&s.out.join("pretrain_loss.csv"), &["step".into(), "loss".into()], &rows)?;
    Ok(model)
}

fn save_model(model: &PolicyHandle, path: &Path) -> Result<(), CliError> {
    let mlp = model.mlp().ok_or(tiltlab::Error::NotParametric)?;
    let f = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    mlp.write_to(BufWriter::new(f))?;
    Ok(())
}

fn load_model(cfg: &ExperimentConfig, path: &Path) -> Result<PolicyHandle, CliError> {
    let f = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let model = PolicyHandle::parametric(Mlp::read_from(BufReader::new(f))?);
    if model.len() != cfg.len {
        return Err(tiltlab::Error::LengthMismatch { expected: cfg.len, got: model.len() }.into());
    }
    if model.alphabet_size() != cfg.alphabet.size {
        return Err(tiltlab::Error::DimensionMismatch(cfg.alphabet.size, model.alphabet_size()).into());
    }
    Ok(model)
}

pub fn pretrain(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let model = pretrained(cfg, &s)?;
    save_model(&model, &s.out.join("model.bin"))
}

#[derive(Serialize)]
struct BufferDumpEntry {
    sequence: String,
    reward: Vec<f64>,
    w_path: f64,
    reward_term: f64,
    total: f64,
    normalized_weight: f64,
}

#[derive(Serialize)]
struct BufferDump {
    epoch: usize,
    mode: BufferMode,
    hypervolume: Option<f64>,
    entries: Vec<BufferDumpEntry>,
}

fn dump_buffer(epoch: usize, buf: &ReplayBuffer, alphabet: &Alphabet) -> Result<BufferDump, CliError> {
    let weights = if buf.is_empty() { Vec::new() } else { normalize(&buf.totals())? };
    let entries = buf
        .entries()
        .iter()
        .zip(weights)
        .map(|(e, w)| {
            Ok(BufferDumpEntry {
                sequence: alphabet.render(&e.sequence)?,
                reward: e.reward.clone(),
                w_path: e.weight.w_path,
                reward_term: e.weight.reward_term,
                total: e.weight.total,
                normalized_weight: w,
            })
        })
        .collect::<Result<_, CliError>>()?;
    Ok(BufferDump {
        epoch,
        mode: buf.mode(),
        hypervolume: match buf.mode() {
            BufferMode::Pareto => Some(buf.hypervolume()?),
            BufferMode::Scalar => None,
        },
        entries,
    })
}

fn metrics_table(rows: &[EpochMetrics], dims: usize) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["epoch".to_string(), "mean_buffer_reward".into()];
    if dims > 1 {
        header.extend((1..=dims).map(|k| format!("mean_buffer_reward_{k}")));
    }
    header.extend(
        [
            "mean_sample_reward",
            "kl_to_target",
            "kl_target_model",
            "tv_to_target",
            "buffer_hypervolume",
            "loss",
            "wall_ms",
            "seed",
        ]
        .map(String::from),
    );
    let body = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.epoch.to_string(), fmt_f64(r.mean_buffer_reward)];
            if dims > 1 {
                v.extend(r.buffer_objectives.iter().map(|x| fmt_f64(*x)));
            }
            v.extend([
                fmt_f64(r.mean_sample_reward),
                fmt_opt(r.kl_to_target),
                fmt_opt(r.kl_target_model),
                fmt_opt(r.tv_to_target),
                fmt_opt(r.buffer_hypervolume),
                fmt_f64(r.loss),
                r.wall_ms.map(|w| w.to_string()).unwrap_or_default(),
                r.seed.to_string(),
            ]);
            v
        })
        .collect();
    (header, body)
}

pub fn finetune(cfg: &ExperimentConfig, model_path: Option<&Path>) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let mut model = match model_path {
        Some(p) => load_model(cfg, p)?,
        None => pretrained(cfg, &s)?,
    };
    let target = cfg.target(&s.data)?;
    let task = Task { pre: &s.pre, reward: &cfg.reward, schedule: &cfg.schedule, target: target.as_ref() };
    let tcfg = cfg.train_config(cfg.mcts.mode);
    let mut hook_err = None;
    let mut hook = |epoch: usize, buf: &ReplayBuffer, _tree: Option<&Tree>| -> tiltlab::Result<()> {
        let written = dump_buffer(epoch, buf, &s.alphabet)
            .and_then(|d| write_json(&s.out.join(format!("buffer_epoch_{epoch:05}.json")), &d));
        written.map_err(|e| {
            hook_err = Some(e);
            tiltlab::Error::InvalidArgument("buffer dump failed".into())
        })
    };
    let result = training::finetune(&mut model, &task, &tcfg, Some(&mut hook));
    if let Some(e) = hook_err {
        return Err(e);
    }
    let rows = result?;
    let (header, body) = metrics_table(&rows, cfg.reward.dims());
    write_csv(&s.out.join("metrics.csv"), &header, &body)?;
    save_model(&model, &s.out.join("finetuned.bin"))
}

fn policy_for(cfg: &ExperimentConfig, s: &Setup, model_path: Option<&Path>) -> Result<PolicyHandle, CliError> {
    Ok(match model_path {
        Some(p) => load_model(cfg, p)?.snapshot_frozen(),
        None => s.pre.clone(),
    })
}

pub fn sample(cfg: &ExperimentConfig, model_path: Option<&Path>) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let policy = policy_for(cfg, &s, model_path)?;
    let (len, d) = (cfg.len, cfg.alphabet.size);
    let start = cfg.schedule.start_level(len);
    let base = derive_seed(cfg.seed, SAMPLE_STREAM);
    let draws: Vec<(Sequence, Vec<f64>)> = (0..cfg.sample.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(base, i as u64);
            let (x, _) =
                cfg.schedule.rollout_from_level(&Sequence::fully_masked(len, d), start, &policy, &policy, &mut rng)?;
            let r = cfg.reward.evaluate_components(&x)?;
            Ok((x, r))
        })
        .collect::<tiltlab::Result<_>>()?;
    let dims = cfg.reward.dims();
    let mut header = vec!["index".to_string(), "sequence".into()];
    if dims > 1 {
        header.extend((1..=dims).map(|k| format!("reward_{k}")));
    }
    header.push("reward".into());
    let rows = draws
        .iter()
        .enumerate()
        .map(|(i, (x, r))| {
            let mut v = vec![i.to_string(), s.alphabet.render(x)?];
            if dims > 1 {
                v.extend(r.iter().map(|c| fmt_f64(*c)));
            }
            v.push(fmt_f64(r.iter().sum()));
            Ok(v)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    write_csv(&s.out.join("samples.csv"), &header, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub kl_model_target: f64,
    pub kl_target_model: f64,
    pub tv_model_target: f64,
    pub kl_model_data: f64,
    pub tv_model_data: f64,
    pub mean_reward_model: f64,
    pub mean_reward_target: f64,
    pub mean_reward_data: f64,
}

pub fn evaluate(cfg: &ExperimentConfig, model_path: Option<&Path>) -> Result<(), CliError> {
    if !cfg.enumerable() {
        return Err(tiltlab::Error::CapExceeded {
            required: (cfg.alphabet.size as u128 + 1).saturating_pow(cfg.len as u32),
            cap: tiltlab::oracle::MARGINAL_STATE_CAP,
        }
        .into());
    }
    let s = setup(cfg)?;
    let policy = policy_for(cfg, &s, model_path)?;
    let reward = &cfg.reward;
    let r = |x: &Sequence| reward.evaluate_total(x).expect("clean sequence");
    let target = exact_target(&s.data, r, cfg.alpha)?;
    let marginal = exact_terminal_marginal(&policy, cfg.len, cfg.alphabet.size)?;
    let mt = divergences(&marginal, &target)?;
    let report = EvalReport {
        kl_model_target: mt.kl,
        kl_target_model: divergences(&target, &marginal)?.kl,
        tv_model_target: mt.tv,
        kl_model_data: divergences(&marginal, &s.data)?.kl,
        tv_model_data: divergences(&marginal, &s.data)?.tv,
        mean_reward_model: marginal.expectation(r),
        mean_reward_target: target.expectation(r),
        mean_reward_data: s.data.expectation(r),
    };
    write_json(&s.out.join("evaluate.json"), &report)?;
    let rows = serde_json::to_value(&report)
        .expect("report serializes")
        .as_object()
        .expect("struct")
        .iter()
        .map(|(k, v)| vec![k.clone(), fmt_f64(v.as_f64().expect("numeric"))])
        .collect::<Vec<_>>();
    write_csv(&s.out.join("evaluate.csv"), &["metric".into(), "value".into()], &rows)
}

#[derive(Serialize)]
struct SocOutput<'a> {
    report: &'a SocReport,
    /// `(hjb_order, phi_order)` for successive grid doublings.
    orders: Vec<(f64, f64)>,
}

pub fn soc_check(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let out = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.json"), cfg.to_json())?;
    let sys = cfg.soc.fixture.system();
    let report = soc_verify(&sys, cfg.soc.n_grid)?;
    let orders = convergence_orders(&sys, 10, 3)?;
    write_json(&out.join("soc_report.json"), &SocOutput { report: &report, orders: orders.clone() })?;
    let t = &cfg.soc;
    let min_order = orders.iter().flat_map(|(a, b)| [*a, *b]).fold(f64::INFINITY, f64::min);
    let checks = [
        ("hjb_residual", report.hjb_residual, t.hjb_tol, true),
        ("kfe_residual", report.kfe_residual, t.kfe_tol, true),
        ("path_rnd_error", report.path_rnd_error, t.path_tol, true),
        ("path_mass_error", report.path_mass_error, t.path_tol, true),
        ("path_partition_error", report.path_partition_error, t.path_tol, true),
        ("min_convergence_order", min_order, t.min_order, false),
    ];
    let mut rows = vec![
        vec!["hjb_value_residual".to_string(), fmt_f64(report.hjb_value_residual), String::new(), String::new()],
        vec!["phi_error".into(), fmt_f64(report.phi_error), String::new(), String::new()],
        vec!["kfe_fd_residual".into(), fmt_f64(report.kfe_fd_residual), String::new(), String::new()],
        vec!["terminal_tilt_error".into(), fmt_f64(report.terminal_tilt_error), String::new(), String::new()],
        vec!["kl_identity_error".into(), fmt_f64(report.kl_identity_error), String::new(), String::new()],
        vec!["continuous_rnd_error".into(), fmt_f64(report.continuous_rnd_error), String::new(), String::new()],
        vec!["telescoping_error".into(), fmt_f64(report.telescoping_error), String::new(), String::new()],
        vec!["log_partition".into(), fmt_f64(report.log_partition), String::new(), String::new()],
    ];
    let mut failed = Vec::new();
    for (name, value, limit, below) in checks {
        let ok = if below { value < limit } else { value >= limit };
        if !ok {
            failed.push(name);
        }
        rows.push(vec![name.into(), fmt_f64(value), fmt_f64(limit), if ok { "pass" } else { "fail" }.into()]);
    }
    write_csv(
        &out.join("soc_report.csv"),
        &["metric".into(), "value".into(), "threshold".into(), "status".into()],
        &rows,
    )?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Threshold(format!("failed checks: {}", failed.join(","))))
    }
}

#[derive(Serialize)]
struct FrontEntry {
    sequence: String,
    reward: Vec<f64>,
}

#[derive(Serialize)]
struct FrontDump {
    reference: Vec<f64>,
    hypervolume: f64,
    exhausted: bool,
    front: Vec<FrontEntry>,
    tree: Vec<mcts::NodeDump>,
}

pub fn pareto_demo(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let s = setup(cfg)?;
    let p = &cfg.pareto_demo;
    let dims = p.reward.dims();
    let reference = p.reference.clone().unwrap_or_else(|| vec![0.0; dims]);
    let mut buffer = ReplayBuffer::pareto(None, reference.clone(), tiltlab::pareto::DEFAULT_DOM_EPS)?;
    let mcfg = MctsConfig {
        children: p.children,
        iterations: p.iterations,
        exploration: p.exploration,
        top_k: None,
        mode: BufferMode::Pareto,
        ..cfg.mcts
    };
    let ctx = SearchContext { policy: &s.pre, pre: &s.pre, reward: &p.reward, alpha: cfg.alpha, schedule: &cfg.schedule };
    let mut tree = Tree::new(cfg.len, cfg.alphabet.size, cfg.schedule, dims);
    let run = mcts::run(&mut tree, &ctx, &mut buffer, &mcfg, derive_seed(cfg.seed, PARETO_STREAM))?;
    let rows: Vec<Vec<String>> = run
        .stats
        .iter()
        .map(|st| {
            vec![
                st.iteration.to_string(),
                st.expanded.to_string(),
                st.admitted.to_string(),
                st.buffer_len.to_string(),
                fmt_opt(st.buffer_hypervolume),
            ]
        })
        .collect();
    write_csv(
        &s.out.join("hv.csv"),
        &["iteration", "expanded_node", "admitted", "buffer_len", "hypervolume"].map(String::from),
        &rows,
    )?;
    let front = buffer
        .entries()
        .iter()
        .map(|e| Ok(FrontEntry { sequence: s.alphabet.render(&e.sequence)?, reward: e.reward.clone() }))
        .collect::<Result<_, CliError>>()?;
    write_json(
        &s.out.join("front.json"),
        &FrontDump { reference, hypervolume: buffer.hypervolume()?, exhausted: run.exhausted, front, tree: tree.dump(&s.alphabet)? },
    )
}
