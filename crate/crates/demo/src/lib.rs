//! WebAssembly bindings behind `www/index.html`. Every export returns a JSON
//! string; errors surface as JS exceptions.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use tiltlab::buffer::{BufferMode, ReplayBuffer};
use tiltlab::diffusion::NoiseSchedule;
use tiltlab::mcts::{self, MctsConfig, SearchContext, Tree};
use tiltlab::oracle::{divergences, exact_target};
use tiltlab::policy::PolicyHandle;
use tiltlab::seqspace::Alphabet;
use tiltlab::soc::{soc_verify, CtmcSystem};
use tiltlab::tasks;

type Out = std::result::Result<String, String>;

#[derive(Serialize)]
struct Row {
    sequence: String,
    reward: f64,
    p_data: f64,
    p_target: f64,
}

#[derive(Serialize)]
struct TiltView {
    alpha: f64,
    mean_reward_data: f64,
    mean_reward_target: f64,
    kl_target_data: f64,
    top: Vec<Row>,
}

/// Exact tilted distribution of the 8-letter DNA toy at temperature `alpha`.
pub fn tilt_json(alpha: f64, top: usize) -> Out {
    let data = tasks::micro_dna_data().map_err(err)?;
    let (_, reward, _) = tasks::micro_dna().map_err(err)?;
    let r = |x: &tiltlab::seqspace::Sequence| reward.evaluate_total(x).expect("clean sequence");
    let target = exact_target(&data, r, alpha).map_err(err)?;
    let alphabet = Alphabet::new(tasks::MICRO_DNA_ALPHABET).map_err(err)?;
    let mut rows: Vec<Row> = target
        .iter()
        .zip(data.probs())
        .map(|((x, pt), &pd)| Row { sequence: alphabet.render(&x).expect("valid"), reward: r(&x), p_data: pd, p_target: pt })
        .collect();
    rows.sort_by(|a, b| b.p_target.total_cmp(&a.p_target));
    rows.truncate(top);
    to_json(&TiltView {
        alpha,
        mean_reward_data: data.expectation(r),
        mean_reward_target: target.expectation(r),
        kl_target_data: divergences(&target, &data).map_err(err)?.kl,
        top: rows,
    })
}

#[derive(Serialize)]
struct FrontPoint {
    sequence: String,
    reward: Vec<f64>,
}

#[derive(Serialize)]
struct ParetoView {
    hypervolume: Vec<f64>,
    front: Vec<FrontPoint>,
    exhausted: bool,
}

/// Pareto tree search on the two-objective DNA toy with the exact base model.
pub fn pareto_json(iterations: usize, children: usize, seed: u64) -> Out {
    let (data, reward) = tasks::two_objective_dna().map_err(err)?;
    let pre = PolicyHandle::build_tabular(&data).map_err(err)?;
    let schedule = NoiseSchedule::one_at_a_time();
    let ctx = SearchContext { policy: &pre, pre: &pre, reward: &reward, alpha: 0.1, schedule: &schedule };
    let cfg = MctsConfig { children, iterations, mode: BufferMode::Pareto, ..MctsConfig::default() };
    cfg.validate().map_err(err)?;
    let mut buffer = ReplayBuffer::pareto_default(None, 2).map_err(err)?;
    let mut tree = Tree::new(tasks::MICRO_DNA_LEN, tasks::MICRO_DNA_ALPHABET, schedule, 2);
    let run = mcts::run(&mut tree, &ctx, &mut buffer, &cfg, seed).map_err(err)?;
    let alphabet = Alphabet::new(tasks::MICRO_DNA_ALPHABET).map_err(err)?;
    let mut front: Vec<FrontPoint> = buffer
        .entries()
        .iter()
        .map(|e| FrontPoint { sequence: alphabet.render(&e.sequence).expect("valid"), reward: e.reward.clone() })
        .collect();
    front.sort_by(|a, b| a.reward[0].total_cmp(&b.reward[0]));
    to_json(&ParetoView {
        hypervolume: run.stats.iter().map(|s| s.buffer_hypervolume.unwrap_or(0.0)).collect(),
        front,
        exhausted: run.exhausted,
    })
}

#[derive(Serialize)]
struct SocView {
    t: Vec<f64>,
    /// `log φ_t(x)` per state.
    value: [Vec<f64>; 2],
    /// Optimal jump rates 0→1 and 1→0.
    rate_01: Vec<f64>,
    rate_10: Vec<f64>,
    log_partition: f64,
    hjb_residual: f64,
}

/// Value function and optimal rates of a two-state chain with reward `(0, r1)`.
pub fn soc_json(rate_01: f64, rate_10: f64, horizon: f64, r1: f64, points: usize) -> Out {
    let sys = CtmcSystem::from_rates(vec![vec![0.0, rate_01], vec![rate_10, 0.0]], horizon, vec![0.0, r1], vec![0.5, 0.5])
        .map_err(err)?;
    let points = points.max(2);
    let t: Vec<f64> = (0..points).map(|i| horizon * i as f64 / (points - 1) as f64).collect();
    let mut view = SocView {
        t: t.clone(),
        value: [Vec::new(), Vec::new()],
        rate_01: Vec::new(),
        rate_10: Vec::new(),
        log_partition: sys.partition().ln(),
        hjb_residual: soc_verify(&sys, 100).map_err(err)?.hjb_residual,
    };
    for &s in &t {
        let phi = sys.phi_exact(s);
        let q = sys.q_star(&phi);
        view.value[0].push(phi[0].ln());
        view.value[1].push(phi[1].ln());
        view.rate_01.push(q[0][1]);
        view.rate_10.push(q[1][0]);
    }
    to_json(&view)
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn to_json(v: &impl Serialize) -> Out {
    serde_json::to_string(v).map_err(err)
}

#[wasm_bindgen]
pub fn tilt(alpha: f64, top: usize) -> Result<String, JsValue> {
    tilt_json(alpha, top).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn pareto(iterations: usize, children: usize, seed: u32) -> Result<String, JsValue> {
    pareto_json(iterations, children, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn soc(rate_01: f64, rate_10: f64, horizon: f64, r1: f64, points: usize) -> Result<String, JsValue> {
    soc_json(rate_01, rate_10, horizon, r1, points).map_err(|e| JsValue::from_str(&e))
}
