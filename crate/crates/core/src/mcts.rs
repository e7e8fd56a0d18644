//! Tree search over unmasking trajectories.
//!
//! Each iteration selects an expandable node, expands it into `M` children
//! with Gumbel-perturbed reverse steps, rolls every child out to a clean
//! sequence while tracking its log-RND, offers the results to the replay
//! buffer, and backpropagates the rewards.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::buffer::{BufferEntry, BufferMode, ReplayBuffer};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::pareto::{dominates_unchecked, DEFAULT_DOM_EPS};
use crate::policy::PolicyHandle;
use crate::rewards::RewardSpec;
use crate::rng::{derive_path, seeded, stream, Rng};
use crate::seqspace::{Alphabet, Sequence};
use crate::weights::{finalize_weight, normalize};

/// Which step probability feeds the exploration term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbSource {
    Policy,
    Pre,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MctsConfig {
    /// Children per expansion (`M`).
    pub children: usize,
    /// Iterations per buffer generation (`N_iter`).
    pub iterations: usize,
    /// Exploration constant `c`.
    pub exploration: f64,
    /// Softmax is taken over the `k` best children; `None` means `k = M`.
    pub top_k: Option<usize>,
    pub mode: BufferMode,
    pub prob_source: ProbSource,
    /// Restarts allowed when a walk ends at a clean leaf.
    pub max_restarts: usize,
}

impl Default for MctsConfig {
    fn default() -> Self {
        Self {
            children: 32,
            iterations: 5,
            exploration: 0.1,
            top_k: None,
            mode: BufferMode::Scalar,
            prob_source: ProbSource::Policy,
            max_restarts: 1000,
        }
    }
}

impl MctsConfig {
    pub fn k(&self) -> usize {
        self.top_k.unwrap_or(self.children)
    }

    pub fn validate(&self) -> Result<()> {
        if self.children == 0 {
            return Err(Error::InvalidArgument("M must be >= 1".into()));
        }
        if !(self.exploration >= 0.0) {
            return Err(Error::InvalidArgument("c must be >= 0".into()));
        }
        if !(1..=self.children).contains(&self.k()) {
            return Err(Error::InvalidArgument(format!("k must be in 1..=M, got {}", self.k())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub seq: Sequence,
    /// Remaining-steps index; the mask level is derived from it.
    pub level: usize,
    pub mask_level: f64,
    /// Accumulated reward (one entry per objective).
    pub reward: Vec<f64>,
    pub n_visits: u64,
    pub step_logp_policy: f64,
    pub step_logp_pre: f64,
    /// Sum of step log-RNDs from the root.
    pub prefix_w: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

impl TreeNode {
    pub fn is_expandable(&self) -> bool {
        self.children.is_empty() && !self.seq.is_clean()
    }
}

/// Arena-backed search tree; node 0 is the fully masked root.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    schedule: NoiseSchedule,
}

/// JSON-friendly view of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDump {
    pub sequence: String,
    pub m: f64,
    pub reward: Vec<f64>,
    pub n_visits: u64,
    pub prefix_w: f64,
    pub parent: Option<usize>,
}

/// Exploration-plus-exploitation score of one child.
pub fn selection_score(r_child: f64, n_child: u64, m: usize, c: f64, p: f64, n_parent: u64) -> f64 {
    r_child / (m as f64 * n_child as f64) + c * p * (n_parent as f64).sqrt() / (1.0 + n_child as f64)
}

impl Tree {
    pub fn new(len: usize, alphabet_size: usize, schedule: NoiseSchedule, dims: usize) -> Self {
        let level = schedule.start_level(len);
        let root = TreeNode {
            seq: Sequence::fully_masked(len, alphabet_size),
            level,
            mask_level: schedule.mask_level(level, len),
            reward: vec![0.0; dims],
            n_visits: 1,
            step_logp_policy: 0.0,
            step_logp_pre: 0.0,
            prefix_w: 0.0,
            parent: None,
            children: Vec::new(),
        };
        Self { nodes: vec![root], schedule }
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.nodes[0].reward.len()
    }

    /// Score vector of `child` under `parent` (one entry per objective).
    pub fn score(&self, parent: usize, child: usize, cfg: &MctsConfig) -> Vec<f64> {
        let p = &self.nodes[parent];
        let ch = &self.nodes[child];
        let logp = match cfg.prob_source {
            ProbSource::Policy => ch.step_logp_policy,
            ProbSource::Pre => ch.step_logp_pre,
        };
        ch.reward
            .iter()
            .map(|&r| selection_score(r, ch.n_visits, cfg.children, cfg.exploration, logp.exp(), p.n_visits))
            .collect()
    }

    /// Selection distribution over the children of `parent`.
    pub fn child_probabilities(&self, parent: usize, cfg: &MctsConfig) -> Vec<f64> {
        let kids = &self.nodes[parent].children;
        let scores: Vec<Vec<f64>> = kids.iter().map(|&c| self.score(parent, c, cfg)).collect();
        let mut probs = vec![0.0; kids.len()];
        match cfg.mode {
            BufferMode::Scalar => {
                let mut order: Vec<usize> = (0..kids.len()).collect();
                order.sort_by(|&a, &b| scores[b][0].partial_cmp(&scores[a][0]).expect("finite").then(a.cmp(&b)));
                order.truncate(cfg.k().min(kids.len()));
                let top: Vec<f64> = order.iter().map(|&i| scores[i][0]).collect();
                for (i, w) in order.iter().zip(normalize(&top).expect("non-empty")) {
                    probs[*i] = w;
                }
            }
            BufferMode::Pareto => {
                let front: Vec<usize> = (0..kids.len())
                    .filter(|&i| {
                        !(0..kids.len()).any(|j| j != i && dominates_unchecked(&scores[j], &scores[i], DEFAULT_DOM_EPS))
                    })
                    .collect();
                for &i in &front {
                    probs[i] = 1.0 / front.len() as f64;
                }
            }
        }
        probs
    }

    /// Walk from the root to an expandable node.
    pub fn select(&self, cfg: &MctsConfig, rng: &mut Rng) -> Result<usize> {
        if !self.nodes.iter().any(TreeNode::is_expandable) {
            return Err(Error::Exhausted);
        }
        for _ in 0..=cfg.max_restarts {
            let mut cur = 0;
            while !self.nodes[cur].children.is_empty() {
                let probs = self.child_probabilities(cur, cfg);
                let u = rng.gen::<f64>();
                let mut acc = 0.0;
                let mut pick = None;
                for (i, &p) in probs.iter().enumerate() {
                    if p > 0.0 {
                        acc += p;
                        pick = Some(i);
                        if u < acc {
                            break;
                        }
                    }
                }
                cur = self.nodes[cur].children[pick.expect("some child has mass")];
            }
            if self.nodes[cur].is_expandable() {
                return Ok(cur);
            }
        }
        Err(Error::Exhausted)
    }

    /// Attach children produced by one expansion; returns their indices.
    fn attach(&mut self, parent: usize, kids: &[Expansion]) -> Vec<usize> {
        let p = self.nodes[parent].clone();
        let len = p.seq.len();
        let mut out = Vec::with_capacity(kids.len());
        for k in kids {
            let idx = self.nodes.len();
            let level = p.level - 1;
            self.nodes.push(TreeNode {
                seq: k.child.clone(),
                level,
                mask_level: self.schedule.mask_level(level, len),
                reward: k.tree_reward.clone(),
                n_visits: 1,
                step_logp_policy: k.log_policy,
                step_logp_pre: k.log_pre,
                prefix_w: p.prefix_w + (k.log_pre - k.log_policy),
                parent: Some(parent),
                children: Vec::new(),
            });
            out.push(idx);
        }
        self.nodes[parent].children.extend(&out);
        out
    }

    /// Add `sum` to the reward of `node` and every ancestor, and count a visit.
    pub fn backpropagate(&mut self, node: usize, sum: &[f64]) {
        let mut cur = Some(node);
        while let Some(i) = cur {
            let n = &mut self.nodes[i];
            for (r, s) in n.reward.iter_mut().zip(sum) {
                *r += s;
            }
            n.n_visits += 1;
            cur = n.parent;
        }
    }

    pub fn dump(&self, alphabet: &Alphabet) -> Result<Vec<NodeDump>> {
        self.nodes
            .iter()
            .map(|n| {
                Ok(NodeDump {
                    sequence: alphabet.render(&n.seq)?,
                    m: n.mask_level,
                    reward: n.reward.clone(),
                    n_visits: n.n_visits,
                    prefix_w: n.prefix_w,
                    parent: n.parent,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Expansion {
    child: Sequence,
    log_policy: f64,
    log_pre: f64,
    terminal: Sequence,
    rollout_w: f64,
    reward: Vec<f64>,
    tree_reward: Vec<f64>,
}

/// Everything needed to expand and roll out.
#[derive(Clone, Copy)]
pub struct SearchContext<'a> {
    pub policy: &'a PolicyHandle,
    pub pre: &'a PolicyHandle,
    pub reward: &'a RewardSpec,
    pub alpha: f64,
    pub schedule: &'a NoiseSchedule,
}

impl SearchContext<'_> {
    fn tree_reward(&self, reward: &[f64], mode: BufferMode) -> Vec<f64> {
        match mode {
            BufferMode::Scalar => vec![reward.iter().sum()],
            BufferMode::Pareto => reward.to_vec(),
        }
    }

    fn entry(&self, terminal: Sequence, w_path: f64, rollout_w: f64, reward: Vec<f64>, node: Option<usize>) -> Result<BufferEntry> {
        let weight = finalize_weight(w_path, &crate::rewards::RewardValue::Vector(reward.clone()), self.alpha)?;
        Ok(BufferEntry { sequence: terminal, weight, reward, node, rollout_w })
    }
}

/// `M` Gumbel-perturbed children of `node`, each rolled out to a clean sequence.
fn expand_and_roll(tree: &Tree, node: usize, ctx: &SearchContext<'_>, m: usize, mode: BufferMode, seed: u64) -> Result<Vec<Expansion>> {
    let n = &tree.nodes[node];
    (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let rec = ctx.schedule.step(&n.seq, n.level, ctx.policy, ctx.pre, &mut rng, true)?;
            let (terminal, rollout_w) =
                ctx.schedule.rollout_from_level(&rec.x_next, n.level - 1, ctx.policy, ctx.pre, &mut rng)?;
            let reward = ctx.reward.evaluate_components(&terminal)?;
            Ok(Expansion {
                tree_reward: ctx.tree_reward(&reward, mode),
                child: rec.x_next,
                log_policy: rec.log_policy,
                log_pre: rec.log_pre,
                terminal,
                rollout_w,
                reward,
            })
        })
        .collect()
}

/// Expand `node` into `m` children without rollouts; returns their indices.
pub fn expand(tree: &mut Tree, node: usize, m: usize, ctx: &SearchContext<'_>, seed: u64) -> Result<Vec<usize>> {
    if !tree.nodes[node].is_expandable() {
        return Err(Error::InvalidArgument(format!("node {node} is not expandable")));
    }
    let dims = tree.dims();
    let n = tree.nodes[node].clone();
    let kids: Vec<Expansion> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let rec = ctx.schedule.step(&n.seq, n.level, ctx.policy, ctx.pre, &mut rng, true)?;
            Ok(Expansion {
                child: rec.x_next.clone(),
                log_policy: rec.log_policy,
                log_pre: rec.log_pre,
                terminal: rec.x_next,
                rollout_w: 0.0,
                reward: vec![0.0; dims],
                tree_reward: vec![0.0; dims],
            })
        })
        .collect::<Result<_>>()?;
    Ok(tree.attach(node, &kids))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub expanded: usize,
    pub offered: usize,
    pub admitted: usize,
    pub buffer_len: usize,
    pub buffer_hypervolume: Option<f64>,
    pub buffer_mean_reward: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub stats: Vec<IterationStats>,
    /// Selection found no expandable node before the last iteration.
    pub exhausted: bool,
}

/// Run up to `cfg.iterations` search iterations, filling `buffer`.
pub fn run(
    tree: &mut Tree,
    ctx: &SearchContext<'_>,
    buffer: &mut ReplayBuffer,
    cfg: &MctsConfig,
    seed: u64,
) -> Result<RunReport> {
    cfg.validate()?;
    if cfg.mode != buffer.mode() {
        return Err(Error::InvalidArgument("search mode and buffer mode differ".into()));
    }
    let mut stats = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let mut rng = seeded(derive_path(seed, &[it as u64, 0]));
        let node = match tree.select(cfg, &mut rng) {
            Ok(n) => n,
            Err(Error::Exhausted) => return Ok(RunReport { stats, exhausted: true }),
            Err(e) => return Err(e),
        };
        let kids = expand_and_roll(tree, node, ctx, cfg.children, cfg.mode, derive_path(seed, &[it as u64, 1]))?;
        let ids = tree.attach(node, &kids);
        let mut admitted = 0;
        let mut sum = vec![0.0; tree.dims()];
        for (k, &id) in kids.iter().zip(&ids) {
            let w_path = tree.nodes[id].prefix_w + k.rollout_w;
            let entry = ctx.entry(k.terminal.clone(), w_path, k.rollout_w, k.reward.clone(), Some(id))?;
            if buffer.offer(entry)? {
                admitted += 1;
            }
            for (s, r) in sum.iter_mut().zip(&k.tree_reward) {
                *s += r;
            }
        }
        tree.backpropagate(node, &sum);
        stats.push(IterationStats {
            iteration: it,
            expanded: node,
            offered: kids.len(),
            admitted,
            buffer_len: buffer.len(),
            buffer_hypervolume: match buffer.mode() {
                BufferMode::Pareto => Some(buffer.hypervolume()?),
                BufferMode::Scalar => None,
            },
            buffer_mean_reward: buffer.mean_reward(),
        });
    }
    Ok(RunReport { stats, exhausted: false })
}

/// Fill `buffer` with `n` independent rollouts from the fully masked state.
pub fn iid_rollouts(
    len: usize,
    n: usize,
    ctx: &SearchContext<'_>,
    buffer: &mut ReplayBuffer,
    seed: u64,
) -> Result<usize> {
    let d = ctx.policy.alphabet_size();
    let start = ctx.schedule.start_level(len);
    let results: Vec<(Sequence, f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let (x, w) =
                ctx.schedule.rollout_from_level(&Sequence::fully_masked(len, d), start, ctx.policy, ctx.pre, &mut rng)?;
            let r = ctx.reward.evaluate_components(&x)?;
            Ok((x, w, r))
        })
        .collect::<Result<_>>()?;
    let mut admitted = 0;
    for (x, w, r) in results {
        if buffer.offer(ctx.entry(x, w, w, r, None)?)? {
            admitted += 1;
        }
    }
    Ok(admitted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistTable;
    use crate::policy::Mlp;
    use crate::rng::seeded;

    fn setup() -> (PolicyHandle, PolicyHandle, RewardSpec, NoiseSchedule) {
        let pre = PolicyHandle::build_tabular(&DistTable::uniform(4, 4).unwrap()).unwrap();
        let pol = PolicyHandle::parametric(Mlp::new(4, 4, 8, 1).unwrap()).snapshot_frozen();
        (pre, pol, RewardSpec::micro_dna(), NoiseSchedule::one_at_a_time())
    }

    #[test]
    fn score_examples() {
        assert!((selection_score(4.0, 2, 2, 0.1, 0.5, 4) - (1.0 + 0.1 * 0.5 * 2.0 / 3.0)).abs() < 1e-12);
        assert!((selection_score(4.0, 2, 2, 0.1, 0.5, 4) - 1.033333).abs() < 1e-6);
        assert_eq!(selection_score(3.0, 2, 3, 0.0, 0.9, 7), 0.5);
    }

    #[test]
    fn fresh_tree_selects_root() {
        let tree = Tree::new(4, 4, NoiseSchedule::one_at_a_time(), 1);
        assert_eq!(tree.select(&MctsConfig::default(), &mut seeded(0)).unwrap(), 0);
        assert_eq!(tree.root().n_visits, 1);
    }

    fn two_child_tree(scores: [f64; 2]) -> Tree {
        // c = 0 and n = 1 make the score equal R / M.
        let mut tree = Tree::new(2, 2, NoiseSchedule::one_at_a_time(), 1);
        let kids: Vec<Expansion> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| Expansion {
                child: Sequence::new(vec![i as u16, 2], 2).unwrap(),
                log_policy: 0.0,
                log_pre: 0.0,
                terminal: Sequence::new(vec![0, 0], 2).unwrap(),
                rollout_w: 0.0,
                reward: vec![s * 2.0],
                tree_reward: vec![s * 2.0],
            })
            .collect();
        tree.attach(0, &kids);
        tree
    }

    #[test]
    fn softmax_selection_frequency() {
        let tree = two_child_tree([1f64.ln(), 3f64.ln()]);
        let cfg = MctsConfig { children: 2, exploration: 0.0, ..MctsConfig::default() };
        let probs = tree.child_probabilities(0, &cfg);
        assert!((probs[1] - 0.75).abs() < 1e-12);
        let mut rng = seeded(17);
        let n = 10_000;
        let hits = (0..n).filter(|_| tree.select(&cfg, &mut rng).unwrap() == 2).count();
        let sd = (n as f64 * 0.75 * 0.25).sqrt();
        assert!((hits as f64 - 0.75 * n as f64).abs() <= 3.0 * sd, "{hits}");
    }

    #[test]
    fn k_one_is_argmax() {
        let tree = two_child_tree([0.4, 0.1]);
        let cfg = MctsConfig { children: 2, exploration: 0.0, top_k: Some(1), ..MctsConfig::default() };
        let mut rng = seeded(3);
        assert!((0..100).all(|_| tree.select(&cfg, &mut rng).unwrap() == 1));
    }

    #[test]
    fn equal_children_score_equally() {
        let tree = two_child_tree([0.7, 0.7]);
        let cfg = MctsConfig { children: 2, ..MctsConfig::default() };
        assert_eq!(tree.score(0, 1, &cfg), tree.score(0, 2, &cfg));
    }

    #[test]
    fn all_clean_leaves_is_exhausted() {
        let mut tree = Tree::new(1, 2, NoiseSchedule::one_at_a_time(), 1);
        let (_, _, reward, sch) = setup();
        let pre = PolicyHandle::build_tabular(&DistTable::uniform(1, 2).unwrap()).unwrap();
        let ctx = SearchContext { policy: &pre, pre: &pre, reward: &reward, alpha: 1.0, schedule: &sch };
        expand(&mut tree, 0, 3, &ctx, 1).unwrap();
        assert_eq!(tree.select(&MctsConfig::default(), &mut seeded(0)), Err(Error::Exhausted));
    }

    #[test]
    fn expansion_examples() {
        let (pre, pol, reward, sch) = setup();
        let ctx = SearchContext { policy: &pol, pre: &pol, reward: &reward, alpha: 0.1, schedule: &sch };
        let mut tree = Tree::new(4, 4, sch, 1);
        let ids = expand(&mut tree, 0, 5, &ctx, 9).unwrap();
        for &i in &ids {
            let n = tree.node(i);
            assert_eq!(n.step_logp_policy, n.step_logp_pre);
            assert_eq!(n.prefix_w, 0.0);
            assert_eq!(n.seq.num_masked(), 3);
        }
        // One mask left: every child is clean.
        let ctx = SearchContext { policy: &pol, pre: &pre, reward: &reward, alpha: 0.1, schedule: &sch };
        let mut tree = Tree::new(4, 4, sch, 1);
        let mut cur = 0;
        for depth in 0..3 {
            cur = expand(&mut tree, cur, 1, &ctx, depth).unwrap()[0];
        }
        let ids = expand(&mut tree, cur, 6, &ctx, 99).unwrap();
        let base = tree.node(cur).seq.clone();
        for &i in &ids {
            let s = &tree.node(i).seq;
            assert!(s.is_clean());
            let diff = (0..4).filter(|&p| s.get(p) != base.get(p)).count();
            assert_eq!(diff, 1);
        }
    }

    #[test]
    fn backprop_examples() {
        let mut tree = Tree::new(3, 2, NoiseSchedule::one_at_a_time(), 1);
        let (_, _, reward, sch) = setup();
        let pre = PolicyHandle::build_tabular(&DistTable::uniform(3, 2).unwrap()).unwrap();
        let ctx = SearchContext { policy: &pre, pre: &pre, reward: &reward, alpha: 1.0, schedule: &sch };
        let child = expand(&mut tree, 0, 1, &ctx, 0).unwrap()[0];
        tree.backpropagate(child, &[2.0]);
        assert_eq!((tree.node(0).reward[0], tree.node(0).n_visits), (2.0, 2));
        assert_eq!((tree.node(child).reward[0], tree.node(child).n_visits), (2.0, 2));
        tree.backpropagate(child, &[0.0]);
        assert_eq!((tree.node(0).reward[0], tree.node(0).n_visits), (2.0, 3));
    }

    #[test]
    fn run_counts_and_weight_bookkeeping() {
        let (pre, pol, reward, sch) = setup();
        let ctx = SearchContext { policy: &pol, pre: &pre, reward: &reward, alpha: 0.1, schedule: &sch };
        let mut tree = Tree::new(4, 4, sch, 1);
        let mut buffer = ReplayBuffer::scalar(1000).unwrap();
        let cfg = MctsConfig { children: 3, iterations: 0, ..MctsConfig::default() };
        assert!(run(&mut tree, &ctx, &mut buffer, &cfg, 1).unwrap().stats.is_empty());
        assert!(buffer.is_empty());
        let cfg = MctsConfig { children: 3, iterations: 1, ..MctsConfig::default() };
        let stats = run(&mut tree, &ctx, &mut buffer, &cfg, 1).unwrap().stats;
        assert_eq!(stats[0].offered, 3);
        assert_eq!(buffer.len(), 3);
        let cfg = MctsConfig { children: 4, iterations: 6, ..MctsConfig::default() };
        run(&mut tree, &ctx, &mut buffer, &cfg, 2).unwrap();
        for e in buffer.entries() {
            let node = tree.node(e.node.unwrap());
            let expect = node.prefix_w + e.rollout_w + e.reward_total() / 0.1;
            assert_eq!(e.weight.total, expect);
        }
        for (i, n) in tree.nodes().iter().enumerate().skip(1) {
            let p = tree.node(n.parent.unwrap());
            assert!(p.n_visits >= n.n_visits, "node {i}");
            let mut w = 0.0;
            let mut cur = i;
            while let Some(par) = tree.node(cur).parent {
                w += tree.node(cur).step_logp_pre - tree.node(cur).step_logp_policy;
                cur = par;
            }
            assert!((w - n.prefix_w).abs() < 1e-12);
        }
    }

    #[test]
    fn positive_reach_under_large_scores() {
        let tree = two_child_tree([50.0, -50.0]);
        let cfg = MctsConfig { children: 2, exploration: 0.1, ..MctsConfig::default() };
        assert!(tree.child_probabilities(0, &cfg).iter().all(|&p| p > 0.0));
    }
}
