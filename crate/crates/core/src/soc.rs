//! Stochastic-optimal-control identities for small continuous-time Markov
//! chains with constant reference generator `Q0` and terminal reward `r`.
//!
//! With `φ_t = E[e^{r(X_T)} | X_t]` (so `φ_t = e^{V_t}`), the tilted generator
//! is `Q*_t(x,y) = Q0(x,y) φ_t(y)/φ_t(x)`, the tilted marginal is
//! `h_t = (π0 P0_t) ⊙ φ_t / Z`, and the optimal path measure satisfies
//! `dP*/dP0 = e^{r(X_T)} / Z`. [`soc_verify`] checks each of these
//! numerically.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

pub const MAX_STATES: usize = 6;
pub const MAX_GRID: usize = 400;
pub const MIN_GRID: usize = 4;
pub const MAX_PATH_GRID: usize = 12;
pub const PATH_CAP: u128 = 1 << 22;

type Mat = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtmcSystem {
    pub q0: Mat,
    pub horizon: f64,
    pub reward: Vec<f64>,
    pub pi0: Vec<f64>,
}

impl CtmcSystem {
    pub fn new(q0: Mat, horizon: f64, reward: Vec<f64>, pi0: Vec<f64>) -> Result<Self> {
        let n = q0.len();
        if n == 0 || n > MAX_STATES {
            return Err(Error::CapExceeded { required: n as u128, cap: MAX_STATES as u128 });
        }
        if q0.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidArgument("generator must be square".into()));
        }
        if reward.len() != n || pi0.len() != n {
            return Err(Error::DimensionMismatch(n, reward.len().min(pi0.len())));
        }
        for (x, row) in q0.iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("generator entries must be finite".into()));
            }
            if row.iter().enumerate().any(|(y, &v)| y != x && v < 0.0) {
                return Err(Error::InvalidArgument(format!("negative off-diagonal rate in row {x}")));
            }
            let s: f64 = row.iter().sum();
            if s.abs() >= 1e-12 {
                return Err(Error::InvalidArgument(format!("row {x} sums to {s}")));
            }
        }
        if pi0.iter().any(|&p| p < 0.0) || (pi0.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(pi0.iter().sum()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) || reward.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("horizon and rewards must be finite, horizon > 0".into()));
        }
        Ok(Self { q0, horizon, reward, pi0 })
    }

    /// Generator from off-diagonal rates; the diagonal is filled in.
    pub fn from_rates(rates: Mat, horizon: f64, reward: Vec<f64>, pi0: Vec<f64>) -> Result<Self> {
        let mut q0 = rates;
        for x in 0..q0.len() {
            q0[x][x] = 0.0;
            let exit: f64 = q0[x].iter().sum();
            q0[x][x] = -exit;
        }
        Self::new(q0, horizon, reward, pi0)
    }

    /// `Q0 = [[−1, 1], [2, −2]]`, `T = 1`, `r = (0, 1)`, uniform start.
    pub fn two_state() -> Self {
        Self::new(vec![vec![-1.0, 1.0], vec![2.0, -2.0]], 1.0, vec![0.0, 1.0], vec![0.5, 0.5])
            .expect("valid fixture")
    }

    pub fn four_state() -> Self {
        Self::from_rates(
            vec![
                vec![0.0, 1.0, 0.5, 0.0],
                vec![0.3, 0.0, 0.4, 0.4],
                vec![0.0, 0.7, 0.0, 0.5],
                vec![0.6, 0.0, 0.9, 0.0],
            ],
            1.0,
            vec![0.0, 0.5, -0.3, 1.2],
            vec![0.4, 0.3, 0.2, 0.1],
        )
        .expect("valid fixture")
    }

    pub fn n(&self) -> usize {
        self.q0.len()
    }

    fn exit(&self, x: usize) -> f64 {
        -self.q0[x][x]
    }

    /// `φ_t = exp(Q0 (T − t)) e^r` by matrix exponential.
    pub fn phi_exact(&self, t: f64) -> Vec<f64> {
        let e = expm(&scale(&self.q0, self.horizon - t));
        let er: Vec<f64> = self.reward.iter().map(|r| r.exp()).collect();
        mat_vec(&e, &er)
    }

    /// `Z = E_{P0}[e^{r(X_T)}]`.
    pub fn partition(&self) -> f64 {
        dot(&self.pi0, &self.phi_exact(0.0))
    }

    /// `Q*_t` given `φ_t`.
    pub fn q_star(&self, phi: &[f64]) -> Mat {
        let n = self.n();
        let mut q = vec![vec![0.0; n]; n];
        for x in 0..n {
            let mut exit = 0.0;
            for y in 0..n {
                if y != x {
                    q[x][y] = self.q0[x][y] * phi[y] / phi[x];
                    exit += q[x][y];
                }
            }
            q[x][x] = -exit;
        }
        q
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocReport {
    pub n_states: usize,
    pub n_grid: usize,
    /// `max |∂_t φ + Q0 φ|` on the RK4 solution, derivative by 4th-order
    /// finite differences.
    pub hjb_residual: f64,
    /// Same equation in value form, `∂_t V = Σ_{y≠x} Q0(x,y)(1 − e^{V(y)−V(x)})`.
    pub hjb_value_residual: f64,
    /// `max |φ_RK4 − φ_exact|`.
    pub phi_error: f64,
    /// `max |h̃_t − (π0 P0_t) ⊙ φ_t / Z|` where `h̃` solves `∂_t h̃ = h̃ Q*_t`
    /// forward from `h̃_0 = π0 ⊙ φ_0 / Z` by RK4.
    pub kfe_residual: f64,
    /// `max |∂_t h − h Q*|` on the grid with 4th-order finite differences.
    pub kfe_fd_residual: f64,
    /// `max |h_T − π0 P0_T e^r / Z|`.
    pub terminal_tilt_error: f64,
    /// `|KL(P*‖P0) − (E*[r] − log Z)|` with the left side integrated along the grid.
    pub kl_identity_error: f64,
    pub path_grid: usize,
    pub path_count: u64,
    /// `max |log dP*/dP0 − (r(x_T) − log Z)|` over every discrete path.
    pub path_rnd_error: f64,
    /// `|Σ_paths P*(path) − 1|`.
    pub path_mass_error: f64,
    /// `|Σ_paths P0 e^r − Z| / Z`.
    pub path_partition_error: f64,
    /// Continuous paths: `max |log dP*/dP0 − (r(X_T) − log Z)|` via jump terms
    /// plus integrated exit-rate differences.
    pub continuous_rnd_error: f64,
    /// Two-generator path log-RND of a whole path minus the sum over segments.
    pub telescoping_error: f64,
    pub log_partition: f64,
    pub value_t0: Vec<f64>,
    /// `J_0 = −V_0`.
    pub cost_to_go_t0: Vec<f64>,
    pub q_star_t0: Mat,
}

/// Run every check. The discrete path enumeration uses the largest grid
/// `≤ min(n_grid, 12)` whose path count fits [`PATH_CAP`].
pub fn soc_verify(sys: &CtmcSystem, n_grid: usize) -> Result<SocReport> {
    if !(MIN_GRID..=MAX_GRID).contains(&n_grid) {
        return Err(Error::CapExceeded { required: n_grid as u128, cap: MAX_GRID as u128 });
    }
    let n = sys.n();
    let h = sys.horizon / n_grid as f64;
    let phi = rk4_phi(sys, n_grid);
    let mu = rk4_forward(sys, n_grid);
    let z = dot(&sys.pi0, &phi[0]);

    let mut phi_error = 0.0f64;
    for (j, p) in phi.iter().enumerate() {
        let exact = sys.phi_exact(j as f64 * h);
        phi_error = phi_error.max(max_abs_diff(p, &exact));
    }

    let values: Mat = phi.iter().map(|p| p.iter().map(|v| v.ln()).collect()).collect();
    let dphi = fd_derivative(&phi, h);
    let dv = fd_derivative(&values, h);
    let mut hjb_residual = 0.0f64;
    let mut hjb_value_residual = 0.0f64;
    for j in 0..=n_grid {
        let q0phi = mat_vec(&sys.q0, &phi[j]);
        for x in 0..n {
            hjb_residual = hjb_residual.max((dphi[j][x] + q0phi[x]).abs());
            let rhs: f64 = (0..n)
                .filter(|&y| y != x)
                .map(|y| sys.q0[x][y] * (1.0 - (values[j][y] - values[j][x]).exp()))
                .sum();
            hjb_value_residual = hjb_value_residual.max((dv[j][x] - rhs).abs());
        }
    }

    let tilted: Mat = mu
        .iter()
        .zip(&phi)
        .map(|(m, p)| m.iter().zip(p).map(|(a, b)| a * b / z).collect())
        .collect();
    let dh = fd_derivative(&tilted, h);
    let mut kfe_fd_residual = 0.0f64;
    for j in 0..=n_grid {
        let qs = sys.q_star(&phi[j]);
        let flow = vec_mat(&tilted[j], &qs);
        kfe_fd_residual = kfe_fd_residual.max(max_abs_diff(&dh[j], &flow));
    }
    let kfe_residual = kfe_integrated(sys, n_grid, &mu);
    let terminal_target: Vec<f64> =
        mu[n_grid].iter().zip(&sys.reward).map(|(m, r)| m * r.exp() / z).collect();
    let terminal_tilt_error = max_abs_diff(&tilted[n_grid], &terminal_target);

    let kl_identity_error = kl_identity(sys, &phi, &tilted, z, h);

    let path_grid = (1..=n_grid.min(MAX_PATH_GRID))
        .rev()
        .find(|&m| (n as u128).pow(m as u32 + 1) <= PATH_CAP)
        .unwrap_or(1);
    let paths = discrete_path_check(sys, path_grid)?;

    let continuous_rnd_error = continuous_rnd_check(sys, 200, 0x5eed)?;
    let telescoping_error = telescoping_check(sys, 200, 0x7e1e)?;

    let q_star_t0 = sys.q_star(&phi[0]);
    Ok(SocReport {
        n_states: n,
        n_grid,
        hjb_residual,
        hjb_value_residual,
        phi_error,
        kfe_residual,
        kfe_fd_residual,
        terminal_tilt_error,
        kl_identity_error,
        path_grid,
        path_count: paths.path_count,
        path_rnd_error: paths.rnd_error,
        path_mass_error: paths.mass_error,
        path_partition_error: paths.partition_error,
        continuous_rnd_error,
        telescoping_error,
        log_partition: z.ln(),
        value_t0: values[0].clone(),
        cost_to_go_t0: values[0].iter().map(|v| -v).collect(),
        q_star_t0,
    })
}

/// Observed convergence orders of the HJB residual and of the φ error as the
/// grid doubles from `n_base` (`steps` doublings).
pub fn convergence_orders(sys: &CtmcSystem, n_base: usize, steps: usize) -> Result<Vec<(f64, f64)>> {
    let mut prev: Option<(f64, f64)> = None;
    let mut out = Vec::new();
    for i in 0..=steps {
        let n_grid = n_base << i;
        if !(MIN_GRID..=MAX_GRID).contains(&n_grid) {
            return Err(Error::CapExceeded { required: n_grid as u128, cap: MAX_GRID as u128 });
        }
        let h = sys.horizon / n_grid as f64;
        let phi = rk4_phi(sys, n_grid);
        let dphi = fd_derivative(&phi, h);
        let mut hjb = 0.0f64;
        let mut err = 0.0f64;
        for j in 0..=n_grid {
            let q0phi = mat_vec(&sys.q0, &phi[j]);
            for x in 0..sys.n() {
                hjb = hjb.max((dphi[j][x] + q0phi[x]).abs());
            }
            err = err.max(max_abs_diff(&phi[j], &sys.phi_exact(j as f64 * h)));
        }
        if let Some((ph, pe)) = prev {
            out.push(((ph / hjb).log2(), (pe / err).log2()));
        }
        prev = Some((hjb, err));
    }
    Ok(out)
}

/// `φ` on the grid `t_j = j T / n`, integrating `∂_t φ = −Q0 φ` backward from
/// `φ_T = e^r` with classical RK4.
fn rk4_phi(sys: &CtmcSystem, n_grid: usize) -> Mat {
    let h = sys.horizon / n_grid as f64;
    let mut out = vec![Vec::new(); n_grid + 1];
    out[n_grid] = sys.reward.iter().map(|r| r.exp()).collect();
    // In reversed time s = T − t the equation is dφ/ds = Q0 φ.
    let f = |v: &[f64]| mat_vec(&sys.q0, v);
    for j in (0..n_grid).rev() {
        out[j] = rk4_step(&out[j + 1], h, f);
    }
    out
}

/// `μ_t = π0 P0_t` by RK4 on `∂_t μ = μ Q0`.
fn rk4_forward(sys: &CtmcSystem, n_grid: usize) -> Mat {
    let h = sys.horizon / n_grid as f64;
    let mut out = vec![sys.pi0.clone()];
    let f = |v: &[f64]| vec_mat(v, &sys.q0);
    for j in 0..n_grid {
        let next = rk4_step(&out[j], h, f);
        out.push(next);
    }
    out
}

fn rk4_step(y: &[f64], h: f64, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let k1 = f(y);
    let k2 = f(&axpy(y, h / 2.0, &k1));
    let k3 = f(&axpy(y, h / 2.0, &k2));
    let k4 = f(&axpy(y, h, &k3));
    (0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Fourth-order finite-difference time derivative of grid values.
fn fd_derivative(f: &Mat, h: f64) -> Mat {
    let n = f.len() - 1;
    let dim = f[0].len();
    let mut out = vec![vec![0.0; dim]; n + 1];
    for i in 0..dim {
        let v = |j: usize| f[j][i];
        for j in 0..=n {
            out[j][i] = match j {
                0 => (-25.0 * v(0) + 48.0 * v(1) - 36.0 * v(2) + 16.0 * v(3) - 3.0 * v(4)) / (12.0 * h),
                1 => (-3.0 * v(0) - 10.0 * v(1) + 18.0 * v(2) - 6.0 * v(3) + v(4)) / (12.0 * h),
                j if j == n - 1 => {
                    (3.0 * v(n) + 10.0 * v(n - 1) - 18.0 * v(n - 2) + 6.0 * v(n - 3) - v(n - 4)) / (12.0 * h)
                }
                j if j == n => {
                    (25.0 * v(n) - 48.0 * v(n - 1) + 36.0 * v(n - 2) - 16.0 * v(n - 3) + 3.0 * v(n - 4))
                        / (12.0 * h)
                }
                j => (v(j - 2) - 8.0 * v(j - 1) + 8.0 * v(j + 1) - v(j + 2)) / (12.0 * h),
            };
        }
    }
    out
}

/// Forward-evolve the tilted marginal under `Q*_t` and compare it with
/// `(π0 P0_t) ⊙ φ_t / Z`. `φ` comes from a grid twice as fine so the RK4
/// half-steps see `Q*` at their own times.
fn kfe_integrated(sys: &CtmcSystem, n_grid: usize, mu: &Mat) -> f64 {
    let h = sys.horizon / n_grid as f64;
    let fine = rk4_phi(sys, 2 * n_grid);
    let z = dot(&sys.pi0, &fine[0]);
    let flow = |phi: &[f64], v: &[f64]| vec_mat(v, &sys.q_star(phi));
    let mut state: Vec<f64> = sys.pi0.iter().zip(&fine[0]).map(|(p, f)| p * f / z).collect();
    let mut worst = 0.0f64;
    for j in 0..n_grid {
        let (a, m, b) = (&fine[2 * j], &fine[2 * j + 1], &fine[2 * j + 2]);
        let k1 = flow(a, &state);
        let k2 = flow(m, &axpy(&state, h / 2.0, &k1));
        let k3 = flow(m, &axpy(&state, h / 2.0, &k2));
        let k4 = flow(b, &axpy(&state, h, &k3));
        state = (0..state.len())
            .map(|i| state[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        let target: Vec<f64> = mu[j + 1].iter().zip(b).map(|(p, f)| p * f / z).collect();
        worst = worst.max(max_abs_diff(&state, &target));
    }
    worst
}

/// `KL(P*‖P0) = KL(π*‖π0) + ∫ Σ_x h_t(x) Σ_{y≠x} (Q* log(Q*/Q0) − Q* + Q0) dt`
/// should equal `E*[r(X_T)] − log Z`.
fn kl_identity(sys: &CtmcSystem, phi: &Mat, tilted: &Mat, z: f64, h: f64) -> f64 {
    let n = sys.n();
    let n_grid = phi.len() - 1;
    let integrand: Vec<f64> = (0..=n_grid)
        .map(|j| {
            let qs = sys.q_star(&phi[j]);
            (0..n)
                .map(|x| {
                    let inner: f64 = (0..n)
                        .filter(|&y| y != x && sys.q0[x][y] > 0.0)
                        .map(|y| qs[x][y] * (qs[x][y] / sys.q0[x][y]).ln() - qs[x][y] + sys.q0[x][y])
                        .sum();
                    tilted[j][x] * inner
                })
                .sum()
        })
        .collect();
    let running = integrate_grid(&integrand, h);
    let initial: f64 = (0..n)
        .filter(|&x| sys.pi0[x] > 0.0)
        .map(|x| {
            let star = sys.pi0[x] * phi[0][x] / z;
            star * (phi[0][x] / z).ln()
        })
        .sum();
    let expected_r: f64 = tilted[n_grid].iter().zip(&sys.reward).map(|(p, r)| p * r).sum();
    (initial + running - (expected_r - z.ln())).abs()
}

/// Composite Simpson when the interval count is even, otherwise Simpson on
/// all but the last three intervals plus Simpson's 3/8 rule.
fn integrate_grid(f: &[f64], h: f64) -> f64 {
    let n = f.len() - 1;
    let simpson = |a: usize, b: usize| -> f64 {
        let mut s = f[a] + f[b];
        for j in a + 1..b {
            s += if (j - a) % 2 == 1 { 4.0 * f[j] } else { 2.0 * f[j] };
        }
        s * h / 3.0
    };
    if n % 2 == 0 {
        simpson(0, n)
    } else {
        let m = n - 3;
        let tail = 3.0 * h / 8.0 * (f[m] + 3.0 * f[m + 1] + 3.0 * f[m + 2] + f[m + 3]);
        (if m > 0 { simpson(0, m) } else { 0.0 }) + tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathCheck {
    pub path_count: u64,
    pub rnd_error: f64,
    pub mass_error: f64,
    pub partition_error: f64,
}

/// Exhaustive check on the chain observed at `n_grid + 1` equally spaced times.
///
/// The discrete optimal chain uses `P*_j(x,y) = P(x,y) φ_{j+1}(y)/φ_j(x)` with
/// `P = exp(Q0 Δ)` and `φ_j = P φ_{j+1}`, and starts from `π0 φ_0 / Z`.
pub fn discrete_path_check(sys: &CtmcSystem, n_grid: usize) -> Result<PathCheck> {
    let n = sys.n();
    let count = (n as u128).saturating_pow(n_grid as u32 + 1);
    if n_grid == 0 || n_grid > MAX_PATH_GRID {
        return Err(Error::CapExceeded { required: n_grid as u128, cap: MAX_PATH_GRID as u128 });
    }
    check_paths(count)?;
    let p = expm(&scale(&sys.q0, sys.horizon / n_grid as f64));
    let mut phi = vec![Vec::new(); n_grid + 1];
    phi[n_grid] = sys.reward.iter().map(|r| r.exp()).collect();
    for j in (0..n_grid).rev() {
        phi[j] = mat_vec(&p, &phi[j + 1]);
    }
    let z = dot(&sys.pi0, &phi[0]);
    let log_z = z.ln();
    let log_p: Mat = p.iter().map(|row| row.iter().map(|v| v.ln()).collect()).collect();
    let log_phi: Mat = phi.iter().map(|row| row.iter().map(|v| v.ln()).collect()).collect();

    struct Acc {
        rnd_error: f64,
        star_mass: f64,
        z_brute: f64,
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        sys: &CtmcSystem,
        log_p: &Mat,
        log_phi: &Mat,
        log_z: f64,
        j: usize,
        x: usize,
        lp0: f64,
        lps: f64,
        acc: &mut Acc,
    ) {
        let n_grid = log_phi.len() - 1;
        if j == n_grid {
            let r = sys.reward[x];
            acc.rnd_error = acc.rnd_error.max(((lps - lp0) - (r - log_z)).abs());
            acc.star_mass += lps.exp();
            acc.z_brute += (lp0 + r).exp();
            return;
        }
        for y in 0..sys.n() {
            let step = log_p[x][y];
            let star = step + log_phi[j + 1][y] - log_phi[j][x];
            rec(sys, log_p, log_phi, log_z, j + 1, y, lp0 + step, lps + star, acc);
        }
    }
    let mut acc = Acc { rnd_error: 0.0, star_mass: 0.0, z_brute: 0.0 };
    for x in 0..n {
        if sys.pi0[x] > 0.0 {
            let l0 = sys.pi0[x].ln();
            rec(sys, &log_p, &log_phi, log_z, 0, x, l0, l0 + log_phi[0][x] - log_z, &mut acc);
        }
    }
    Ok(PathCheck {
        path_count: count as u64,
        rnd_error: acc.rnd_error,
        mass_error: (acc.star_mass - 1.0).abs(),
        partition_error: (acc.z_brute - z).abs() / z,
    })
}

fn check_paths(count: u128) -> Result<()> {
    if count > PATH_CAP {
        Err(Error::CapExceeded { required: count, cap: PATH_CAP })
    } else {
        Ok(())
    }
}

/// A piecewise-constant path: `states[i]` is held on `[times[i], times[i+1])`,
/// with `times[0] = 0` and a final holding interval up to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpPath {
    pub states: Vec<usize>,
    pub times: Vec<f64>,
}

/// Gillespie simulation under `Q0` on `[0, T]`.
pub fn simulate_path(sys: &CtmcSystem, seed: u64) -> JumpPath {
    let mut rng = seeded(seed);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut x = sys.n() - 1;
    for (i, p) in sys.pi0.iter().enumerate() {
        acc += p;
        if u < acc {
            x = i;
            break;
        }
    }
    let mut states = vec![x];
    let mut times = vec![0.0];
    let mut t = 0.0;
    loop {
        let exit = sys.exit(x);
        if exit <= 0.0 {
            break;
        }
        t += -(1.0 - rng.gen::<f64>()).ln() / exit;
        if t >= sys.horizon {
            break;
        }
        let v = rng.gen::<f64>() * exit;
        let mut acc = 0.0;
        let mut next = x;
        for y in 0..sys.n() {
            if y != x {
                acc += sys.q0[x][y];
                next = y;
                if v < acc {
                    break;
                }
            }
        }
        x = next;
        states.push(x);
        times.push(t);
    }
    JumpPath { states, times }
}

const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982_0,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

/// 10-point Gauss–Legendre on `[a, b]`, split into pieces of width ≤ 0.05.
fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let pieces = ((b - a) / 0.05).ceil().max(1.0) as usize;
    let w = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let mid = a + (k as f64 + 0.5) * w;
            let half = w / 2.0;
            GL_NODES
                .iter()
                .zip(&GL_WEIGHTS)
                .map(|(x, wt)| wt * (f(mid - half * x) + f(mid + half * x)))
                .sum::<f64>()
                * half
        })
        .sum()
}

/// `log dP*/dP0` of a continuous path: initial tilt, jump log-ratios of `Q*`
/// to `Q0`, and the integrated exit-rate difference.
pub fn optimal_path_log_rnd(sys: &CtmcSystem, path: &JumpPath) -> f64 {
    let z = sys.partition();
    let phi0 = sys.phi_exact(0.0);
    let x0 = path.states[0];
    let mut total = (phi0[x0] / z).ln();
    for i in 0..path.states.len() {
        let x = path.states[i];
        let start = path.times[i];
        let end = path.times.get(i + 1).copied().unwrap_or(sys.horizon);
        total += gauss_legendre(start, end, |t| {
            let phi = sys.phi_exact(t);
            (0..sys.n())
                .filter(|&y| y != x)
                .map(|y| sys.q0[x][y] * (1.0 - phi[y] / phi[x]))
                .sum()
        });
        if let Some(&y) = path.states.get(i + 1) {
            let phi = sys.phi_exact(end);
            total += (phi[y] / phi[x]).ln();
        }
    }
    total
}

fn continuous_rnd_check(sys: &CtmcSystem, n_paths: u64, seed: u64) -> Result<f64> {
    let log_z = sys.partition().ln();
    let mut worst = 0.0f64;
    for i in 0..n_paths {
        let path = simulate_path(sys, crate::rng::derive_seed(seed, i));
        let x_t = *path.states.last().expect("non-empty path");
        let err = (optimal_path_log_rnd(sys, &path) - (sys.reward[x_t] - log_z)).abs();
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Log-RND between two constant generators over the part of `path` in
/// `[a, b]`: jump log-ratios in `(a, b]` plus `∫ (exit_b − exit_a)` .
pub fn two_generator_log_rnd(qa: &Mat, qb: &Mat, path: &JumpPath, a: f64, b: f64, horizon: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..path.states.len() {
        let x = path.states[i];
        let start = path.times[i].max(a);
        let end = path.times.get(i + 1).copied().unwrap_or(horizon).min(b);
        if end > start {
            total += (qa[x][x] - qb[x][x]) * (end - start);
        }
        if let Some(&y) = path.states.get(i + 1) {
            let t = path.times[i + 1];
            if t > a && t <= b {
                total += (qa[x][y] / qb[x][y]).ln();
            }
        }
    }
    total
}

/// Whole-path log-RND of `Q*_0` (held constant) against `Q0`, minus the sum
/// over random segmentations.
fn telescoping_check(sys: &CtmcSystem, n_paths: u64, seed: u64) -> Result<f64> {
    let qa = sys.q_star(&sys.phi_exact(0.0));
    let t = sys.horizon;
    let mut worst = 0.0f64;
    for i in 0..n_paths {
        let s = crate::rng::derive_seed(seed, i);
        let path = simulate_path(sys, s);
        let whole = two_generator_log_rnd(&qa, &sys.q0, &path, 0.0, t, t);
        let mut rng = seeded(s ^ 0xa5a5);
        let mut cuts: Vec<f64> = (0..rng.gen_range(1..6)).map(|_| rng.gen::<f64>() * t).collect();
        // Cutting exactly at jump times exercises the interval convention.
        cuts.extend(path.times.iter().skip(1).take(1));
        cuts.push(0.0);
        cuts.push(t);
        cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let parts: f64 = cuts
            .windows(2)
            .map(|w| two_generator_log_rnd(&qa, &sys.q0, &path, w[0], w[1], t))
            .sum();
        worst = worst.max((whole - parts).abs());
    }
    Ok(worst)
}

fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(u, v)| u + a * v).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &Mat, v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn vec_mat(v: &[f64], m: &Mat) -> Vec<f64> {
    let n = m[0].len();
    (0..n).map(|j| v.iter().zip(m).map(|(a, row)| a * row[j]).sum()).collect()
}

fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    a.iter().map(|row| vec_mat(row, b)).collect()
}

fn scale(m: &Mat, s: f64) -> Mat {
    m.iter().map(|row| row.iter().map(|v| v * s).collect()).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a Taylor series.
pub fn expm(m: &Mat) -> Mat {
    let n = m.len();
    let norm = m.iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm > 0.25 { (norm / 0.25).log2().ceil() as u32 } else { 0 };
    let a = scale(m, 0.5f64.powi(squarings as i32));
    let mut result: Mat = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut term = result.clone();
    for k in 1..=20 {
        term = scale(&mat_mul(&term, &a), 1.0 / k as f64);
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mat_mul(&result, &result);
    }
    result
}
