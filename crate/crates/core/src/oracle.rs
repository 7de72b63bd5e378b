//! Independent verifiers for the per-slot solver and the voice SINR model.
//!
//! Nothing here calls into [`crate::inner`] beyond reading a
//! [`WeightedInstance`]; the rate expression is written out again so that a
//! transcription slip in the solver cannot hide in both places.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::inner::{DataAllocation, LinkParams, WeightedInstance};
use crate::scenario::SystemParams;
use crate::{Error, Result};

/// Upper bound on objective evaluations of a single grid search.
pub const MAX_GRID_EVALUATIONS: u128 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    /// Points per user on `[0, budget]`, endpoints included.
    pub power_points: usize,
    /// Points per user on `[0, N_max]`, endpoints included.
    pub code_points: usize,
}

impl GridSpec {
    /// Number of `(power tuple, code tuple)` pairs on the simplex grid.
    pub fn evaluations(&self, users: usize) -> u128 {
        simplex_points(self.power_points - 1, users) * simplex_points(self.code_points - 1, users)
    }
}

/// Lattice points `i ∈ ℕ^users` with `Σ i ≤ steps`: `C(steps + users, users)`.
fn simplex_points(steps: usize, users: usize) -> u128 {
    let mut c: u128 = 1;
    for j in 1..=users as u128 {
        c = c * (steps as u128 + j) / j;
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub powers: Vec<f64>,
    pub codes: Vec<f64>,
    pub objective: f64,
    pub evaluations: u128,
}

/// `n·(W/M_D)·log2(1 + p·M_D·h/(n·(θ·P_RAD·h + σ²)))`, zero when `n = 0`.
fn oracle_rate(p: f64, n: f64, h: f64, p_rad: f64, instance: &WeightedInstance) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    let link = &instance.link;
    let sinr_per_code = p * link.m_d * h / (n * (link.theta * p_rad * h + link.sigma2));
    n * (link.chip_rate / link.m_d) * sinr_per_code.ln_1p() / std::f64::consts::LN_2
}

/// Row-major table `rate[p_index * code_points + n_index]` for one user.
fn rate_table(instance: &WeightedInstance, user: usize, grid: &GridSpec) -> Vec<f64> {
    let dp = instance.power_budget / (grid.power_points - 1) as f64;
    let dn = instance.n_max / (grid.code_points - 1) as f64;
    let mut table = Vec::with_capacity(grid.power_points * grid.code_points);
    for i in 0..grid.power_points {
        for j in 0..grid.code_points {
            let r = oracle_rate(
                i as f64 * dp,
                j as f64 * dn,
                instance.gains[user],
                instance.p_rad,
                instance,
            );
            table.push(instance.weights[user] * r);
        }
    }
    table
}

/// All index tuples of length `users` with sum at most `steps`.
fn simplex_tuples(steps: usize, users: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; users];
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..=left {
            cur[pos] = i;
            rec(pos + 1, left - i, cur, out);
        }
    }
    rec(0, steps, &mut cur, &mut out);
    out
}

/// Exhaustive search of the weighted-rate objective over a simplex grid.
pub fn brute_force_inner(instance: &WeightedInstance, grid: &GridSpec) -> Result<GridOptimum> {
    let users = instance.len();
    if users == 0 || users > 3 {
        return Err(Error::InvalidArgument(format!(
            "grid oracle supports 1 to 3 users, got {users}"
        )));
    }
    if grid.power_points < 2 || grid.code_points < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points per axis".into()));
    }
    let evaluations = grid.evaluations(users);
    if evaluations > MAX_GRID_EVALUATIONS {
        return Err(Error::GridTooLarge {
            points: evaluations,
            limit: MAX_GRID_EVALUATIONS,
        });
    }
    let tables: Vec<Vec<f64>> = (0..users).map(|k| rate_table(instance, k, grid)).collect();
    let power_tuples = simplex_tuples(grid.power_points - 1, users);
    let code_tuples = simplex_tuples(grid.code_points - 1, users);
    let cp = grid.code_points;

    let (objective, pi, ci) = power_tuples
        .par_iter()
        .enumerate()
        .map(|(pi, pt)| {
            let mut best = (f64::NEG_INFINITY, pi, 0);
            for (ci, ct) in code_tuples.iter().enumerate() {
                let mut value = 0.0;
                for k in 0..users {
                    value += tables[k][pt[k] * cp + ct[k]];
                }
                if value > best.0 {
                    best = (value, pi, ci);
                }
            }
            best
        })
        .reduce(
            || (f64::NEG_INFINITY, 0, 0),
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
                    b
                } else {
                    a
                }
            },
        );

    let dp = instance.power_budget / (grid.power_points - 1) as f64;
    let dn = instance.n_max / (grid.code_points - 1) as f64;
    Ok(GridOptimum {
        powers: power_tuples[pi].iter().map(|&i| i as f64 * dp).collect(),
        codes: code_tuples[ci].iter().map(|&j| j as f64 * dn).collect(),
        objective,
        evaluations,
    })
}

/// Stationarity and slackness residuals of an allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// Max over users with `p > 0` of `|w·∂r/∂p − β| / β`.
    pub power_stationarity: f64,
    /// Max over users with `n > 0` of `|w·∂r/∂n − φ| / φ`.
    pub code_stationarity: f64,
    /// Max over positive-weight users without codes of how much one more
    /// code at the best power ratio would gain, relative to `φ`.
    pub boundary_violation: f64,
    /// `β·(Σp − P)`.
    pub power_slackness: f64,
    /// `φ·(Σn − N_max)`.
    pub code_slackness: f64,
    /// `P − Σp`.
    pub power_slack: f64,
    /// `N_max − Σn`.
    pub code_slack: f64,
    pub objective: f64,
}

impl KktReport {
    pub fn max_stationarity(&self) -> f64 {
        self.power_stationarity.max(self.code_stationarity)
    }
}

const FD_STEP: f64 = 1e-6;

fn relative(value: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        value.abs() / scale
    } else {
        value.abs()
    }
}

/// Finite-difference KKT residuals of `allocation` for `instance`.
pub fn kkt_report(instance: &WeightedInstance, allocation: &DataAllocation) -> Result<KktReport> {
    let users = instance.len();
    let (p, n) = (&allocation.powers, &allocation.codes);
    if p.len() != users || n.len() != users {
        return Err(Error::InfeasibleAllocation(
            "allocation length does not match instance".into(),
        ));
    }
    if p.iter().chain(n).any(|v| !(*v >= 0.0)) {
        return Err(Error::InfeasibleAllocation("negative power or code share".into()));
    }
    let total_p: f64 = p.iter().sum();
    let total_n: f64 = n.iter().sum();
    if total_p > instance.power_budget * (1.0 + 1e-6) {
        return Err(Error::InfeasibleAllocation(format!(
            "power {total_p} exceeds budget {}",
            instance.power_budget
        )));
    }
    if total_n > instance.n_max * (1.0 + 1e-6) {
        return Err(Error::InfeasibleAllocation(format!(
            "codes {total_n} exceed {}",
            instance.n_max
        )));
    }

    let (beta, varphi) = (allocation.beta, allocation.varphi);
    let rate = |k: usize, pk: f64, nk: f64| oracle_rate(pk, nk, instance.gains[k], instance.p_rad, instance);
    let mut report = KktReport {
        power_stationarity: 0.0,
        code_stationarity: 0.0,
        boundary_violation: 0.0,
        power_slackness: beta * (total_p - instance.power_budget),
        code_slackness: varphi * (total_n - instance.n_max),
        power_slack: instance.power_budget - total_p,
        code_slack: instance.n_max - total_n,
        objective: (0..users).map(|k| instance.weights[k] * rate(k, p[k], n[k])).sum(),
    };
    for k in 0..users {
        let w = instance.weights[k];
        if p[k] > 0.0 && n[k] > 0.0 {
            let hp = FD_STEP * p[k];
            let dp = w * (rate(k, p[k] + hp, n[k]) - rate(k, p[k] - hp, n[k])) / (2.0 * hp);
            report.power_stationarity = report.power_stationarity.max(relative(dp - beta, beta));
            let hn = FD_STEP * n[k];
            let dn = w * (rate(k, p[k], n[k] + hn) - rate(k, p[k], n[k] - hn)) / (2.0 * hn);
            report.code_stationarity = report.code_stationarity.max(relative(dn - varphi, varphi));
        } else if w > 0.0 && beta > 0.0 {
            // Best single-code profit w·r(x, 1) − β·x over the power ratio x.
            let link = &instance.link;
            let h = instance.gains[k];
            let noise = (link.theta * instance.p_rad * h + link.sigma2) / (link.m_d * h);
            let x = (w * link.chip_rate / (std::f64::consts::LN_2 * beta * link.m_d) - noise).max(0.0);
            let profit = w * rate(k, x, 1.0) - beta * x;
            let excess = (profit - varphi).max(0.0);
            report.boundary_violation = report.boundary_violation.max(relative(excess, varphi));
        }
    }
    Ok(report)
}

/// Voice SINR, `M_V·p̌·h / (θ·(P_RAD − p̌)·h + σ²)` when `exact`, otherwise
/// with the own-signal term left in the interference, `θ·P_RAD·h + σ²`.
pub fn sinr_direct(p_voice: f64, p_rad: f64, h: f64, params: &SystemParams, exact: bool) -> f64 {
    let own = if exact { p_voice } else { 0.0 };
    params.m_v * p_voice * h / (params.theta * (p_rad - own) * h + params.sigma2)
}

/// Random test instance on the link of `params`: users uniform on
/// `[100, 300]` m with Rayleigh fading and a data budget on `[0.2 mW, P_max)`.
/// Weights are a factor on `[0.97, 1.03)` over each user's rate with the whole
/// budget, so that users compete and splits are common.
pub fn random_instance<R: Rng + ?Sized>(
    params: &SystemParams,
    users: usize,
    n_max: f64,
    rng: &mut R,
) -> Result<WeightedInstance> {
    let gains = (0..users)
        .map(|_| {
            let fading: f64 = rng.sample(Exp1);
            Ok(params.path_loss.gain(rng.random_range(100.0..300.0))? * fading.max(1e-3))
        })
        .collect::<Result<Vec<_>>>()?;
    let power_budget = rng.random_range(0.2e-3..params.p_bs_max.max(0.3e-3));
    let mut instance = WeightedInstance {
        weights: vec![1.0; users],
        gains,
        p_rad: power_budget + params.p_cpich,
        power_budget,
        n_max,
        link: LinkParams::from_params(params),
    };
    instance.validate()?;
    instance.weights = (0..users)
        .map(|k| {
            let alone = oracle_rate(power_budget, n_max, instance.gains[k], instance.p_rad, &instance);
            rng.random_range(0.97..1.03) * 1e6 / alone
        })
        .collect();
    Ok(instance)
}
