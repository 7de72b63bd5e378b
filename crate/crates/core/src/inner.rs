//! Per-slot weighted-rate allocation of data powers and codes.
//!
//! Solves
//!
//! ```text
//! maximize    Σ w_k·n_k·(W/M_D)·log2(1 + M_D·p_k·h_k / (n_k·(θ·P_RAD·h_k + σ²)))
//! subject to  Σ p_k ≤ P,   Σ n_k ≤ N_max,   p, n ≥ 0
//! ```
//!
//! by its Lagrangian dual in the power multiplier `β` and code multiplier
//! `φ`. Stationarity in `p_k` gives the water-filling power
//! `p_k = n_k·(w_k·W/(ln2·β·M_D) − (θ·P_RAD·h_k + σ²)/(M_D·h_k))⁺`
//! ([`optimal_power_given_codes`]); stationarity in `n_k` gives the code
//! condition iterated by [`optimal_codes_fixed_point`].
//!
//! Each user's rate is jointly homogeneous of degree one in `(p_k, n_k)`, so
//! the Lagrangian is linear along rays and `φ` can be eliminated:
//! `φ(β) = max_k ψ_k(β)`, with `ψ_k(β)` the per-code profit of user `k` at
//! its optimal power-per-code ratio. [`solve_inner`] minimises the resulting
//! one-dimensional convex dual `β·P + N_max·φ(β)` by bisection, then recovers
//! the primal point from the users attaining the maximum: at most two in
//! general position, all of them under exact symmetry.

use std::f64::consts::LN_2;

use crate::scenario::SystemParams;
use crate::{Error, Result};

/// Lower bound on `β` where the closed-form power is evaluated.
pub const BETA_MIN: f64 = 1e-12;

/// Link constants shared by every data user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub chip_rate: f64,
    pub m_d: f64,
    pub theta: f64,
    pub sigma2: f64,
}

impl LinkParams {
    pub fn from_params(params: &SystemParams) -> Self {
        LinkParams {
            chip_rate: params.chip_rate,
            m_d: params.m_d,
            theta: params.theta,
            sigma2: params.sigma2,
        }
    }

    /// Interference plus noise seen by a user with gain `h`.
    fn impairment(&self, h: f64, p_rad: f64) -> f64 {
        self.theta * p_rad * h + self.sigma2
    }

    /// Per-code SNR per watt, `M_D·h/(θ·P_RAD·h + σ²)`.
    fn snr_per_watt(&self, h: f64, p_rad: f64) -> f64 {
        self.m_d * h / self.impairment(h, p_rad)
    }

    fn code_rate(&self) -> f64 {
        self.chip_rate / self.m_d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedInstance {
    /// `λ_k − μ_k` for the stochastic scheduler, PF weights for baselines.
    pub weights: Vec<f64>,
    pub gains: Vec<f64>,
    pub p_rad: f64,
    /// Power left for data after voice, W.
    pub power_budget: f64,
    pub n_max: f64,
    pub link: LinkParams,
}

impl WeightedInstance {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.gains.len() {
            return Err(Error::InvalidArgument("weights and gains differ in length".into()));
        }
        if !(self.power_budget >= 0.0 && self.power_budget.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "power budget {} must be >= 0",
                self.power_budget
            )));
        }
        if !(self.n_max > 0.0) {
            return Err(Error::InvalidArgument(format!("n_max {} must be > 0", self.n_max)));
        }
        if let Some(h) = self.gains.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return Err(Error::InvalidArgument(format!("gain {h} must be positive")));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite".into()));
        }
        Ok(())
    }

    /// Weighted rate of an allocation.
    pub fn objective(&self, powers: &[f64], codes: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for k in 0..self.len() {
            total += self.weights[k] * rate_of(powers[k], codes[k], self.gains[k], self.p_rad, &self.link)?;
        }
        Ok(total)
    }

    pub fn rates(&self, powers: &[f64], codes: &[f64]) -> Result<Vec<f64>> {
        (0..self.len())
            .map(|k| rate_of(powers[k], codes[k], self.gains[k], self.p_rad, &self.link))
            .collect()
    }
}

/// Achievable rate in bit/s of `n` codes carrying `p` watts.
pub fn rate_of(p: f64, n: f64, h: f64, p_rad: f64, link: &LinkParams) -> Result<f64> {
    if !(p >= 0.0 && n >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "power {p} and codes {n} must be nonnegative"
        )));
    }
    if n == 0.0 {
        return if p == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::PowerWithoutCodes { power: p })
        };
    }
    let snr = link.snr_per_watt(h, p_rad) * p / n;
    Ok(n * link.code_rate() * snr.ln_1p() / LN_2)
}

pub fn optimal_power_given_codes(instance: &WeightedInstance, codes: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(beta >= BETA_MIN) {
        return Err(Error::BetaTooSmall { beta, min: BETA_MIN });
    }
    let link = &instance.link;
    Ok((0..instance.len())
        .map(|k| {
            let (w, n, h) = (instance.weights[k], codes[k], instance.gains[k]);
            if w <= 0.0 || n <= 0.0 {
                return 0.0;
            }
            let level = w * n * link.chip_rate / (LN_2 * beta * link.m_d);
            let floor = n * link.impairment(h, instance.p_rad) / (link.m_d * h);
            (level - floor).max(0.0)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeFixedPoint {
    pub codes: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates the code stationarity condition at fixed powers and `φ`.
///
/// Writing `y = a·p/n` for the per-code SNR, stationarity reads
/// `ln(1+y) − y/(1+y) = K` with `K = M_D·φ·ln2/(w·W)`. The map is applied as
/// `y ← exp(K + y/(1+y)) − 1`, a contraction with rate `1/(1+y)`; the
/// rearrangement `n ← (w·W·a·p/ln2)/(w·W·log2(1+y) − M_D·φ) − a·p` has the same
/// fixed point but slope `1+y` there and drifts away from it, and its
/// denominator `w·W·log2(1+y) − M_D·φ` turns negative whenever the iterate
/// holds too many codes. For `p > 0` the marginal value of a code grows
/// without bound as `n → 0`, so the root is always positive and no user
/// with power is zeroed. At `φ = 0` there is no finite root and the
/// iteration reports non-convergence.
pub fn optimal_codes_fixed_point(
    instance: &WeightedInstance,
    powers: &[f64],
    codes_init: &[f64],
    varphi: f64,
    max_iter: usize,
    tol: f64,
) -> CodeFixedPoint {
    let link = &instance.link;
    let mut codes: Vec<f64> = (0..instance.len())
        .map(|k| {
            if powers[k] > 0.0 && instance.weights[k] > 0.0 {
                codes_init[k].max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for k in 0..instance.len() {
            let n = codes[k];
            if n <= 0.0 {
                continue;
            }
            let w = instance.weights[k];
            let ap = link.snr_per_watt(instance.gains[k], instance.p_rad) * powers[k];
            let y = ap / n;
            let k_const = link.m_d * varphi * LN_2 / (w * link.chip_rate);
            let next = ap / (k_const + y / (1.0 + y)).exp_m1();
            max_change = max_change.max((next - n).abs() / n);
            codes[k] = next;
        }
        if max_change < tol {
            converged = true;
            break;
        }
    }
    CodeFixedPoint {
        codes,
        iterations,
        converged,
    }
}

/// One projected supergradient step on `(β, φ)` with step
/// `ν = (Q/√q)/‖∇D‖₂`, where `∇D = (Σp − P, Σn − N_max)`.
pub fn update_inner_duals(
    beta: f64,
    varphi: f64,
    powers: &[f64],
    codes: &[f64],
    instance: &WeightedInstance,
    iter_index: usize,
    q_scale: f64,
) -> (f64, f64) {
    let power_violation = powers.iter().sum::<f64>() - instance.power_budget;
    let code_violation = codes.iter().sum::<f64>() - instance.n_max;
    let step = supergradient_step(&[power_violation, code_violation], iter_index, q_scale);
    ((beta + step[0]).max(0.0), (varphi + step[1]).max(0.0))
}

/// Normalised diminishing step `Q/√q · g/‖g‖₂`; zero when `g = 0`.
pub(crate) fn supergradient_step(violation: &[f64], iter_index: usize, q_scale: f64) -> Vec<f64> {
    let norm = violation.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; violation.len()];
    }
    let q = iter_index.max(1) as f64;
    violation.iter().map(|v| q_scale / q.sqrt() * v / norm).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Relative width of the final `β` bracket.
    pub tol: f64,
    pub max_iter: usize,
    /// Users whose per-code profit is within this relative gap of the best
    /// share the codes.
    pub tie_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-14,
            max_iter: 200,
            tie_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataAllocation {
    pub powers: Vec<f64>,
    /// Continuous code shares.
    pub codes: Vec<f64>,
    /// bit/s
    pub rates: Vec<f64>,
    pub beta: f64,
    pub varphi: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl DataAllocation {
    pub fn zero(users: usize) -> Self {
        DataAllocation {
            powers: vec![0.0; users],
            codes: vec![0.0; users],
            rates: vec![0.0; users],
            beta: 0.0,
            varphi: 0.0,
            objective: 0.0,
            iterations: 0,
            converged: true,
        }
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }

    pub fn total_codes(&self) -> f64 {
        self.codes.iter().sum()
    }
}

/// Per-user quantities of the reduced dual.
struct UserCurve {
    index: usize,
    /// `w·W/(M_D·ln2)`, the per-code rate scale in weighted units.
    scale: f64,
    /// Per-code SNR per watt.
    snr_per_watt: f64,
}

impl UserCurve {
    /// `β` above which the user's optimal power is zero.
    fn beta_cutoff(&self) -> f64 {
        self.scale * self.snr_per_watt
    }

    /// Optimal power per code at `β`; this is the closed-form power with `n = 1`.
    fn power_per_code(&self, beta: f64) -> f64 {
        (self.scale / beta - 1.0 / self.snr_per_watt).max(0.0)
    }

    /// Weighted rate minus power cost per code at the optimal ratio.
    fn profit(&self, beta: f64) -> f64 {
        let y = (self.beta_cutoff() / beta - 1.0).max(0.0);
        self.scale * stationarity_gap(y)
    }
}

/// `ln(1+y) − y/(1+y)`, accurate for small `y`.
fn stationarity_gap(y: f64) -> f64 {
    if y < 1e-2 {
        // Σ_{n≥2} (−1)^n (n−1)/n · y^n
        let mut term = y * y;
        let mut sum = 0.0;
        for n in 2..14 {
            let nf = n as f64;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (nf - 1.0) / nf * term;
            term *= y;
        }
        sum
    } else {
        y.ln_1p() - y / (1.0 + y)
    }
}

pub fn solve_inner(instance: &WeightedInstance, options: &SolveOptions) -> Result<DataAllocation> {
    instance.validate()?;
    let users = instance.len();
    let link = &instance.link;
    let curves: Vec<UserCurve> = (0..users)
        .filter(|&k| instance.weights[k] > 0.0)
        .map(|k| UserCurve {
            index: k,
            scale: instance.weights[k] * link.code_rate() / LN_2,
            snr_per_watt: link.snr_per_watt(instance.gains[k], instance.p_rad),
        })
        .collect();
    if curves.is_empty() || instance.power_budget <= 0.0 {
        return Ok(DataAllocation::zero(users));
    }

    let budget = instance.power_budget;
    let n_max = instance.n_max;
    let ratio = budget / n_max;
    let best = |beta: f64| -> (usize, f64) {
        let mut arg = 0;
        let mut top = f64::NEG_INFINITY;
        for (i, c) in curves.iter().enumerate() {
            let v = c.profit(beta);
            if v > top {
                top = v;
                arg = i;
            }
        }
        (arg, top)
    };
    // Right derivative of the dual: P − N·x_best(β).
    let slope_positive = |beta: f64| {
        let (arg, _) = best(beta);
        budget - n_max * curves[arg].power_per_code(beta) > 0.0
    };

    let mut hi = curves.iter().map(UserCurve::beta_cutoff).fold(0.0, f64::max);
    let mut lo = hi;
    let mut iterations = 0;
    loop {
        lo *= 0.5;
        iterations += 1;
        if !slope_positive(lo) || iterations >= options.max_iter {
            break;
        }
        hi = lo;
    }
    while hi / lo - 1.0 > options.tol && iterations < options.max_iter {
        let mid = (lo * hi).sqrt();
        if slope_positive(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    let converged = hi / lo - 1.0 <= options.tol;
    let mut beta = (lo * hi).sqrt();

    let (_, top) = best(beta);
    let mut tied: Vec<usize> = (0..curves.len())
        .filter(|&i| curves[i].profit(beta) >= top * (1.0 - options.tie_tol))
        .collect();
    for b in [lo, hi] {
        let (arg, _) = best(b);
        if !tied.contains(&arg) {
            tied.push(arg);
        }
    }
    tied.sort_unstable();

    let mut powers = vec![0.0; users];
    let mut codes = vec![0.0; users];
    let per_code: Vec<f64> = tied.iter().map(|&i| curves[i].power_per_code(beta)).collect();
    let (low, high): (Vec<usize>, Vec<usize>) = (0..tied.len()).partition(|&j| per_code[j] < ratio);
    let varphi;
    if low.is_empty() || high.is_empty() {
        // All tied users sit on one side of P/N_max, which only happens when
        // the users closest to the ratio are at it up to rounding. They
        // share the codes evenly at exactly that ratio, and β is pinned to
        // the value that makes the ratio stationary.
        let gap = |j: usize| (per_code[j] - ratio).abs();
        let nearest = (0..tied.len()).map(gap).fold(f64::INFINITY, f64::min);
        let group: Vec<usize> = (0..tied.len())
            .filter(|&j| gap(j) <= nearest + 1e-9 * ratio)
            .map(|j| tied[j])
            .collect();
        let share = n_max / group.len() as f64;
        for &i in &group {
            let k = curves[i].index;
            codes[k] = share;
            powers[k] = share * ratio;
        }
        let c = &curves[group[0]];
        beta = c.scale * c.snr_per_watt / (1.0 + c.snr_per_watt * ratio);
        varphi = group
            .iter()
            .map(|&i| curves[i].scale * stationarity_gap(curves[i].snr_per_watt * ratio))
            .fold(0.0, f64::max);
    } else {
        // Equal codes within each side; solve the two coupling equalities
        //   |L|·n_L + |H|·n_H = N,   n_L·ΣL x + n_H·ΣH x = P.
        let count_low = low.len() as f64;
        let count_high = high.len() as f64;
        let x_low: f64 = low.iter().map(|&j| per_code[j]).sum();
        let x_high: f64 = high.iter().map(|&j| per_code[j]).sum();
        let det = count_low * x_high - count_high * x_low;
        let n_low = ((n_max * x_high - count_high * budget) / det).max(0.0);
        let n_high = ((count_low * budget - n_max * x_low) / det).max(0.0);
        for (group, share) in [(&low, n_low), (&high, n_high)] {
            for &j in group.iter() {
                let k = curves[tied[j]].index;
                codes[k] = share;
                powers[k] = share * per_code[j];
            }
        }
        varphi = top;
    }

    // Remove rounding drift so the budget holds with equality.
    let used: f64 = powers.iter().sum();
    if used > 0.0 {
        let fix = budget / used;
        powers.iter_mut().for_each(|p| *p *= fix);
    }
    let used_codes: f64 = codes.iter().sum();
    if used_codes > n_max {
        let fix = n_max / used_codes;
        codes.iter_mut().for_each(|n| *n *= fix);
    }

    let rates = instance.rates(&powers, &codes)?;
    let objective = rates.iter().zip(&instance.weights).map(|(r, w)| r * w).sum();
    Ok(DataAllocation {
        powers,
        codes,
        rates,
        beta,
        varphi,
        objective,
        iterations,
        converged,
    })
}

/// Integer code assignment for reporting: floor every share, then hand the
/// leftover codes one at a time to the largest weighted marginal rate.
pub fn round_codes(instance: &WeightedInstance, allocation: &DataAllocation) -> Result<(Vec<u32>, Vec<f64>)> {
    let mut codes: Vec<u32> = allocation.codes.iter().map(|n| n.floor() as u32).collect();
    let total = instance.n_max.floor() as u32;
    let rate_at = |k: usize, n: u32| -> Result<f64> {
        if n == 0 {
            return Ok(0.0);
        }
        rate_of(
            allocation.powers[k],
            n as f64,
            instance.gains[k],
            instance.p_rad,
            &instance.link,
        )
    };
    let mut assigned: u32 = codes.iter().sum();
    while assigned < total {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..instance.len() {
            if allocation.powers[k] <= 0.0 || instance.weights[k] <= 0.0 {
                continue;
            }
            let gain = instance.weights[k] * (rate_at(k, codes[k] + 1)? - rate_at(k, codes[k])?);
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((k, gain));
            }
        }
        let Some((k, _)) = best else { break };
        codes[k] += 1;
        assigned += 1;
    }
    // A user left with power but no code cannot transmit.
    let rates = (0..instance.len())
        .map(|k| rate_at(k, codes[k]))
        .collect::<Result<Vec<_>>>()?;
    Ok((codes, rates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_link() -> LinkParams {
        LinkParams {
            chip_rate: 1.0,
            m_d: 1.0,
            theta: 0.0,
            sigma2: 1.0,
        }
    }

    fn reference_instance(weights: Vec<f64>, gains: Vec<f64>) -> WeightedInstance {
        let params = SystemParams::reference();
        WeightedInstance {
            weights,
            gains,
            p_rad: 10.5e-3,
            power_budget: 6.5e-3,
            n_max: 15.0,
            link: LinkParams::from_params(&params),
        }
    }

    fn random_instance(rng: &mut ChaCha8Rng, users: usize) -> WeightedInstance {
        let weights = (0..users).map(|_| rng.random_range(0.1..2.0)).collect();
        let gains = (0..users).map(|_| 10f64.powf(rng.random_range(-12.5..-10.5))).collect();
        let mut inst = reference_instance(weights, gains);
        inst.power_budget = rng.random_range(1e-3..8e-3);
        inst
    }

    /// Centered difference of `f` at `x` with relative step.
    fn derivative(f: impl Fn(f64) -> f64, x: f64, rel: f64) -> f64 {
        let h = rel * x.abs().max(1e-300);
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn rate_of_basics() {
        let link = unit_link();
        assert_eq!(rate_of(0.0, 3.0, 1.0, 0.0, &link).unwrap(), 0.0);
        assert_eq!(rate_of(0.0, 0.0, 1.0, 0.0, &link).unwrap(), 0.0);
        // unit per-code SNR → one bit per code-rate unit
        assert!((rate_of(1.0, 1.0, 1.0, 0.0, &link).unwrap() - 1.0).abs() < 1e-15);
        let r1 = rate_of(0.7, 2.0, 0.3, 0.0, &link).unwrap();
        let r2 = rate_of(1.4, 4.0, 0.3, 0.0, &link).unwrap();
        assert!((r2 - 2.0 * r1).abs() < 1e-14);
        assert!(matches!(
            rate_of(1.0, 0.0, 1.0, 0.0, &link),
            Err(Error::PowerWithoutCodes { .. })
        ));
    }

    #[test]
    fn closed_form_power_examples() {
        let link = unit_link();
        let inst = |h: f64| WeightedInstance {
            weights: vec![LN_2],
            gains: vec![h],
            p_rad: 0.0,
            power_budget: 1.0,
            n_max: 1.0,
            link,
        };
        assert_eq!(optimal_power_given_codes(&inst(1.0), &[1.0], 1.0).unwrap(), vec![0.0]);
        let p = optimal_power_given_codes(&inst(2.0), &[1.0], 1.0).unwrap()[0];
        assert!((p - 0.5).abs() < 1e-15);
        // ∂/∂p [w·rate] = β at the closed-form power
        let i2 = inst(2.0);
        let d = derivative(|p| LN_2 * rate_of(p, 1.0, 2.0, 0.0, &link).unwrap(), p, 1e-6);
        assert!((d - 1.0).abs() < 1e-8, "{d}");
        assert_eq!(optimal_power_given_codes(&i2, &[1.0], 1e300).unwrap(), vec![0.0]);
        assert!(matches!(
            optimal_power_given_codes(&i2, &[1.0], 0.0),
            Err(Error::BetaTooSmall { .. })
        ));
    }

    #[test]
    fn code_fixed_point_stationarity() {
        let inst = reference_instance(vec![1.3], vec![3e-12]);
        let power = [4e-3];
        // Choose φ as the code multiplier that makes 2 codes stationary, then
        // start far away.
        let link = inst.link;
        let h = inst.gains[0];
        let rate = |n: f64| rate_of(power[0], n, h, inst.p_rad, &link).unwrap();
        let phi = 1.3 * derivative(rate, 2.0, 1e-6);
        let fp = optimal_codes_fixed_point(&inst, &power, &[9.0], phi, 500, 1e-13);
        assert!(fp.converged, "{fp:?}");
        let n = fp.codes[0];
        let residual = (1.3 * derivative(rate, n, 1e-6) - phi) / phi;
        assert!(residual.abs() < 1e-6, "n = {n}, residual {residual}");
        assert!((n - 2.0).abs() < 1e-6);
    }

    #[test]
    fn code_fixed_point_zero_cases() {
        let inst = reference_instance(vec![1.0, 1.0, -1.0], vec![1e-11, 1e-11, 1e-11]);
        let fp = optimal_codes_fixed_point(&inst, &[0.0, 1e-3, 1e-3], &[1.0, 1.0, 1.0], 1e5, 200, 1e-12);
        assert_eq!(fp.codes[0], 0.0);
        assert!(fp.codes[1] > 0.0);
        assert_eq!(fp.codes[2], 0.0);
        let free = optimal_codes_fixed_point(&inst, &[0.0, 1e-3, 0.0], &[1.0, 1.0, 1.0], 0.0, 200, 1e-12);
        assert!(!free.converged);
    }

    #[test]
    fn code_fixed_point_symmetry() {
        let inst = reference_instance(vec![0.8, 0.8], vec![2e-12, 2e-12]);
        let fp = optimal_codes_fixed_point(&inst, &[2e-3, 2e-3], &[1.0, 5.0], 3e4, 2000, 1e-14);
        assert!(fp.converged);
        assert!((fp.codes[0] - fp.codes[1]).abs() <= 1e-9 * fp.codes[0]);
    }

    #[test]
    fn inner_dual_updates() {
        let inst = reference_instance(vec![1.0, 1.0], vec![1e-11, 1e-11]);
        let p_eq = [inst.power_budget / 2.0; 2];
        let n_eq = [inst.n_max / 2.0; 2];
        assert_eq!(update_inner_duals(2.0, 3.0, &p_eq, &n_eq, &inst, 4, 1.0), (2.0, 3.0));
        let over = [inst.power_budget; 2];
        let (b, _) = update_inner_duals(2.0, 3.0, &over, &n_eq, &inst, 4, 1.0);
        assert!(b > 2.0);
        let under = [0.0; 2];
        let (b, _) = update_inner_duals(0.0, 3.0, &under, &n_eq, &inst, 1, 1.0);
        assert_eq!(b, 0.0);
        // step length is Q/√q
        let (b, v) = update_inner_duals(5.0, 5.0, &over, &[inst.n_max; 2], &inst, 9, 1.0);
        assert!((((b - 5.0).powi(2) + (v - 5.0).powi(2)).sqrt() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_budget_and_zero_weights() {
        let mut inst = reference_instance(vec![1.0, 2.0], vec![1e-11, 2e-11]);
        inst.power_budget = 0.0;
        let a = solve_inner(&inst, &SolveOptions::default()).unwrap();
        assert_eq!(a, DataAllocation::zero(2));
        let inst = reference_instance(vec![0.0, -1.0], vec![1e-11, 2e-11]);
        let a = solve_inner(&inst, &SolveOptions::default()).unwrap();
        assert_eq!(a.objective, 0.0);
        assert!(a.powers.iter().chain(&a.codes).all(|v| *v == 0.0));
    }

    #[test]
    fn symmetric_users_share_equally() {
        for users in 1..=6 {
            let inst = reference_instance(vec![0.7; users], vec![3e-12; users]);
            let a = solve_inner(&inst, &SolveOptions::default()).unwrap();
            for k in 1..users {
                assert!((a.powers[k] - a.powers[0]).abs() <= 1e-12 * a.powers[0]);
                assert!((a.codes[k] - a.codes[0]).abs() <= 1e-12 * a.codes[0]);
                assert!((a.rates[k] - a.rates[0]).abs() <= 1e-12 * a.rates[0]);
            }
            assert!((a.total_power() / inst.power_budget - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_user_takes_everything() {
        let inst = reference_instance(vec![1.0], vec![2e-12]);
        let a = solve_inner(&inst, &SolveOptions::default()).unwrap();
        assert!((a.powers[0] - inst.power_budget).abs() < 1e-15);
        assert!((a.codes[0] - inst.n_max).abs() < 1e-12);
        let r = rate_of(inst.power_budget, inst.n_max, 2e-12, inst.p_rad, &inst.link).unwrap();
        assert!((a.rates[0] - r).abs() <= 1e-12 * r);
    }

    #[test]
    fn weight_scale_does_not_change_allocation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let inst = random_instance(&mut rng, 4);
            let mut scaled = inst.clone();
            scaled.weights.iter_mut().for_each(|w| *w *= 1e4);
            let a = solve_inner(&inst, &SolveOptions::default()).unwrap();
            let b = solve_inner(&scaled, &SolveOptions::default()).unwrap();
            for k in 0..4 {
                assert!((a.powers[k] - b.powers[k]).abs() <= 1e-9 * inst.power_budget);
                assert!((a.codes[k] - b.codes[k]).abs() <= 1e-9 * inst.n_max);
            }
        }
    }

    #[test]
    fn feasible_and_budget_tight_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..500 {
            let users = rng.random_range(1..=6);
            let mut inst = random_instance(&mut rng, users);
            // some nonpositive weights
            if users > 1 && rng.random_bool(0.3) {
                inst.weights[0] = -rng.random_range(0.0..1.0);
            }
            let a = solve_inner(&inst, &SolveOptions::default()).unwrap();
            assert!(a.converged);
            assert!(a.powers.iter().chain(&a.codes).all(|v| *v >= 0.0));
            assert!(a.total_power() <= inst.power_budget * (1.0 + 1e-6));
            assert!(a.total_codes() <= inst.n_max * (1.0 + 1e-6));
            assert!((a.total_power() / inst.power_budget - 1.0).abs() < 1e-3);
            for k in 0..users {
                if inst.weights[k] <= 0.0 {
                    assert_eq!((a.powers[k], a.codes[k]), (0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn rounding_assigns_integer_codes() {
        let inst = reference_instance(vec![1.0, 1.1, 0.9], vec![2e-12, 1.5e-12, 3e-12]);
        let a = solve_inner(&inst, &SolveOptions::default()).unwrap();
        let (codes, rates) = round_codes(&inst, &a).unwrap();
        assert_eq!(codes.iter().sum::<u32>(), 15);
        for k in 0..3 {
            assert_eq!(codes[k] == 0, rates[k] == 0.0);
            assert!(codes[k] as f64 >= a.codes[k].floor());
        }
    }
}
