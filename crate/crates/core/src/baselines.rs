//! Proportional-fair baselines with instantaneous backhaul caps.
//!
//! Each slot maximises `Σ ω_k·r_k` with `ω_k = 1/T_k`, where `T_k` is an
//! exponentially averaged throughput, subject to the same power and code
//! constraints as the stochastic scheduler plus either a per-user cap
//! `r_k ≤ (R_BH − Ř_BH)/(ξ·|K_D|)` or a sum cap `Σ r_k ≤ (R_BH − Ř_BH)/ξ`.
//! Caps enter through rate multipliers `η`, giving effective weights
//! `ω_k − η_k` for the inner solver.

use crate::inner::{solve_inner, supergradient_step, DataAllocation, SolveOptions, WeightedInstance};
use crate::scenario::SystemParams;
use crate::scheduler::{per_user_backhaul_cap, DataOutcome, SlotEnv, SlotResult};
use crate::{Error, Result};

/// Throughput floor in bit/s that keeps cold-start weights finite.
pub const T_FLOOR: f64 = 1.0;

const CAP_ITERATIONS: usize = 30;
const CAP_STEP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PfState {
    /// bit/s
    pub avg_throughput: Vec<f64>,
    pub window: f64,
}

impl PfState {
    pub fn new(users: usize, window: f64) -> Result<Self> {
        if !(window > 1.0) {
            return Err(Error::InvalidArgument(format!("PF window {window} must exceed 1")));
        }
        Ok(PfState {
            avg_throughput: vec![0.0; users],
            window,
        })
    }
}

pub fn pf_weights(state: &PfState) -> Vec<f64> {
    state.avg_throughput.iter().map(|t| 1.0 / t.max(T_FLOOR)).collect()
}

pub fn pf_update(state: &PfState, rates: &[f64]) -> Result<PfState> {
    if rates.len() != state.avg_throughput.len() || rates.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::InvalidArgument(
            "PF update needs one nonnegative rate per user".into(),
        ));
    }
    let keep = 1.0 - 1.0 / state.window;
    Ok(PfState {
        avg_throughput: state
            .avg_throughput
            .iter()
            .zip(rates)
            .map(|(t, r)| keep * t + r / state.window)
            .collect(),
        window: state.window,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapMode {
    PerUser,
    Sum,
}

impl CapMode {
    /// Cap in bit/s for the configured backhaul.
    pub fn cap(self, params: &SystemParams) -> Result<f64> {
        let per_user = per_user_backhaul_cap(params)?;
        Ok(match self {
            CapMode::PerUser => per_user,
            CapMode::Sum => per_user * params.num_data_users as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CappedAllocation {
    pub allocation: DataAllocation,
    /// Whether the cap changed the allocation.
    pub binding: bool,
}

fn with_weights(instance: &WeightedInstance, weights: Vec<f64>) -> WeightedInstance {
    WeightedInstance {
        weights,
        ..instance.clone()
    }
}

/// Scales user `k`'s power and codes by `factor`; rates follow exactly.
fn scale_user(alloc: &mut DataAllocation, k: usize, factor: f64) {
    alloc.powers[k] *= factor;
    alloc.codes[k] *= factor;
    alloc.rates[k] *= factor;
}

fn weighted(weights: &[f64], rates: &[f64]) -> f64 {
    weights.iter().zip(rates).map(|(w, r)| w * r).sum()
}

/// Maximises `Σ ω_k r_k` under the instance's resources and a rate cap.
pub fn solve_capped(instance: &WeightedInstance, mode: CapMode, cap: f64) -> Result<CappedAllocation> {
    let options = SolveOptions::default();
    let base = solve_inner(instance, &options)?;
    let mut allocation = match mode {
        CapMode::Sum if base.rates.iter().sum::<f64>() > cap => sum_capped(instance, base, cap, &options)?,
        CapMode::PerUser if base.rates.iter().any(|&r| r > cap) => per_user_capped(instance, base, cap, &options)?,
        _ => {
            return Ok(CappedAllocation {
                allocation: base,
                binding: false,
            })
        }
    };
    allocation.objective = weighted(&instance.weights, &allocation.rates);
    Ok(CappedAllocation {
        allocation,
        binding: true,
    })
}

/// Bisects the scalar multiplier `η` of the sum cap, then mixes the two
/// allocations around the crossing so the cap is met.
fn sum_capped(
    instance: &WeightedInstance,
    base: DataAllocation,
    cap: f64,
    options: &SolveOptions,
) -> Result<DataAllocation> {
    let total = |a: &DataAllocation| a.rates.iter().sum::<f64>();
    let shifted = |eta: f64| {
        let weights = instance.weights.iter().map(|w| w - eta).collect();
        solve_inner(&with_weights(instance, weights), options)
    };
    let (mut lo, mut hi) = (0.0, instance.weights.iter().copied().fold(0.0, f64::max));
    let mut over = base;
    let mut under = DataAllocation::zero(instance.len());
    let mut iterations = 0;
    while hi - lo > 1e-12 * hi && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        let a = shifted(mid)?;
        if total(&a) > cap {
            lo = mid;
            over = a;
        } else {
            hi = mid;
            under = a;
        }
        iterations += 1;
    }

    let mix = |theta: f64| -> Result<DataAllocation> {
        let blend = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(a, b)| theta * a + (1.0 - theta) * b).collect()
        };
        let powers = blend(&over.powers, &under.powers);
        let codes = blend(&over.codes, &under.codes);
        let rates = instance.rates(&powers, &codes)?;
        Ok(DataAllocation {
            powers,
            codes,
            rates,
            beta: under.beta,
            varphi: under.varphi,
            objective: 0.0,
            iterations,
            converged: over.converged && under.converged,
        })
    };
    let (mut t_lo, mut t_hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (t_lo + t_hi);
        if total(&mix(mid)?) > cap {
            t_hi = mid;
        } else {
            t_lo = mid;
        }
    }
    let mut result = mix(t_lo)?;
    let sum = total(&result);
    if sum > cap {
        let factor = cap / sum;
        (0..instance.len()).for_each(|k| scale_user(&mut result, k, factor));
    }
    Ok(result)
}

/// Scales every over-cap user down to exactly the cap.
fn clip_to_cap(mut alloc: DataAllocation, cap: f64) -> DataAllocation {
    for k in 0..alloc.rates.len() {
        if alloc.rates[k] > cap {
            let factor = cap / alloc.rates[k];
            scale_user(&mut alloc, k, factor);
        }
    }
    alloc
}

/// Projected supergradient on per-user multipliers `η_k = z_k·ω_k`,
/// keeping the best clipped iterate, followed by [`redistribute`].
fn per_user_capped(
    instance: &WeightedInstance,
    base: DataAllocation,
    cap: f64,
    options: &SolveOptions,
) -> Result<DataAllocation> {
    let omega = &instance.weights;
    let mut best = clip_to_cap(base, cap);
    let mut best_value = weighted(omega, &best.rates);
    let mut z = vec![0.0; instance.len()];
    for q in 1..=CAP_ITERATIONS {
        let weights = omega.iter().zip(&z).map(|(w, zk)| w * (1.0 - zk)).collect();
        let a = solve_inner(&with_weights(instance, weights), options)?;
        let violation: Vec<f64> = a.rates.iter().map(|r| (r - cap) / cap).collect();
        let candidate = clip_to_cap(a, cap);
        let value = weighted(omega, &candidate.rates);
        if value > best_value {
            best_value = value;
            best = candidate;
        }
        let step = supergradient_step(&violation, q, CAP_STEP);
        for (zk, s) in z.iter_mut().zip(step) {
            *zk = (*zk + s).clamp(0.0, 1.0);
        }
    }
    redistribute(instance, best, cap, options)
}

/// Holds capped users fixed and re-solves the others with what is left,
/// until no further user reaches the cap.
fn redistribute(
    instance: &WeightedInstance,
    mut alloc: DataAllocation,
    cap: f64,
    options: &SolveOptions,
) -> Result<DataAllocation> {
    let omega = &instance.weights;
    for _ in 0..instance.len() {
        let capped: Vec<bool> = alloc.rates.iter().map(|&r| r >= cap * (1.0 - 1e-9)).collect();
        let used_p: f64 = (0..instance.len())
            .filter(|&k| capped[k])
            .map(|k| alloc.powers[k])
            .sum();
        let used_n: f64 = (0..instance.len()).filter(|&k| capped[k]).map(|k| alloc.codes[k]).sum();
        let left_p = instance.power_budget - used_p;
        let left_n = instance.n_max - used_n;
        if left_p <= 0.0 || left_n <= 1e-12 * instance.n_max || capped.iter().all(|&c| c) {
            break;
        }
        let weights = (0..instance.len())
            .map(|k| if capped[k] { 0.0 } else { omega[k] })
            .collect();
        let sub = WeightedInstance {
            weights,
            power_budget: left_p,
            n_max: left_n,
            ..instance.clone()
        };
        let free = solve_inner(&sub, options)?;
        let mut next = alloc.clone();
        for k in (0..instance.len()).filter(|&k| !capped[k]) {
            next.powers[k] = free.powers[k];
            next.codes[k] = free.codes[k];
            next.rates[k] = free.rates[k];
        }
        next.beta = free.beta;
        next.varphi = free.varphi;
        let next = clip_to_cap(next, cap);
        let newly_capped = (0..instance.len()).any(|k| !capped[k] && next.rates[k] >= cap * (1.0 - 1e-9));
        if weighted(omega, &next.rates) >= weighted(omega, &alloc.rates) {
            alloc = next;
        }
        if !newly_capped {
            break;
        }
    }
    Ok(alloc)
}

#[derive(Debug, Clone)]
pub struct PfSchedulerState {
    pub env: SlotEnv,
    pub pf: PfState,
    pub mode: CapMode,
}

impl PfSchedulerState {
    pub fn new(params: &SystemParams, seed: u64, grid_power: bool, mode: CapMode) -> Result<Self> {
        Ok(PfSchedulerState {
            env: SlotEnv::new(params, seed, grid_power)?,
            pf: PfState::new(params.num_data_users, params.pf_window)?,
            mode,
        })
    }
}

/// Runs one PF slot: same voice and energy handling as the stochastic
/// scheduler, PF weights and an instantaneous cap for data.
pub fn solve_pf_slot(state: &mut PfSchedulerState, params: &SystemParams) -> Result<SlotResult> {
    let ctx = state.env.begin_slot(params)?;
    let weights = pf_weights(&state.pf);
    let (data, cap_binding) = if ctx.outage {
        (DataAllocation::zero(params.num_data_users), false)
    } else {
        let instance = ctx.instance(weights.clone(), params);
        let capped = solve_capped(&instance, state.mode, state.mode.cap(params)?)?;
        (capped.allocation, capped.binding)
    };
    state.pf = pf_update(&state.pf, &data.rates)?;
    let outcome = DataOutcome {
        data,
        weights,
        s_star: 0.0,
        cap_binding,
    };
    state.env.finish_slot(ctx, outcome, params)
}
