//! Stochastic maximin scheduler.
//!
//! Each slot solves the weighted-rate problem with weights `λ_k − μ_k`, then
//! moves the multipliers along the instantaneous constraint violations:
//!
//! ```text
//! λ_k ← [λ_k + ε·(s* − r_k)]⁺     (r_k must keep up with the common target)
//! μ_k ← [μ_k + ε·(r_k − cap)]⁺    (long-run backhaul constraint)
//! ```
//!
//! with `s* = 1/Σλ` clipped to `[0, cap]` for logarithmic utility.
//! Multipliers are stored in units of `1/rate_unit`, so `ε` is applied to
//! rates measured in `rate_unit` (the per-user cap unless configured).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::energy::{
    energy_cap_g, overhead_energy, sample_harvest, slot_energy, traffic_budget_phi, update_battery, BatteryState,
};
use crate::inner::{solve_inner, DataAllocation, LinkParams, SolveOptions, WeightedInstance};
use crate::scenario::{ChannelSnapshot, FadingProcess, SystemParams, Utility};
use crate::voice::{admit_with_budget, VoiceAllocation};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl DualState {
    pub fn zeros(users: usize) -> Self {
        DualState {
            lambda: vec![0.0; users],
            mu: vec![0.0; users],
        }
    }

    /// `λ_k − μ_k`.
    pub fn weights(&self) -> Vec<f64> {
        self.lambda.iter().zip(&self.mu).map(|(l, m)| l - m).collect()
    }
}

/// Record of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotResult {
    pub slot: u64,
    pub voice: VoiceAllocation,
    pub data: DataAllocation,
    /// Data channel gains of the slot.
    pub data_gains: Vec<f64>,
    /// Weights handed to the data allocation.
    pub weights: Vec<f64>,
    /// An instantaneous rate cap changed the allocation (PF only).
    pub cap_binding: bool,
    /// Power available to data users after voice, W.
    pub data_budget: f64,
    /// Common target rate, bit/s; zero for schedulers without one.
    pub s_star: f64,
    /// bit/s
    pub rates: Vec<f64>,
    pub consumed: f64,
    pub harvested: f64,
    /// `g(B(t))` of the starting battery.
    pub energy_cap: f64,
    pub battery_before: f64,
    pub battery_after: f64,
    pub outage: bool,
    pub dropped_voice: Vec<usize>,
}

pub fn per_user_backhaul_cap(params: &SystemParams) -> Result<f64> {
    let spare = params.r_bh - params.r_bh_voice;
    if !(spare > 0.0) {
        return Err(Error::invalid("r_bh", params.r_bh, "no backhaul left for data users"));
    }
    Ok(params.per_user_cap())
}

/// `(U')⁻¹(Σλ)` clipped to `[0, cap]`; `Σλ = 0` maps to `cap`.
pub fn target_rate_s_star(duals: &DualState, cap: f64, utility: Utility) -> f64 {
    let total: f64 = duals.lambda.iter().sum();
    match utility {
        Utility::Log => {
            if total > 0.0 {
                (1.0 / total).clamp(0.0, cap)
            } else {
                cap
            }
        }
    }
}

pub fn update_duals(duals: &DualState, s_star: f64, rates: &[f64], cap: f64, epsilon: f64) -> Result<DualState> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} must be positive")));
    }
    if rates.len() != duals.lambda.len() {
        return Err(Error::InvalidArgument("rates and multipliers differ in length".into()));
    }
    Ok(DualState {
        lambda: duals
            .lambda
            .iter()
            .zip(rates)
            .map(|(l, r)| (l + epsilon * (s_star - r)).max(0.0))
            .collect(),
        mu: duals
            .mu
            .iter()
            .zip(rates)
            .map(|(m, r)| (m + epsilon * (r - cap)).max(0.0))
            .collect(),
    })
}

/// Channel, battery and voice state shared by every scheduler.
#[derive(Debug, Clone)]
pub struct SlotEnv {
    pub battery: BatteryState,
    pub fading: FadingProcess,
    /// Pins the battery at `B^max`, as if the site had grid power.
    pub grid_power: bool,
    channel_rng: ChaCha8Rng,
    harvest_rng: ChaCha8Rng,
    voice_cache: Option<VoiceAllocation>,
}

/// Quantities fixed at the start of a slot, before data allocation.
#[derive(Debug, Clone)]
pub(crate) struct SlotContext {
    pub slot: u64,
    pub snapshot: ChannelSnapshot,
    pub battery_before: f64,
    pub energy_cap: f64,
    pub outage: bool,
    pub voice: VoiceAllocation,
    pub data_budget: f64,
}

/// What a scheduler decided for the data users of one slot.
#[derive(Debug, Clone)]
pub(crate) struct DataOutcome {
    pub data: DataAllocation,
    pub weights: Vec<f64>,
    pub s_star: f64,
    pub cap_binding: bool,
}

impl SlotContext {
    pub fn instance(&self, weights: Vec<f64>, params: &SystemParams) -> WeightedInstance {
        WeightedInstance {
            weights,
            gains: self.snapshot.data_gains.clone(),
            p_rad: self.voice.p_rad,
            power_budget: self.data_budget,
            n_max: params.n_max,
            link: LinkParams::from_params(params),
        }
    }
}

impl SlotEnv {
    pub fn new(params: &SystemParams, seed: u64, grid_power: bool) -> Result<Self> {
        let mut channel_rng = ChaCha8Rng::seed_from_u64(seed);
        channel_rng.set_stream(0);
        let mut harvest_rng = ChaCha8Rng::seed_from_u64(seed);
        harvest_rng.set_stream(1);
        let fading = FadingProcess::from_params(params, &mut channel_rng)?;
        let level = if grid_power {
            params.b_max
        } else {
            params.initial_battery
        };
        Ok(SlotEnv {
            battery: BatteryState::new(level),
            fading,
            grid_power,
            channel_rng,
            harvest_rng,
            voice_cache: None,
        })
    }

    pub(crate) fn begin_slot(&mut self, params: &SystemParams) -> Result<SlotContext> {
        let slot = self.battery.slot;
        let snapshot = self.fading.sample_channels(&mut self.channel_rng);
        let energy_cap = energy_cap_g(&self.battery, params);
        let phi = traffic_budget_phi(&self.battery, params);
        let num_voice = snapshot.voice_gains.len();
        if phi < 0.0 {
            self.voice_cache = None;
            return Ok(SlotContext {
                slot,
                snapshot,
                battery_before: self.battery.level,
                energy_cap,
                outage: true,
                voice: VoiceAllocation {
                    powers: vec![0.0; num_voice],
                    served: Vec::new(),
                    p_rad: 0.0,
                    gamma_used: params.gamma,
                },
                data_budget: 0.0,
            });
        }

        let traffic_power = phi / params.slot_duration;
        let cached = self
            .voice_cache
            .take()
            .filter(|v| !slot.is_multiple_of(params.voice_period_slots) && v.total_power() <= traffic_power);
        let voice = match cached {
            Some(mut held) => {
                held.p_rad = traffic_power + params.p_cpich;
                held
            }
            None => admit_with_budget(&snapshot.voice_gains, phi, params, params.admission)?,
        };
        self.voice_cache = Some(voice.clone());
        let data_budget = (traffic_power - voice.total_power()).max(0.0);
        Ok(SlotContext {
            slot,
            snapshot,
            battery_before: self.battery.level,
            energy_cap,
            outage: false,
            voice,
            data_budget,
        })
    }

    pub(crate) fn finish_slot(
        &mut self,
        ctx: SlotContext,
        outcome: DataOutcome,
        params: &SystemParams,
    ) -> Result<SlotResult> {
        let DataOutcome {
            data,
            weights,
            s_star,
            cap_binding,
        } = outcome;
        let consumed = if ctx.outage {
            ctx.battery_before.min(overhead_energy(params))
        } else {
            let p_bs = ctx.voice.total_power() + data.total_power();
            let e = slot_energy(params.p_cpich, p_bs, params.p_fixed, params.slot_duration)?;
            assert!(
                e <= ctx.energy_cap * (1.0 + 1e-9),
                "slot {} draws {e} J above the cap {} J",
                ctx.slot,
                ctx.energy_cap
            );
            e.min(ctx.energy_cap)
        };
        let prob = params.harvest.prob_at(ctx.slot);
        let harvested = sample_harvest(prob, params.packet_energy, &mut self.harvest_rng)?.amount;
        self.battery = update_battery(&self.battery, consumed, harvested, params.b_max)?;
        if self.grid_power {
            self.battery.level = params.b_max;
        }
        let dropped_voice = if ctx.outage {
            (0..ctx.voice.powers.len()).collect()
        } else {
            ctx.voice.dropped()
        };
        Ok(SlotResult {
            slot: ctx.slot,
            rates: data.rates.clone(),
            data_gains: ctx.snapshot.data_gains,
            weights,
            cap_binding,
            voice: ctx.voice,
            data,
            data_budget: ctx.data_budget,
            s_star,
            consumed,
            harvested,
            energy_cap: ctx.energy_cap,
            battery_before: ctx.battery_before,
            battery_after: self.battery.level,
            outage: ctx.outage,
            dropped_voice,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SchedulerState {
    pub env: SlotEnv,
    pub duals: DualState,
}

impl SchedulerState {
    /// Cold start with `λ = μ = 0`.
    pub fn new(params: &SystemParams, seed: u64, grid_power: bool) -> Result<Self> {
        Ok(SchedulerState {
            env: SlotEnv::new(params, seed, grid_power)?,
            duals: DualState::zeros(params.num_data_users),
        })
    }
}

/// Runs one slot of the stochastic scheduler and advances `state`.
pub fn run_slot(state: &mut SchedulerState, params: &SystemParams) -> Result<SlotResult> {
    let ctx = state.env.begin_slot(params)?;
    let unit = params.multiplier_rate_unit();
    let cap = per_user_backhaul_cap(params)? / unit;
    let weights = state.duals.weights();
    let data = if ctx.outage {
        DataAllocation::zero(params.num_data_users)
    } else {
        solve_inner(&ctx.instance(weights.clone(), params), &SolveOptions::default())?
    };
    let s_star = target_rate_s_star(&state.duals, cap, params.utility);
    let scaled: Vec<f64> = data.rates.iter().map(|r| r / unit).collect();
    state.duals = update_duals(&state.duals, s_star, &scaled, cap, params.epsilon)?;
    let outcome = DataOutcome {
        data,
        weights,
        s_star: s_star * unit,
        cap_binding: false,
    };
    state.env.finish_slot(ctx, outcome, params)
}
