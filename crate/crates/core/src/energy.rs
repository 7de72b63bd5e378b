//! Battery dynamics, Bernoulli energy harvesting and per-slot energy budgets.
//!
//! Energy drawn in slot `t` is capped by
//! `g(B) = min{T_s·(P_CPICH + P_BS^max + P_c), α·B}`; whatever is left after
//! the pilot and the electronics, `φ(B) = g(B) − T_s·(P_CPICH + P_c)`, is the
//! traffic budget. Harvested energy only becomes usable in the next slot.

use rand::Rng;

use crate::scenario::SystemParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    /// Stored energy at the start of `slot`, J.
    pub level: f64,
    pub slot: u64,
}

impl BatteryState {
    pub fn new(level: f64) -> Self {
        BatteryState { level, slot: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestSample {
    /// Either 0 or one energy packet, J.
    pub amount: f64,
}

pub fn sample_harvest<R: Rng + ?Sized>(prob: f64, packet_energy: f64, rng: &mut R) -> Result<HarvestSample> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::InvalidArgument(format!(
            "harvest probability {prob} out of [0,1]"
        )));
    }
    // Always draw, so the stream position does not depend on `prob`.
    let u: f64 = rng.random();
    let amount = if u < prob { packet_energy } else { 0.0 };
    Ok(HarvestSample { amount })
}

/// `E = T_s·(P_CPICH + P_BS + P_c)`.
pub fn slot_energy(p_cpich: f64, p_bs: f64, p_fixed: f64, slot_duration: f64) -> Result<f64> {
    if [p_cpich, p_bs, p_fixed, slot_duration].iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "slot energy inputs must be nonnegative: ({p_cpich}, {p_bs}, {p_fixed}, {slot_duration})"
        )));
    }
    Ok(slot_duration * (p_cpich + p_bs + p_fixed))
}

pub fn energy_cap_g(battery: &BatteryState, params: &SystemParams) -> f64 {
    let hardware = params.slot_duration * (params.p_cpich + params.p_bs_max + params.p_fixed);
    hardware.min(params.alpha * battery.level)
}

/// Energy available to traffic channels; negative when the battery cannot
/// even fund the pilot and the electronics.
pub fn traffic_budget_phi(battery: &BatteryState, params: &SystemParams) -> f64 {
    energy_cap_g(battery, params) - overhead_energy(params)
}

/// Pilot plus electronics energy per slot.
pub fn overhead_energy(params: &SystemParams) -> f64 {
    params.slot_duration * (params.p_cpich + params.p_fixed)
}

pub fn update_battery(battery: &BatteryState, consumed: f64, harvested: f64, b_max: f64) -> Result<BatteryState> {
    if !(consumed >= 0.0 && harvested >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "consumed ({consumed}) and harvested ({harvested}) energy must be nonnegative"
        )));
    }
    Ok(BatteryState {
        level: (battery.level - consumed + harvested).clamp(0.0, b_max),
        slot: battery.slot + 1,
    })
}

/// `p·e/α`, the stationary mean battery when neither the amplifier limit
/// nor overflow ever binds; a lower bound otherwise.
pub fn expected_battery_lower_bound(prob: f64, packet_energy: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} must be in (0,1]")));
    }
    Ok(prob * packet_energy / alpha)
}
