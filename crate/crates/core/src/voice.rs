//! Fixed-SINR voice users: transmit powers, feasibility and admission.
//!
//! With the radiated power fixed at `P_RAD = φ(B)/T_s + P_CPICH`, each voice
//! user meets its target with equality at
//! `p̌ = Γ·(θ·P_RAD·h + σ²)/(M_V·h)`, and the set is feasible iff
//! `Σ 1/h ≤ κ₁·φ(B) − κ₂`.

use crate::energy::{traffic_budget_phi, BatteryState};
use crate::scenario::{AdmissionPolicy, SystemParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VoiceAllocation {
    /// One entry per configured voice user; zero for dropped users.
    pub powers: Vec<f64>,
    /// Indices of admitted users, ascending.
    pub served: Vec<usize>,
    pub p_rad: f64,
    pub gamma_used: f64,
}

impl VoiceAllocation {
    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }

    pub fn dropped(&self) -> Vec<usize> {
        (0..self.powers.len()).filter(|k| !self.served.contains(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feasibility {
    Feasible,
    /// `deficit = Σ1/h − (κ₁·φ − κ₂) > 0`.
    Infeasible {
        deficit: f64,
    },
}

impl Feasibility {
    pub fn is_feasible(self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

pub fn radiated_power_star(phi_budget: f64, slot_duration: f64, p_cpich: f64) -> Result<f64> {
    if !(phi_budget >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "traffic budget {phi_budget} J is negative (outage slot)"
        )));
    }
    Ok(phi_budget / slot_duration + p_cpich)
}

pub fn voice_power(h: f64, p_rad: f64, params: &SystemParams) -> Result<f64> {
    voice_power_with_gamma(h, p_rad, params.gamma, params)
}

fn voice_power_with_gamma(h: f64, p_rad: f64, gamma: f64, params: &SystemParams) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "voice channel gain {h} must be positive"
        )));
    }
    Ok(gamma * (params.theta * p_rad * h + params.sigma2) / (params.m_v * h))
}

/// `κ₁ = (M_V − |K|θΓ)/(σ²T_sΓ)` and `κ₂ = |K|θP_CPICH/σ²` for `users` voice users.
pub fn kappas(users: usize, gamma: f64, params: &SystemParams) -> (f64, f64) {
    let k = users as f64;
    let kappa1 = (params.m_v - k * params.theta * gamma) / (params.sigma2 * params.slot_duration * gamma);
    let kappa2 = k * params.theta * params.p_cpich / params.sigma2;
    (kappa1, kappa2)
}

fn feasibility_with(gains: &[f64], phi: f64, gamma: f64, params: &SystemParams) -> Feasibility {
    let (kappa1, kappa2) = kappas(gains.len(), gamma, params);
    let inverse_sum: f64 = gains.iter().map(|h| 1.0 / h).sum();
    let deficit = inverse_sum - (kappa1 * phi - kappa2);
    if deficit <= 0.0 {
        Feasibility::Feasible
    } else {
        Feasibility::Infeasible { deficit }
    }
}

pub fn feasibility_check(voice_gains: &[f64], battery: &BatteryState, params: &SystemParams) -> Feasibility {
    let phi = traffic_budget_phi(battery, params);
    feasibility_with(voice_gains, phi, params.gamma, params)
}

/// Admits voice users until the remaining set is feasible.
///
/// `phi` must be nonnegative; outage slots never reach this point.
pub fn admit_voice(
    voice_gains: &[f64],
    battery: &BatteryState,
    params: &SystemParams,
    policy: AdmissionPolicy,
) -> Result<VoiceAllocation> {
    let phi = traffic_budget_phi(battery, params);
    admit_with_budget(voice_gains, phi, params, policy)
}

pub(crate) fn admit_with_budget(
    voice_gains: &[f64],
    phi: f64,
    params: &SystemParams,
    policy: AdmissionPolicy,
) -> Result<VoiceAllocation> {
    let p_rad = radiated_power_star(phi, params.slot_duration, params.p_cpich)?;
    let mut gamma = params.gamma;
    if let AdmissionPolicy::ScaleGamma { factor, floor } = policy {
        let floor_gamma = floor * params.gamma;
        while !feasibility_with(voice_gains, phi, gamma, params).is_feasible() {
            let next = gamma * factor;
            if next < floor_gamma {
                gamma = params.gamma;
                break;
            }
            gamma = next;
        }
    }

    // Weakest channel first; ties broken by index.
    let mut order: Vec<usize> = (0..voice_gains.len()).collect();
    order.sort_by(|&a, &b| voice_gains[a].total_cmp(&voice_gains[b]).then(a.cmp(&b)));
    let mut first_kept = 0;
    loop {
        let kept: Vec<f64> = order[first_kept..].iter().map(|&k| voice_gains[k]).collect();
        if feasibility_with(&kept, phi, gamma, params).is_feasible() {
            break;
        }
        first_kept += 1;
    }

    let mut served: Vec<usize> = order[first_kept..].to_vec();
    served.sort_unstable();
    let mut powers = vec![0.0; voice_gains.len()];
    for &k in &served {
        powers[k] = voice_power_with_gamma(voice_gains[k], p_rad, gamma, params)?;
    }
    Ok(VoiceAllocation {
        powers,
        served,
        p_rad,
        gamma_used: gamma,
    })
}
