use std::collections::BTreeSet;

use toml::{Table, Value};

use super::units::{split_number_unit, to_si, Quantity};
use crate::{Error, Result};

/// How voice users are brought back to feasibility when the battery cannot
/// fund every target SINR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdmissionPolicy {
    /// Drop the user with the weakest channel until feasible.
    DropWorst,
    /// Shrink the SINR target by `factor` per step down to `floor`·Γ, then
    /// fall back to dropping users.
    ScaleGamma { factor: f64, floor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Utility {
    Log,
}

/// One phase of a piecewise harvesting schedule, active on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestPhase {
    pub start: u64,
    pub end: u64,
    pub prob: f64,
}

/// Probability `p(t)` of receiving an energy packet in slot `t`.
#[derive(Debug, Clone, PartialEq)]
pub enum HarvestProfile {
    Constant(f64),
    /// Phases tile `[0, period)` and repeat with that period.
    Schedule(Vec<HarvestPhase>),
}

impl HarvestProfile {
    pub fn prob_at(&self, slot: u64) -> f64 {
        match self {
            HarvestProfile::Constant(p) => *p,
            HarvestProfile::Schedule(phases) => {
                let period = phases.last().map_or(1, |ph| ph.end);
                let t = slot % period;
                phases
                    .iter()
                    .find(|ph| ph.start <= t && t < ph.end)
                    .map_or(0.0, |ph| ph.prob)
            }
        }
    }

    /// Parses `"0-1000:0.8, 1000-2000:0.1"`.
    fn parse_schedule(key: &str, text: &str) -> Result<Self> {
        let mut phases = Vec::new();
        for item in text.split([',', ';']).map(str::trim).filter(|s| !s.is_empty()) {
            let bad = || Error::invalid(key, item, "expected `start-end:prob`");
            let (range, prob) = item.split_once(':').ok_or_else(bad)?;
            let (start, end) = range.split_once('-').ok_or_else(bad)?;
            let phase = HarvestPhase {
                start: start.trim().parse().map_err(|_| bad())?,
                end: end.trim().parse().map_err(|_| bad())?,
                prob: prob.trim().parse().map_err(|_| bad())?,
            };
            let expected_start = phases.last().map_or(0, |p: &HarvestPhase| p.end);
            if phase.start != expected_start || phase.end <= phase.start {
                return Err(Error::invalid(key, item, "phases must tile [0, period) in order"));
            }
            if !(0.0..=1.0).contains(&phase.prob) {
                return Err(Error::invalid(key, phase.prob, "probability out of [0,1]"));
            }
            phases.push(phase);
        }
        if phases.is_empty() {
            return Err(Error::invalid(key, text, "empty schedule"));
        }
        Ok(HarvestProfile::Schedule(phases))
    }
}

/// Log-distance path loss, `PL(d) = PL0 + 10·n·log10(d/d0)` in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossModel {
    pub exponent: f64,
    pub ref_loss_db: f64,
    pub ref_distance: f64,
}

/// All physical and protocol constants, in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub num_voice_users: usize,
    pub num_data_users: usize,
    /// Maximum traffic power of the amplifier, W.
    pub p_bs_max: f64,
    /// Pilot power, W.
    pub p_cpich: f64,
    /// Fixed electronics consumption, W.
    pub p_fixed: f64,
    /// Codes available to data users.
    pub n_max: f64,
    /// Downlink orthogonality factor.
    pub theta: f64,
    pub m_v: f64,
    pub m_d: f64,
    /// Voice target SINR, linear.
    pub gamma: f64,
    /// Noise power, W.
    pub sigma2: f64,
    /// Chip rate, Hz.
    pub chip_rate: f64,
    pub b_max: f64,
    pub packet_energy: f64,
    pub alpha: f64,
    pub slot_duration: f64,
    /// Total backhaul capacity, bit/s.
    pub r_bh: f64,
    /// Backhaul consumed by the voice users, bit/s.
    pub r_bh_voice: f64,
    /// Backhaul overhead factor of data traffic.
    pub xi: f64,
    /// Step size of the stochastic multipliers.
    pub epsilon: f64,
    /// Rate unit (bit/s) in which the multipliers and `epsilon` are
    /// expressed; the per-user backhaul cap when unset.
    pub rate_unit: Option<f64>,
    pub harvest: HarvestProfile,
    pub utility: Utility,
    pub fading_correlation: f64,
    pub seed: u64,
    pub path_loss: PathLossModel,
    pub voice_distances: Vec<f64>,
    pub data_distances: Vec<f64>,
    pub admission: AdmissionPolicy,
    /// Voice powers are recomputed every this many slots.
    pub voice_period_slots: u64,
    /// Effective window length of the PF throughput average.
    pub pf_window: f64,
    pub initial_battery: f64,
    /// Fraction of trailing slots used for converged statistics.
    pub burn_in_fraction: f64,
}

impl SystemParams {
    /// The reference deployment: 3 voice and 6 data users, 2 Mbps backhaul.
    pub fn reference() -> Self {
        load_params(REFERENCE_CONFIG).expect("reference config is valid")
    }

    /// `(R_BH − Ř_BH)/(ξ·|K_D|)`; positive for validated parameters.
    pub fn per_user_cap(&self) -> f64 {
        (self.r_bh - self.r_bh_voice) / (self.xi * self.num_data_users as f64)
    }

    pub fn multiplier_rate_unit(&self) -> f64 {
        self.rate_unit.unwrap_or_else(|| self.per_user_cap())
    }

    pub fn total_users(&self) -> usize {
        self.num_voice_users + self.num_data_users
    }

    /// Checks every cross-field invariant; `load_params` calls this.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("p_bs_max", self.p_bs_max),
            ("p_cpich", self.p_cpich),
            ("p_fixed", self.p_fixed),
            ("n_max", self.n_max),
            ("m_v", self.m_v),
            ("m_d", self.m_d),
            ("gamma", self.gamma),
            ("sigma2", self.sigma2),
            ("chip_rate", self.chip_rate),
            ("b_max", self.b_max),
            ("packet_energy", self.packet_energy),
            ("slot_duration", self.slot_duration),
            ("r_bh", self.r_bh),
            ("epsilon", self.epsilon),
            ("pf_window", self.pf_window),
            ("ref_distance", self.path_loss.ref_distance),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(key, v, "must be strictly positive"));
            }
        }
        if let Some(u) = self.rate_unit {
            if !(u.is_finite() && u > 0.0) {
                return Err(Error::invalid("rate_unit", u, "must be strictly positive"));
            }
        }
        if !(self.r_bh_voice.is_finite() && self.r_bh_voice >= 0.0) {
            return Err(Error::invalid("r_bh_voice", self.r_bh_voice, "must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha", self.alpha, "alpha out of [0,1]"));
        }
        if !(self.xi >= 1.0) {
            return Err(Error::invalid("xi", self.xi, "xi must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::invalid("theta", self.theta, "theta out of [0,1]"));
        }
        if !(0.0..1.0).contains(&self.fading_correlation) {
            return Err(Error::invalid(
                "fading_correlation",
                self.fading_correlation,
                "out of [0,1)",
            ));
        }
        if self.r_bh <= self.r_bh_voice {
            return Err(Error::invalid(
                "r_bh",
                self.r_bh,
                format!(
                    "must exceed r_bh_voice ({}) to leave backhaul for data",
                    self.r_bh_voice
                ),
            ));
        }
        if self.m_v <= self.num_voice_users as f64 * self.theta * self.gamma {
            return Err(Error::invalid(
                "m_v",
                self.m_v,
                "must exceed num_voice_users * theta * gamma",
            ));
        }
        if self.num_data_users == 0 {
            return Err(Error::invalid(
                "num_data_users",
                0,
                "at least one data user is required",
            ));
        }
        if self.voice_distances.len() != self.num_voice_users {
            return Err(Error::invalid(
                "voice_distances",
                self.voice_distances.len(),
                format!("expected {} entries", self.num_voice_users),
            ));
        }
        if self.data_distances.len() != self.num_data_users {
            return Err(Error::invalid(
                "data_distances",
                self.data_distances.len(),
                format!("expected {} entries", self.num_data_users),
            ));
        }
        for (key, list) in [
            ("voice_distances", &self.voice_distances),
            ("data_distances", &self.data_distances),
        ] {
            if let Some(d) = list.iter().find(|&&d| !(d >= self.path_loss.ref_distance)) {
                return Err(Error::invalid(key, d, "distance below ref_distance"));
            }
        }
        if !self.path_loss.exponent.is_finite() || self.path_loss.exponent < 0.0 {
            return Err(Error::invalid(
                "path_loss_exponent",
                self.path_loss.exponent,
                "must be >= 0",
            ));
        }
        if let HarvestProfile::Constant(p) = self.harvest {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid("harvest_prob", p, "probability out of [0,1]"));
            }
        }
        if let AdmissionPolicy::ScaleGamma { factor, floor } = self.admission {
            if !(factor > 0.0 && factor < 1.0) {
                return Err(Error::invalid("gamma_scale_factor", factor, "must be in (0,1)"));
            }
            if !(floor > 0.0 && floor <= 1.0) {
                return Err(Error::invalid("gamma_floor", floor, "must be in (0,1]"));
            }
        }
        if self.voice_period_slots == 0 {
            return Err(Error::invalid("voice_period_slots", 0, "must be >= 1"));
        }
        if !(self.pf_window > 1.0) {
            return Err(Error::invalid("pf_window", self.pf_window, "must be > 1"));
        }
        if !(0.0..=self.b_max).contains(&self.initial_battery) {
            return Err(Error::invalid(
                "initial_battery",
                self.initial_battery,
                "out of [0, b_max]",
            ));
        }
        if !(self.burn_in_fraction > 0.0 && self.burn_in_fraction <= 1.0) {
            return Err(Error::invalid(
                "burn_in_fraction",
                self.burn_in_fraction,
                "must be in (0,1]",
            ));
        }
        Ok(())
    }
}

/// The reference deployment as a config document.
pub const REFERENCE_CONFIG: &str = include_str!("reference.toml");

const KNOWN_KEYS: &[&str] = &[
    "num_voice_users",
    "num_data_users",
    "p_bs_max",
    "p_cpich",
    "p_fixed",
    "n_max",
    "theta",
    "m_v",
    "m_d",
    "gamma",
    "gamma_over_m_v",
    "sigma2",
    "chip_rate",
    "b_max",
    "packet_energy",
    "alpha",
    "slot_duration",
    "r_bh",
    "r_bh_voice",
    "xi",
    "epsilon",
    "rate_unit",
    "harvest_prob",
    "harvest_schedule",
    "utility",
    "fading_correlation",
    "seed",
    "path_loss_exponent",
    "ref_loss",
    "ref_distance",
    "voice_distances",
    "data_distances",
    "admission_policy",
    "gamma_scale_factor",
    "gamma_floor",
    "voice_period_slots",
    "pf_window",
    "initial_battery",
    "burn_in_fraction",
];

struct Doc {
    table: Table,
    used: BTreeSet<String>,
}

impl Doc {
    fn get(&mut self, key: &str) -> Option<&Value> {
        self.used.insert(key.to_string());
        self.table.get(key)
    }

    fn has(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    fn quantity(&mut self, key: &str, q: Quantity) -> Result<f64> {
        match self.opt_quantity(key, q)? {
            Some(v) => Ok(v),
            None => Err(Error::MissingKey(key.to_string())),
        }
    }

    fn opt_quantity(&mut self, key: &str, q: Quantity) -> Result<Option<f64>> {
        let Some(value) = self.get(key).cloned() else {
            return Ok(None);
        };
        value_to_si(key, &value, q).map(Some)
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        match self.get(key) {
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
            Some(v) => Err(Error::invalid(key, v, "expected a nonnegative integer")),
            None => Err(Error::MissingKey(key.to_string())),
        }
    }

    fn opt_string(&mut self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(Error::invalid(key, v, "expected a string")),
            None => Ok(None),
        }
    }

    fn distances(&mut self, key: &str, expected: usize) -> Result<Vec<f64>> {
        let Some(value) = self.get(key).cloned() else {
            return if expected == 0 {
                Ok(Vec::new())
            } else {
                Err(Error::MissingKey(key.to_string()))
            };
        };
        let Value::Array(items) = value else {
            return Err(Error::invalid(key, value, "expected an array of distances"));
        };
        items.iter().map(|v| value_to_si(key, v, Quantity::Distance)).collect()
    }
}

fn value_to_si(key: &str, value: &Value, q: Quantity) -> Result<f64> {
    match value {
        Value::Integer(i) => Ok(*i as f64),
        Value::Float(f) => Ok(*f),
        Value::String(s) => {
            let (num, unit) = split_number_unit(key, s)?;
            if q == Quantity::Dimensionless && !unit.is_empty() {
                return Err(Error::UnknownUnit {
                    key: key.to_string(),
                    unit,
                });
            }
            to_si(key, num, &unit, q)
        }
        other => Err(Error::invalid(key, other, "expected a number or `<number> <unit>`")),
    }
}

/// Parses a flat key-value (TOML) document into validated [`SystemParams`].
pub fn load_params(config_text: &str) -> Result<SystemParams> {
    use Quantity::*;
    let table: Table = config_text
        .parse()
        .map_err(|e: toml::de::Error| Error::ConfigSyntax(e.to_string()))?;
    if let Some(key) = table.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(Error::UnknownKey(key.clone()));
    }
    let mut doc = Doc {
        table,
        used: BTreeSet::new(),
    };

    let num_voice_users = doc.count("num_voice_users")?;
    let num_data_users = doc.count("num_data_users")?;
    let m_v = doc.quantity("m_v", Dimensionless)?;
    let gamma = match (doc.has("gamma"), doc.has("gamma_over_m_v")) {
        (true, false) => doc.quantity("gamma", Ratio)?,
        (false, true) => m_v * doc.quantity("gamma_over_m_v", Ratio)?,
        (true, true) => return Err(Error::invalid("gamma", "both", "give either gamma or gamma_over_m_v")),
        (false, false) => return Err(Error::MissingKey("gamma".into())),
    };
    let harvest = match (doc.has("harvest_prob"), doc.has("harvest_schedule")) {
        (true, false) => HarvestProfile::Constant(doc.quantity("harvest_prob", Dimensionless)?),
        (false, true) => {
            let text = doc.opt_string("harvest_schedule")?.unwrap_or_default();
            HarvestProfile::parse_schedule("harvest_schedule", &text)?
        }
        (true, true) => {
            return Err(Error::invalid(
                "harvest_prob",
                "both",
                "give either harvest_prob or harvest_schedule",
            ))
        }
        (false, false) => return Err(Error::MissingKey("harvest_prob".into())),
    };
    let utility = match doc.opt_string("utility")?.as_deref() {
        None | Some("log") => Utility::Log,
        Some(other) => return Err(Error::invalid("utility", other, "only `log` is supported")),
    };
    let admission = match doc.opt_string("admission_policy")?.as_deref() {
        None | Some("drop_worst") => AdmissionPolicy::DropWorst,
        Some("scale_gamma") => AdmissionPolicy::ScaleGamma {
            factor: doc.opt_quantity("gamma_scale_factor", Dimensionless)?.unwrap_or(0.9),
            floor: doc.opt_quantity("gamma_floor", Dimensionless)?.unwrap_or(0.25),
        },
        Some(other) => {
            return Err(Error::invalid(
                "admission_policy",
                other,
                "expected `drop_worst` or `scale_gamma`",
            ))
        }
    };
    let seed = match doc.get("seed") {
        None => 0,
        Some(Value::Integer(i)) if *i >= 0 => *i as u64,
        Some(v) => return Err(Error::invalid("seed", v, "expected a nonnegative integer")),
    };
    let voice_period_slots = match doc.get("voice_period_slots") {
        None => 1,
        Some(Value::Integer(i)) if *i >= 1 => *i as u64,
        Some(v) => return Err(Error::invalid("voice_period_slots", v, "expected an integer >= 1")),
    };
    let b_max = doc.quantity("b_max", Energy)?;

    let params = SystemParams {
        num_voice_users,
        num_data_users,
        p_bs_max: doc.quantity("p_bs_max", Power)?,
        p_cpich: doc.quantity("p_cpich", Power)?,
        p_fixed: doc.quantity("p_fixed", Power)?,
        n_max: doc.quantity("n_max", Dimensionless)?,
        theta: doc.quantity("theta", Dimensionless)?,
        m_v,
        m_d: doc.quantity("m_d", Dimensionless)?,
        gamma,
        sigma2: doc.quantity("sigma2", Power)?,
        chip_rate: doc.quantity("chip_rate", Rate)?,
        b_max,
        packet_energy: doc.quantity("packet_energy", Energy)?,
        alpha: doc.quantity("alpha", Dimensionless)?,
        slot_duration: doc.quantity("slot_duration", Time)?,
        r_bh: doc.quantity("r_bh", Rate)?,
        r_bh_voice: doc.quantity("r_bh_voice", Rate)?,
        xi: doc.quantity("xi", Dimensionless)?,
        epsilon: doc.quantity("epsilon", Dimensionless)?,
        rate_unit: doc.opt_quantity("rate_unit", Rate)?,
        harvest,
        utility,
        fading_correlation: doc.opt_quantity("fading_correlation", Dimensionless)?.unwrap_or(0.0),
        seed,
        path_loss: PathLossModel {
            exponent: doc.quantity("path_loss_exponent", Dimensionless)?,
            ref_loss_db: doc.quantity("ref_loss", Decibels)?,
            ref_distance: doc.quantity("ref_distance", Distance)?,
        },
        voice_distances: doc.distances("voice_distances", num_voice_users)?,
        data_distances: doc.distances("data_distances", num_data_users)?,
        admission,
        voice_period_slots,
        pf_window: doc.opt_quantity("pf_window", Dimensionless)?.unwrap_or(500.0),
        initial_battery: doc.opt_quantity("initial_battery", Energy)?.unwrap_or(b_max),
        burn_in_fraction: doc.opt_quantity("burn_in_fraction", Dimensionless)?.unwrap_or(0.1),
    };
    // Tuning keys of scale_gamma are errors under any other policy.
    for key in ["gamma_scale_factor", "gamma_floor"] {
        if doc.has(key) && !doc.used.contains(key) {
            return Err(Error::invalid(
                key,
                "set",
                "only valid with admission_policy = \"scale_gamma\"",
            ));
        }
    }
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with(key: &str, value: &str) -> String {
        let mut out = String::new();
        let mut replaced = false;
        for line in REFERENCE_CONFIG.lines() {
            if line.split('=').next().map(str::trim) == Some(key) {
                out.push_str(&format!("{key} = {value}\n"));
                replaced = true;
            } else {
                out.push_str(line);
                out.push('\n');
            }
        }
        if !replaced {
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    #[test]
    fn reference_config_loads_in_si() {
        let p = SystemParams::reference();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs();
        assert!(close(p.p_bs_max, 10f64.powf(-2.1)));
        assert!(close(p.p_cpich, 10f64.powf(-2.6)));
        assert!(close(p.p_fixed, 10f64.powf(-2.7)));
        assert_eq!(p.n_max, 15.0);
        assert_eq!(p.theta, 0.35);
        assert_eq!(p.m_d, 16.0);
        assert!(close(p.gamma / p.m_v, 10f64.powf(-1.37)));
        assert!(close(p.sigma2, 10f64.powf(-13.2)));
        assert!(close(p.b_max, 410e-6));
        assert!(close(p.packet_energy, 30e-6));
        assert_eq!(p.alpha, 0.3);
        assert!(close(p.slot_duration, 2e-3));
        assert!(close(p.r_bh, 2e6));
        assert!(close(p.r_bh_voice, 173e3));
        assert_eq!(p.xi, 1.2);
        assert_eq!(p.epsilon, 1e-3);
        assert_eq!(p.num_voice_users, 3);
        assert_eq!(p.num_data_users, 6);
    }

    #[test]
    fn pilot_at_zero_dbm_is_one_milliwatt() {
        let p = load_params(&with("p_cpich", "\"0 dBm\"")).unwrap();
        assert!((p.p_cpich - 1.0e-3).abs() < 1e-18);
    }

    #[test]
    fn alpha_above_one_is_rejected() {
        let err = load_params(&with("alpha", "1.2")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("alpha out of [0,1]"), "{msg}");
    }

    #[test]
    fn missing_and_unknown_keys() {
        let text: String = REFERENCE_CONFIG
            .lines()
            .filter(|l| !l.starts_with("xi"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(load_params(&text), Err(Error::MissingKey(k)) if k == "xi"));
        let text = format!("{REFERENCE_CONFIG}\nbogus = 1\n");
        assert!(matches!(load_params(&text), Err(Error::UnknownKey(k)) if k == "bogus"));
    }

    #[test]
    fn unknown_unit_is_rejected() {
        let err = load_params(&with("slot_duration", "\"2 fortnights\"")).unwrap_err();
        assert!(matches!(err, Error::UnknownUnit { .. }), "{err}");
    }

    #[test]
    fn backhaul_must_leave_room_for_data() {
        let err = load_params(&with("r_bh", "\"173 Kbps\"")).unwrap_err();
        assert!(matches!(err, Error::InvalidValue { ref key, .. } if key == "r_bh"));
    }

    #[test]
    fn voice_spreading_factor_must_dominate() {
        // With gamma given directly, m_v = 1 cannot exceed 3 * 0.35 * 5.
        let text = with("m_v", "1").replace("gamma_over_m_v = \"-13.7 dB\"", "gamma = 5.0");
        let err = load_params(&text).unwrap_err();
        assert!(
            matches!(err, Error::InvalidValue { ref key, .. } if key == "m_v"),
            "{err}"
        );
    }

    #[test]
    fn harvest_schedule_repeats() {
        let text =
            with("harvest_prob", "0.5").replace("harvest_prob = 0.5", "harvest_schedule = \"0-10:0.9, 10-30:0.1\"");
        let p = load_params(&text).unwrap();
        assert_eq!(p.harvest.prob_at(0), 0.9);
        assert_eq!(p.harvest.prob_at(9), 0.9);
        assert_eq!(p.harvest.prob_at(10), 0.1);
        assert_eq!(p.harvest.prob_at(30), 0.9);
        assert!(load_params(&text.replace("10-30", "12-30")).is_err());
    }
}
