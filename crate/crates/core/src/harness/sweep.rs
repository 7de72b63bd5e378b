use std::io::Write;

use rayon::prelude::*;
use toml::{Table, Value};

use super::{run_simulation, RunOptions, SchedulerKind};
use crate::scenario::units::{split_number_unit, to_si, Quantity};
use crate::scenario::{HarvestProfile, SystemParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    RBh,
    HarvestProb,
    Alpha,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::RBh => "r_bh",
            SweepVariable::HarvestProb => "harvest_prob",
            SweepVariable::Alpha => "alpha",
        }
    }

    fn quantity(self) -> Quantity {
        match self {
            SweepVariable::RBh => Quantity::Rate,
            _ => Quantity::Dimensionless,
        }
    }

    /// Copy of `params` with this variable set to `value` (SI).
    pub fn apply(self, params: &SystemParams, value: f64) -> Result<SystemParams> {
        let mut p = params.clone();
        match self {
            SweepVariable::RBh => p.r_bh = value,
            SweepVariable::HarvestProb => p.harvest = HarvestProfile::Constant(value),
            SweepVariable::Alpha => p.alpha = value,
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    /// SI units.
    pub values: Vec<f64>,
    pub slots: u64,
    pub schedulers: Vec<SchedulerKind>,
    pub grid_power: bool,
    /// Config file for the base parameters, relative to the spec file.
    pub config: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub scheduler: SchedulerKind,
    pub sum_avg_rate: f64,
    pub min_avg_rate: f64,
    pub jain: f64,
    /// `(R_BH − Ř_BH)/ξ`, bit/s.
    pub available_backhaul: f64,
}

/// Parses a sweep spec:
///
/// ```toml
/// variable = "r_bh"
/// values = ["500 Kbps", "1 Mbps", "2 Mbps"]
/// slots = 20000
/// schedulers = ["stochastic", "pf-per-user"]
/// grid_power = true
/// ```
pub fn load_sweep_spec(text: &str) -> Result<SweepSpec> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::ConfigSyntax(e.to_string()))?;
    const KEYS: [&str; 6] = ["variable", "values", "slots", "schedulers", "grid_power", "config"];
    if let Some(key) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(Error::UnknownKey(key.clone()));
    }
    let get = |key: &str| table.get(key).ok_or_else(|| Error::MissingKey(key.to_string()));
    let variable = match get("variable")?.as_str() {
        Some("r_bh") => SweepVariable::RBh,
        Some("harvest_prob") => SweepVariable::HarvestProb,
        Some("alpha") => SweepVariable::Alpha,
        _ => {
            return Err(Error::invalid(
                "variable",
                get("variable")?,
                "expected r_bh, harvest_prob or alpha",
            ))
        }
    };
    let Value::Array(raw) = get("values")? else {
        return Err(Error::invalid("values", get("values")?, "expected an array"));
    };
    let values = raw
        .iter()
        .map(|v| match v {
            Value::Integer(i) => Ok(*i as f64),
            Value::Float(f) => Ok(*f),
            Value::String(s) => {
                let (num, unit) = split_number_unit("values", s)?;
                to_si("values", num, &unit, variable.quantity())
            }
            other => Err(Error::invalid(
                "values",
                other,
                "expected a number or `<number> <unit>`",
            )),
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::invalid("values", "[]", "at least one value is required"));
    }
    let slots = match get("slots")? {
        Value::Integer(i) if *i > 0 => *i as u64,
        other => return Err(Error::invalid("slots", other, "expected a positive integer")),
    };
    let schedulers = match table.get("schedulers") {
        None => vec![SchedulerKind::Stochastic],
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .ok_or_else(|| Error::invalid("schedulers", v, "expected scheduler names"))?
                    .parse()
            })
            .collect::<Result<Vec<_>>>()?,
        Some(other) => return Err(Error::invalid("schedulers", other, "expected an array")),
    };
    if schedulers.is_empty() {
        return Err(Error::invalid("schedulers", "[]", "at least one scheduler is required"));
    }
    let grid_power = match table.get("grid_power") {
        None => false,
        Some(Value::Boolean(b)) => *b,
        Some(other) => return Err(Error::invalid("grid_power", other, "expected true or false")),
    };
    let config = match table.get("config") {
        None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(other) => return Err(Error::invalid("config", other, "expected a path")),
    };
    Ok(SweepSpec {
        variable,
        values,
        slots,
        schedulers,
        grid_power,
        config,
    })
}

/// Runs every (value, scheduler) point in parallel; rows keep spec order.
pub fn run_sweep(spec: &SweepSpec, params: &SystemParams, seed: u64) -> Result<Vec<SweepRow>> {
    let points: Vec<(f64, SchedulerKind)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.schedulers.iter().map(move |&s| (v, s)))
        .collect();
    points
        .par_iter()
        .map(|&(value, scheduler)| {
            let p = spec.variable.apply(params, value)?;
            let options = RunOptions {
                scheduler,
                num_slots: spec.slots,
                seed,
                grid_power: spec.grid_power,
            };
            let summary = run_simulation(&p, &options)?.summary(p.burn_in_fraction)?;
            Ok(SweepRow {
                value,
                scheduler,
                sum_avg_rate: summary.sum_avg_rate,
                min_avg_rate: summary.min_avg_rate,
                jain: summary.jain,
                available_backhaul: (p.r_bh - p.r_bh_voice) / p.xi,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(variable: SweepVariable, rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        variable.name(),
        "scheduler",
        "sum_avg_rate",
        "min_avg_rate",
        "jain",
        "available_backhaul",
    ])?;
    for r in rows {
        w.write_record([
            r.value.to_string(),
            r.scheduler.name().to_string(),
            r.sum_avg_rate.to_string(),
            r.min_avg_rate.to_string(),
            r.jain.to_string(),
            r.available_backhaul.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
