//! Simulation driver, per-slot metrics, sweeps and chart output.

mod metrics;
pub mod svg;
mod sweep;

use std::fmt;
use std::str::FromStr;

pub use metrics::{jain_index, read_metrics_csv, MetricsLog, RunSummary, SlotRow};
pub use sweep::{load_sweep_spec, run_sweep, write_sweep_csv, SweepRow, SweepSpec, SweepVariable};

use crate::baselines::{solve_pf_slot, CapMode, PfSchedulerState};
use crate::scenario::SystemParams;
use crate::scheduler::{run_slot, DualState, SchedulerState, SlotResult};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchedulerKind {
    Stochastic,
    PfPerUser,
    PfSum,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] = [
        SchedulerKind::Stochastic,
        SchedulerKind::PfPerUser,
        SchedulerKind::PfSum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Stochastic => "stochastic",
            SchedulerKind::PfPerUser => "pf-per-user",
            SchedulerKind::PfSum => "pf-sum",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scheduler `{s}` (stochastic, pf-per-user, pf-sum)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub scheduler: SchedulerKind,
    pub num_slots: u64,
    pub seed: u64,
    /// Keep the battery full every slot.
    pub grid_power: bool,
}

enum Runner {
    Stochastic(SchedulerState),
    Pf(PfSchedulerState),
}

impl Runner {
    fn new(params: &SystemParams, options: &RunOptions) -> Result<Self> {
        let (seed, grid) = (options.seed, options.grid_power);
        Ok(match options.scheduler {
            SchedulerKind::Stochastic => Runner::Stochastic(SchedulerState::new(params, seed, grid)?),
            SchedulerKind::PfPerUser => Runner::Pf(PfSchedulerState::new(params, seed, grid, CapMode::PerUser)?),
            SchedulerKind::PfSum => Runner::Pf(PfSchedulerState::new(params, seed, grid, CapMode::Sum)?),
        })
    }

    fn step(&mut self, params: &SystemParams) -> Result<SlotResult> {
        match self {
            Runner::Stochastic(state) => run_slot(state, params),
            Runner::Pf(state) => solve_pf_slot(state, params),
        }
    }

    fn duals(&self) -> Option<&DualState> {
        match self {
            Runner::Stochastic(state) => Some(&state.duals),
            Runner::Pf(_) => None,
        }
    }
}

pub fn run_simulation(params: &SystemParams, options: &RunOptions) -> Result<MetricsLog> {
    run_simulation_observed(params, options, |_| {})
}

/// Like [`run_simulation`], handing every [`SlotResult`] to `observer`.
pub fn run_simulation_observed(
    params: &SystemParams,
    options: &RunOptions,
    mut observer: impl FnMut(&SlotResult),
) -> Result<MetricsLog> {
    if options.num_slots == 0 {
        return Err(Error::InvalidArgument("num_slots must be at least 1".into()));
    }
    params.validate()?;
    let mut runner = Runner::new(params, options)?;
    let mut log = MetricsLog::new(params.num_data_users, params.slot_duration);
    for _ in 0..options.num_slots {
        let result = runner.step(params)?;
        log.push(&result, runner.duals());
        observer(&result);
    }
    Ok(log)
}
