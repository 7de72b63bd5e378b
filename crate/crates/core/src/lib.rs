//! Stochastic maximin downlink scheduling for a WCDMA base station that runs
//! from a finite battery recharged by an energy-harvesting source, with an
//! average per-user backhaul-rate constraint.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`]: system parameters, config loading, channel generation.
//! * [`energy`]: battery dynamics, harvesting and the per-slot energy cap.
//! * [`voice`]: fixed-SINR voice powers, feasibility and admission control.
//! * [`inner`]: the per-slot weighted-rate power/code allocation.
//! * [`scheduler`]: stochastic multipliers and the per-slot orchestration.
//! * [`baselines`]: proportional-fair schedulers with instantaneous caps.
//! * [`oracle`]: brute-force and analytic checkers, used by tests only.
//! * [`harness`]: simulation driver, metrics, CSV/SVG output and sweeps.

pub mod baselines;
pub mod energy;
mod error;
pub mod harness;
pub mod inner;
pub mod oracle;
pub mod scenario;
pub mod scheduler;
pub mod voice;

pub use error::{Error, Result};
pub use harness::{run_simulation, MetricsLog, RunOptions, SchedulerKind};
pub use inner::{DataAllocation, LinkParams, SolveOptions, WeightedInstance};
pub use scenario::{ChannelSnapshot, FadingProcess, SystemParams};
pub use scheduler::{DualState, SlotResult};
pub use voice::VoiceAllocation;
