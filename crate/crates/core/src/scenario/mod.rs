//! System parameters, config loading and channel generation.

mod channel;
mod params;
pub mod units;

pub use channel::{path_loss_gain, ChannelSnapshot, FadingProcess};
pub use params::{
    load_params, AdmissionPolicy, HarvestPhase, HarvestProfile, PathLossModel, SystemParams, Utility, REFERENCE_CONFIG,
};
