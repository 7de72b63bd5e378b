use rand::Rng;
use rand_distr::StandardNormal;

use super::params::{PathLossModel, SystemParams};
use crate::{Error, Result};

/// Linear power gain of the log-distance model at `distance` metres.
pub fn path_loss_gain(distance: f64, exponent: f64, ref_loss_db: f64, ref_distance: f64) -> Result<f64> {
    if !(ref_distance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ref_distance must be positive, got {ref_distance}"
        )));
    }
    if !(distance >= ref_distance) {
        return Err(Error::InvalidArgument(format!(
            "distance {distance} m is below the reference distance {ref_distance} m"
        )));
    }
    let loss_db = ref_loss_db + 10.0 * exponent * (distance / ref_distance).log10();
    Ok(10f64.powf(-loss_db / 10.0))
}

impl PathLossModel {
    pub fn gain(&self, distance: f64) -> Result<f64> {
        path_loss_gain(distance, self.exponent, self.ref_loss_db, self.ref_distance)
    }
}

/// Channel power gains of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSnapshot {
    pub slot: u64,
    pub voice_gains: Vec<f64>,
    pub data_gains: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Envelope {
    re: f64,
    im: f64,
}

impl Envelope {
    /// Circular complex Gaussian with unit variance.
    fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        Envelope {
            re: scale * rng.sample::<f64, _>(StandardNormal),
            im: scale * rng.sample::<f64, _>(StandardNormal),
        }
    }

    fn power(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

/// First-order autoregressive Rayleigh fading on top of static path loss.
///
/// Users are indexed voice first, then data. Each envelope follows
/// `g(t) = ρ·g(t−1) + sqrt(1−ρ²)·w(t)` and starts from its stationary
/// distribution, so `E|g|² = 1` at every slot.
#[derive(Debug, Clone)]
pub struct FadingProcess {
    rho: f64,
    innovation: f64,
    path_gains: Vec<f64>,
    num_voice: usize,
    state: Vec<Envelope>,
    slot: u64,
}

impl FadingProcess {
    /// `rho` may be 1 here (frozen fading); configs restrict it to `[0, 1)`.
    pub fn new<R: Rng + ?Sized>(
        voice_path_gains: &[f64],
        data_path_gains: &[f64],
        rho: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!("fading correlation {rho} out of [0,1]")));
        }
        let path_gains: Vec<f64> = voice_path_gains.iter().chain(data_path_gains).copied().collect();
        if let Some(g) = path_gains.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::InvalidArgument(format!("path gain {g} must be positive")));
        }
        let state = path_gains.iter().map(|_| Envelope::draw(rng)).collect();
        Ok(FadingProcess {
            rho,
            innovation: (1.0 - rho * rho).max(0.0).sqrt(),
            path_gains,
            num_voice: voice_path_gains.len(),
            state,
            slot: 0,
        })
    }

    pub fn from_params<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R) -> Result<Self> {
        let gains = |d: &[f64]| d.iter().map(|&d| params.path_loss.gain(d)).collect::<Result<Vec<_>>>();
        let voice = gains(&params.voice_distances)?;
        let data = gains(&params.data_distances)?;
        Self::new(&voice, &data, params.fading_correlation, rng)
    }

    pub fn path_gains(&self) -> &[f64] {
        &self.path_gains
    }

    /// Emits the gains for the current slot and advances the envelopes.
    pub fn sample_channels<R: Rng + ?Sized>(&mut self, rng: &mut R) -> ChannelSnapshot {
        let gains: Vec<f64> = self
            .state
            .iter()
            .zip(&self.path_gains)
            .map(|(g, pl)| (pl * g.power()).max(f64::MIN_POSITIVE))
            .collect();
        for g in &mut self.state {
            let w = Envelope::draw(rng);
            g.re = self.rho * g.re + self.innovation * w.re;
            g.im = self.rho * g.im + self.innovation * w.im;
        }
        let voice_gains = gains[..self.num_voice].to_vec();
        let data_gains = gains[self.num_voice..].to_vec();
        let snapshot = ChannelSnapshot {
            slot: self.slot,
            voice_gains,
            data_gains,
        };
        self.slot += 1;
        snapshot
    }

    /// Fading envelope of user `index` (voice first), for diagnostics.
    pub fn envelope(&self, index: usize) -> (f64, f64) {
        let g = self.state[index];
        (g.re, g.im)
    }
}
