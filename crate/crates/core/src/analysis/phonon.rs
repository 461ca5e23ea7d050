//! Phonon occupancy from position records, and the measurement-noise bias.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::PlantConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    X,
    Z,
    W,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::X, Mode::Z, Mode::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::X => "x",
            Mode::Z => "z",
            Mode::W => "w",
        }
    }

    /// The trap position enters the variance for the dipole modes only.
    pub fn subtracts_trap(self) -> bool {
        !matches!(self, Mode::W)
    }

    pub fn omega(self, cfg: &PlantConfig) -> f64 {
        cfg.mode_frequencies()[self.index()]
    }

    pub fn a_ho(self, cfg: &PlantConfig) -> f64 {
        cfg.trap.a_ho(self.omega(cfg))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhononEstimate {
    pub mode: Mode,
    pub n_meas: f64,
    pub n_true: f64,
    pub a_ho: f64,
    pub window: f64,
}

impl PhononEstimate {
    /// n_true clamped at zero for display.
    pub fn n_true_reported(&self) -> f64 {
        self.n_true.max(0.0)
    }
}

/// Samples in one oscillation period, rounded to the nearest whole number.
pub fn window_samples(omega: f64, tau: f64) -> usize {
    (2.0 * PI / (omega * tau)).round() as usize
}

/// Population variance.
fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// n = Var(r − r_trap)/(2a²) + Var(ṙ)/(2a²ω²) over the last oscillation
/// period of the record. `r_trap` is `None` for the width mode. Velocities
/// come from backward differences, so the record needs one sample more than
/// the window.
pub fn phonon_occupancy(r: &[f64], r_trap: Option<&[f64]>, omega: f64, tau: f64, a_ho: f64) -> Result<f64> {
    let n = window_samples(omega, tau);
    if n < 3 {
        return Err(Error::WindowTooShort(n));
    }
    if r.len() < n + 1 {
        return Err(Error::WindowTooShort(r.len().saturating_sub(1)));
    }
    if let Some(t) = r_trap {
        if t.len() != r.len() {
            return Err(Error::InvalidParameter(
                "trap record length differs from position record".into(),
            ));
        }
    }
    let start = r.len() - n;
    let rel: Vec<f64> = (start..r.len()).map(|i| r[i] - r_trap.map_or(0.0, |t| t[i])).collect();
    let vel: Vec<f64> = (start..r.len()).map(|i| (r[i] - r[i - 1]) / tau).collect();
    let a2 = 2.0 * a_ho * a_ho;
    Ok(variance(&rel) / a2 + variance(&vel) / (a2 * omega * omega))
}

/// Expected n_meas contributed by white position noise of std `sigma_r`.
pub fn bias(sigma_r: f64, omega: f64, tau: f64, a_ho: f64) -> f64 {
    sigma_r * sigma_r / (2.0 * a_ho * a_ho) * (1.0 + 2.0 / (omega * tau).powi(2))
}

pub fn bias_correct(n_meas: f64, sigma_r: f64, omega: f64, tau: f64, a_ho: f64) -> f64 {
    n_meas - bias(sigma_r, omega, tau, a_ho)
}

/// Noise level that produces a given bias.
pub fn implied_sigma(bias: f64, omega: f64, tau: f64, a_ho: f64) -> f64 {
    (bias * 2.0 * a_ho * a_ho / (1.0 + 2.0 / (omega * tau).powi(2))).sqrt()
}

/// Full estimate for one mode.
pub fn estimate(
    mode: Mode,
    cfg: &PlantConfig,
    r: &[f64],
    r_trap: Option<&[f64]>,
    sigma_r: f64,
    tau: f64,
) -> Result<PhononEstimate> {
    let omega = mode.omega(cfg);
    let a_ho = mode.a_ho(cfg);
    let trap = if mode.subtracts_trap() { r_trap } else { None };
    let n_meas = phonon_occupancy(r, trap, omega, tau, a_ho)?;
    Ok(PhononEstimate {
        mode,
        n_meas,
        n_true: bias_correct(n_meas, sigma_r, omega, tau, a_ho),
        a_ho,
        window: window_samples(omega, tau) as f64 * tau,
    })
}
