//! Physical constants (CODATA 2018) and nominal experiment parameters.

use std::f64::consts::PI;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Unified atomic mass unit, kg.
pub const AMU: f64 = 1.660_539_066_60e-27;

/// Mass of a ⁸⁷Rb atom, kg.
pub const RB87_MASS: f64 = 86.909 * AMU;

/// Rb D2 probe wavelength, m.
pub const PROBE_WAVELENGTH: f64 = 780.24e-9;

/// Loop sample period, s.
pub const SAMPLE_PERIOD: f64 = 1e-3;

/// Camera-to-actuator latency, s.
pub const LOOP_DELAY: f64 = 960e-6;

/// Camera pixel pitch, m.
pub const PIXEL_PITCH: f64 = 5.5e-6;

/// Heating per image, K. Recorded only; not coupled to the mode dynamics.
pub const HEATING_PER_IMAGE: f64 = 100e-12;

/// Nominal trap frequencies, Hz.
pub const F_X: f64 = 20.3;
pub const F_Y: f64 = 85.6;
pub const F_Z: f64 = 70.3;

/// Reported measurement-noise phonon biases for the x, z and w_x modes.
pub const PHONON_BIAS: [f64; 3] = [0.156, 0.046, 0.099];

/// Converts a frequency in Hz to an angular frequency in rad/s.
pub fn angular(f_hz: f64) -> f64 {
    2.0 * PI * f_hz
}

/// Quadrupole (width) mode frequency for a prolate trap, √(5/2)·ω_x.
pub fn quadrupole_frequency(omega_x: f64) -> f64 {
    (2.5f64).sqrt() * omega_x
}

pub const MICRON: f64 = 1e-6;
