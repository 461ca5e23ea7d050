//! Ballistic time-of-flight expansion of a harmonic mode.

use rand::Rng;

/// Position variance after release for a mode of mean energy `energy`
/// shared equally between kinetic and potential terms.
pub fn tof_variance(energy: f64, omega: f64, t_tof: f64, mass: f64) -> f64 {
    energy / (mass * omega * omega) * (1.0 + (omega * t_tof).powi(2))
}

/// Free flight from position `r` with velocity `v`.
pub fn release(r: f64, v: f64, t_tof: f64) -> f64 {
    r + v * t_tof
}

/// Released positions of oscillators of fixed energy with uniformly random
/// phase.
pub fn random_phase_ensemble<R: Rng>(
    energy: f64,
    omega: f64,
    t_tof: f64,
    mass: f64,
    count: usize,
    rng: &mut R,
) -> Vec<f64> {
    let amp = (2.0 * energy / (mass * omega * omega)).sqrt();
    (0..count)
        .map(|_| {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let (s, c) = theta.sin_cos();
            release(amp * c, -amp * omega * s, t_tof)
        })
        .collect()
}
