//! Collective-mode plant: the x and z dipole modes and the x-width
//! (quadrupole) mode, each a harmonic oscillator about an equilibrium set by
//! the instantaneous trap parameters.

mod delay;

pub use delay::DelayLine;

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::constants::{angular, quadrupole_frequency, F_X, F_Y, F_Z, HBAR, MICRON, RB87_MASS};
use crate::error::{Error, Result};

/// Harmonic trap parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    /// Angular trap frequencies, rad/s.
    pub omega_x: f64,
    /// Inferred only; never actuated and unused by the dynamics.
    pub omega_y: f64,
    pub omega_z: f64,
    /// Equilibrium trap center, m.
    pub x_trap0: f64,
    pub z_trap0: f64,
    pub atom_mass: f64,
    pub hbar: f64,
}

impl Default for TrapConfig {
    fn default() -> Self {
        Self {
            omega_x: angular(F_X),
            omega_y: angular(F_Y),
            omega_z: angular(F_Z),
            x_trap0: 0.0,
            z_trap0: 0.0,
            atom_mass: RB87_MASS,
            hbar: HBAR,
        }
    }
}

impl TrapConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("omega_x", self.omega_x),
            ("omega_y", self.omega_y),
            ("omega_z", self.omega_z),
        ] {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "trap frequency {name} must be positive, got {w}"
                )));
            }
        }
        if !(self.atom_mass > 0.0 && self.hbar > 0.0) {
            return Err(Error::InvalidParameter("atom mass and hbar must be positive".into()));
        }
        Ok(())
    }

    /// Quadrupole frequency √(5/2)·ω_x.
    pub fn omega_q(&self) -> f64 {
        quadrupole_frequency(self.omega_x)
    }

    /// Harmonic oscillator length √(ħ/mω).
    pub fn a_ho(&self, omega: f64) -> f64 {
        (self.hbar / (self.atom_mass * omega)).sqrt()
    }
}

/// The four actuator voltages (V_x, V_z, V_64, V_90).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuatorVector {
    pub v_x: f64,
    pub v_z: f64,
    pub v_64: f64,
    pub v_90: f64,
}

impl ActuatorVector {
    pub const ZERO: Self = Self {
        v_x: 0.0,
        v_z: 0.0,
        v_64: 0.0,
        v_90: 0.0,
    };

    pub fn new(v_x: f64, v_z: f64, v_64: f64, v_90: f64) -> Self {
        Self { v_x, v_z, v_64, v_90 }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.v_x, self.v_z, self.v_64, self.v_90]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Symmetric clamp to ±`limit` volts on every channel.
    pub fn clamp(self, limit: f64) -> Self {
        Self::from_array(self.to_array().map(|v| v.clamp(-limit, limit)))
    }
}

/// Changes of the trap parameters (Δx_trap, Δz_trap, Δω_x²).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SignalVector {
    /// m
    pub dx_trap: f64,
    /// m
    pub dz_trap: f64,
    /// (rad/s)²
    pub domega_x_sq: f64,
}

impl SignalVector {
    pub const ZERO: Self = Self {
        dx_trap: 0.0,
        dz_trap: 0.0,
        domega_x_sq: 0.0,
    };

    pub fn new(dx_trap: f64, dz_trap: f64, domega_x_sq: f64) -> Self {
        Self {
            dx_trap,
            dz_trap,
            domega_x_sq,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.dx_trap, self.dz_trap, self.domega_x_sq]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl Add for SignalVector {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(
            self.dx_trap + o.dx_trap,
            self.dz_trap + o.dz_trap,
            self.domega_x_sq + o.domega_x_sq,
        )
    }
}

impl Sub for SignalVector {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Neg for SignalVector {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl Mul<f64> for SignalVector {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.dx_trap * k, self.dz_trap * k, self.domega_x_sq * k)
    }
}

/// Open-loop transfer matrix G (3×4) from actuator volts to trap-parameter
/// changes, stored in SI units: m/V for the position rows, (rad/s)²/V for
/// the ω_x² row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix(pub [[f64; 4]; 3]);

impl TransferMatrix {
    pub fn nominal() -> Self {
        let w64 = angular(26.7).powi(2);
        let w90 = angular(19.9).powi(2);
        Self([
            [-14.4 * MICRON, 0.0, 0.0, 0.0],
            [0.0, -1.83 * MICRON, 33.0 * MICRON, 77.0 * MICRON],
            [0.0, 0.0, w64, w90],
        ])
    }

    pub fn apply(&self, u: &ActuatorVector) -> SignalVector {
        actuator_to_signal(u, self)
    }

    /// Entry-wise multiplicative perturbation, used to model actuator drift.
    pub fn perturbed(&self, factors: &[[f64; 4]; 3]) -> Self {
        let mut g = self.0;
        for (row, frow) in g.iter_mut().zip(factors) {
            for (v, f) in row.iter_mut().zip(frow) {
                *v *= f;
            }
        }
        Self(g)
    }
}

impl Default for TransferMatrix {
    fn default() -> Self {
        Self::nominal()
    }
}

/// s = G·u.
pub fn actuator_to_signal(u: &ActuatorVector, g: &TransferMatrix) -> SignalVector {
    let u = u.to_array();
    let row = |r: &[f64; 4]| r.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
    SignalVector::from_array([row(&g.0[0]), row(&g.0[1]), row(&g.0[2])])
}

/// Plant parameters beyond the bare trap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub trap: TrapConfig,
    /// Thomas-Fermi half-width in x at the nominal trap, m.
    pub width_eq0: f64,
    /// Amplitude damping rate of the width mode, 1/s.
    pub width_damping: f64,
    /// Sign of each actuator-derived signal channel in simulator coordinates.
    /// The transfer matrix is quoted in the lab's actuator frame; these signs
    /// orient it against the simulator's x, z and width axes.
    pub orientation: [f64; 3],
}

/// Vertical Thomas-Fermi radius of the nominal condensate, m.
pub const NOMINAL_RADIUS_Z: f64 = 5.0 * MICRON;

impl Default for PlantConfig {
    fn default() -> Self {
        let trap = TrapConfig::default();
        Self {
            trap,
            width_eq0: NOMINAL_RADIUS_Z * trap.omega_z / trap.omega_x,
            width_damping: 0.0,
            orientation: [-1.0, -1.0, -1.0],
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        self.trap.validate()?;
        if !(self.width_eq0 > 0.0) {
            return Err(Error::InvalidParameter("width_eq0 must be positive".into()));
        }
        if !(self.width_damping >= 0.0 && self.width_damping < self.trap.omega_q()) {
            return Err(Error::InvalidParameter(format!(
                "width damping {} must lie in [0, omega_q)",
                self.width_damping
            )));
        }
        Ok(())
    }

    /// Mode frequencies (ω_x, ω_z, ω_q).
    pub fn mode_frequencies(&self) -> [f64; 3] {
        [self.trap.omega_x, self.trap.omega_z, self.trap.omega_q()]
    }

    /// Maps an actuator-derived signal into simulator coordinates.
    pub fn orient(&self, s: SignalVector) -> SignalVector {
        let o = self.orientation;
        SignalVector::new(s.dx_trap * o[0], s.dz_trap * o[1], s.domega_x_sq * o[2])
    }

    /// Equilibrium (x, z, w) under trap offsets `s`. The width follows the
    /// linearized Thomas-Fermi scaling R_x ∝ 1/ω_x at fixed chemical
    /// potential.
    pub fn equilibrium(&self, s: &SignalVector) -> [f64; 3] {
        let wx2 = self.trap.omega_x * self.trap.omega_x;
        [
            self.trap.x_trap0 + s.dx_trap,
            self.trap.z_trap0 + s.dz_trap,
            self.width_eq0 * (1.0 - s.domega_x_sq / (2.0 * wx2)),
        ]
    }
}

/// Mode coordinates and velocities together with the trap offsets in force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub x: f64,
    pub z: f64,
    /// Thomas-Fermi half-width in x; strictly positive.
    pub w: f64,
    pub vx: f64,
    pub vz: f64,
    pub vw: f64,
    pub trap: SignalVector,
    pub t: f64,
}

impl PlantState {
    /// All modes at rest at the equilibrium of the unperturbed trap.
    pub fn at_rest(cfg: &PlantConfig) -> Self {
        let [x, z, w] = cfg.equilibrium(&SignalVector::ZERO);
        Self {
            x,
            z,
            w,
            vx: 0.0,
            vz: 0.0,
            vw: 0.0,
            trap: SignalVector::ZERO,
            t: 0.0,
        }
    }

    pub fn positions(&self) -> [f64; 3] {
        [self.x, self.z, self.w]
    }

    pub fn velocities(&self) -> [f64; 3] {
        [self.vx, self.vz, self.vw]
    }

    /// E_i = ½mω_i²(r_i − r_eq)² + ½mṙ_i² about the equilibrium of the trap
    /// currently in force.
    pub fn mode_energies(&self, cfg: &PlantConfig) -> [f64; 3] {
        let eq = cfg.equilibrium(&self.trap);
        let omegas = cfg.mode_frequencies();
        let m = cfg.trap.atom_mass;
        let r = self.positions();
        let v = self.velocities();
        std::array::from_fn(|i| {
            let d = r[i] - eq[i];
            0.5 * m * (omegas[i] * omegas[i] * d * d + v[i] * v[i])
        })
    }
}

/// Exact propagation of a (possibly damped) oscillator displacement `d` and
/// velocity `v` over `dt`. Requires `gamma < omega`.
fn propagate(d: f64, v: f64, omega: f64, gamma: f64, dt: f64) -> (f64, f64) {
    if gamma == 0.0 {
        let (s, c) = (omega * dt).sin_cos();
        (d * c + v / omega * s, -d * omega * s + v * c)
    } else {
        let wd = (omega * omega - gamma * gamma).sqrt();
        let (s, c) = (wd * dt).sin_cos();
        let e = (-gamma * dt).exp();
        (
            e * (d * c + (v + gamma * d) / wd * s),
            e * (v * c - (omega * omega * d + gamma * v) / wd * s),
        )
    }
}

/// Advances every mode by `dt` with trap offsets `s` held constant.
pub fn step(cfg: &PlantConfig, state: &PlantState, s: SignalVector, dt: f64) -> Result<PlantState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidTimeStep(dt));
    }
    let eq = cfg.equilibrium(&s);
    let [wx, wz, wq] = cfg.mode_frequencies();
    let (dx, vx) = propagate(state.x - eq[0], state.vx, wx, 0.0, dt);
    let (dz, vz) = propagate(state.z - eq[1], state.vz, wz, 0.0, dt);
    let (dw, vw) = propagate(state.w - eq[2], state.vw, wq, cfg.width_damping, dt);
    Ok(PlantState {
        x: eq[0] + dx,
        z: eq[1] + dz,
        w: eq[2] + dw,
        vx,
        vz,
        vw,
        trap: s,
        t: state.t + dt,
    })
}

/// Sudden change of the trap offsets; the atoms do not move during the kick.
pub fn dipole_kick(state: &PlantState, kick: SignalVector) -> PlantState {
    PlantState {
        trap: state.trap + kick,
        ..*state
    }
}

/// Result of a sinusoidal quadrupole drive.
#[derive(Debug, Clone)]
pub struct DriveRecord {
    pub final_state: PlantState,
    /// State after each step, starting with the initial state.
    pub trajectory: Vec<PlantState>,
}

/// Modulates ω_x² as `amplitude`·sin(`drive_freq`·t) on top of the trap
/// offsets already in force, for `n_periods` drive periods in steps of at
/// most `dt`. Each step holds the drive at its midpoint value.
pub fn quadrupole_drive(
    cfg: &PlantConfig,
    state: &PlantState,
    amplitude: f64,
    drive_freq: f64,
    n_periods: u32,
    dt: f64,
) -> Result<DriveRecord> {
    if n_periods == 0 {
        return Err(Error::InvalidParameter("n_periods must be at least 1".into()));
    }
    if !(drive_freq > 0.0) {
        return Err(Error::InvalidParameter("drive frequency must be positive".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidTimeStep(dt));
    }
    let duration = n_periods as f64 * std::f64::consts::TAU / drive_freq;
    let n_steps = (duration / dt).ceil() as usize;
    let h = duration / n_steps as f64;
    let base = state.trap;
    let mut cur = *state;
    let mut trajectory = Vec::with_capacity(n_steps + 1);
    trajectory.push(cur);
    for k in 0..n_steps {
        let tm = (k as f64 + 0.5) * h;
        let s = base + SignalVector::new(0.0, 0.0, amplitude * (drive_freq * tm).sin());
        cur = step(cfg, &cur, s, h)?;
        trajectory.push(cur);
    }
    cur.trap = base;
    if let Some(last) = trajectory.last_mut() {
        last.trap = base;
    }
    Ok(DriveRecord {
        final_state: cur,
        trajectory,
    })
}
