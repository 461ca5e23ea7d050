//! Derivative feedback u(t_i) = K·[m(t_i) − m(t_{i−1})], with low-pass
//! filtering of the laser-power channels and optional saturation.

use serde::{Deserialize, Serialize};

use crate::constants::{angular, MICRON, SAMPLE_PERIOD};
use crate::error::{Error, Result};
use crate::estimator::{finite_difference, LowPass, MeasurementVector};
use crate::plant::{ActuatorVector, TransferMatrix};

/// Feedback matrix K (4×3) in SI units, V/m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix(pub [[f64; 3]; 4]);

impl GainMatrix {
    pub const ZERO: Self = Self([[0.0; 3]; 4]);

    /// Builds K from entries quoted in V/µm.
    pub fn from_volts_per_micron(k: [[f64; 3]; 4]) -> Self {
        Self(k.map(|row| row.map(|v| v / MICRON)))
    }

    pub fn to_volts_per_micron(&self) -> [[f64; 3]; 4] {
        self.0.map(|row| row.map(|v| v * MICRON))
    }

    pub fn nominal() -> Self {
        Self::from_volts_per_micron([
            [-0.82, 0.0, 0.0],
            [0.0, -0.27, 0.0],
            [0.0, 0.0, -0.38],
            [0.0, 0.0, 0.16],
        ])
    }

    pub fn apply(&self, dm: &[f64; 3]) -> ActuatorVector {
        ActuatorVector::from_array(self.0.map(|row| row.iter().zip(dm).map(|(k, d)| k * d).sum()))
    }

    /// Scales the x-mode column; used for stability scans.
    pub fn with_x_gain_scaled(mut self, factor: f64) -> Self {
        for row in &mut self.0 {
            row[0] *= factor;
        }
        self
    }
}

impl Default for GainMatrix {
    fn default() -> Self {
        Self::nominal()
    }
}

/// L = G·K. Position rows are dimensionless; the width row is in
/// (rad/s)² per metre of ŵ.
pub fn loop_gain(g: &TransferMatrix, k: &GainMatrix) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..4).map(|n| g.0[i][n] * k.0[n][j]).sum()))
}

/// Nominal loop gain quoted alongside the transfer and feedback matrices.
pub fn reference_loop_gain() -> [[f64; 3]; 3] {
    [
        [11.8, 0.0, 0.0],
        [0.0, 0.49, -0.22],
        [0.0, 0.0, -angular(14.4).powi(2) / MICRON],
    ]
}

/// Desired diagonal loop gains (L₁₁, L₂₂, L₃₃).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopTargets {
    pub x: f64,
    pub z: f64,
    /// (rad/s)² per metre.
    pub w: f64,
}

impl Default for LoopTargets {
    fn default() -> Self {
        let r = reference_loop_gain();
        Self {
            x: r[0][0],
            z: r[1][1],
            w: r[2][2],
        }
    }
}

/// Solves for K given G and target diagonal loop gains. The width column
/// drives both power channels so that L₂₃ vanishes exactly.
pub fn calibrate_gains(g: &TransferMatrix, targets: &LoopTargets) -> Result<GainMatrix> {
    let g = &g.0;
    if g[0][0] == 0.0 || g[1][1] == 0.0 {
        return Err(Error::CalibrationFailure(
            "piezo transfer entries G11/G22 are zero".into(),
        ));
    }
    let (a, b, c, d) = (g[1][2], g[1][3], g[2][2], g[2][3]);
    let det = a * d - b * c;
    let scale = (a.abs() + b.abs()) * (c.abs() + d.abs());
    if !(det.abs() > 1e-12 * scale) || scale == 0.0 {
        return Err(Error::CalibrationFailure(format!(
            "power-channel system [[{a:e}, {b:e}], [{c:e}, {d:e}]] is singular"
        )));
    }
    // [a b; c d]·(k33, k43) = (0, target_w)
    let k33 = -b * targets.w / det;
    let k43 = a * targets.w / det;
    let mut k = GainMatrix::ZERO;
    k.0[0][0] = targets.x / g[0][0];
    k.0[1][1] = targets.z / g[1][1];
    k.0[2][2] = k33;
    k.0[3][2] = k43;
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub gains: GainMatrix,
    /// Cutoff of the power-channel output filter, Hz. `None` disables.
    pub output_cutoff: Option<f64>,
    pub enable_time: f64,
    /// Symmetric clamp in volts. `None` disables.
    pub saturation: Option<f64>,
    /// Apply the output filter after the clamp instead of before it.
    pub clamp_before_filter: bool,
    pub sample_period: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gains: GainMatrix::nominal(),
            output_cutoff: Some(100.0),
            enable_time: 20e-3,
            saturation: None,
            clamp_before_filter: false,
            sample_period: SAMPLE_PERIOD,
        }
    }
}

/// One feedback loop's controller state.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    prev: Option<[f64; 3]>,
    lp_64: Option<LowPass>,
    lp_90: Option<LowPass>,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Self {
        let lp = cfg.output_cutoff.map(|fc| LowPass::new(fc, cfg.sample_period));
        Self {
            cfg,
            prev: None,
            lp_64: lp,
            lp_90: lp,
        }
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    /// Raw law K·Δm, before filtering or clamping.
    pub fn law(&self, m: &MeasurementVector, prev: &MeasurementVector) -> ActuatorVector {
        self.cfg
            .gains
            .apply(&finite_difference(&m.feedback_vector(), &prev.feedback_vector()))
    }

    /// Consumes the measurement of the current sample and returns the
    /// actuator command. Outputs zero (pre-filter) before `enable_time` or
    /// when no previous measurement exists.
    pub fn update(&mut self, m: &MeasurementVector) -> ActuatorVector {
        let cur = m.feedback_vector();
        let raw = match self.prev {
            Some(prev) if m.t >= self.cfg.enable_time - 1e-12 => self.cfg.gains.apply(&finite_difference(&cur, &prev)),
            _ => ActuatorVector::ZERO,
        };
        self.prev = Some(cur);
        self.shape(raw)
    }

    fn shape(&mut self, raw: ActuatorVector) -> ActuatorVector {
        let clamp = |u: ActuatorVector, limit: Option<f64>| match limit {
            Some(l) => u.clamp(l),
            None => u,
        };
        let mut u = raw;
        if self.cfg.clamp_before_filter {
            u = clamp(u, self.cfg.saturation);
        }
        if let (Some(a), Some(b)) = (self.lp_64.as_mut(), self.lp_90.as_mut()) {
            u.v_64 = a.update(u.v_64);
            u.v_90 = b.update(u.v_90);
        }
        if !self.cfg.clamp_before_filter {
            u = clamp(u, self.cfg.saturation);
        }
        u
    }
}
