//! Experiment configuration and its flat `key = value` text form.
//!
//! Blank lines and text after `#` are ignored. All values are SI unless a
//! key says otherwise; `none` disables optional filters and limits. Lists
//! are comma-separated.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::Binning;
use crate::constants::{angular, LOOP_DELAY, MICRON};
use crate::controller::{calibrate_gains, ControllerConfig, GainMatrix, LoopTargets};
use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::optics::{GridSpec, OpticsParams};
use crate::plant::{PlantConfig, TransferMatrix, NOMINAL_RADIUS_Z};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Step of the trap offsets at `kick_time`; `domega_x_sq` is relative to ω_x².
    DipoleKick {
        dx: f64,
        dz: f64,
        domega_x_sq: f64,
    },
    /// Resonant ω_x² modulation before imaging starts; `amplitude` is
    /// relative to ω_x².
    QuadrupoleDrive {
        amplitude: f64,
        periods: u32,
    },
    Quiet,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::DipoleKick { .. } => "dipole_kick",
            ScenarioKind::QuadrupoleDrive { .. } => "quadrupole_drive",
            ScenarioKind::Quiet => "quiet",
        }
    }

    pub fn default_dipole_kick() -> Self {
        ScenarioKind::DipoleKick {
            dx: -8.0 * MICRON,
            dz: 4.0 * MICRON,
            domega_x_sq: 0.02,
        }
    }

    pub fn default_quadrupole_drive() -> Self {
        ScenarioKind::QuadrupoleDrive {
            amplitude: 0.05,
            periods: 4,
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "dipole_kick" => Ok(Self::default_dipole_kick()),
            "quadrupole_drive" => Ok(Self::default_quadrupole_drive()),
            "quiet" => Ok(ScenarioKind::Quiet),
            other => Err(Error::InvalidParameter(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub feedback: bool,
    pub kick_time: f64,
    /// Imaging record length, s.
    pub duration: f64,
    /// Hold after the record, drawn uniformly from [hold_min, hold_max].
    pub hold_min: f64,
    pub hold_max: f64,
    pub tof: f64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::default_dipole_kick(),
            feedback: true,
            kick_time: 10e-3,
            duration: 200e-3,
            hold_min: 0.0,
            hold_max: 150e-3,
            tof: 20e-3,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let ok = self.kick_time >= 0.0
            && self.duration > self.kick_time
            && self.hold_min >= 0.0
            && self.hold_max >= self.hold_min
            && self.tof >= 0.0;
        if !ok {
            return Err(Error::InvalidParameter(
                "scenario times must be nonnegative and non-decreasing".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Photon budget of each in-loop frame; `None` is noiseless.
    pub photons: Option<f64>,
    /// Photon budget of the reference image; `None` is noiseless.
    pub reference_photons: Option<f64>,
    /// Include spurious fringes in the illumination.
    pub fringes: bool,
    /// Per-frame random fringe phase shift, rad (std).
    pub fringe_jitter: f64,
    /// White-force heating of the (x, z, w) modes, phonons/s.
    pub process: [f64; 3],
    /// Relative per-run spread of every transfer-matrix entry.
    pub g_drift: f64,
    /// White noise added to the recorded trajectory before phonon
    /// accounting, m, for (x, z, w).
    pub post_sigma: [f64; 3],
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            photons: Some(DEFAULT_PHOTONS),
            reference_photons: Some(DEFAULT_PHOTONS),
            fringes: true,
            fringe_jitter: 0.0,
            process: DEFAULT_PROCESS,
            g_drift: 0.0,
            post_sigma: DEFAULT_POST_SIGMA,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            photons: None,
            reference_photons: None,
            fringe_jitter: 0.0,
            process: [0.0; 3],
            g_drift: 0.0,
            post_sigma: [0.0; 3],
            ..Self::default()
        }
    }
}

/// Photons per pixel in one in-loop frame. Chosen so the raw in-loop
/// position noise is about 0.15 µm, the level of the post-processing noise.
/// A 70 W/m², 20 µs pulse on a (5.5 µm)² pixel gives only 1.66e5, which
/// leaves the width loop unstable at the default phase.
pub const DEFAULT_PHOTONS: f64 = 1e7;

/// Heating of the (x, z, w) modes, phonons/s. Sets the feedback-on floor
/// near n_x ≈ 0.78, n_z ≈ 0.18.
pub const DEFAULT_PROCESS: [f64; 3] = [28.0, 8.0, 0.0];

/// Position noise implied by the reported phonon biases, m.
pub const DEFAULT_POST_SIGMA: [f64; 3] = [0.1201 * MICRON, 0.1163 * MICRON, 0.1196 * MICRON];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub plant: PlantConfig,
    pub transfer: TransferMatrix,
    pub radius_z: f64,
    pub grid: GridSpec,
    pub optics: OpticsParams,
    pub phi0: f64,
    pub estimator: EstimatorConfig,
    pub controller: ControllerConfig,
    /// When set, K is recomputed from G and these targets.
    pub gain_targets: Option<LoopTargets>,
    pub loop_delay: f64,
    pub noise: NoiseConfig,
    pub scenario: Scenario,
    pub binning: Binning,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            plant: PlantConfig::default(),
            transfer: TransferMatrix::nominal(),
            radius_z: NOMINAL_RADIUS_Z,
            grid: GridSpec::default(),
            optics: OpticsParams::default(),
            phi0: crate::optics::PhaseParams::default().phi0,
            estimator: EstimatorConfig::default(),
            controller: ControllerConfig::default(),
            gain_targets: None,
            loop_delay: LOOP_DELAY,
            noise: NoiseConfig::default(),
            scenario: Scenario::default(),
            binning: Binning::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.grid.validate()?;
        self.optics.validate()?;
        self.scenario.validate()?;
        if !(self.radius_z > 0.0) {
            return Err(Error::InvalidParameter("radius_z must be positive".into()));
        }
        if !(self.loop_delay >= 0.0) {
            return Err(Error::InvalidParameter("loop delay must be nonnegative".into()));
        }
        if !(self.controller.enable_time >= 0.0) {
            return Err(Error::InvalidParameter("enable_time must be nonnegative".into()));
        }
        for p in [self.noise.photons, self.noise.reference_photons].into_iter().flatten() {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidPhotonBudget(p));
            }
        }
        let n = &self.noise;
        if n.process
            .iter()
            .chain(&n.post_sigma)
            .chain([&n.g_drift, &n.fringe_jitter])
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "noise levels must be finite and nonnegative".into(),
            ));
        }
        if self.binning.bins == 0 || !(self.binning.hi > self.binning.lo) {
            return Err(Error::InvalidParameter("histogram binning must be nonempty".into()));
        }
        Ok(())
    }

    /// Feedback matrix actually used: calibrated when targets are set.
    pub fn gains(&self) -> Result<GainMatrix> {
        match &self.gain_targets {
            Some(t) => calibrate_gains(&self.transfer, t),
            None => Ok(self.controller.gains),
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: i + 1,
                msg: "expected `key = value`".into(),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|msg| Error::Config { line: i + 1, msg })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one key. Errors are messages for the caller to place.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value;
        match key {
            "trap.f_x" => self.plant.trap.omega_x = angular(num(v)?),
            "trap.f_y" => self.plant.trap.omega_y = angular(num(v)?),
            "trap.f_z" => self.plant.trap.omega_z = angular(num(v)?),
            "trap.mass" => self.plant.trap.atom_mass = num(v)?,
            "trap.width_eq0" => self.plant.width_eq0 = num(v)?,
            "trap.radius_z" => self.radius_z = num(v)?,
            "trap.width_damping" => self.plant.width_damping = num(v)?,
            "trap.orientation" => self.plant.orientation = list::<3>(v)?,
            "trap.transfer" => {
                let g = list::<12>(v)?;
                self.transfer = TransferMatrix(std::array::from_fn(|r| std::array::from_fn(|c| g[r * 4 + c])));
            }
            "optics.xi" => self.optics.xi = num(v)?,
            "optics.eta" => self.optics.eta = num(v)?,
            "optics.wavelength" => self.optics.k = std::f64::consts::TAU / num(v)?,
            "optics.phi0" => self.phi0 = num(v)?,
            "optics.grid" => {
                let n = int(v)?;
                self.grid.nx = n;
                self.grid.nz = n;
            }
            "optics.pitch" => self.grid.pitch = num(v)?,
            "optics.background_margin" => self.estimator.background_margin = num(v)?,
            "optics.atom_box" => {
                self.estimator.atom_box = if v.eq_ignore_ascii_case("none") {
                    None
                } else {
                    let b = list::<2>(v)?;
                    Some((b[0], b[1]))
                }
            }
            "optics.mass_floor" => self.estimator.mass_floor = num(v)?,
            "optics.x_cutoff" => self.estimator.x_cutoff = opt_num(v)?,
            "optics.w_cutoff" => self.estimator.w_cutoff = opt_num(v)?,
            "noise.photons" => self.noise.photons = opt_num(v)?,
            "noise.reference_photons" => self.noise.reference_photons = opt_num(v)?,
            "noise.fringes" => self.noise.fringes = boolean(v)?,
            "noise.fringe_jitter" => self.noise.fringe_jitter = num(v)?,
            "noise.process" => self.noise.process = list::<3>(v)?,
            "noise.g_drift" => self.noise.g_drift = num(v)?,
            "noise.post_sigma" => self.noise.post_sigma = list::<3>(v)?,
            "gains.k" => {
                let k = list::<12>(v)?;
                self.controller.gains =
                    GainMatrix::from_volts_per_micron(std::array::from_fn(|r| std::array::from_fn(|c| k[r * 3 + c])));
            }
            "gains.calibrate" => {
                let t = list::<3>(v)?;
                self.gain_targets = Some(LoopTargets {
                    x: t[0],
                    z: t[1],
                    w: t[2] / MICRON,
                });
            }
            "gains.output_cutoff" => self.controller.output_cutoff = opt_num(v)?,
            "gains.enable_time" => self.controller.enable_time = num(v)?,
            "gains.saturation" => self.controller.saturation = opt_num(v)?,
            "gains.clamp_before_filter" => self.controller.clamp_before_filter = boolean(v)?,
            "gains.delay" => self.loop_delay = num(v)?,
            "scenario.kind" => self.scenario.kind = ScenarioKind::from_name(v).map_err(|e| e.to_string())?,
            "scenario.kick_dx" | "scenario.kick_dz" | "scenario.kick_domega_sq" => {
                let ScenarioKind::DipoleKick { dx, dz, domega_x_sq } = &mut self.scenario.kind else {
                    return Err(format!("{key} requires scenario.kind = dipole_kick"));
                };
                let target = match key {
                    "scenario.kick_dx" => dx,
                    "scenario.kick_dz" => dz,
                    _ => domega_x_sq,
                };
                *target = num(v)?;
            }
            "scenario.drive_amplitude" | "scenario.drive_periods" => {
                let ScenarioKind::QuadrupoleDrive { amplitude, periods } = &mut self.scenario.kind else {
                    return Err(format!("{key} requires scenario.kind = quadrupole_drive"));
                };
                if key == "scenario.drive_amplitude" {
                    *amplitude = num(v)?;
                } else {
                    *periods = int(v)? as u32;
                }
            }
            "scenario.feedback" => self.scenario.feedback = boolean(v)?,
            "scenario.kick_time" => self.scenario.kick_time = num(v)?,
            "scenario.duration" => self.scenario.duration = num(v)?,
            "scenario.hold_min" => self.scenario.hold_min = num(v)?,
            "scenario.hold_max" => self.scenario.hold_max = num(v)?,
            "scenario.tof" => self.scenario.tof = num(v)?,
            "scenario.seed" => self.scenario.seed = int(v)? as u64,
            "stats.lo" => self.binning.lo = num(v)?,
            "stats.hi" => self.binning.hi = num(v)?,
            "stats.bins" => self.binning.bins = int(v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }
}

fn num(v: &str) -> std::result::Result<f64, String> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("expected a number, got `{v}`"))
}

fn opt_num(v: &str) -> std::result::Result<Option<f64>, String> {
    if v.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        num(v).map(Some)
    }
}

fn int(v: &str) -> std::result::Result<usize, String> {
    v.parse()
        .map_err(|_| format!("expected a nonnegative integer, got `{v}`"))
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got `{v}`")),
    }
}

fn list<const N: usize>(v: &str) -> std::result::Result<[f64; N], String> {
    let items: Vec<f64> = v
        .split(',')
        .map(|s| num(s.trim()))
        .collect::<std::result::Result<_, _>>()?;
    items
        .try_into()
        .map_err(|got: Vec<f64>| format!("expected {N} comma-separated values, got {}", got.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_default() {
        assert_eq!(
            ExperimentConfig::parse("# nothing\n\n").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn keys_apply() {
        let cfg = ExperimentConfig::parse(
            "trap.f_x = 25   # Hz\n\
             optics.x_cutoff = none\n\
             noise.photons = 1e4\n\
             noise.post_sigma = 1e-7, 2e-7, 3e-7\n\
             scenario.kick_dx = -5e-6\n\
             scenario.feedback = off\n\
             gains.k = -1,0,0, 0,-0.5,0, 0,0,-0.2, 0,0,0.1\n",
        )
        .unwrap();
        assert_eq!(cfg.plant.trap.omega_x, angular(25.0));
        assert_eq!(cfg.estimator.x_cutoff, None);
        assert_eq!(cfg.noise.photons, Some(1e4));
        assert_eq!(cfg.noise.post_sigma, [1e-7, 2e-7, 3e-7]);
        assert!(!cfg.scenario.feedback);
        assert!(matches!(cfg.scenario.kind, ScenarioKind::DipoleKick { dx, .. } if dx == -5e-6));
        assert!((cfg.controller.gains.0[0][0] + 1e6).abs() < 1e-6);
        assert!((cfg.controller.gains.0[3][2] - 1e5).abs() < 1e-6);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = ExperimentConfig::parse("trap.f_x = 20\nbogus.key = 1\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        let e = ExperimentConfig::parse("noise.post_sigma = 1, 2\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 1, .. }));
        let e = ExperimentConfig::parse("no equals sign\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 1, .. }));
    }

    #[test]
    fn semantic_validation_runs_after_parse() {
        assert!(matches!(
            ExperimentConfig::parse("optics.grid = 100\n"),
            Err(Error::NonPowerOfTwo { .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("noise.photons = -3\n"),
            Err(Error::InvalidPhotonBudget(_))
        ));
    }

    #[test]
    fn drive_keys_need_drive_scenario() {
        assert!(ExperimentConfig::parse("scenario.drive_periods = 3\n").is_err());
        let cfg = ExperimentConfig::parse("scenario.kind = quadrupole_drive\nscenario.drive_periods = 3\n").unwrap();
        assert!(matches!(
            cfg.scenario.kind,
            ScenarioKind::QuadrupoleDrive { periods: 3, .. }
        ));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a;
        assert_eq!(a.hash(), b.hash());
        b.scenario.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn calibrated_gains_zero_cross_coupling() {
        let cfg = ExperimentConfig::parse("gains.calibrate = 11.8, 0.49, -8186.5\n").unwrap();
        let l = crate::controller::loop_gain(&cfg.transfer, &cfg.gains().unwrap());
        assert!(l[1][2].abs() < 1e-12);
    }
}
