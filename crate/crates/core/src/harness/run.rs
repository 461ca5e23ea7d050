//! One closed-loop experiment: plant → frame → estimator → controller →
//! delay line → plant, sampled every τ.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scenario, ScenarioKind};
use super::seed::{stream, Stream};
use crate::analysis::phonon::{self, Mode};
use crate::controller::Controller;
use crate::error::{Error, Result};
use crate::estimator::{InSituEstimator, MeasurementVector};
use crate::optics::{
    add_shot_noise, default_fringes, illumination, tf_phase, Fringe, ImageGrid, PhaseParams, Propagator,
};
use crate::plant::{
    dipole_kick, quadrupole_drive, step, ActuatorVector, DelayLine, PlantState, SignalVector, TransferMatrix,
};

/// Everything logged at one sample time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    /// Plant state when the frame was taken.
    pub state: PlantState,
    /// Filtered measurement handed to the controller.
    pub measurement: MeasurementVector,
    pub raw: MeasurementVector,
    /// Command computed from this sample's measurement.
    pub command: ActuatorVector,
    /// Command in force while the plant advances to the next sample.
    pub applied: ActuatorVector,
    pub degenerate: bool,
    pub feedback_active: bool,
}

/// Per-run results derived from the record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub feedback: bool,
    /// Occupancies from the trajectory with post-processing noise added,
    /// before and after bias correction, for (x, z, w).
    pub n_meas: [f64; 3],
    pub n_true: [f64; 3],
    /// Occupancy of the noiseless trajectory over the same window.
    pub n_exact: [f64; 3],
    /// Mode energy at the end of the record in units of ħω.
    pub n_energy: [f64; 3],
    pub hold: f64,
    /// Released positions relative to the trap center after the time of
    /// flight, m.
    pub x_tof: f64,
    pub z_tof: f64,
    pub degenerate_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub config_hash: String,
    pub samples: Vec<Sample>,
    pub final_state: PlantState,
    pub summary: RunSummary,
}

/// Called with (sample index, frame) for every rendered frame.
pub type FrameSink<'a> = &'a mut dyn FnMut(usize, &ImageGrid) -> Result<()>;

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    run_experiment_with(cfg, None)
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn drifted_transfer(cfg: &ExperimentConfig, seed: u64) -> TransferMatrix {
    if cfg.noise.g_drift == 0.0 {
        return cfg.transfer;
    }
    let mut rng = stream(seed, Stream::Drift);
    let factors = std::array::from_fn(|_| std::array::from_fn(|_| 1.0 + cfg.noise.g_drift * normal(&mut rng)));
    cfg.transfer.perturbed(&factors)
}

pub fn run_experiment_with(cfg: &ExperimentConfig, mut frames: Option<FrameSink<'_>>) -> Result<RunRecord> {
    cfg.validate()?;
    let sc = cfg.scenario;
    let seed = sc.seed;
    let plant = cfg.plant;
    let tau = cfg.estimator.sample_period;
    let g = drifted_transfer(cfg, seed);
    let gains = cfg.gains()?;

    let mut image_rng = stream(seed, Stream::Image);
    let mut process_rng = stream(seed, Stream::Process);
    // A velocity kick of std a·ω·√(2rτ) adds r·τ phonons on average.
    let kick_sigma: [f64; 3] = std::array::from_fn(|i| {
        let m = Mode::ALL[i];
        m.a_ho(&plant) * m.omega(&plant) * (2.0 * cfg.noise.process[i] * tau).sqrt()
    });
    let mut fringe_rng = stream(seed, Stream::Fringe);

    let fringes: Vec<Fringe> = if cfg.noise.fringes {
        default_fringes(&cfg.grid)
    } else {
        Vec::new()
    };
    let clean_ill = illumination(&cfg.grid, &fringes);
    let reference = match cfg.noise.reference_photons {
        Some(n) => add_shot_noise(&clean_ill, n, &mut stream(seed, Stream::Reference))?,
        None => clean_ill.clone(),
    };
    let propagator = Propagator::new(&cfg.grid, &cfg.optics)?;
    let mut estimator = InSituEstimator::new(cfg.estimator, reference)?;
    let mut controller = Controller::new(crate::controller::ControllerConfig {
        gains,
        ..cfg.controller
    });
    let mut delay = DelayLine::new(cfg.loop_delay, tau);

    let mut state = PlantState::at_rest(&plant);
    if let ScenarioKind::QuadrupoleDrive { amplitude, periods } = sc.kind {
        let wx2 = plant.trap.omega_x.powi(2);
        let rec = quadrupole_drive(
            &plant,
            &state,
            amplitude * wx2,
            plant.trap.omega_q(),
            periods,
            tau / 10.0,
        )?;
        state = PlantState {
            t: 0.0,
            trap: SignalVector::ZERO,
            ..rec.final_state
        };
    }

    let n_samples = (sc.duration / tau).round() as usize;
    let mut base = SignalVector::ZERO;
    let mut kicked = false;
    let mut applied = ActuatorVector::ZERO;
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let t = i as f64 * tau;
        state.t = t;
        if let ScenarioKind::DipoleKick { dx, dz, domega_x_sq } = sc.kind {
            if !kicked && t >= sc.kick_time - 1e-12 {
                let kick = SignalVector::new(dx, dz, domega_x_sq * plant.trap.omega_x.powi(2));
                base = base + kick;
                state = dipole_kick(&state, kick);
                kicked = true;
            }
        }

        let phase = tf_phase(
            &PhaseParams {
                phi0: cfg.phi0,
                r_x: state.w,
                r_z: cfg.radius_z,
                x0: state.x,
                z0: state.z,
            },
            &cfg.grid,
        );
        let shadow = propagator.render(&phase).map_err(|e| e.at_sample(i))?;
        let ill = if cfg.noise.fringe_jitter > 0.0 && !fringes.is_empty() {
            let jittered: Vec<Fringe> = fringes
                .iter()
                .map(|f| Fringe {
                    phase: f.phase + cfg.noise.fringe_jitter * normal(&mut fringe_rng),
                    ..*f
                })
                .collect();
            illumination(&cfg.grid, &jittered)
        } else {
            clean_ill.clone()
        };
        let mut frame = shadow.zip_map(&ill, |s, l| s * l)?;
        if let Some(n) = cfg.noise.photons {
            frame = add_shot_noise(&frame, n, &mut image_rng)?;
        }
        if let Some(sink) = frames.as_mut() {
            sink(i, &frame)?;
        }

        let out = estimator.process(&frame, t).map_err(|e| e.at_sample(i))?;
        let command = if sc.feedback {
            controller.update(&out.filtered)
        } else {
            ActuatorVector::ZERO
        };
        let feedback_active = sc.feedback && t >= cfg.controller.enable_time - 1e-12;
        delay.push(t, command);
        if let Some((_, c)) = delay.pop_due(t).into_iter().last() {
            applied = c;
        }
        if !command.is_finite() || !applied.is_finite() {
            return Err(Error::InvalidParameter("non-finite actuator command".into()).at_sample(i));
        }
        samples.push(Sample {
            t,
            state,
            measurement: out.filtered,
            raw: out.raw,
            command,
            applied,
            degenerate: out.degenerate,
            feedback_active,
        });

        let s = base + plant.orient(g.apply(&applied));
        state = step(&plant, &state, s, tau).map_err(|e| e.at_sample(i))?;
        if kick_sigma.iter().any(|&k| k > 0.0) {
            state.vx += kick_sigma[0] * normal(&mut process_rng);
            state.vz += kick_sigma[1] * normal(&mut process_rng);
            state.vw += kick_sigma[2] * normal(&mut process_rng);
        }
        if !state.w.is_finite() || state.w <= 0.0 {
            return Err(Error::InvalidParameter(format!("width collapsed to {}", state.w)).at_sample(i));
        }
    }

    let summary = summarize(cfg, &samples, &state)?;
    Ok(RunRecord {
        scenario: sc,
        config_hash: cfg.hash(),
        samples,
        final_state: state,
        summary,
    })
}

fn summarize(cfg: &ExperimentConfig, samples: &[Sample], final_state: &PlantState) -> Result<RunSummary> {
    let sc = &cfg.scenario;
    let plant = &cfg.plant;
    let tau = cfg.estimator.sample_period;
    let mut post_rng = stream(sc.seed, Stream::Post);
    let mut n_meas = [0.0; 3];
    let mut n_true = [0.0; 3];
    let mut n_exact = [0.0; 3];
    for mode in Mode::ALL {
        let m = mode.index();
        let r: Vec<f64> = samples.iter().map(|s| s.state.positions()[m]).collect();
        let trap: Vec<f64> = samples.iter().map(|s| plant.equilibrium(&s.state.trap)[m]).collect();
        let sigma = cfg.noise.post_sigma[m];
        let noisy: Vec<f64> = r.iter().map(|v| v + sigma * normal(&mut post_rng)).collect();
        let est = phonon::estimate(mode, plant, &noisy, Some(&trap), sigma, tau)?;
        n_meas[m] = est.n_meas;
        n_true[m] = est.n_true;
        n_exact[m] = phonon::estimate(mode, plant, &r, Some(&trap), 0.0, tau)?.n_meas;
    }
    let omegas = plant.mode_frequencies();
    let energies = final_state.mode_energies(plant);
    let n_energy = std::array::from_fn(|m| energies[m] / (plant.trap.hbar * omegas[m]));

    let mut hold_rng = stream(sc.seed, Stream::Hold);
    let hold = if sc.hold_max > sc.hold_min {
        hold_rng.random_range(sc.hold_min..=sc.hold_max)
    } else {
        sc.hold_min
    };
    let released = if hold > 0.0 {
        step(plant, final_state, final_state.trap, hold)?
    } else {
        *final_state
    };
    let eq = plant.equilibrium(&released.trap);
    Ok(RunSummary {
        seed: sc.seed,
        feedback: sc.feedback,
        n_meas,
        n_true,
        n_exact,
        n_energy,
        hold,
        x_tof: crate::analysis::release(released.x - eq[0], released.vx, sc.tof),
        z_tof: crate::analysis::release(released.z - eq[1], released.vz, sc.tof),
        degenerate_frames: samples.iter().filter(|s| s.degenerate).count(),
    })
}
