//! Closed-loop simulation of in-situ feedback on a trapped Bose-Einstein
//! condensate: a three-mode harmonic plant, a shadowgraph imaging model, a
//! moment-based state estimator, a derivative controller with loop delay,
//! and phonon/time-of-flight analysis.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod constants;
pub mod controller;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod optics;
pub mod plant;
pub mod spectral;

pub use controller::{calibrate_gains, loop_gain, Controller, ControllerConfig, GainMatrix, LoopTargets};
pub use error::{Error, Result};
pub use estimator::{EstimatorConfig, InSituEstimator, MeasurementVector};
pub use optics::{GridSpec, ImageGrid, OpticsParams, PhaseParams};
pub use plant::{ActuatorVector, DelayLine, PlantConfig, PlantState, SignalVector, TransferMatrix, TrapConfig};
