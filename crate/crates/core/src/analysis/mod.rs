//! Offline characterization of run records.

pub mod fit;
pub mod phonon;
pub mod stats;
pub mod tof;

pub use fit::{fit_shadowgraph, FitOptions, FitResult};
pub use phonon::{bias, bias_correct, implied_sigma, phonon_occupancy, Mode, PhononEstimate};
pub use stats::{ensemble_stats, Binning, EnsembleStats, Histogram, SampleStats};
pub use tof::{release, tof_variance};
