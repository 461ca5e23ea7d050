//! Monte-Carlo ensembles of independent runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{run_experiment, RunSummary};
use super::seed::derive_seed;
use crate::analysis::{ensemble_stats, tof_variance, EnsembleStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub index: usize,
    pub seed: u64,
    pub result: Result<RunSummary, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub config_hash: String,
    pub base_seed: u64,
    pub runs: usize,
    pub failures: usize,
    /// Columns: n_true_{x,z,w}, n_meas_{x,z,w}, n_energy_{x,z,w}, x_tof, z_tof.
    pub stats: EnsembleStats,
    /// Sample standard deviation of the released positions, m.
    pub tof_std: [f64; 2],
    /// Position std predicted from the mean n_true of x and z, m.
    pub tof_std_predicted: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub outcomes: Vec<RunOutcome>,
    pub summary: EnsembleSummary,
}

impl Ensemble {
    pub fn successes(&self) -> impl Iterator<Item = &RunSummary> {
        self.outcomes.iter().filter_map(|o| o.result.as_ref().ok())
    }
}

/// Config for run `index` of an ensemble.
pub fn run_config(template: &ExperimentConfig, base_seed: u64, index: usize) -> ExperimentConfig {
    let mut cfg = *template;
    cfg.scenario.seed = derive_seed(base_seed, index as u64);
    cfg
}

/// Runs `n_runs` experiments. Failed runs are recorded, not fatal. Results
/// are identical whether or not `parallel` is set.
pub fn monte_carlo(template: &ExperimentConfig, n_runs: usize, base_seed: u64, parallel: bool) -> Ensemble {
    let one = |i: usize| {
        let cfg = run_config(template, base_seed, i);
        RunOutcome {
            index: i,
            seed: cfg.scenario.seed,
            result: run_experiment(&cfg).map(|r| r.summary).map_err(|e| e.to_string()),
        }
    };
    let outcomes: Vec<RunOutcome> = if parallel {
        (0..n_runs).into_par_iter().map(one).collect()
    } else {
        (0..n_runs).map(one).collect()
    };
    let summary = summarize(template, base_seed, &outcomes);
    Ensemble { outcomes, summary }
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn summarize(template: &ExperimentConfig, base_seed: u64, outcomes: &[RunOutcome]) -> EnsembleSummary {
    let ok: Vec<&RunSummary> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    let col = |f: &dyn Fn(&RunSummary) -> f64| ok.iter().map(|s| f(s)).collect::<Vec<f64>>();
    let columns = vec![
        ("n_true_x", col(&|s| s.n_true[0])),
        ("n_true_z", col(&|s| s.n_true[1])),
        ("n_true_w", col(&|s| s.n_true[2])),
        ("n_meas_x", col(&|s| s.n_meas[0])),
        ("n_meas_z", col(&|s| s.n_meas[1])),
        ("n_meas_w", col(&|s| s.n_meas[2])),
        ("n_energy_x", col(&|s| s.n_energy[0])),
        ("n_energy_z", col(&|s| s.n_energy[1])),
        ("n_energy_w", col(&|s| s.n_energy[2])),
        ("x_tof", col(&|s| s.x_tof)),
        ("z_tof", col(&|s| s.z_tof)),
    ];
    let stats = ensemble_stats(&columns, &template.binning);
    let plant = &template.plant;
    let omegas = plant.mode_frequencies();
    let predicted = |m: usize, name: &str| {
        let n = stats.get(name).map_or(0.0, |s| s.mean).max(0.0);
        let e = n * plant.trap.hbar * omegas[m];
        tof_variance(e, omegas[m], template.scenario.tof, plant.trap.atom_mass).sqrt()
    };
    EnsembleSummary {
        config_hash: template.hash(),
        base_seed,
        runs: outcomes.len(),
        failures: outcomes.len() - ok.len(),
        tof_std: [std_dev(&columns[9].1), std_dev(&columns[10].1)],
        tof_std_predicted: [predicted(0, "n_true_x"), predicted(1, "n_true_z")],
        stats,
    }
}
