//! Summary statistics and fixed-bin histograms over ensembles.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Default for Binning {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 10.0,
            bins: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Values outside [lo, hi).
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(values: &[f64], b: &Binning) -> Self {
        let width = (b.hi - b.lo) / b.bins as f64;
        let edges = (0..=b.bins).map(|i| b.lo + i as f64 * width).collect();
        let mut counts = vec![0; b.bins];
        let (mut underflow, mut overflow) = (0, 0);
        for &v in values {
            if v < b.lo {
                underflow += 1;
            } else if v >= b.hi || !v.is_finite() {
                overflow += 1;
            } else {
                let i = (((v - b.lo) / width) as usize).min(b.bins - 1);
                counts[i] += 1;
            }
        }
        Self {
            edges,
            counts,
            underflow,
            overflow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub std_err: f64,
    /// 5th, 25th, 50th, 75th and 95th percentiles.
    pub quantiles: [f64; 5],
    pub histogram: Histogram,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

impl SampleStats {
    /// Returns `None` for an empty sample.
    pub fn from_values(values: &[f64], binning: &Binning) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            count: values.len(),
            mean,
            std,
            std_err: std / n.sqrt(),
            quantiles: [0.05, 0.25, 0.5, 0.75, 0.95].map(|q| quantile(&sorted, q)),
            histogram: Histogram::new(values, binning),
        })
    }
}

/// Named statistics, in the order given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub entries: Vec<(String, SampleStats)>,
}

impl EnsembleStats {
    pub fn get(&self, name: &str) -> Option<&SampleStats> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }
}

/// Statistics for each named column of per-record values.
pub fn ensemble_stats(columns: &[(&str, Vec<f64>)], binning: &Binning) -> EnsembleStats {
    EnsembleStats {
        entries: columns
            .iter()
            .filter_map(|(name, v)| SampleStats::from_values(v, binning).map(|s| (name.to_string(), s)))
            .collect(),
    }
}
