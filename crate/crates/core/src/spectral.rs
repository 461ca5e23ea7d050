//! 2D FFT on a periodic row-major grid and the matching angular-frequency
//! tables.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Forward/inverse 2D DFT for an `nz` × `nx` row-major grid. The inverse is
/// normalized by 1/(nx·nz).
#[derive(Clone)]
pub struct Fft2d {
    nx: usize,
    nz: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2d {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2d")
            .field("nx", &self.nx)
            .field("nz", &self.nz)
            .finish()
    }
}

impl Fft2d {
    pub fn new(nx: usize, nz: usize) -> Result<Self> {
        if !(nx.is_power_of_two() && nz.is_power_of_two()) {
            return Err(Error::NonPowerOfTwo { nx, nz });
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            nx,
            nz,
            row_fwd: planner.plan_fft_forward(nx),
            row_inv: planner.plan_fft_inverse(nx),
            col_fwd: planner.plan_fft_forward(nz),
            col_inv: planner.plan_fft_inverse(nz),
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn transform(&self, data: &mut [Complex64], row: &dyn Fft<f64>, col: &dyn Fft<f64>) {
        assert_eq!(data.len(), self.len(), "buffer does not match FFT grid");
        // Rows are contiguous; rustfft processes them in one batched call.
        row.process(data);
        let (nx, nz) = (self.nx, self.nz);
        let mut t = vec![Complex64::default(); nx * nz];
        for iz in 0..nz {
            for ix in 0..nx {
                t[ix * nz + iz] = data[iz * nx + ix];
            }
        }
        col.process(&mut t);
        for ix in 0..nx {
            for iz in 0..nz {
                data[iz * nx + ix] = t[ix * nz + iz];
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &*self.row_fwd, &*self.col_fwd);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &*self.row_inv, &*self.col_inv);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Angular wavenumbers 2π·fftfreq(n, pitch) in DFT bin order.
pub fn wavenumbers(n: usize, pitch: f64) -> Vec<f64> {
    let span = n as f64 * pitch;
    (0..n)
        .map(|j| {
            let m = if j < n.div_ceil(2) {
                j as isize
            } else {
                j as isize - n as isize
            };
            TAU * m as f64 / span
        })
        .collect()
}

/// k_x² + k_z² for every bin of an `nz` × `nx` grid.
pub fn k_squared(nx: usize, nz: usize, pitch: f64) -> Vec<f64> {
    let kx = wavenumbers(nx, pitch);
    let kz = wavenumbers(nz, pitch);
    let mut out = Vec::with_capacity(nx * nz);
    for kzv in &kz {
        for kxv in &kx {
            out.push(kxv * kxv + kzv * kzv);
        }
    }
    out
}

/// Applies a real diagonal Fourier multiplier to a real field.
pub fn apply_multiplier(fft: &Fft2d, field: &[f64], multiplier: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut buf);
    for (b, m) in buf.iter_mut().zip(multiplier) {
        *b *= *m;
    }
    fft.inverse(&mut buf);
    buf.into_iter().map(|c| c.re).collect()
}
