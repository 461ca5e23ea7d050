use num_complex::Complex64;

use super::{GridSpec, ImageGrid, OpticsParams};
use crate::error::Result;
use crate::spectral::Fft2d;

/// Cached Fourier-domain propagator: Gaussian pupil exp(−η²κ²) followed by
/// paraxial defocus exp(iξκ²/2k), κ² = k_x² + k_z².
#[derive(Debug, Clone)]
pub struct Propagator {
    grid: GridSpec,
    fft: Fft2d,
    transfer: Vec<Complex64>,
}

impl Propagator {
    pub fn new(grid: &GridSpec, opt: &OpticsParams) -> Result<Self> {
        opt.validate()?;
        let fft = grid.fft()?;
        let a = opt.xi / (2.0 * opt.k);
        let e2 = opt.eta * opt.eta;
        let transfer = grid
            .k_squared()
            .into_iter()
            .map(|k2| Complex64::from_polar((-e2 * k2).exp(), a * k2))
            .collect();
        Ok(Self {
            grid: *grid,
            fft,
            transfer,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Field at the object plane for a unit plane wave through the phase
    /// object exp(−iφ).
    pub fn field(&self, phase: &ImageGrid) -> Result<Vec<Complex64>> {
        if phase.spec.nx != self.grid.nx || phase.spec.nz != self.grid.nz {
            return Err(crate::error::Error::GridMismatch(
                "phase grid differs from propagator grid".into(),
            ));
        }
        let mut buf: Vec<Complex64> = phase.data.iter().map(|&p| Complex64::from_polar(1.0, -p)).collect();
        self.fft.forward(&mut buf);
        for (b, h) in buf.iter_mut().zip(&self.transfer) {
            *b *= h;
        }
        self.fft.inverse(&mut buf);
        Ok(buf)
    }

    /// Intensity |E|², equal to 1 far from the object.
    pub fn render(&self, phase: &ImageGrid) -> Result<ImageGrid> {
        let field = self.field(phase)?;
        ImageGrid::new(phase.spec, field.into_iter().map(|e| e.norm_sqr()).collect())
    }
}

/// Full shadowgraph model intensity for a phase object.
pub fn fresnel_image(phase: &ImageGrid, opt: &OpticsParams) -> Result<ImageGrid> {
    Propagator::new(&phase.spec, opt)?.render(phase)
}
