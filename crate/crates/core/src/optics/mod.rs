//! Shadowgraph image synthesis: Thomas-Fermi phase objects, defocused
//! propagation, the linearized Laplacian model, reference illumination and
//! photon noise.

mod io;
mod propagate;

pub use io::{read_ascii_grid, write_ascii_grid, write_pgm16};
pub use propagate::{fresnel_image, Propagator};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constants::{PIXEL_PITCH, PROBE_WAVELENGTH};
use crate::error::{Error, Result};
use crate::plant::NOMINAL_RADIUS_Z;
use crate::spectral::{apply_multiplier, k_squared, Fft2d};

/// Uniform pixel grid. Pixel (ix, iz) sits at
/// (origin_x + (ix − nx/2)·pitch, origin_z + (iz − nz/2)·pitch), so the
/// origin is a pixel center and the grid is mirror-symmetric about it under
/// periodic wrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub nz: usize,
    pub pitch: f64,
    pub origin_x: f64,
    pub origin_z: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::square(128, PIXEL_PITCH)
    }
}

impl GridSpec {
    pub fn square(n: usize, pitch: f64) -> Self {
        Self {
            nx: n,
            nz: n,
            pitch,
            origin_x: 0.0,
            origin_z: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nx.is_power_of_two() && self.nz.is_power_of_two()) {
            return Err(Error::NonPowerOfTwo {
                nx: self.nx,
                nz: self.nz,
            });
        }
        if !(self.pitch > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "pixel pitch must be positive, got {}",
                self.pitch
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.origin_x + (ix as f64 - (self.nx / 2) as f64) * self.pitch
    }

    pub fn z(&self, iz: usize) -> f64 {
        self.origin_z + (iz as f64 - (self.nz / 2) as f64) * self.pitch
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn zs(&self) -> Vec<f64> {
        (0..self.nz).map(|i| self.z(i)).collect()
    }

    pub fn pixel_area(&self) -> f64 {
        self.pitch * self.pitch
    }

    pub fn k_squared(&self) -> Vec<f64> {
        k_squared(self.nx, self.nz, self.pitch)
    }

    pub fn fft(&self) -> Result<Fft2d> {
        self.validate()?;
        Fft2d::new(self.nx, self.nz)
    }
}

/// Real scalar field on a [`GridSpec`], row-major with rows along z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    pub spec: GridSpec,
    pub data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(spec: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != spec.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a {}x{} grid",
                data.len(),
                spec.nx,
                spec.nz
            )));
        }
        Ok(Self { spec, data })
    }

    pub fn filled(spec: GridSpec, value: f64) -> Self {
        Self {
            spec,
            data: vec![value; spec.len()],
        }
    }

    /// Evaluates `f(x, z)` at every pixel center.
    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let xs = spec.xs();
        let mut data = Vec::with_capacity(spec.len());
        for iz in 0..spec.nz {
            let z = spec.z(iz);
            data.extend(xs.iter().map(|&x| f(x, z)));
        }
        Self { spec, data }
    }

    pub fn at(&self, ix: usize, iz: usize) -> f64 {
        self.data[iz * self.spec.nx + ix]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            spec: self.spec,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            spec: self.spec,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.spec.nx != other.spec.nx || self.spec.nz != other.spec.nz {
            return Err(Error::GridMismatch(format!(
                "{}x{} vs {}x{}",
                self.spec.nx, self.spec.nz, other.spec.nx, other.spec.nz
            )));
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Cyclic shift by whole pixels.
    pub fn roll(&self, dx: isize, dz: isize) -> Self {
        let (nx, nz) = (self.spec.nx as isize, self.spec.nz as isize);
        let mut data = vec![0.0; self.data.len()];
        for iz in 0..nz {
            for ix in 0..nx {
                let tx = (ix + dx).rem_euclid(nx);
                let tz = (iz + dz).rem_euclid(nz);
                data[(tz * nx + tx) as usize] = self.data[(iz * nx + ix) as usize];
            }
        }
        Self { spec: self.spec, data }
    }
}

/// Thomas-Fermi column phase profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    /// Peak phase, rad.
    pub phi0: f64,
    pub r_x: f64,
    pub r_z: f64,
    pub x0: f64,
    pub z0: f64,
}

impl Default for PhaseParams {
    fn default() -> Self {
        let plant = crate::plant::PlantConfig::default();
        Self {
            phi0: -0.08,
            r_x: plant.width_eq0,
            r_z: NOMINAL_RADIUS_Z,
            x0: 0.0,
            z0: 0.0,
        }
    }
}

impl PhaseParams {
    pub fn to_array(self) -> [f64; 5] {
        [self.phi0, self.r_x, self.r_z, self.x0, self.z0]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            phi0: a[0],
            r_x: a[1],
            r_z: a[2],
            x0: a[3],
            z0: a[4],
        }
    }

    /// Phase at a point: φ₀(1 − ρ²)^{3/2} inside the ellipse, 0 outside.
    pub fn eval(&self, x: f64, z: f64) -> f64 {
        let dx = (x - self.x0) / self.r_x;
        let dz = (z - self.z0) / self.r_z;
        let s = 1.0 - dx * dx - dz * dz;
        if s > 0.0 {
            self.phi0 * s * s.sqrt()
        } else {
            0.0
        }
    }
}

/// Imaging parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticsParams {
    /// Defocus distance, m.
    pub xi: f64,
    /// Probe wavenumber, rad/m.
    pub k: f64,
    /// Gaussian pupil resolution, m.
    pub eta: f64,
    /// Detuning in half-linewidths.
    pub delta_tilde: f64,
    /// Resonant absorption cross-section, m².
    pub sigma0: f64,
}

impl Default for OpticsParams {
    fn default() -> Self {
        let lambda = PROBE_WAVELENGTH;
        Self {
            xi: 800e-6,
            k: std::f64::consts::TAU / lambda,
            eta: PIXEL_PITCH,
            delta_tilde: -1800.0,
            sigma0: 3.0 * lambda * lambda / std::f64::consts::TAU,
        }
    }
}

impl OpticsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) {
            return Err(Error::InvalidParameter("wavenumber must be positive".into()));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::InvalidParameter("resolution must be nonnegative".into()));
        }
        Ok(())
    }

    /// Thin-sample phase for an on-resonance optical depth.
    pub fn phase_from_od(&self, od: f64) -> f64 {
        od / (2.0 * self.delta_tilde)
    }
}

/// Subsamples per axis used to average the phase profile over a pixel.
pub const PIXEL_SUBSAMPLES: usize = 16;

/// Thomas-Fermi phase profile averaged over each pixel's area. The cloud can
/// be as small as one pixel vertically, where point sampling would lose the
/// sub-pixel position and size information.
pub fn tf_phase(params: &PhaseParams, grid: &GridSpec) -> ImageGrid {
    let mut img = ImageGrid::filled(*grid, 0.0);
    let p = grid.pitch;
    let n = PIXEL_SUBSAMPLES;
    let offsets: Vec<f64> = (0..n).map(|j| ((j as f64 + 0.5) / n as f64 - 0.5) * p).collect();
    let range = |c: f64, r: f64, origin: f64, len: usize| {
        let lo = ((c - r - origin) / p + (len / 2) as f64 - 0.5).floor().max(0.0) as usize;
        let hi = ((c + r - origin) / p + (len / 2) as f64 + 0.5).ceil().max(0.0) as usize;
        lo..hi.min(len)
    };
    let norm = 1.0 / (n * n) as f64;
    for iz in range(params.z0, params.r_z, grid.origin_z, grid.nz) {
        let zc = grid.z(iz);
        for ix in range(params.x0, params.r_x, grid.origin_x, grid.nx) {
            let xc = grid.x(ix);
            let mut acc = 0.0;
            for dz in &offsets {
                for dx in &offsets {
                    acc += params.eval(xc + dx, zc + dz);
                }
            }
            img.data[iz * grid.nx + ix] = acc * norm;
        }
    }
    img
}

/// Transverse Laplacian ∇²φ computed spectrally.
pub fn spectral_laplacian(field: &ImageGrid) -> Result<ImageGrid> {
    let fft = field.spec.fft()?;
    let neg_k2: Vec<f64> = field.spec.k_squared().into_iter().map(|v| -v).collect();
    ImageGrid::new(field.spec, apply_multiplier(&fft, &field.data, &neg_k2))
}

/// Small-phase, small-defocus intensity I = 1 − (ξ/k)∇²(P∗φ), where P is
/// the Gaussian pupil exp(−η²κ²) of the full model. For η = 0 this is
/// I = 1 − (ξ/k)∇²φ.
pub fn linearized_image(phase: &ImageGrid, opt: &OpticsParams) -> Result<ImageGrid> {
    opt.validate()?;
    let fft = phase.spec.fft()?;
    let c = opt.xi / opt.k;
    let e2 = opt.eta * opt.eta;
    let mult: Vec<f64> = phase
        .spec
        .k_squared()
        .into_iter()
        .map(|k2| c * k2 * (-e2 * k2).exp())
        .collect();
    let data = apply_multiplier(&fft, &phase.data, &mult);
    ImageGrid::new(phase.spec, data.into_iter().map(|v| 1.0 + v).collect())
}

/// One plane-wave fringe a·cos(q·r + ϕ) in the illumination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fringe {
    pub amplitude: f64,
    /// Wavevector, rad/m.
    pub kx: f64,
    pub kz: f64,
    pub phase: f64,
}

impl Fringe {
    pub fn eval(&self, x: f64, z: f64) -> f64 {
        self.amplitude * (self.kx * x + self.kz * z + self.phase).cos()
    }
}

/// Two weak fringes commensurate with the default 128-pixel grid.
pub fn default_fringes(grid: &GridSpec) -> Vec<Fringe> {
    let span_x = grid.nx as f64 * grid.pitch;
    let span_z = grid.nz as f64 * grid.pitch;
    let tau = std::f64::consts::TAU;
    vec![
        Fringe {
            amplitude: 0.02,
            kx: tau * 9.0 / span_x,
            kz: tau * 4.0 / span_z,
            phase: 0.3,
        },
        Fringe {
            amplitude: 0.02,
            kx: -tau * 3.0 / span_x,
            kz: tau * 11.0 / span_z,
            phase: 1.7,
        },
    ]
}

/// Illumination pattern 1 + Σ fringes.
pub fn illumination(grid: &GridSpec, fringes: &[Fringe]) -> ImageGrid {
    ImageGrid::from_fn(*grid, |x, z| 1.0 + fringes.iter().map(|f| f.eval(x, z)).sum::<f64>())
}

/// Photon-noise model for [`make_reference`].
pub struct NoiseSpec<'a, R: Rng> {
    pub photons_per_pixel: f64,
    pub rng: &'a mut R,
}

/// Reference (no-atom) image: illumination fringes plus optional shot noise.
pub fn make_reference<R: Rng>(
    grid: &GridSpec,
    fringes: &[Fringe],
    noise: Option<NoiseSpec<'_, R>>,
) -> Result<ImageGrid> {
    let clean = illumination(grid, fringes);
    match noise {
        Some(n) => add_shot_noise(&clean, n.photons_per_pixel, n.rng),
        None => Ok(clean),
    }
}

/// Replaces each pixel with a Gaussian sample of mean I and standard
/// deviation √(I/N) for N photons per unit intensity per pixel.
pub fn add_shot_noise<R: Rng>(image: &ImageGrid, photons_per_pixel: f64, rng: &mut R) -> Result<ImageGrid> {
    if !(photons_per_pixel > 0.0 && photons_per_pixel.is_finite()) {
        return Err(Error::InvalidPhotonBudget(photons_per_pixel));
    }
    let inv = 1.0 / photons_per_pixel;
    Ok(ImageGrid {
        spec: image.spec,
        data: image
            .data
            .iter()
            .map(|&i| {
                let g: f64 = rng.sample(StandardNormal);
                i + (i.max(0.0) * inv).sqrt() * g
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::MICRON;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tf_phase_peak_boundary_and_interior() {
        let p = PhaseParams {
            phi0: -0.08,
            r_x: 20.0 * MICRON,
            r_z: 6.0 * MICRON,
            x0: 1.5 * MICRON,
            z0: -2.0 * MICRON,
        };
        assert_eq!(p.eval(p.x0, p.z0), p.phi0);
        assert_eq!(p.eval(p.x0 + p.r_x, p.z0), 0.0);
        assert_eq!(p.eval(p.x0, p.z0 - p.r_z), 0.0);
        let v = p.eval(p.x0 + p.r_x / 2f64.sqrt(), p.z0);
        assert!((v - p.phi0 * 0.5f64.powf(1.5)).abs() < 1e-15);
        // Continuous approaching the boundary.
        assert!(p.eval(p.x0 + p.r_x * (1.0 - 1e-9), p.z0).abs() < 1e-12);
    }

    #[test]
    fn tf_phase_grid_is_zero_away_from_ellipse() {
        let grid = GridSpec::square(64, PIXEL_PITCH);
        let p = PhaseParams::default();
        let img = tf_phase(&p, &grid);
        let h = grid.pitch / 2.0;
        for iz in 0..grid.nz {
            for ix in 0..grid.nx {
                let (x, z) = (grid.x(ix), grid.z(iz));
                if x.abs() - h >= p.r_x || z.abs() - h >= p.r_z {
                    assert_eq!(img.at(ix, iz), 0.0);
                }
            }
        }
        let c = img.at(32, 32);
        assert!(c < 0.0 && c > p.phi0);
    }

    #[test]
    fn tf_phase_integral_matches_closed_form() {
        // ∫∫(1 − ρ²)^{3/2} over the unit disk is 2π/5.
        let grid = GridSpec::square(64, PIXEL_PITCH);
        for p in [
            PhaseParams::default(),
            PhaseParams {
                x0: 2.1 * MICRON,
                z0: -1.7 * MICRON,
                r_z: 9.0 * MICRON,
                ..PhaseParams::default()
            },
        ] {
            let total = tf_phase(&p, &grid).sum() * grid.pixel_area();
            let exact = p.phi0 * 0.4 * std::f64::consts::PI * p.r_x * p.r_z;
            assert!(((total - exact) / exact).abs() < 2e-3, "{total} vs {exact}");
        }
    }

    #[test]
    fn tf_phase_tracks_subpixel_shift() {
        let grid = GridSpec::square(64, PIXEL_PITCH);
        for dz in [0.0, 0.2, 0.45] {
            let p = PhaseParams {
                z0: dz * grid.pitch,
                ..PhaseParams::default()
            };
            let img = tf_phase(&p, &grid);
            let (mut m, mut mz) = (0.0, 0.0);
            for iz in 0..grid.nz {
                for ix in 0..grid.nx {
                    m += img.at(ix, iz);
                    mz += img.at(ix, iz) * grid.z(iz);
                }
            }
            assert!((mz / m - p.z0).abs() < 0.01 * grid.pitch);
        }
    }

    #[test]
    fn linearized_zero_phase_is_flat() {
        let grid = GridSpec::square(32, PIXEL_PITCH);
        let img = linearized_image(&ImageGrid::filled(grid, 0.0), &OpticsParams::default()).unwrap();
        assert!(img.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn linearized_cosine_is_eigenfunction() {
        let grid = GridSpec::square(64, PIXEL_PITCH);
        let opt = OpticsParams::default();
        let q = std::f64::consts::TAU * 5.0 / (64.0 * PIXEL_PITCH);
        let phase = ImageGrid::from_fn(grid, |x, _| 0.01 * (q * x).cos());
        for eta in [0.0, opt.eta] {
            let img = linearized_image(&phase, &OpticsParams { eta, ..opt }).unwrap();
            let c = opt.xi / opt.k * q * q * (-eta * eta * q * q).exp();
            for (i, p) in img.data.iter().zip(&phase.data) {
                assert!((i - (1.0 + c * p)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn linearized_mean_is_one() {
        let grid = GridSpec::default();
        let img = linearized_image(&tf_phase(&PhaseParams::default(), &grid), &OpticsParams::default()).unwrap();
        assert!((img.mean() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reference_without_fringes_or_noise_is_flat() {
        let grid = GridSpec::square(32, PIXEL_PITCH);
        let r = make_reference::<ChaCha8Rng>(&grid, &[], None).unwrap();
        assert!(r.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn single_fringe_peak_to_peak() {
        let grid = GridSpec::square(64, PIXEL_PITCH);
        let f = Fringe {
            amplitude: 0.02,
            kx: std::f64::consts::TAU * 4.0 / (64.0 * PIXEL_PITCH),
            kz: 0.0,
            phase: 0.0,
        };
        let r = make_reference::<ChaCha8Rng>(&grid, &[f], None).unwrap();
        assert!((r.max() - r.min() - 0.04).abs() < 1e-12);
    }

    #[test]
    fn shot_noise_huge_budget_is_transparent() {
        let grid = GridSpec::square(32, PIXEL_PITCH);
        let img = linearized_image(&tf_phase(&PhaseParams::default(), &grid), &OpticsParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noisy = add_shot_noise(&img, 1e12, &mut rng).unwrap();
        for (a, b) in noisy.data.iter().zip(&img.data) {
            assert!((a - b).abs() <= 1e-5);
        }
    }

    #[test]
    fn shot_noise_std_matches_budget() {
        let grid = GridSpec::square(128, PIXEL_PITCH);
        let flat = ImageGrid::filled(grid, 1.0);
        let n_ph = 400.0;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noisy = add_shot_noise(&flat, n_ph, &mut rng).unwrap();
        let m = noisy.mean();
        let n = noisy.data.len() as f64;
        let var = noisy.data.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        let expect = 1.0 / n_ph.sqrt();
        // Standard error of a sample std for Gaussian data is σ/√(2(n−1)).
        let se = expect / (2.0 * (n - 1.0)).sqrt();
        assert!((var.sqrt() - expect).abs() < 3.0 * se, "std {}", var.sqrt());
    }

    #[test]
    fn shot_noise_is_seeded_and_validates_budget() {
        let flat = ImageGrid::filled(GridSpec::square(16, PIXEL_PITCH), 1.0);
        let a = add_shot_noise(&flat, 100.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = add_shot_noise(&flat, 100.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            add_shot_noise(&flat, 0.0, &mut rng),
            Err(Error::InvalidPhotonBudget(_))
        ));
        assert!(add_shot_noise(&flat, -5.0, &mut rng).is_err());
    }

    #[test]
    fn roll_shifts_cyclically() {
        let grid = GridSpec::square(4, 1.0);
        let img = ImageGrid::from_fn(grid, |x, z| x + 10.0 * z);
        let r = img.roll(1, 0);
        assert_eq!(r.at(1, 0), img.at(0, 0));
        assert_eq!(r.at(0, 0), img.at(3, 0));
    }
}
