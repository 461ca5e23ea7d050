//! Real-time in-situ estimation: intensity frame → density estimate →
//! sixth-power filter → moments → low-pass filtered measurement vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{GridSpec, ImageGrid};
use crate::spectral::{apply_multiplier, Fft2d};

/// In-situ estimates of the horizontal and vertical centers and widths.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub x_hat: f64,
    pub z_hat: f64,
    /// Filtered-units x width (σ/√6 for a Gaussian cloud).
    pub w_hat: f64,
    /// Vertical width; computed but never fed back.
    pub w_z_hat: f64,
    pub t: f64,
}

impl MeasurementVector {
    /// The fed-back components (x̂, ẑ, ŵ_x).
    pub fn feedback_vector(&self) -> [f64; 3] {
        [self.x_hat, self.z_hat, self.w_hat]
    }
}

/// Pixels where atoms may appear, and a disjoint atom-free background.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub spec: GridSpec,
    pub atoms: Vec<bool>,
    pub background: Vec<bool>,
}

impl RegionMask {
    pub fn new(spec: GridSpec, atoms: Vec<bool>, background: Vec<bool>) -> Result<Self> {
        if atoms.len() != spec.len() || background.len() != spec.len() {
            return Err(Error::GridMismatch("mask size differs from grid".into()));
        }
        if atoms.iter().zip(&background).any(|(a, b)| *a && *b) {
            return Err(Error::InvalidParameter("atom and background regions overlap".into()));
        }
        if !atoms.iter().any(|&a| a) || !background.iter().any(|&b| b) {
            return Err(Error::InvalidParameter("mask regions must be nonempty".into()));
        }
        Ok(Self {
            spec,
            atoms,
            background,
        })
    }

    /// Background is the outer `frac` margin of the frame on every side; the
    /// atom region is everything inside it.
    pub fn with_margin(spec: GridSpec, frac: f64) -> Result<Self> {
        let mx = ((spec.nx as f64 * frac).round() as usize).max(1);
        let mz = ((spec.nz as f64 * frac).round() as usize).max(1);
        let mut atoms = vec![false; spec.len()];
        let mut background = vec![false; spec.len()];
        for iz in 0..spec.nz {
            for ix in 0..spec.nx {
                let edge = ix < mx || ix >= spec.nx.saturating_sub(mx) || iz < mz || iz >= spec.nz.saturating_sub(mz);
                let i = iz * spec.nx + ix;
                background[i] = edge;
                atoms[i] = !edge;
            }
        }
        Self::new(spec, atoms, background)
    }

    /// Background as in [`RegionMask::with_margin`]; the atom region is
    /// restricted to |x − x_c| ≤ `half_x`, |z − z_c| ≤ `half_z` inside it.
    pub fn boxed(spec: GridSpec, frac: f64, center: (f64, f64), half_x: f64, half_z: f64) -> Result<Self> {
        let mut mask = Self::with_margin(spec, frac)?;
        for iz in 0..spec.nz {
            for ix in 0..spec.nx {
                let inside = (spec.x(ix) - center.0).abs() <= half_x && (spec.z(iz) - center.1).abs() <= half_z;
                mask.atoms[iz * spec.nx + ix] &= inside;
            }
        }
        Self::new(spec, mask.atoms, mask.background)
    }
}

/// Regularized inverse-Laplacian kernel 1/(k_x²+k_z²) with the DC bin set
/// to zero.
#[derive(Debug, Clone)]
pub struct InverseLaplacian {
    spec: GridSpec,
    fft: Fft2d,
    kernel: Vec<f64>,
}

impl InverseLaplacian {
    pub fn new(spec: &GridSpec) -> Result<Self> {
        let fft = spec.fft()?;
        let kernel = spec
            .k_squared()
            .into_iter()
            .map(|k2| if k2 == 0.0 { 0.0 } else { 1.0 / k2 })
            .collect();
        Ok(Self {
            spec: *spec,
            fft,
            kernel,
        })
    }

    /// Unscaled density estimate (units of m²) with the background-region mean
    /// removed.
    pub fn estimate(&self, i_n: &ImageGrid, i_0: &ImageGrid, mask: &RegionMask) -> Result<ImageGrid> {
        i_n.check_same_grid(i_0)?;
        if i_n.spec.nx != self.spec.nx || i_n.spec.nz != self.spec.nz || mask.atoms.len() != i_n.data.len() {
            return Err(Error::GridMismatch("frame does not match estimator grid".into()));
        }
        if let Some(bad) = i_0.data.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NonPositiveReference(bad));
        }
        let contrast: Vec<f64> = i_n.data.iter().zip(&i_0.data).map(|(n, r)| n / r - 1.0).collect();
        let mut rho = apply_multiplier(&self.fft, &contrast, &self.kernel);
        let (sum, count) = rho
            .iter()
            .zip(&mask.background)
            .filter(|(_, &b)| b)
            .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
        let offset = sum / count as f64;
        for v in &mut rho {
            *v -= offset;
        }
        ImageGrid::new(i_n.spec, rho)
    }
}

/// ρ̂ ∝ ∇⁻²[I_n/I_0 − 1] with DC regularization and background offset
/// removal.
pub fn density_estimate(i_n: &ImageGrid, i_0: &ImageGrid, mask: &RegionMask) -> Result<ImageGrid> {
    InverseLaplacian::new(&i_n.spec)?.estimate(i_n, i_0, mask)
}

/// Pointwise sixth power.
pub fn nonlinear_filter(rho: &ImageGrid) -> ImageGrid {
    rho.map(|v| {
        let v2 = v * v;
        v2 * v2 * v2
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Z,
}

/// Weighted first and central second moments over the atom region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMoments {
    pub mass: f64,
    pub mean_x: f64,
    pub mean_z: f64,
    pub var_x: f64,
    pub var_z: f64,
}

impl FrameMoments {
    pub fn width_x(&self) -> f64 {
        self.var_x.max(0.0).sqrt()
    }

    pub fn width_z(&self) -> f64 {
        self.var_z.max(0.0).sqrt()
    }
}

/// Moments of `weights` restricted to the mask's atom region. Fails with
/// [`Error::DegenerateFrame`] when |Σ weights| does not exceed `floor`.
pub fn frame_moments(weights: &ImageGrid, mask: &RegionMask, floor: f64) -> Result<FrameMoments> {
    let spec = weights.spec;
    if mask.atoms.len() != weights.data.len() {
        return Err(Error::GridMismatch("mask size differs from frame".into()));
    }
    let xs = spec.xs();
    // Accumulate about the grid origin to limit cancellation.
    let (mut m0, mut mx, mut mz, mut mxx, mut mzz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for iz in 0..spec.nz {
        let z = spec.z(iz) - spec.origin_z;
        let row = &weights.data[iz * spec.nx..(iz + 1) * spec.nx];
        let rmask = &mask.atoms[iz * spec.nx..(iz + 1) * spec.nx];
        for ((&w, &inside), &x) in row.iter().zip(rmask).zip(&xs) {
            if inside {
                let x = x - spec.origin_x;
                m0 += w;
                mx += w * x;
                mz += w * z;
                mxx += w * x * x;
                mzz += w * z * z;
            }
        }
    }
    if !(m0.abs() > floor) || !m0.is_finite() {
        return Err(Error::DegenerateFrame { mass: m0, floor });
    }
    let (ex, ez) = (mx / m0, mz / m0);
    Ok(FrameMoments {
        mass: m0,
        mean_x: spec.origin_x + ex,
        mean_z: spec.origin_z + ez,
        var_x: mxx / m0 - ex * ex,
        var_z: mzz / m0 - ez * ez,
    })
}

/// Raw moment ⟨r^k⟩ along one axis over the atom region.
pub fn moment(weights: &ImageGrid, mask: &RegionMask, axis: Axis, k: i32, floor: f64) -> Result<f64> {
    let spec = weights.spec;
    let (mut num, mut den) = (0.0, 0.0);
    for iz in 0..spec.nz {
        for ix in 0..spec.nx {
            let i = iz * spec.nx + ix;
            if mask.atoms[i] {
                let r = match axis {
                    Axis::X => spec.x(ix),
                    Axis::Z => spec.z(iz),
                };
                num += weights.data[i] * r.powi(k);
                den += weights.data[i];
            }
        }
    }
    if !(den.abs() > floor) {
        return Err(Error::DegenerateFrame { mass: den, floor });
    }
    Ok(num / den)
}

/// Discrete first-order low-pass y_n = α·u_n + (1−α)·y_{n−1} with
/// α = 1 − exp(−2π f_c τ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowPass {
    pub cutoff: f64,
    pub sample_period: f64,
    alpha: f64,
    y: f64,
}

impl LowPass {
    /// Starts from rest (output 0).
    pub fn new(cutoff: f64, sample_period: f64) -> Self {
        assert!(
            cutoff > 0.0 && sample_period > 0.0,
            "cutoff and sample period must be positive"
        );
        Self {
            cutoff,
            sample_period,
            alpha: 1.0 - (-std::f64::consts::TAU * cutoff * sample_period).exp(),
            y: 0.0,
        }
    }

    pub fn primed(cutoff: f64, sample_period: f64, initial: f64) -> Self {
        Self {
            y: initial,
            ..Self::new(cutoff, sample_period)
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn output(&self) -> f64 {
        self.y
    }

    pub fn update(&mut self, u: f64) -> f64 {
        self.y += self.alpha * (u - self.y);
        self.y
    }
}

/// Per-sample difference m_i − m_{i−1}. The controller gain absorbs 1/τ.
pub fn finite_difference(m_i: &[f64; 3], m_prev: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|k| m_i[k] - m_prev[k])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Width of the background frame margin as a fraction of each side.
    pub background_margin: f64,
    /// Half-widths (x, z) of the atom region about the grid origin, m.
    /// `None` uses everything inside the background margin.
    pub atom_box: Option<(f64, f64)>,
    /// Cutoffs of the x̂ and ŵ_x low-pass filters, Hz. `None` disables.
    pub x_cutoff: Option<f64>,
    pub w_cutoff: Option<f64>,
    /// Multiplies ρ̂ before filtering; k/ξ puts ρ̂ in units of phase.
    pub density_scale: f64,
    /// Minimum |Σρ̂⁶| over the atom region for a usable frame.
    pub mass_floor: f64,
    pub sample_period: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let opt = crate::optics::OpticsParams::default();
        Self {
            background_margin: 0.15,
            atom_box: Some((40e-6, 20e-6)),
            x_cutoff: Some(60.0),
            w_cutoff: Some(100.0),
            density_scale: opt.k / opt.xi,
            mass_floor: 1e-14,
            sample_period: crate::constants::SAMPLE_PERIOD,
        }
    }
}

/// Output of one pipeline step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOutput {
    /// Low-pass filtered measurement handed to the controller.
    pub filtered: MeasurementVector,
    /// Unfiltered moments of this frame (or the held values if degenerate).
    pub raw: MeasurementVector,
    pub degenerate: bool,
}

/// Stateful in-situ pipeline for one loop.
#[derive(Debug, Clone)]
pub struct InSituEstimator {
    cfg: EstimatorConfig,
    inverse: InverseLaplacian,
    mask: RegionMask,
    reference: ImageGrid,
    lp_x: Option<LowPass>,
    lp_w: Option<LowPass>,
    last: Option<EstimatorOutput>,
}

impl InSituEstimator {
    pub fn new(cfg: EstimatorConfig, reference: ImageGrid) -> Result<Self> {
        let spec = reference.spec;
        let mask = match cfg.atom_box {
            Some((hx, hz)) => RegionMask::boxed(spec, cfg.background_margin, (spec.origin_x, spec.origin_z), hx, hz)?,
            None => RegionMask::with_margin(spec, cfg.background_margin)?,
        };
        Self::with_mask(cfg, reference, mask)
    }

    pub fn with_mask(cfg: EstimatorConfig, reference: ImageGrid, mask: RegionMask) -> Result<Self> {
        if let Some(bad) = reference.data.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NonPositiveReference(bad));
        }
        Ok(Self {
            cfg,
            inverse: InverseLaplacian::new(&reference.spec)?,
            mask,
            reference,
            lp_x: None,
            lp_w: None,
            last: None,
        })
    }

    pub fn mask(&self) -> &RegionMask {
        &self.mask
    }

    /// Scaled density estimate ρ̂ for a frame.
    pub fn density(&self, frame: &ImageGrid) -> Result<ImageGrid> {
        let rho = self.inverse.estimate(frame, &self.reference, &self.mask)?;
        let s = self.cfg.density_scale;
        Ok(rho.map(|v| v * s))
    }

    /// Moments of the filtered density, without touching filter state.
    pub fn frame_moments(&self, frame: &ImageGrid) -> Result<FrameMoments> {
        let rho6 = nonlinear_filter(&self.density(frame)?);
        frame_moments(&rho6, &self.mask, self.cfg.mass_floor)
    }

    /// Processes one frame. A degenerate frame holds the previous output and
    /// is flagged; a degenerate first frame is an error.
    pub fn process(&mut self, frame: &ImageGrid, t: f64) -> Result<EstimatorOutput> {
        let moments = match self.frame_moments(frame) {
            Ok(m) => m,
            Err(e @ Error::DegenerateFrame { .. }) => {
                let prev = self.last.ok_or(e)?;
                let mut held = prev;
                held.filtered.t = t;
                held.raw.t = t;
                held.degenerate = true;
                self.last = Some(held);
                return Ok(held);
            }
            Err(e) => return Err(e),
        };
        let raw = MeasurementVector {
            x_hat: moments.mean_x,
            z_hat: moments.mean_z,
            w_hat: moments.width_x(),
            w_z_hat: moments.width_z(),
            t,
        };
        let tau = self.cfg.sample_period;
        let x_hat = match self.cfg.x_cutoff {
            Some(fc) => self
                .lp_x
                .get_or_insert_with(|| LowPass::primed(fc, tau, raw.x_hat))
                .update(raw.x_hat),
            None => raw.x_hat,
        };
        let w_hat = match self.cfg.w_cutoff {
            Some(fc) => self
                .lp_w
                .get_or_insert_with(|| LowPass::primed(fc, tau, raw.w_hat))
                .update(raw.w_hat),
            None => raw.w_hat,
        };
        let out = EstimatorOutput {
            filtered: MeasurementVector { x_hat, w_hat, ..raw },
            raw,
            degenerate: false,
        };
        self.last = Some(out);
        Ok(out)
    }
}
