//! Levenberg-Marquardt fit of the shadowgraph model to a single frame.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::Propagator;
use crate::optics::{tf_phase, ImageGrid, OpticsParams, PhaseParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Also fit the defocus ξ.
    pub fit_xi: bool,
    pub max_iter: usize,
    /// Stop when the relative decrease of the squared residual is below this.
    pub rel_tol: f64,
    /// Stop when every step is below this fraction of its parameter scale.
    pub step_tol: f64,
    /// Squared residual regarded as an exact fit.
    pub abs_tol: f64,
    /// Lower bound on both radii, m.
    pub min_radius: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            fit_xi: false,
            max_iter: 200,
            rel_tol: 1e-8,
            step_tol: 1e-6,
            abs_tol: 1e-26,
            min_radius: 0.1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: PhaseParams,
    pub xi: f64,
    /// Euclidean norm of the pixel residuals.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Problem<'a> {
    data: &'a ImageGrid,
    opt: OpticsParams,
    fixed: Option<Propagator>,
    fit_xi: bool,
}

impl Problem<'_> {
    fn unpack(&self, p: &[f64]) -> (PhaseParams, f64) {
        let phase = PhaseParams::from_array([p[0], p[1], p[2], p[3], p[4]]);
        let xi = if self.fit_xi { p[5] } else { self.opt.xi };
        (phase, xi)
    }

    fn residuals(&self, p: &[f64]) -> Result<DVector<f64>> {
        let (phase, xi) = self.unpack(p);
        let field = tf_phase(&phase, &self.data.spec);
        let img = match &self.fixed {
            Some(prop) => prop.render(&field)?,
            None => Propagator::new(&self.data.spec, &OpticsParams { xi, ..self.opt })?.render(&field)?,
        };
        Ok(DVector::from_iterator(
            img.data.len(),
            img.data.iter().zip(&self.data.data).map(|(m, d)| m - d),
        ))
    }

    fn jacobian(&self, p: &[f64], scale: &[f64]) -> Result<DMatrix<f64>> {
        let mut cols = Vec::with_capacity(p.len());
        for j in 0..p.len() {
            let h = 1e-6 * scale[j];
            let mut hi = p.to_vec();
            let mut lo = p.to_vec();
            hi[j] += h;
            lo[j] -= h;
            cols.push((self.residuals(&hi)? - self.residuals(&lo)?) / (2.0 * h));
        }
        Ok(DMatrix::from_columns(&cols))
    }
}

fn project(p: &mut [f64], o: &FitOptions) {
    p[1] = p[1].max(o.min_radius);
    p[2] = p[2].max(o.min_radius);
    if p.len() > 5 {
        p[5] = p[5].max(0.0);
    }
}

/// Fits (φ₀, R_x, R_z, x₀, z₀), and ξ if requested, to `image`. A fit that
/// exhausts its iterations or cannot reduce the residual returns
/// `converged: false`.
pub fn fit_shadowgraph(image: &ImageGrid, init: &PhaseParams, opt: &OpticsParams, o: &FitOptions) -> Result<FitResult> {
    opt.validate()?;
    if !(init.r_x > 0.0 && init.r_z > 0.0) {
        return Err(Error::InvalidParameter("initial radii must be positive".into()));
    }
    let problem = Problem {
        data: image,
        opt: *opt,
        fixed: if o.fit_xi {
            None
        } else {
            Some(Propagator::new(&image.spec, opt)?)
        },
        fit_xi: o.fit_xi,
    };
    let mut p: Vec<f64> = init.to_array().to_vec();
    if o.fit_xi {
        p.push(opt.xi);
    }
    let pitch = image.spec.pitch;
    let mut scale = vec![init.phi0.abs().max(1e-3), init.r_x, init.r_z, pitch, pitch];
    if o.fit_xi {
        scale.push(opt.xi.max(100e-6));
    }

    let mut r = problem.residuals(&p)?;
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = cost <= o.abs_tol;
    let mut iterations = 0;
    while !converged && iterations < o.max_iter {
        iterations += 1;
        let jac = problem.jacobian(&p, &scale)?;
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = a.clone();
            for i in 0..p.len() {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-30);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let mut trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            project(&mut trial, o);
            let r_new = problem.residuals(&trial)?;
            let cost_new = r_new.norm_squared();
            if cost_new < cost {
                let small_step = trial
                    .iter()
                    .zip(&p)
                    .zip(&scale)
                    .all(|((t, q), s)| (t - q).abs() < o.step_tol * s);
                let small_change = (cost - cost_new) / cost < o.rel_tol;
                p = trial;
                r = r_new;
                cost = cost_new;
                lambda = (lambda / 3.0).max(1e-12);
                converged = small_step || small_change || cost <= o.abs_tol;
                accepted = true;
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    let (params, xi) = problem.unpack(&p);
    Ok(FitResult {
        params,
        xi,
        residual_norm: cost.sqrt(),
        iterations,
        converged,
    })
}
