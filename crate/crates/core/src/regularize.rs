//! Regularization of Lipschitz functionals.
//!
//! * Inf-sup (Lasry–Lions) convolution
//!   `f_n(x) = sup_z { inf_y [f(y) + n|z-y|²/2] - n|x-z|² }`, which keeps the
//!   sup bound and Lipschitz constant of `f` and converges pointwise as
//!   `n → ∞`.
//! * Gaussian mollification on the leading `n` coordinates, used for costs
//!   that live naturally in the sup norm.
//!
//! The inner infimum is attained within `2·lip/n` of `z` and the outer
//! supremum within `lip/(2n)` of `x`, so both problems are solved on balls of
//! those radii.

use std::cell::Cell;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::cost::Functional;
use crate::error::{Error, Result};
use crate::exec;
use crate::semigroup::{gaussian_moments, EstimateWithError, McConfig};
use crate::spectral::SpectralVector;

pub const MULTI_STARTS: usize = 8;
pub const ITERATION_CAP: usize = 10_000;
pub const STEP_TOLERANCE: f64 = 1e-8;

type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Lipschitz functional on `ℝ^d` with declared constants and a compact box
/// used by numerical optimization.
#[derive(Clone)]
pub struct LipschitzFn {
    eval: EvalFn,
    pub lip: f64,
    pub bound: f64,
    pub domain_box: (Vec<f64>, Vec<f64>),
}

impl std::fmt::Debug for LipschitzFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LipschitzFn")
            .field("lip", &self.lip)
            .field("bound", &self.bound)
            .field("domain_box", &self.domain_box)
            .finish()
    }
}

impl LipschitzFn {
    pub fn new<F>(f: F, lip: f64, bound: f64, domain_box: (Vec<f64>, Vec<f64>)) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            eval: Arc::new(f),
            lip,
            bound,
            domain_box,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain_box.0.len()
    }

    /// Whether `x` lies in the domain box inflated by `margin`.
    pub fn contains(&self, x: &[f64], margin: f64) -> bool {
        let (lo, hi) = &self.domain_box;
        x.len() == lo.len()
            && x.iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v >= l - margin && *v <= h + margin)
    }
}

impl Functional for LipschitzFn {
    fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }
    fn lipschitz(&self) -> f64 {
        self.lip
    }
    fn bound(&self) -> f64 {
        self.bound
    }
}

/// Result of a numerical inf-sup evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfSupValue {
    pub value: f64,
    /// Bound on the error left by the final mesh of the optimizers.
    pub gap: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Optimum {
    pub(crate) point: Vec<f64>,
    pub(crate) value: f64,
    pub(crate) step: f64,
    pub(crate) converged: bool,
}

pub(crate) fn project_ball(p: &mut [f64], center: &[f64], radius: f64) {
    let d: f64 = p.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
    if d > radius {
        let s = radius / d;
        for (a, c) in p.iter_mut().zip(center) {
            *a = c + (*a - c) * s;
        }
    }
}

/// Deterministic start points inside the ball.
pub(crate) fn start_pattern(center: &[f64], radius: f64) -> Vec<Vec<f64>> {
    let d = center.len();
    let mut starts = vec![center.to_vec()];
    let fractions = [0.5, -0.5, 0.9, -0.9, 0.25, -0.25, 0.75, -0.75];
    let mut i = 0;
    while starts.len() < MULTI_STARTS {
        let axis = i % d;
        let frac = fractions[(i / d) % fractions.len()];
        let mut p = center.to_vec();
        p[axis] += frac * radius;
        // rotate a second axis in for d ≥ 2 so starts are not collinear
        if d > 1 && i >= d {
            p[(axis + 1) % d] += 0.5 * frac * radius;
        }
        project_ball(&mut p, center, radius);
        starts.push(p);
        i += 1;
    }
    starts
}

/// Compass search for `min φ` on a ball.
pub(crate) fn compass_minimize<F: Fn(&[f64]) -> f64>(
    phi: &F,
    start: Vec<f64>,
    center: &[f64],
    radius: f64,
    initial_step: f64,
) -> Optimum {
    let tol = STEP_TOLERANCE * radius.clamp(STEP_TOLERANCE, 1.0);
    let mut x = start;
    let mut fx = phi(&x);
    let mut step = initial_step.max(tol);
    let d = x.len();
    let mut trial = x.clone();
    for _ in 0..ITERATION_CAP {
        if step < tol {
            return Optimum {
                point: x,
                value: fx,
                step,
                converged: true,
            };
        }
        let mut improved = false;
        'dirs: for axis in 0..d {
            for sign in [1.0, -1.0] {
                trial.copy_from_slice(&x);
                trial[axis] += sign * step;
                project_ball(&mut trial, center, radius);
                let ft = phi(&trial);
                // forcing term ~ step² stops endless sliding along the boundary
                let rel = step / radius.max(1e-300);
                let forcing = (1e-6 * rel * rel).max(8.0 * f64::EPSILON) * (1.0 + fx.abs());
                if ft < fx - forcing {
                    x.copy_from_slice(&trial);
                    fx = ft;
                    improved = true;
                    break 'dirs;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Optimum {
        point: x,
        value: fx,
        step,
        converged: false,
    }
}

fn multistart_minimize<F: Fn(&[f64]) -> f64>(phi: &F, center: &[f64], radius: f64) -> Optimum {
    start_pattern(center, radius)
        .into_iter()
        .map(|s| compass_minimize(phi, s, center, radius, 0.25 * radius))
        .fold(None::<Optimum>, |best, o| match best {
            Some(b) if b.value <= o.value => Some(b),
            _ => Some(o),
        })
        .expect("at least one start")
}

/// Moreau envelope `inf_y f(y) + n|z-y|²/2` and its minimizer.
pub fn moreau_envelope(f: &dyn Functional, n: f64, z: &[f64]) -> (f64, Vec<f64>) {
    let o = moreau_inner(f, n, z);
    (o.value, o.point)
}

fn moreau_inner(f: &dyn Functional, n: f64, z: &[f64]) -> Optimum {
    let radius = (2.0 * f.lipschitz() / n).max(1e-12) * 1.05;
    let phi = |y: &[f64]| {
        let d2: f64 = y.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
        f.eval(y) + 0.5 * n * d2
    };
    multistart_minimize(&phi, z, radius)
}

/// Inf-sup convolution of any functional with finite Lipschitz constant.
/// Never fails; convergence is reported in the result.
pub fn infsup_value(f: &dyn Functional, n: f64, x: &[f64]) -> InfSupValue {
    let lip = f.lipschitz();
    if lip == 0.0 {
        return InfSupValue {
            value: f.eval(x),
            gap: 0.0,
            converged: true,
        };
    }
    let radius = (lip / (2.0 * n)) * 1.05 + 1e-12;
    let d = x.len();
    let converged = Cell::new(true);
    let inner_gap = Cell::new(0.0_f64);
    let h_eval = |z: &[f64]| -> (f64, Vec<f64>) {
        let o = moreau_inner(f, n, z);
        converged.set(converged.get() && o.converged);
        inner_gap.set(inner_gap.get().max(o.step * (lip + n * o.step) * (d as f64).sqrt()));
        let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
        (o.value - n * d2, o.point)
    };

    // projected supergradient ascent with backtracking; h is n-strongly concave
    let mut z = x.to_vec();
    let (mut hz, mut y) = h_eval(&z);
    let mut eta = 1.0 / (3.0 * n);
    let mut iters = 0;
    while iters < 200 && eta * n > 1e-10 {
        iters += 1;
        let grad: Vec<f64> = (0..d).map(|i| n * (z[i] - y[i]) - 2.0 * n * (z[i] - x[i])).collect();
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm * eta < STEP_TOLERANCE * radius.min(1.0) {
            break;
        }
        let mut cand: Vec<f64> = z.iter().zip(&grad).map(|(a, g)| a + eta * g).collect();
        project_ball(&mut cand, x, radius);
        let (hc, yc) = h_eval(&cand);
        if hc > hz {
            z = cand;
            hz = hc;
            y = yc;
        } else {
            eta *= 0.5;
        }
    }
    // polish with a compass search on -h
    let neg_h = |p: &[f64]| -h_eval(p).0;
    let polish = compass_minimize(&neg_h, z, x, radius, 0.05 * radius);
    let value = (-polish.value).max(hz);
    let outer_gap = polish.step * (lip + 3.0 * n * polish.step) * (d as f64).sqrt();
    let bound = f.bound();
    InfSupValue {
        value: if bound.is_finite() {
            value.clamp(-bound, bound)
        } else {
            value
        },
        gap: inner_gap.get() + outer_gap,
        converged: converged.get() && polish.converged,
    }
}

/// Inf-sup convolution `f_n(x)` of a Lipschitz function.
pub fn infsup_convolve(f: &LipschitzFn, n: usize, x: &[f64]) -> Result<f64> {
    infsup_convolve_detailed(f, n, x).map(|v| v.value)
}

pub fn infsup_convolve_detailed(f: &LipschitzFn, n: usize, x: &[f64]) -> Result<InfSupValue> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    if x.len() != f.dim() {
        return Err(Error::Dimension {
            expected: f.dim(),
            got: x.len(),
        });
    }
    if !f.lip.is_finite() || f.lip < 0.0 {
        return Err(Error::InvalidInput("declared Lipschitz constant must be finite".into()));
    }
    let margin = 2.0 * f.lip / n as f64;
    if !f.contains(x, margin) {
        return Err(Error::InvalidInput(format!(
            "point lies outside the domain box inflated by {margin}"
        )));
    }
    let v = infsup_value(f, n as f64, x);
    if !v.converged {
        return Err(Error::OptimizerCap {
            best: v.value,
            gap: v.gap,
        });
    }
    Ok(v)
}

/// Standard normal samples scaled by `1/n`, row-major `samples × dim`.
pub fn mollifier_samples(n: usize, dim: usize, samples: usize, seed: u64) -> Vec<f64> {
    let mut out = vec![0.0; samples * dim];
    exec::for_each_chunk_mut(&mut out, dim, |c, chunk| {
        let mut rng = exec::chunk_rng(seed, c);
        for v in chunk.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = g / n as f64;
        }
    });
    out
}

/// Average of `f(Σ_{i<dim} (x_i + s_i) e_i)` over a fixed table of shifts.
pub fn mollified_mean(f: &dyn Functional, dim: usize, shifts: &[f64], x: &[f64]) -> f64 {
    let n = dim;
    let mut y = vec![0.0; x.len()];
    let vals: Vec<f64> = shifts
        .chunks_exact(n)
        .map(|s| {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = if i < n { x[i] + s[i] } else { 0.0 };
            }
            f.eval(&y)
        })
        .collect();
    exec::pairwise_sum(&vals) / vals.len() as f64
}

/// Monte Carlo estimate of the mollified projection
/// `∫ ρ_n(y - Q_n x) f(Σ_{i<n} y_i e_i) dy` with `ρ_n` a centered Gaussian of
/// per-coordinate standard deviation `1/n`. For `n` at or beyond the
/// truncation `Q_n` is the identity.
pub fn smooth_project(f: &dyn Functional, n: usize, x: &SpectralVector, mc: &McConfig) -> Result<EstimateWithError> {
    let dim = x.len();
    if n == 0 {
        return Err(Error::InvalidInput("projection index must be at least 1".into()));
    }
    let scale = 1.0 / n as f64;
    let k = n.min(dim);
    let m = gaussian_moments(mc, k, 1, |g, out| {
        let mut y = vec![0.0; dim];
        for i in 0..k {
            y[i] = x.coeffs[i] + scale * g[i];
        }
        out[0] = f.eval(&y);
        true
    })?;
    let mut e = EstimateWithError {
        value: m[0].mean,
        std_error: m[0].std_error(),
        n_samples: mc.n_samples,
    };
    let b = f.bound();
    if b.is_finite() {
        e.value = e.value.clamp(-b, b);
    }
    Ok(e)
}
