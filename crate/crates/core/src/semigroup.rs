//! Monte Carlo evaluation of the Ornstein–Uhlenbeck transition semigroup
//! `P_τ[f](x) = E f(e^{τΛ}x + L g)` and of its derivative along `Mξ`.
//!
//! The derivative uses the Gaussian integration-by-parts weight
//! `⟨L^{-1} e^{τΛ} M ξ, g⟩`, so `f` only needs to be bounded and measurable.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cost::Functional;
use crate::error::{Error, Result};
use crate::exec::{self, Moments, CHUNK};
use crate::spectral::{covariance, gradient_weight_matrix, propagate, OUModel, SpectralVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
}

impl McConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            antithetic: false,
        }
    }

    pub fn antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::InvalidInput("n_samples must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl EstimateWithError {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
            n_samples: 0,
        }
    }

    fn from_moments(m: &Moments, n_samples: usize) -> Self {
        Self {
            value: m.mean,
            std_error: m.std_error(),
            n_samples,
        }
    }

    /// `|self - other| ≤ k·√(se₁² + se₂²) + slack`.
    pub fn agrees_with(&self, other: f64, other_se: f64, k: f64, slack: f64) -> bool {
        (self.value - other).abs() <= k * self.std_error.hypot(other_se) + slack
    }
}

/// Runs `f` on standard normal vectors of dimension `dim` and returns the
/// moments of each of its `n_out` outputs. `f` returns `false` to reject a
/// sample (non-finite value). With antithetic sampling each unit is the
/// average over `g` and `-g`, and `n_samples / 2` units are drawn.
pub fn gaussian_moments<F>(mc: &McConfig, dim: usize, n_out: usize, f: F) -> Result<Vec<Moments>>
where
    F: Fn(&[f64], &mut [f64]) -> bool + Sync + Send,
{
    mc.validate()?;
    let units = if mc.antithetic { mc.n_samples / 2 } else { mc.n_samples };
    let chunks = exec::n_chunks(units);
    let partial = exec::map_chunks(chunks, |c| {
        let mut rng = exec::chunk_rng(mc.seed, c);
        let start = c * CHUNK;
        let end = (start + CHUNK).min(units);
        let mut g = vec![0.0; dim];
        let mut neg = vec![0.0; dim];
        let mut out = vec![0.0; n_out];
        let mut out2 = vec![0.0; n_out];
        let mut acc = vec![Moments::default(); n_out];
        let mut rejected = 0u64;
        for _ in start..end {
            for v in g.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let mut ok = f(&g, &mut out) && out.iter().all(|v| v.is_finite());
            if mc.antithetic {
                for (n, v) in neg.iter_mut().zip(&g) {
                    *n = -v;
                }
                ok &= f(&neg, &mut out2) && out2.iter().all(|v| v.is_finite());
                for (o, o2) in out.iter_mut().zip(&out2) {
                    *o = 0.5 * (*o + o2);
                }
            }
            if ok {
                for (a, v) in acc.iter_mut().zip(&out) {
                    a.push(*v);
                }
            } else {
                rejected += 1;
            }
        }
        (acc, rejected)
    });
    let rejected: u64 = partial.iter().map(|p| p.1).sum();
    if rejected as f64 > 1e-3 * units as f64 {
        return Err(Error::NonFinite {
            rejected,
            total: units as u64,
        });
    }
    let per_output: Vec<Moments> = (0..n_out)
        .map(|o| exec::pairwise_reduce(partial.iter().map(|p| p.0[o]).collect(), Moments::merge).unwrap_or_default())
        .collect();
    Ok(per_output)
}

fn clamp_error(mut e: EstimateWithError, bound: f64) -> EstimateWithError {
    // a variable bounded by B has standard deviation at most B
    if bound.is_finite() && e.n_samples > 0 {
        e.std_error = e.std_error.min(bound / (e.n_samples as f64).sqrt());
    }
    e
}

/// Monte Carlo estimate of `P_τ[f](x)`.
pub fn semigroup_apply(
    model: &OUModel,
    f: &dyn Functional,
    tau: f64,
    x: &SpectralVector,
    mc: &McConfig,
) -> Result<EstimateWithError> {
    model.check_dim(x.len())?;
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
    }
    let cov = covariance(model, tau)?;
    let mean = propagate(model, tau, x)?.coeffs;
    let n = model.n_modes;
    let m = gaussian_moments(mc, n, 1, |g, out| {
        let mut y = vec![0.0; n];
        cov.apply_chol(g, &mut y);
        for (yi, mi) in y.iter_mut().zip(&mean) {
            *yi += mi;
        }
        out[0] = f.eval(&y);
        true
    })?;
    Ok(clamp_error(
        EstimateWithError::from_moments(&m[0], mc.n_samples),
        f.bound(),
    ))
}

/// `P_τ[f](x)`, or `f(x)` when `τ = 0`.
pub fn semigroup_apply_or_eval(
    model: &OUModel,
    f: &dyn Functional,
    tau: f64,
    x: &SpectralVector,
    mc: &McConfig,
) -> Result<EstimateWithError> {
    if tau == 0.0 {
        model.check_dim(x.len())?;
        Ok(EstimateWithError::exact(f.eval(&x.coeffs)))
    } else {
        semigroup_apply(model, f, tau, x, mc)
    }
}

/// Estimates of `⟨∇^B P_τ[f](x), ξ⟩` for several directions sharing one
/// sample set.
pub fn b_gradient_directions(
    model: &OUModel,
    f: &dyn Functional,
    tau: f64,
    x: &SpectralVector,
    directions: &[SpectralVector],
    mc: &McConfig,
) -> Result<Vec<EstimateWithError>> {
    model.check_dim(x.len())?;
    for d in directions {
        model.check_dim(d.len())?;
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
    }
    let n = model.n_modes;
    let cov = covariance(model, tau)?;
    let mean = propagate(model, tau, x)?.coeffs;
    let wm = gradient_weight_matrix(model, &cov);
    let weights: Vec<Vec<f64>> = directions
        .iter()
        .map(|d| {
            (&wm * nalgebra::DVector::from_column_slice(&d.coeffs))
                .as_slice()
                .to_vec()
        })
        .collect();
    let k = directions.len();
    let m = gaussian_moments(mc, n, k, |g, out| {
        let mut y = vec![0.0; n];
        cov.apply_chol(g, &mut y);
        for (yi, mi) in y.iter_mut().zip(&mean) {
            *yi += mi;
        }
        let fy = f.eval(&y);
        for (o, w) in out.iter_mut().zip(&weights) {
            *o = fy * crate::spectral::dot(w, g);
        }
        true
    })?;
    Ok(m.iter()
        .map(|mm| EstimateWithError::from_moments(mm, mc.n_samples))
        .collect())
}

/// Estimate of `⟨∇^B P_τ[f](x), ξ⟩`.
pub fn b_gradient_semigroup(
    model: &OUModel,
    f: &dyn Functional,
    tau: f64,
    x: &SpectralVector,
    xi: &SpectralVector,
    mc: &McConfig,
) -> Result<EstimateWithError> {
    Ok(b_gradient_directions(model, f, tau, x, std::slice::from_ref(xi), mc)?[0])
}
