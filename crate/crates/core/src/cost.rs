//! Cost functionals on the truncated state space.
//!
//! [`CostSpec`] is the serializable description used in configs and persisted
//! estimates; [`Cost`] is its compiled, evaluable form. Everything evaluable
//! implements [`Functional`], which also carries the declared Lipschitz
//! constant and sup bound the solvers rely on.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regularize;
use crate::spectral::{basis_sup, GridBasis, DEFAULT_GRID_POINTS};

/// A real functional on coefficient vectors with declared regularity data.
pub trait Functional: Sync {
    fn eval(&self, x: &[f64]) -> f64;

    /// Declared Lipschitz constant w.r.t. the Euclidean norm of coefficients.
    fn lipschitz(&self) -> f64 {
        f64::INFINITY
    }

    /// Declared bound on `|f|`.
    fn bound(&self) -> f64 {
        f64::INFINITY
    }
}

/// Closure with declared metadata.
pub struct FnFunctional<F> {
    pub f: F,
    pub lip: f64,
    pub bound: f64,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnFunctional<F> {
    pub fn new(f: F, lip: f64, bound: f64) -> Self {
        Self { f, lip, bound }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Functional for FnFunctional<F> {
    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn lipschitz(&self) -> f64 {
        self.lip
    }
    fn bound(&self) -> f64 {
        self.bound
    }
}

fn default_grid() -> usize {
    DEFAULT_GRID_POINTS
}

fn default_scale() -> f64 {
    1.0
}

fn clamp_sym(v: f64, level: f64) -> f64 {
    v.clamp(-level, level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostSpec {
    Constant {
        value: f64,
    },
    /// `⟨ℓ, x⟩`, unbounded.
    Linear {
        weights: Vec<f64>,
    },
    /// `clamp(x_i, ±bound)`.
    ClippedCoordinate {
        index: usize,
        bound: f64,
    },
    /// `clamp(scale · max_ξ x(ξ), ±clamp)` with the max over a uniform grid.
    SupState {
        clamp: f64,
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default = "default_grid")]
        grid_points: usize,
    },
    /// `min(√(Σ w_k x_k²), clamp)`.
    WeightedL2 {
        weights: Vec<f64>,
        clamp: f64,
    },
    /// `min(½ Σ w_k x_k², clamp)`.
    Quadratic {
        weights: Vec<f64>,
        clamp: f64,
    },
    /// Inf-sup convolution of `inner` with parameter `n`.
    InfSup {
        inner: Box<CostSpec>,
        n: f64,
    },
    /// Projection on the leading `min(n, N)` coordinates mollified by a
    /// Gaussian of standard deviation `1/n`, evaluated with a fixed sample
    /// set so the result is a deterministic function of `x`.
    Mollified {
        inner: Box<CostSpec>,
        n: usize,
        samples: usize,
        seed: u64,
    },
}

impl CostSpec {
    pub fn compile(&self, n_modes: usize) -> Result<Cost> {
        Cost::new(self.clone(), n_modes)
    }

    pub fn is_constant(&self) -> Option<f64> {
        match self {
            CostSpec::Constant { value } => Some(*value),
            _ => None,
        }
    }
}

/// Compiled cost functional.
#[derive(Debug, Clone)]
pub struct Cost {
    spec: CostSpec,
    n_modes: usize,
    grid: Option<Arc<GridBasis>>,
    inner: Option<Box<Cost>>,
    mollifier: Option<Arc<Vec<f64>>>,
}

impl Cost {
    pub fn new(spec: CostSpec, n_modes: usize) -> Result<Self> {
        let mut grid = None;
        let mut inner = None;
        let mut mollifier = None;
        match &spec {
            CostSpec::Constant { value } => finite("value", *value)?,
            CostSpec::Linear { weights } => check_len(weights.len(), n_modes)?,
            CostSpec::ClippedCoordinate { index, bound } => {
                if *index >= n_modes {
                    return Err(Error::InvalidInput(format!(
                        "coordinate index {index} out of range for {n_modes} modes"
                    )));
                }
                positive("bound", *bound)?;
            }
            CostSpec::SupState {
                clamp,
                scale,
                grid_points,
            } => {
                positive("clamp", *clamp)?;
                finite("scale", *scale)?;
                if *grid_points < 2 {
                    return Err(Error::InvalidInput("grid_points must be at least 2".into()));
                }
                grid = Some(Arc::new(GridBasis::new(n_modes, *grid_points)));
            }
            CostSpec::WeightedL2 { weights, clamp } | CostSpec::Quadratic { weights, clamp } => {
                check_len(weights.len(), n_modes)?;
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::InvalidInput("weights must be non-negative".into()));
                }
                positive("clamp", *clamp)?;
            }
            CostSpec::InfSup { inner: i, n } => {
                positive("n", *n)?;
                let c = Cost::new((**i).clone(), n_modes)?;
                if !c.lipschitz().is_finite() {
                    return Err(Error::InvalidInput(
                        "inf-sup convolution needs a finite Lipschitz constant".into(),
                    ));
                }
                inner = Some(Box::new(c));
            }
            CostSpec::Mollified {
                inner: i,
                n,
                samples,
                seed,
            } => {
                if *n == 0 {
                    return Err(Error::InvalidInput("mollifier index must be at least 1".into()));
                }
                if *samples < 2 {
                    return Err(Error::InvalidInput("mollifier needs at least 2 samples".into()));
                }
                inner = Some(Box::new(Cost::new((**i).clone(), n_modes)?));
                mollifier = Some(Arc::new(regularize::mollifier_samples(
                    *n,
                    (*n).min(n_modes),
                    *samples,
                    *seed,
                )));
            }
        }
        Ok(Cost {
            spec,
            n_modes,
            grid,
            inner,
            mollifier,
        })
    }

    pub fn spec(&self) -> &CostSpec {
        &self.spec
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }
}

fn check_len(len: usize, n: usize) -> Result<()> {
    if len != n {
        return Err(Error::Dimension { expected: n, got: len });
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || v.is_nan() {
        return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidInput(format!("{name} must be finite, got {v}")));
    }
    Ok(())
}

impl Functional for Cost {
    fn eval(&self, x: &[f64]) -> f64 {
        match &self.spec {
            CostSpec::Constant { value } => *value,
            CostSpec::Linear { weights } => crate::spectral::dot(weights, x),
            CostSpec::ClippedCoordinate { index, bound } => clamp_sym(x[*index], *bound),
            CostSpec::SupState { clamp, scale, .. } => {
                let g = self.grid.as_ref().expect("compiled with grid");
                clamp_sym(scale * g.sup(x), *clamp)
            }
            CostSpec::WeightedL2 { weights, clamp } => weights
                .iter()
                .zip(x)
                .map(|(w, v)| w * v * v)
                .sum::<f64>()
                .sqrt()
                .min(*clamp),
            CostSpec::Quadratic { weights, clamp } => {
                (0.5 * weights.iter().zip(x).map(|(w, v)| w * v * v).sum::<f64>()).min(*clamp)
            }
            CostSpec::InfSup { n, .. } => {
                let inner = self.inner.as_ref().expect("compiled inner");
                regularize::infsup_value(inner.as_ref(), *n, x).value
            }
            CostSpec::Mollified { n, .. } => {
                let inner = self.inner.as_ref().expect("compiled inner");
                let g = self.mollifier.as_ref().expect("compiled samples");
                regularize::mollified_mean(inner.as_ref(), (*n).min(self.n_modes), g, x)
            }
        }
    }

    fn lipschitz(&self) -> f64 {
        match &self.spec {
            CostSpec::Constant { .. } => 0.0,
            CostSpec::Linear { weights } => weights.iter().map(|w| w * w).sum::<f64>().sqrt(),
            CostSpec::ClippedCoordinate { .. } => 1.0,
            // 1-Lipschitz in the grid sup norm, and |x|_∞ ≤ √(Σ |e_k|²_∞) |x|.
            CostSpec::SupState { scale, .. } => {
                scale.abs() * (0..self.n_modes).map(|k| basis_sup(k).powi(2)).sum::<f64>().sqrt()
            }
            CostSpec::WeightedL2 { weights, .. } => weights.iter().fold(0.0_f64, |m, w| m.max(*w)).sqrt(),
            // gradient norm ≤ max_w |x|_w·√max_w on the sublevel set ½|x|_w² ≤ clamp
            CostSpec::Quadratic { weights, clamp } => {
                let wmax = weights.iter().fold(0.0_f64, |m, w| m.max(*w));
                (2.0 * clamp * wmax).sqrt()
            }
            CostSpec::InfSup { .. } | CostSpec::Mollified { .. } => {
                self.inner.as_ref().map_or(f64::INFINITY, |c| c.lipschitz())
            }
        }
    }

    fn bound(&self) -> f64 {
        match &self.spec {
            CostSpec::Constant { value } => value.abs(),
            CostSpec::Linear { weights } => {
                if weights.iter().all(|w| *w == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            CostSpec::ClippedCoordinate { bound, .. } => *bound,
            CostSpec::SupState { clamp, .. }
            | CostSpec::WeightedL2 { clamp, .. }
            | CostSpec::Quadratic { clamp, .. } => *clamp,
            CostSpec::InfSup { .. } | CostSpec::Mollified { .. } => {
                self.inner.as_ref().map_or(f64::INFINITY, |c| c.bound())
            }
        }
    }
}
