//! Hamiltonian `ψ(z) = inf_{|u| ≤ R} { g(u) + ⟨z, u⟩ }` and a reproducible
//! selection from its argmin set `Γ(z)`.
//!
//! Controls live on the leading `dim` coordinates of the noise space; the
//! remaining components of `z` do not enter `ψ` and emitted controls are
//! zero there.

use serde::{Deserialize, Serialize};

use crate::cost::Functional;
use crate::error::{Error, Result};
use crate::regularize::{compass_minimize, project_ball, start_pattern, LipschitzFn};
use crate::spectral::dot;

/// Current cost `g` of the control.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlCost {
    Zero,
    /// `κ|u|²/2`.
    Quadratic {
        weight: f64,
    },
    /// Any bounded continuous cost; always minimized numerically.
    #[serde(skip)]
    Custom(LipschitzFn),
}

impl ControlCost {
    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            ControlCost::Zero => 0.0,
            ControlCost::Quadratic { weight } => 0.5 * weight * dot(u, u),
            ControlCost::Custom(f) => f.eval(u),
        }
    }

    fn lipschitz(&self, radius: f64) -> f64 {
        match self {
            ControlCost::Zero => 0.0,
            ControlCost::Quadratic { weight } => weight * radius,
            ControlCost::Custom(f) => f.lip,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub radius: f64,
    pub g: ControlCost,
    pub dim: usize,
}

/// Numerical minimum of `g(u) + ⟨z, u⟩` over the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMinimum {
    pub value: f64,
    pub control: Vec<f64>,
    pub gap: f64,
}

const BOUNDARY_SCAN: usize = 720;

impl HamiltonianSpec {
    pub fn new(radius: f64, g: ControlCost, dim: usize) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!(
                "control radius must be positive, got {radius}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidInput("control dimension must be at least 1".into()));
        }
        if let ControlCost::Quadratic { weight } = g {
            if !(weight > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "quadratic weight must be positive, got {weight}"
                )));
            }
        }
        Ok(Self { radius, g, dim })
    }

    /// Lipschitz constant of `ψ`.
    pub fn lipschitz(&self) -> f64 {
        self.radius
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() < self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: z.len(),
            });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("z must be finite".into()));
        }
        Ok(())
    }

    fn pad(&self, u: Vec<f64>, len: usize) -> Vec<f64> {
        let mut out = u;
        out.resize(len, 0.0);
        out
    }

    /// Closed-form minimizer for the built-in costs.
    fn analytic(&self, z: &[f64]) -> Option<(f64, Vec<f64>)> {
        let zm = &z[..self.dim];
        let zn = dot(zm, zm).sqrt();
        let r = self.radius;
        match self.g {
            ControlCost::Zero => {
                if zn == 0.0 {
                    Some((0.0, vec![0.0; self.dim]))
                } else {
                    Some((-r * zn, zm.iter().map(|v| -r * v / zn).collect()))
                }
            }
            ControlCost::Quadratic { weight } => {
                if zn <= weight * r {
                    Some((-zn * zn / (2.0 * weight), zm.iter().map(|v| -v / weight).collect()))
                } else {
                    Some((0.5 * weight * r * r - r * zn, zm.iter().map(|v| -r * v / zn).collect()))
                }
            }
            ControlCost::Custom(_) => None,
        }
    }

    /// Projected multi-start minimization plus a scan of the boundary sphere.
    pub fn minimize_numeric(&self, z: &[f64]) -> Result<ControlMinimum> {
        self.check(z)?;
        let m = self.dim;
        let zm = &z[..m];
        let r = self.radius;
        let center = vec![0.0; m];
        let obj = |u: &[f64]| self.g.eval(u) + dot(zm, u);

        // (value, point, final step, converged)
        let mut candidates: Vec<(f64, Vec<f64>, f64, bool)> = Vec::new();
        for s in start_pattern(&center, r) {
            let o = compass_minimize(&obj, s, &center, r, 0.25 * r);
            candidates.push((o.value, o.point, o.step, o.converged));
        }

        let mut boundary: Vec<Vec<f64>> = Vec::new();
        match m {
            1 => {
                boundary.push(vec![r]);
                boundary.push(vec![-r]);
            }
            2 => {
                for i in 0..BOUNDARY_SCAN {
                    let th = 2.0 * std::f64::consts::PI * i as f64 / BOUNDARY_SCAN as f64;
                    boundary.push(vec![r * th.cos(), r * th.sin()]);
                }
            }
            _ => {
                for i in 0..m {
                    for s in [1.0, -1.0] {
                        let mut p = vec![0.0; m];
                        p[i] = s * r;
                        boundary.push(p);
                    }
                }
                let zn = dot(zm, zm).sqrt();
                if zn > 0.0 {
                    boundary.push(zm.iter().map(|v| -r * v / zn).collect());
                    boundary.push(zm.iter().map(|v| r * v / zn).collect());
                }
            }
        }
        let best_boundary = boundary
            .into_iter()
            .map(|p| (obj(&p), p))
            .fold(None::<(f64, Vec<f64>)>, |b, c| match b {
                Some(b) if b.0 <= c.0 => Some(b),
                _ => Some(c),
            })
            .expect("non-empty scan");
        let step0 = if m == 2 {
            2.0 * std::f64::consts::PI * r / BOUNDARY_SCAN as f64
        } else {
            0.25 * r
        };
        let o = compass_minimize(&obj, best_boundary.1, &center, r, step0);
        candidates.push((o.value, o.point, o.step, o.converged));

        let winner = candidates
            .iter()
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
            .expect("non-empty");
        let best = winner.0;
        let gap = winner.2 * (self.g.lipschitz(r) + dot(zm, zm).sqrt()) * (m as f64).sqrt();
        if !winner.3 {
            return Err(Error::OptimizerCap { best, gap });
        }
        let tie = 1e-9 * (1.0 + best.abs());
        let mut ties: Vec<&(f64, Vec<f64>, f64, bool)> = candidates.iter().filter(|c| c.0 <= best + tie).collect();
        ties.sort_by(|a, b| {
            let na = dot(&a.1, &a.1);
            let nb = dot(&b.1, &b.1);
            na.partial_cmp(&nb).unwrap_or(std::cmp::Ordering::Equal).then_with(|| {
                a.1.iter()
                    .zip(&b.1)
                    .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        let mut control = ties[0].1.clone();
        project_ball(&mut control, &center, r);
        Ok(ControlMinimum {
            value: obj(&control),
            control: self.pad(control, z.len()),
            gap,
        })
    }

    /// `ψ(z)`.
    pub fn psi_eval(&self, z: &[f64]) -> Result<f64> {
        self.check(z)?;
        match self.analytic(z) {
            Some((v, _)) => Ok(v),
            None => self.minimize_numeric(z).map(|m| m.value),
        }
    }

    /// Element of `Γ(z)` with the smallest norm, ties broken lexicographically.
    pub fn gamma_select(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        match self.analytic(z) {
            Some((_, u)) => Ok(self.pad(u, z.len())),
            None => self.minimize_numeric(z).map(|m| m.control),
        }
    }

    /// Optimizer gap attached to `psi_eval`/`gamma_select` (zero for the
    /// closed-form costs).
    pub fn gap(&self, z: &[f64]) -> Result<f64> {
        match self.g {
            ControlCost::Custom(_) => self.minimize_numeric(z).map(|m| m.gap),
            _ => Ok(0.0),
        }
    }

    /// Defect `g(u) + ⟨z, u⟩ - ψ(z) ≥ 0`.
    pub fn defect(&self, z: &[f64], u: &[f64]) -> Result<f64> {
        let m = self.dim;
        Ok(self.g.eval(&u[..m]) + dot(&z[..m], &u[..m]) - self.psi_eval(z)?)
    }
}

/// Generator of the backward equation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Driver {
    Zero,
    Constant { value: f64 },
    Hamiltonian(HamiltonianSpec),
}

impl Driver {
    pub fn psi(&self, z: &[f64]) -> f64 {
        match self {
            Driver::Zero => 0.0,
            Driver::Constant { value } => *value,
            Driver::Hamiltonian(h) => match h.psi_eval(z) {
                Ok(v) => v,
                Err(Error::OptimizerCap { best, .. }) => best,
                Err(_) => f64::NAN,
            },
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Driver::Zero | Driver::Constant { .. } => 0.0,
            Driver::Hamiltonian(h) => h.lipschitz(),
        }
    }

    pub fn psi_at_zero(&self, n: usize) -> f64 {
        self.psi(&vec![0.0; n])
    }

    pub fn hamiltonian(&self) -> Option<&HamiltonianSpec> {
        match self {
            Driver::Hamiltonian(h) => Some(h),
            _ => None,
        }
    }
}
