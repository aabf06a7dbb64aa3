//! Controlled stochastic heat equation on `[0, 1]` with Neumann boundary,
//! noise and control acting on `[a, b]`, and sup-of-state costs.
//!
//! Raw sup-of-state costs are unbounded, so they are clamped at a declared
//! level (default `10·√trace Q_T`, the typical field scale at the horizon).

use serde::{Deserialize, Serialize};

use crate::cost::CostSpec;
use crate::error::{Error, Result};
use crate::fbsde::{Problem, SolverConfig, TimeGrid};
use crate::hamiltonian::{ControlCost, Driver, HamiltonianSpec};
use crate::spectral::{build_model, covariance, OUModel, SpectralVector, DEFAULT_GRID_POINTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeatCost {
    SupState,
    /// `‖x‖_w` clamped; all weights 1 when omitted.
    WeightedL2 {
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    Custom {
        spec: CostSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatConfig {
    pub a: f64,
    pub b: f64,
    pub n_modes: usize,
    pub grid_points: usize,
    pub t0: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub terminal: HeatCost,
    pub running: HeatCost,
    /// Multiplies the running cost; 0 disables it.
    pub running_scale: f64,
    /// Saturation level of the costs; `None` uses `10·√trace Q_{T-t0}`.
    pub clamp: Option<f64>,
    pub radius: f64,
    /// Weight `κ` of `g(u) = κ|u|²/2`; 0 means `g ≡ 0`.
    pub control_weight: f64,
    /// Number of controlled coordinates; `None` controls all modes.
    pub control_dim: Option<usize>,
    /// Initial state coefficients; `None` is `0.5·e_1`.
    pub x0: Option<Vec<f64>>,
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self {
            a: 0.3,
            b: 0.7,
            n_modes: 16,
            grid_points: DEFAULT_GRID_POINTS,
            t0: 0.0,
            horizon: 1.0,
            n_steps: 16,
            terminal: HeatCost::SupState,
            running: HeatCost::SupState,
            running_scale: 1.0,
            clamp: None,
            radius: 1.0,
            control_weight: 0.0,
            control_dim: None,
            x0: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeatProblem {
    pub config: HeatConfig,
    pub model: OUModel,
    pub grid: TimeGrid,
    pub phi: CostSpec,
    pub l: CostSpec,
    pub ham: HamiltonianSpec,
    pub x0: SpectralVector,
    /// Saturation level actually used.
    pub clamp: f64,
}

impl HeatProblem {
    pub fn driver(&self) -> Driver {
        Driver::Hamiltonian(self.ham.clone())
    }

    /// Backward-equation bundle with the given solver settings.
    pub fn problem(&self, solver: SolverConfig) -> Problem {
        Problem {
            model: self.model.clone(),
            grid: self.grid.clone(),
            driver: self.driver(),
            l: self.l.clone(),
            phi: self.phi.clone(),
            solver,
        }
    }
}

fn field(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("{name}: {msg}"))
}

fn make_cost(which: &HeatCost, clamp: f64, scale: f64, cfg: &HeatConfig, name: &str) -> Result<CostSpec> {
    let spec = match which {
        HeatCost::SupState => CostSpec::SupState {
            clamp,
            scale,
            grid_points: cfg.grid_points,
        },
        HeatCost::WeightedL2 { weights } => {
            let w = weights.clone().unwrap_or_else(|| vec![1.0; cfg.n_modes]);
            if w.len() != cfg.n_modes {
                return Err(field(
                    name,
                    format!("expected {} weights, got {}", cfg.n_modes, w.len()),
                ));
            }
            CostSpec::WeightedL2 {
                weights: w.iter().map(|v| v * scale * scale).collect(),
                clamp: clamp * scale.abs(),
            }
        }
        HeatCost::Custom { spec } => spec.clone(),
    };
    spec.compile(cfg.n_modes).map_err(|e| field(name, e))?;
    Ok(spec)
}

/// Wires the heat model, clamped costs, control set and time grid.
pub fn build_problem(cfg: &HeatConfig) -> Result<HeatProblem> {
    let model = build_model(cfg.n_modes, cfg.a, cfg.b).map_err(|e| field("model", e))?;
    if cfg.grid_points < 2 {
        return Err(field("grid_points", "must be at least 2"));
    }
    let grid = TimeGrid::uniform(cfg.t0, cfg.horizon, cfg.n_steps).map_err(|e| field("grid", e))?;
    let clamp = match cfg.clamp {
        Some(c) if c > 0.0 && c.is_finite() => c,
        Some(c) => return Err(field("clamp", format!("must be positive, got {c}"))),
        None => {
            let span = cfg.horizon - cfg.t0;
            if span > 0.0 {
                10.0 * covariance(&model, span)?.trace().sqrt()
            } else {
                1.0
            }
        }
    };
    if !cfg.running_scale.is_finite() {
        return Err(field("running_scale", "must be finite"));
    }
    let phi = make_cost(&cfg.terminal, clamp, 1.0, cfg, "terminal")?;
    let l = if cfg.running_scale == 0.0 {
        CostSpec::Constant { value: 0.0 }
    } else {
        make_cost(&cfg.running, clamp, cfg.running_scale, cfg, "running")?
    };
    let g = if cfg.control_weight == 0.0 {
        ControlCost::Zero
    } else {
        ControlCost::Quadratic {
            weight: cfg.control_weight,
        }
    };
    let dim = cfg.control_dim.unwrap_or(cfg.n_modes);
    if dim == 0 || dim > cfg.n_modes {
        return Err(field("control_dim", format!("must be in 1..={}", cfg.n_modes)));
    }
    let ham = HamiltonianSpec::new(cfg.radius, g, dim).map_err(|e| field("control", e))?;
    let x0 = match &cfg.x0 {
        Some(v) if v.len() == cfg.n_modes => SpectralVector::new(v.clone()),
        Some(v) => {
            return Err(field(
                "x0",
                format!("expected {} coefficients, got {}", cfg.n_modes, v.len()),
            ))
        }
        None => {
            let mut v = vec![0.0; cfg.n_modes];
            if cfg.n_modes > 1 {
                v[1] = 0.5;
            } else {
                v[0] = 0.5;
            }
            SpectralVector::new(v)
        }
    };
    Ok(HeatProblem {
        config: cfg.clone(),
        model,
        grid,
        phi,
        l,
        ham,
        x0,
        clamp,
    })
}
