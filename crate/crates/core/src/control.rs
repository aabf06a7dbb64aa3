//! Controlled forward simulation, cost evaluation, feedback synthesis from
//! `∇^B v` and the fundamental relation `J(t, x, u) ≥ v(t, x)`.
//!
//! The closed loop is simulated with piecewise-constant feedback, evaluated
//! once per time node; existence of a continuous-time closed-loop solution
//! is not claimed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{CostSpec, Functional};
use crate::error::{Error, Result};
use crate::exec::{self, Moments};
use crate::fbsde::{simulate, PathBundle, TimeGrid, ValueEstimate};
use crate::hamiltonian::HamiltonianSpec;
use crate::semigroup::EstimateWithError;
use crate::spectral::{dot, OUModel, SpectralVector};
use crate::verify::trapezoid_weights;

/// Relative slack on `‖u‖ ≤ R` absorbing round-off in emitted controls.
const RADIUS_SLACK: f64 = 1e-12;

pub enum ControlPolicy<'a> {
    /// One control per time step, in noise coordinates.
    OpenLoop(Vec<Vec<f64>>),
    /// `u(s_k, x) = γ(z_at(s_k, x))`.
    Feedback {
        est: &'a ValueEstimate,
        ham: &'a HamiltonianSpec,
    },
    /// `u(s_k, x) = R z/‖z‖`, the pointwise maximizer of `⟨z, u⟩`.
    Adversarial {
        est: &'a ValueEstimate,
        ham: &'a HamiltonianSpec,
    },
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

impl ControlPolicy<'_> {
    /// Checks an open-loop table against the grid and the ball of radius `r`.
    pub fn validate(&self, n_modes: usize, n_steps: usize, r: f64) -> Result<()> {
        if let ControlPolicy::OpenLoop(table) = self {
            if table.len() != n_steps {
                return Err(Error::Dimension {
                    expected: n_steps,
                    got: table.len(),
                });
            }
            for u in table {
                if u.len() != n_modes {
                    return Err(Error::Dimension {
                        expected: n_modes,
                        got: u.len(),
                    });
                }
                let nu = norm(u);
                if !(nu <= r * (1.0 + RADIUS_SLACK)) {
                    return Err(Error::Inadmissible { norm: nu, radius: r });
                }
            }
        }
        Ok(())
    }

    pub fn control(&self, step: usize, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            ControlPolicy::OpenLoop(table) => Ok(table[step].clone()),
            ControlPolicy::Feedback { est, ham } => {
                let z = est.z_at(step, &SpectralVector::new(x.to_vec()));
                let mut u = ham.gamma_select(&z)?;
                let nu = norm(&u);
                if nu > ham.radius {
                    u.iter_mut().for_each(|v| *v *= ham.radius / nu);
                }
                Ok(u)
            }
            ControlPolicy::Adversarial { est, ham } => {
                let z = est.z_at(step, &SpectralVector::new(x.to_vec()));
                let zm = &z[..ham.dim];
                let zn = norm(zm);
                let mut u = vec![0.0; z.len()];
                if zn > 0.0 {
                    for (ui, zi) in u.iter_mut().zip(zm) {
                        *ui = ham.radius * zi / zn;
                    }
                }
                Ok(u)
            }
        }
    }
}

/// `X_{k+1} = e^{ΔΛ} X_k + Φ(Δ) M u_k + noise_k`. Noise is drawn exactly as in
/// `sample_forward`, so equal seeds give coupled paths and `u ≡ 0`
/// reproduces the uncontrolled bundle bit for bit.
pub fn simulate_controlled(
    model: &OUModel,
    grid: &TimeGrid,
    x: &SpectralVector,
    policy: &ControlPolicy<'_>,
    radius: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    policy.validate(model.n_modes, grid.n_steps(), radius)?;
    let f = |k: usize, s: &[f64]| policy.control(k, s);
    simulate(model, grid, x, n_paths, seed, Some(&f))
}

/// Cost of a policy with per-path defect bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub j: EstimateWithError,
    /// `E Σ Δ [g(u) + ⟨Z, u⟩ - ψ(Z)]` with `Z = z_at`; equals `J - v` for
    /// the exact solution.
    pub defect: Option<EstimateWithError>,
    /// Smallest pointwise defect seen (should be ≥ minus the optimizer gap).
    pub min_defect: Option<f64>,
}

/// Running cost, terminal cost and control cost of `policy` from `(t0, x)`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_cost(
    model: &OUModel,
    grid: &TimeGrid,
    x: &SpectralVector,
    policy: &ControlPolicy<'_>,
    ham: &HamiltonianSpec,
    l: &CostSpec,
    phi: &CostSpec,
    n_paths: usize,
    seed: u64,
    defect_from: Option<&ValueEstimate>,
) -> Result<CostEstimate> {
    let n = model.n_modes;
    let l_c = l.compile(n)?;
    let phi_c = phi.compile(n)?;
    let bundle = simulate_controlled(model, grid, x, policy, ham.radius, n_paths, seed)?;
    let kk = grid.n_steps();
    let w = trapezoid_weights(&grid.nodes);
    let parts: Vec<Result<(Moments, Moments, f64)>> = exec::map_chunks(exec::n_chunks(n_paths), |c| {
        let mut jm = Moments::default();
        let mut dm = Moments::default();
        let mut dmin = f64::INFINITY;
        for p in c * exec::CHUNK..((c + 1) * exec::CHUNK).min(n_paths) {
            let mut j = phi_c.eval(bundle.state(p, kk));
            let mut defect = 0.0;
            for (k, wk) in w.iter().enumerate() {
                let s = bundle.state(p, k);
                j += wk * l_c.eval(s);
                if k == kk {
                    break;
                }
                let dt = grid.dt(k);
                let u = policy.control(k, s)?;
                j += dt * ham.g.eval(&u[..ham.dim]);
                if let Some(est) = defect_from {
                    let z = est.z_at(k, &SpectralVector::new(s.to_vec()));
                    let d = ham.defect(&z, &u)?;
                    dmin = dmin.min(d);
                    defect += dt * d;
                }
            }
            jm.push(j);
            dm.push(defect);
        }
        Ok((jm, dm, dmin))
    });
    let mut merged = Vec::with_capacity(parts.len());
    for p in parts {
        merged.push(p?);
    }
    let (jm, dm, dmin) =
        exec::pairwise_reduce(merged, |a, b| (a.0.merge(b.0), a.1.merge(b.1), a.2.min(b.2))).expect("n_paths ≥ 2");
    let est = |m: Moments| EstimateWithError {
        value: m.mean,
        std_error: m.std_error(),
        n_samples: n_paths,
    };
    Ok(CostEstimate {
        j: est(jm),
        defect: defect_from.map(|_| est(dm)),
        min_defect: defect_from.map(|_| dmin),
    })
}

/// Piecewise-constant control with each step uniform on the ball of radius
/// `R` in the leading `dim` coordinates (rejection sampling from the cube).
pub fn random_open_loop<R: Rng>(rng: &mut R, n_steps: usize, n_modes: usize, ham: &HamiltonianSpec) -> Vec<Vec<f64>> {
    (0..n_steps)
        .map(|_| {
            let mut u = vec![0.0; n_modes];
            loop {
                for v in u.iter_mut().take(ham.dim) {
                    *v = rng.random_range(-1.0..1.0);
                }
                if norm(&u) <= 1.0 {
                    break;
                }
            }
            u.iter_mut().for_each(|v| *v *= ham.radius);
            u
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    Random,
    Feedback,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRow {
    pub id: usize,
    pub kind: ControlKind,
    pub j: f64,
    pub j_se: f64,
    /// `J - v`.
    pub slack: f64,
    pub slack_se: f64,
    pub defect: f64,
    pub defect_se: f64,
    pub min_defect: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub v: f64,
    pub v_se: f64,
    pub rows: Vec<ControlRow>,
    pub violations: usize,
    pub feedback_tolerance: f64,
    pub feedback_pass: bool,
    pub adversarial_pass: bool,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub n_controls: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Allowed `|J(feedback) - v|`.
    pub feedback_tolerance: f64,
}

/// Random admissible controls must satisfy `J ≥ v - 3·se`, the feedback
/// policy `|J - v| ≤ tol`, and the adversarial policy `J - v > 3·se`.
#[allow(clippy::too_many_arguments)]
pub fn fundamental_relation_suite(
    model: &OUModel,
    grid: &TimeGrid,
    x: &SpectralVector,
    est: &ValueEstimate,
    ham: &HamiltonianSpec,
    l: &CostSpec,
    phi: &CostSpec,
    cfg: &SuiteConfig,
) -> Result<SuiteReport> {
    if est.times != grid.nodes {
        return Err(Error::InvalidInput("estimate and control grid differ".into()));
    }
    let v = est.value_with_error(0, x)?;
    let row = |id: usize, kind: ControlKind, c: CostEstimate| {
        let slack = c.j.value - v.value;
        let slack_se = c.j.std_error.hypot(v.std_error);
        let d = c.defect.unwrap_or(EstimateWithError::exact(0.0));
        let pass = match kind {
            ControlKind::Random => slack >= -3.0 * slack_se,
            ControlKind::Feedback => slack.abs() <= cfg.feedback_tolerance,
            ControlKind::Adversarial => slack > 3.0 * slack_se,
        };
        ControlRow {
            id,
            kind,
            j: c.j.value,
            j_se: c.j.std_error,
            slack,
            slack_se,
            defect: d.value,
            defect_se: d.std_error,
            min_defect: c.min_defect.unwrap_or(0.0),
            pass,
        }
    };
    let mut rows = Vec::with_capacity(cfg.n_controls + 2);
    for i in 0..cfg.n_controls {
        let mut rng = exec::chunk_rng(cfg.seed ^ 0x5eed_c0de, i);
        let table = random_open_loop(&mut rng, grid.n_steps(), model.n_modes, ham);
        let c = evaluate_cost(
            model,
            grid,
            x,
            &ControlPolicy::OpenLoop(table),
            ham,
            l,
            phi,
            cfg.n_paths,
            cfg.seed,
            Some(est),
        )?;
        rows.push(row(i, ControlKind::Random, c));
    }
    let fb = ControlPolicy::Feedback { est, ham };
    let c = evaluate_cost(model, grid, x, &fb, ham, l, phi, cfg.n_paths, cfg.seed, Some(est))?;
    rows.push(row(cfg.n_controls, ControlKind::Feedback, c));
    let adv = ControlPolicy::Adversarial { est, ham };
    let c = evaluate_cost(model, grid, x, &adv, ham, l, phi, cfg.n_paths, cfg.seed, Some(est))?;
    rows.push(row(cfg.n_controls + 1, ControlKind::Adversarial, c));

    let violations = rows.iter().filter(|r| r.kind == ControlKind::Random && !r.pass).count();
    let feedback_pass = rows.iter().any(|r| r.kind == ControlKind::Feedback && r.pass);
    let adversarial_pass = rows.iter().any(|r| r.kind == ControlKind::Adversarial && r.pass);
    Ok(SuiteReport {
        v: v.value,
        v_se: v.std_error,
        rows,
        violations,
        feedback_tolerance: cfg.feedback_tolerance,
        feedback_pass,
        adversarial_pass,
        all_pass: violations == 0 && feedback_pass && adversarial_pass,
    })
}

/// One-mode linear-quadratic closed loop with `g = |u|²/2`, `φ = q x²/2`,
/// control drift `c u` and no running cost: returns `(P(t), m(s))` with
/// `v = P x²/2 + const` and `m` the closed-loop mean started from `x0` at `t`.
pub fn riccati_scalar(c: f64, q: f64, horizon: f64, t: f64, s: f64, x0: f64) -> (f64, f64) {
    let p = q / (1.0 + c * c * q * (horizon - t));
    let m = x0 * (1.0 + c * c * q * (horizon - s)) / (1.0 + c * c * q * (horizon - t));
    (p, m)
}
