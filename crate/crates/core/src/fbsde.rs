//! Forward OU simulation and regression Monte Carlo for the backward equation
//! `dY = -(ψ(Z) + l(X)) dτ + Z dW`, `Y_T = φ(X_T)`.
//!
//! `Y` at node `k` estimates `v(s_k, ·)` and `Z` estimates `∇^B v(s_k, ·)`.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cost::{Cost, CostSpec, Functional};
use crate::error::{Error, Result};
use crate::exec::{self, Moments};
use crate::hamiltonian::Driver;
use crate::regression::{CompiledBasis, Design, FeatureBasis, LinearFit, Surface};
use crate::semigroup::EstimateWithError;
use crate::spectral::{covariance, dot, CovarianceFactor, OUModel, SpectralVector};

/// Default grid size of the sup-of-state regression feature.
pub const FEATURE_GRID_POINTS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(t0: f64, horizon: f64, n_steps: usize) -> Result<Self> {
        check_interval(t0, horizon, n_steps)?;
        let h = (horizon - t0) / n_steps.max(1) as f64;
        let mut nodes: Vec<f64> = (0..=n_steps).map(|k| t0 + k as f64 * h).collect();
        *nodes.last_mut().unwrap() = horizon;
        Ok(Self { nodes })
    }

    /// Steps shrinking geometrically by `ratio ∈ (0, 1]` towards the horizon.
    pub fn refined(t0: f64, horizon: f64, n_steps: usize, ratio: f64) -> Result<Self> {
        check_interval(t0, horizon, n_steps)?;
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "refinement ratio must be in (0, 1], got {ratio}"
            )));
        }
        if n_steps == 0 {
            return Ok(Self { nodes: vec![t0] });
        }
        let weights: Vec<f64> = (0..n_steps).map(|k| ratio.powi(k as i32)).collect();
        let total: f64 = weights.iter().sum();
        let mut nodes = vec![t0];
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            nodes.push(t0 + (horizon - t0) * acc / total);
        }
        *nodes.last_mut().unwrap() = horizon;
        Self::from_nodes(nodes)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("time grid needs at least one node".into()));
        }
        if nodes.iter().any(|t| !t.is_finite()) || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "time nodes must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { nodes })
    }

    pub fn t0(&self) -> f64 {
        self.nodes[0]
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    /// The grid restricted to nodes `start..`.
    pub fn tail(&self, start: usize) -> Self {
        Self {
            nodes: self.nodes[start..].to_vec(),
        }
    }
}

fn check_interval(t0: f64, horizon: f64, n_steps: usize) -> Result<()> {
    if !t0.is_finite() || !horizon.is_finite() {
        return Err(Error::InvalidInput("time interval must be finite".into()));
    }
    if n_steps == 0 && t0 != horizon {
        return Err(Error::InvalidInput("a grid with 0 steps needs t0 = T".into()));
    }
    if n_steps > 0 && !(horizon > t0) {
        return Err(Error::InvalidInput(format!("need t0 < T, got [{t0}, {horizon}]")));
    }
    Ok(())
}

/// Simulated forward trajectories. States are stored `[path][node][mode]`
/// and the Gaussian increments `L g` as `[path][step][mode]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub n_paths: usize,
    pub n_steps: usize,
    pub dim: usize,
    pub seed: u64,
    pub states: Vec<f64>,
    pub noise: Vec<f64>,
}

impl PathBundle {
    pub fn state(&self, path: usize, node: usize) -> &[f64] {
        let o = (path * (self.n_steps + 1) + node) * self.dim;
        &self.states[o..o + self.dim]
    }

    pub fn noise(&self, path: usize, step: usize) -> &[f64] {
        let o = (path * self.n_steps + step) * self.dim;
        &self.noise[o..o + self.dim]
    }

    /// Sample mean and standard error of each coordinate at `node`.
    pub fn node_moments(&self, node: usize) -> Vec<Moments> {
        let mut out = vec![Moments::default(); self.dim];
        for p in 0..self.n_paths {
            for (m, v) in out.iter_mut().zip(self.state(p, node)) {
                m.push(*v);
            }
        }
        out
    }
}

/// Exact one-step transition data.
pub(crate) struct StepOp {
    pub e: Vec<f64>,
    pub phi: Vec<f64>,
    pub cov: CovarianceFactor,
}

pub(crate) fn step_ops(model: &OUModel, grid: &TimeGrid) -> Result<Vec<Arc<StepOp>>> {
    let mut cache: HashMap<u64, Arc<StepOp>> = HashMap::new();
    let mut out = Vec::with_capacity(grid.n_steps());
    for k in 0..grid.n_steps() {
        let dt = grid.dt(k);
        let op = match cache.get(&dt.to_bits()) {
            Some(op) => op.clone(),
            None => {
                let op = Arc::new(StepOp {
                    e: model.semigroup_diag(dt),
                    phi: model.integrated_semigroup_diag(dt),
                    cov: covariance(model, dt)?,
                });
                cache.insert(dt.to_bits(), op.clone());
                op
            }
        };
        out.push(op);
    }
    Ok(out)
}

/// Control hook for [`simulate`]: `(step, state) ↦ u` in noise coordinates.
pub type ControlFn<'a> = dyn Fn(usize, &[f64]) -> Result<Vec<f64>> + Sync + 'a;

/// Exact OU paths with optional piecewise-constant control drift
/// `Φ(Δ) M u`. With `control = None` this is [`sample_forward`].
pub fn simulate(
    model: &OUModel,
    grid: &TimeGrid,
    x: &SpectralVector,
    n_paths: usize,
    seed: u64,
    control: Option<&ControlFn<'_>>,
) -> Result<PathBundle> {
    model.check_dim(x.len())?;
    if n_paths < 2 {
        return Err(Error::InvalidInput(format!(
            "n_paths must be at least 2, got {n_paths}"
        )));
    }
    let ops = step_ops(model, grid)?;
    let n = model.n_modes;
    let k_steps = grid.n_steps();
    let chunks = exec::n_chunks(n_paths);
    let parts: Vec<Result<(Vec<f64>, Vec<f64>)>> = exec::map_chunks(chunks, |c| {
        let start = c * exec::CHUNK;
        let end = (start + exec::CHUNK).min(n_paths);
        let mut rng = exec::chunk_rng(seed, c);
        let mut states = Vec::with_capacity((end - start) * (k_steps + 1) * n);
        let mut noise = Vec::with_capacity((end - start) * k_steps * n);
        let mut g = vec![0.0; n];
        let mut inc = vec![0.0; n];
        for _ in start..end {
            let mut cur = x.coeffs.clone();
            states.extend_from_slice(&cur);
            for (k, op) in ops.iter().enumerate() {
                for gi in g.iter_mut() {
                    *gi = StandardNormal.sample(&mut rng);
                }
                op.cov.apply_chol(&g, &mut inc);
                let drift = match control {
                    Some(f) => {
                        let u = f(k, &cur)?;
                        if u.iter().all(|v| *v == 0.0) {
                            None
                        } else {
                            let mu = model.apply_b(&u);
                            Some(mu.iter().zip(&op.phi).map(|(a, p)| a * p).collect::<Vec<_>>())
                        }
                    }
                    None => None,
                };
                for i in 0..n {
                    cur[i] = op.e[i] * cur[i] + inc[i];
                }
                if let Some(d) = drift {
                    for i in 0..n {
                        cur[i] += d[i];
                    }
                }
                states.extend_from_slice(&cur);
                noise.extend_from_slice(&inc);
            }
        }
        Ok((states, noise))
    });
    let mut states = Vec::with_capacity(n_paths * (k_steps + 1) * n);
    let mut noise = Vec::with_capacity(n_paths * k_steps * n);
    for part in parts {
        let (s, w) = part?;
        states.extend(s);
        noise.extend(w);
    }
    Ok(PathBundle {
        n_paths,
        n_steps: k_steps,
        dim: n,
        seed,
        states,
        noise,
    })
}

/// Exact forward simulation of `dX = ΛX dτ + M dW` from `x` on `grid`.
pub fn sample_forward(
    model: &OUModel,
    grid: &TimeGrid,
    x: &SpectralVector,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    simulate(model, grid, x, n_paths, seed, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub basis: FeatureBasis,
    /// Iterate the Picard refresh to `picard_tol` instead of a single pass.
    pub full_picard: bool,
    pub picard_tol: f64,
    pub max_picard: usize,
    /// Overrides the a-priori clip on `‖Z‖`.
    pub z_clip: Option<f64>,
}

impl SolverConfig {
    pub fn standard(n_modes: usize) -> Self {
        Self {
            basis: FeatureBasis::standard(n_modes, FEATURE_GRID_POINTS),
            full_picard: false,
            picard_tol: 1e-6,
            max_picard: 20,
            z_clip: None,
        }
    }
}

/// Everything needed to solve the backward equation from a new start point.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: OUModel,
    pub grid: TimeGrid,
    pub driver: Driver,
    pub l: CostSpec,
    pub phi: CostSpec,
    pub solver: SolverConfig,
}

impl Problem {
    /// Simulates `n_paths` from `x` and solves on `grid`.
    pub fn solve_from(&self, grid: &TimeGrid, x: &SpectralVector, n_paths: usize, seed: u64) -> Result<ValueEstimate> {
        let bundle = sample_forward(&self.model, grid, x, n_paths, seed)?;
        solve_bsde(
            &self.model,
            grid,
            &bundle,
            &self.driver,
            &self.l,
            &self.phi,
            &self.solver,
        )
    }

    pub fn solve(&self, x: &SpectralVector, n_paths: usize, seed: u64) -> Result<ValueEstimate> {
        self.solve_from(&self.grid, x, n_paths, seed)
    }
}

/// Regression surfaces at one time node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFit {
    pub surface: Surface,
    pub y: LinearFit,
    pub z: Vec<LinearFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDiagnostics {
    pub node: usize,
    pub t: f64,
    pub ridge: bool,
    pub picard_passes: usize,
    pub martingale_mean: f64,
    pub martingale_se: f64,
    pub y_mean: f64,
    pub y_se: f64,
    pub z_norm_mean: f64,
    pub z_clipped: usize,
}

/// Persisted solution of the backward equation: `v(s_k, ·)` and
/// `∇^B v(s_k, ·)` as regression surfaces for `k < K`, and `φ` at `K`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub n_modes: usize,
    pub basis: FeatureBasis,
    pub times: Vec<f64>,
    pub nodes: Vec<NodeFit>,
    pub terminal: CostSpec,
    /// `None` when unbounded.
    pub z_clip: Option<f64>,
    pub phi_bound: Option<f64>,
    pub l_bound: Option<f64>,
    pub psi_at_zero: f64,
    pub driver_lipschitz: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub diagnostics: Vec<NodeDiagnostics>,
    #[serde(skip)]
    compiled: OnceLock<Arc<(CompiledBasis, Cost)>>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl ValueEstimate {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            nodes: self.times.clone(),
        }
    }

    fn compiled(&self) -> &(CompiledBasis, Cost) {
        self.compiled.get_or_init(|| {
            let cost = self
                .terminal
                .compile(self.n_modes)
                .expect("terminal cost was validated when solving");
            Arc::new((self.basis.compile(), cost))
        })
    }

    /// Compiled terminal functional `φ`.
    pub fn terminal_cost(&self) -> &Cost {
        &self.compiled().1
    }

    /// A-priori bound on `|Y|` at node `k`.
    pub fn y_bound(&self, k: usize) -> Option<f64> {
        let rest = self.horizon() - self.times[k];
        let zc = if self.driver_lipschitz == 0.0 {
            0.0
        } else {
            self.z_clip?
        };
        Some(self.phi_bound? + rest * (self.l_bound? + self.psi_at_zero.abs() + self.driver_lipschitz * zc))
    }

    fn standardized(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let basis = &self.compiled().0;
        let mut raw = vec![0.0; basis.len()];
        basis.features(x, &mut raw);
        self.nodes[k].surface.standardize(&raw)
    }

    fn check(&self, k: usize, x: &[f64]) -> Result<()> {
        if k > self.n_steps() {
            return Err(Error::InvalidInput(format!(
                "node {k} out of range 0..={}",
                self.n_steps()
            )));
        }
        if x.len() != self.n_modes {
            return Err(Error::Dimension {
                expected: self.n_modes,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `v(s_k, x)`; exactly `φ(x)` at the last node.
    pub fn value_at(&self, k: usize, x: &SpectralVector) -> f64 {
        self.value_with_error(k, x).map(|e| e.value).unwrap_or(f64::NAN)
    }

    pub fn value_with_error(&self, k: usize, x: &SpectralVector) -> Result<EstimateWithError> {
        self.check(k, &x.coeffs)?;
        if k == self.n_steps() {
            return Ok(EstimateWithError::exact(self.terminal_cost().eval(&x.coeffs)));
        }
        let f = self.standardized(k, &x.coeffs);
        let node = &self.nodes[k];
        let mut v = node.surface.predict(&f, &node.y);
        if let Some(b) = self.y_bound(k) {
            v = v.clamp(-b, b);
        }
        Ok(EstimateWithError {
            value: v,
            std_error: node.surface.std_error(&f, &node.y),
            n_samples: self.n_paths,
        })
    }

    /// `∇^B v(s_k, x)` in noise coordinates, clipped to the a-priori bound.
    /// At the last node the surface of node `K-1` is used.
    pub fn z_at(&self, k: usize, x: &SpectralVector) -> Vec<f64> {
        self.z_with_error(k, x)
            .map(|(z, _)| z)
            .unwrap_or_else(|_| vec![f64::NAN; x.len()])
    }

    /// `z_at` with per-component standard errors.
    pub fn z_with_error(&self, k: usize, x: &SpectralVector) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(k, &x.coeffs)?;
        if self.nodes.is_empty() {
            return Ok((vec![0.0; self.n_modes], vec![0.0; self.n_modes]));
        }
        let k = k.min(self.nodes.len() - 1);
        let f = self.standardized(k, &x.coeffs);
        let node = &self.nodes[k];
        let mut z: Vec<f64> = node.z.iter().map(|fit| node.surface.predict(&f, fit)).collect();
        clip_norm(&mut z, self.z_clip);
        let se = node.z.iter().map(|fit| node.surface.std_error(&f, fit)).collect();
        Ok((z, se))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let est: Self = serde_json::from_str(s).map_err(|e| Error::InvalidInput(e.to_string()))?;
        est.validate()?;
        Ok(est)
    }

    /// Structural checks for an estimate loaded from disk.
    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() || self.nodes.len() != self.times.len() - 1 {
            return Err(Error::InvalidInput("estimate has inconsistent node count".into()));
        }
        if self.basis.n_modes != self.n_modes {
            return Err(Error::InvalidInput(
                "estimate basis does not match its mode count".into(),
            ));
        }
        let q_max = self.basis.len();
        for node in &self.nodes {
            let q = node.surface.active.len();
            if q == 0
                || q > q_max
                || node.z.len() != self.n_modes
                || node.y.coef.len() != q
                || node.z.iter().any(|f| f.coef.len() != q)
                || node.surface.inv_gram.len() != q * q
            {
                return Err(Error::InvalidInput(
                    "estimate node has inconsistent coefficient sizes".into(),
                ));
            }
        }
        self.terminal.compile(self.n_modes)?;
        Ok(())
    }
}

fn clip_norm(z: &mut [f64], clip: Option<f64>) -> bool {
    if let Some(c) = clip {
        let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > c {
            let s = c / n;
            z.iter_mut().for_each(|v| *v *= s);
            return true;
        }
    }
    false
}

/// `Δ · M e^{ΔΛ} Q_Δ^{-1}`: maps a stored increment `L g` to the
/// regression weight `ΔW` (the Brownian increment when `M = I`, `Λ = 0`).
fn increment_weight(model: &OUModel, op: &StepOp, dt: f64) -> DMatrix<f64> {
    let n = model.n_modes;
    let em = DMatrix::from_fn(n, n, |i, j| model.gram(i, j) * op.e[j]);
    let l = &op.cov.chol;
    // Q^{-1} = L^{-T} L^{-1}
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("Cholesky factor has a non-zero diagonal");
    em * linv.transpose() * linv * dt
}

/// Regression Monte Carlo for the backward equation on the paths of `bundle`.
#[allow(clippy::too_many_arguments)]
pub fn solve_bsde(
    model: &OUModel,
    grid: &TimeGrid,
    bundle: &PathBundle,
    driver: &Driver,
    l: &CostSpec,
    phi: &CostSpec,
    cfg: &SolverConfig,
) -> Result<ValueEstimate> {
    let n = model.n_modes;
    if bundle.dim != n || bundle.n_steps != grid.n_steps() {
        return Err(Error::InvalidInput("path bundle does not match model and grid".into()));
    }
    if cfg.basis.n_modes != n {
        return Err(Error::Dimension {
            expected: n,
            got: cfg.basis.n_modes,
        });
    }
    let phi_c = phi.compile(n)?;
    let l_c = l.compile(n)?;
    let r = driver.lipschitz();
    if !r.is_finite() {
        return Err(Error::InvalidInput(
            "driver must have a finite Lipschitz constant".into(),
        ));
    }
    let span = grid.horizon() - grid.t0();
    let z_clip = match cfg.z_clip {
        Some(c) => Some(c),
        None => finite((phi_c.lipschitz() + span * l_c.lipschitz()) * model.gram_norm()),
    };
    let mut est = ValueEstimate {
        n_modes: n,
        basis: cfg.basis.clone(),
        times: grid.nodes.clone(),
        nodes: Vec::new(),
        terminal: phi.clone(),
        z_clip,
        phi_bound: finite(phi_c.bound()),
        l_bound: finite(l_c.bound()),
        psi_at_zero: driver.psi_at_zero(n),
        driver_lipschitz: r,
        n_paths: bundle.n_paths,
        seed: bundle.seed,
        diagnostics: Vec::new(),
        compiled: OnceLock::new(),
    };
    let basis = cfg.basis.compile();
    let p = basis.len();
    let np = bundle.n_paths;
    let kk = grid.n_steps();
    let ops = step_ops(model, grid)?;

    let mut y_next = exec::fill_rows(np, 1, |i, out| out[0] = phi_c.eval(bundle.state(i, kk)));
    let mut fits = Vec::with_capacity(kk);
    let mut diags = Vec::with_capacity(kk);
    for k in (0..kk).rev() {
        let dt = grid.dt(k);
        let raw = exec::fill_rows(np, p, |i, row| basis.features(bundle.state(i, k), row));
        let design = Design::build(&raw, p)?;
        drop(raw);
        let wmat = increment_weight(model, &ops[k], dt);
        // ΔW / Δ per path
        let w = exec::fill_rows(np, n, |i, row| {
            let g = bundle.noise(i, k);
            for a in 0..n {
                let mut s = 0.0;
                for b in 0..n {
                    s += wmat[(a, b)] * g[b];
                }
                row[a] = s / dt;
            }
        });
        let lx = exec::fill_rows(np, 1, |i, out| out[0] = l_c.eval(bundle.state(i, k)));

        let c_fit = design.fit(&y_next, 1).remove(0);
        let fit_z = |resid: &(dyn Fn(usize) -> f64 + Sync)| -> (Vec<LinearFit>, Vec<f64>) {
            let targets = exec::fill_rows(np, n, |i, row| {
                let e = resid(i);
                for a in 0..n {
                    row[a] = e * w[i * n + a];
                }
            });
            let zf = design.fit(&targets, n);
            let zp = exec::fill_rows(np, n, |i, row| {
                for a in 0..n {
                    row[a] = design.predict_row(i, &zf[a]);
                }
                clip_norm(row, z_clip);
            });
            (zf, zp)
        };
        let psi_of = |zp: &[f64]| exec::fill_rows(np, 1, |i, out| out[0] = driver.psi(&zp[i * n..(i + 1) * n]));
        let fit_y = |psi: &[f64]| -> LinearFit {
            let t = exec::fill_rows(np, 1, |i, out| out[0] = y_next[i] + dt * (psi[i] + lx[i]));
            design.fit(&t, 1).remove(0)
        };

        let (_, zp0) = fit_z(&|i| y_next[i] - design.predict_row(i, &c_fit));
        let mut psi = psi_of(&zp0);
        let mut yf = fit_y(&psi);
        let mut passes = 1;
        let (zf, zp) = loop {
            let (zf1, zp1) = fit_z(&|i| y_next[i] - design.predict_row(i, &yf) + dt * (psi[i] + lx[i]));
            let psi1 = psi_of(&zp1);
            let yf1 = fit_y(&psi1);
            let change = yf1
                .coef
                .iter()
                .zip(&yf.coef)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            psi = psi1;
            yf = yf1;
            passes += 1;
            if !cfg.full_picard || change <= cfg.picard_tol || passes > cfg.max_picard {
                break (zf1, zp1);
            }
        };

        let bound = est.y_bound(k);
        let y_k = exec::fill_rows(np, 1, |i, out| {
            let v = design.predict_row(i, &yf);
            out[0] = match bound {
                Some(b) => v.clamp(-b, b),
                None => v,
            };
        });

        let mut mart = Moments::default();
        let mut ym = Moments::default();
        let mut znorm = 0.0;
        let mut clipped = 0;
        for i in 0..np {
            let z = &zp[i * n..(i + 1) * n];
            let zw = dot(z, &w[i * n..(i + 1) * n]);
            mart.push(y_next[i] - y_k[i] + dt * (psi[i] + lx[i]) - dt * zw);
            ym.push(y_k[i]);
            let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            znorm += zn;
            if let Some(c) = z_clip {
                if zn >= c * (1.0 - 1e-12) {
                    clipped += 1;
                }
            }
        }
        diags.push(NodeDiagnostics {
            node: k,
            t: grid.nodes[k],
            ridge: design.ridge,
            picard_passes: passes,
            martingale_mean: mart.mean,
            martingale_se: mart.std_error(),
            y_mean: ym.mean,
            y_se: ym.std_error(),
            z_norm_mean: znorm / np as f64,
            z_clipped: clipped,
        });
        fits.push(NodeFit {
            surface: design.surface(),
            y: yf,
            z: zf,
        });
        y_next = y_k;
    }
    fits.reverse();
    diags.reverse();
    est.nodes = fits;
    est.diagnostics = diags;
    Ok(est)
}
