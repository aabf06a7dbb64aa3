//! Run configuration (TOML). Every field has a default, so an empty file is
//! a valid configuration of the default heat experiment.

// negated comparisons reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hjb_core::cost::CostSpec;
use hjb_core::fbsde::SolverConfig;
use hjb_core::hamiltonian::Driver;
use hjb_core::heat::{build_problem, HeatConfig, HeatCost, HeatProblem};
use hjb_core::regression::FeatureBasis;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub n_modes: usize,
    pub a: f64,
    pub b: f64,
    pub grid_points: usize,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            n_modes: 8,
            a: 0.3,
            b: 0.7,
            grid_points: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    pub t0: f64,
    pub horizon: f64,
    pub n_steps: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self {
            t0: 0.0,
            horizon: 1.0,
            n_steps: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McBlock {
    /// Paths for the backward solve.
    pub paths: usize,
    pub seed: u64,
    pub antithetic: bool,
    /// Samples per semigroup evaluation in `verify`.
    pub semigroup_samples: usize,
}

impl Default for McBlock {
    fn default() -> Self {
        Self {
            paths: 100_000,
            seed: 1,
            antithetic: false,
            semigroup_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlCostKind {
    Zero,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriverChoice {
    /// `ψ` from the control block.
    Hamiltonian,
    Zero,
    Constant {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlBlock {
    pub radius: f64,
    pub g: ControlCostKind,
    pub weight: f64,
    /// Controlled coordinates; all modes when omitted.
    pub dim: Option<usize>,
    pub driver: DriverChoice,
    /// Initial state; `0.5·e_1` when omitted.
    pub x0: Option<Vec<f64>>,
}

impl Default for ControlBlock {
    fn default() -> Self {
        Self {
            radius: 1.0,
            g: ControlCostKind::Zero,
            weight: 1.0,
            dim: None,
            driver: DriverChoice::Hamiltonian,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostBlock {
    pub terminal: HeatCost,
    pub running: HeatCost,
    /// Multiplies the running cost. Off by default: with an explicit time
    /// step the B-gradient carries an O(Δ) bias from the running cost, which
    /// at K = 16 exceeds the identification tolerance.
    pub running_scale: f64,
    /// Saturation level; `10·√trace Q_T` when omitted.
    pub clamp: Option<f64>,
}

impl Default for CostBlock {
    fn default() -> Self {
        Self {
            terminal: HeatCost::SupState,
            running: HeatCost::SupState,
            running_scale: 0.0,
            clamp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub degree: usize,
    /// Leading coordinates in the polynomial features; `min(N, 4)` when omitted.
    pub n_feat: Option<usize>,
    /// Grid of the sup-of-state feature; 0 disables it.
    pub sup_feature_grid: usize,
    pub full_picard: bool,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            degree: 2,
            n_feat: None,
            sup_feature_grid: hjb_core::fbsde::FEATURE_GRID_POINTS,
            full_picard: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizeMethod {
    /// Gaussian mollification `ρ_n` after projection on the leading modes.
    Mollify,
    /// Inf-sup convolution; each evaluation is an optimization, so only
    /// practical for a few modes.
    Infsup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizeBlock {
    pub ladder: Vec<usize>,
    pub method: RegularizeMethod,
    pub mollifier_samples: usize,
}

impl Default for RegularizeBlock {
    fn default() -> Self {
        Self {
            ladder: vec![4, 16, 64],
            method: RegularizeMethod::Mollify,
            mollifier_samples: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyBlock {
    /// Probe points drawn at `probe_node` in addition to `(t0, x0)`.
    pub probes: usize,
    /// Defaults to the middle node.
    pub probe_node: Option<usize>,
    pub fd_step: f64,
    pub fd_paths: usize,
    pub identification_tol: f64,
    /// Identification is checked only at nodes with `t ≤ T - terminal_margin`.
    pub terminal_margin: f64,
    /// Scale `α` of the weight `α·c(T - t)` in the weighted-norm check.
    pub weight_scale: f64,
    /// Mode indices `k` of the directions `ξ = e_k`.
    pub directions: Vec<usize>,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        Self {
            probes: 9,
            probe_node: None,
            fd_step: hjb_core::verify::FD_STEP,
            fd_paths: 10_000,
            identification_tol: 5e-2,
            terminal_margin: 0.1,
            weight_scale: 1.0,
            directions: vec![0, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteBlock {
    pub n_controls: usize,
    pub paths: usize,
    /// Feedback tolerance as a multiple of `bound(φ) + T·bound(l)`.
    pub feedback_tol_factor: f64,
}

impl Default for SuiteBlock {
    fn default() -> Self {
        Self {
            n_controls: 50,
            paths: 5_000,
            feedback_tol_factor: 5e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularityBlock {
    pub t_values: Vec<f64>,
    pub n_values: Vec<usize>,
}

impl Default for RegularityBlock {
    fn default() -> Self {
        Self {
            t_values: vec![0.2, 0.1, 0.05, 0.02],
            n_values: vec![16, 32, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub grid: GridBlock,
    pub mc: McBlock,
    pub control: ControlBlock,
    pub cost: CostBlock,
    pub solver: SolverBlock,
    pub regularize: RegularizeBlock,
    pub verify: VerifyBlock,
    pub suite: SuiteBlock,
    pub regularity: RegularityBlock,
    pub output: OutputBlock,
}

fn bad(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration,
    /// excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputBlock::default();
        let canon = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.mc.paths < 2 {
            return Err(bad("mc.paths", "must be at least 2"));
        }
        if self.mc.semigroup_samples < 2 {
            return Err(bad("mc.semigroup_samples", "must be at least 2"));
        }
        if self.solver.degree == 0 {
            return Err(bad("solver.degree", "must be at least 1"));
        }
        if let Some(f) = self.solver.n_feat {
            if f == 0 || f > self.model.n_modes {
                return Err(bad("solver.n_feat", format!("must be in 1..={}", self.model.n_modes)));
            }
        }
        if self.solver.sup_feature_grid == 1 {
            return Err(bad("solver.sup_feature_grid", "must be 0 or at least 2"));
        }
        if self.regularize.ladder.contains(&0) {
            return Err(bad("regularize.ladder", "entries must be positive"));
        }
        if self.regularize.mollifier_samples < 2 {
            return Err(bad("regularize.mollifier_samples", "must be at least 2"));
        }
        if !(self.verify.fd_step > 0.0) {
            return Err(bad("verify.fd_step", "must be positive"));
        }
        if !(self.verify.terminal_margin >= 0.0) {
            return Err(bad("verify.terminal_margin", "must be nonnegative"));
        }
        if !(self.verify.weight_scale > 0.0) {
            return Err(bad("verify.weight_scale", "must be positive"));
        }
        if self.verify.fd_paths < 2 {
            return Err(bad("verify.fd_paths", "must be at least 2"));
        }
        if let Some(k) = self.verify.directions.iter().find(|k| **k >= self.model.n_modes) {
            return Err(bad("verify.directions", format!("mode {k} out of range")));
        }
        if let Some(k) = self.verify.probe_node {
            if k >= self.grid.n_steps {
                return Err(bad(
                    "verify.probe_node",
                    format!("must be below n_steps = {}", self.grid.n_steps),
                ));
            }
        }
        if self.suite.paths < 2 {
            return Err(bad("suite.paths", "must be at least 2"));
        }
        if !(self.suite.feedback_tol_factor > 0.0) {
            return Err(bad("suite.feedback_tol_factor", "must be positive"));
        }
        if self.regularity.t_values.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(bad("regularity.t_values", "must be positive and finite"));
        }
        if self.regularity.n_values.contains(&0) {
            return Err(bad("regularity.n_values", "must be positive"));
        }
        self.heat()?;
        Ok(())
    }

    pub fn heat_config(&self) -> HeatConfig {
        HeatConfig {
            a: self.model.a,
            b: self.model.b,
            n_modes: self.model.n_modes,
            grid_points: self.model.grid_points,
            t0: self.grid.t0,
            horizon: self.grid.horizon,
            n_steps: self.grid.n_steps,
            terminal: self.cost.terminal.clone(),
            running: self.cost.running.clone(),
            running_scale: self.cost.running_scale,
            clamp: self.cost.clamp,
            radius: self.control.radius,
            control_weight: match self.control.g {
                ControlCostKind::Zero => 0.0,
                ControlCostKind::Quadratic => self.control.weight,
            },
            control_dim: self.control.dim,
            x0: self.control.x0.clone(),
        }
    }

    pub fn heat(&self) -> Result<HeatProblem, CliError> {
        if self.control.g == ControlCostKind::Quadratic && !(self.control.weight > 0.0) {
            return Err(bad("control.weight", "must be positive for quadratic g"));
        }
        build_problem(&self.heat_config()).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn driver(&self, hp: &HeatProblem) -> Driver {
        match &self.control.driver {
            DriverChoice::Hamiltonian => hp.driver(),
            DriverChoice::Zero => Driver::Zero,
            DriverChoice::Constant { value } => Driver::Constant { value: *value },
        }
    }

    pub fn solver(&self) -> Result<SolverConfig, CliError> {
        let n = self.model.n_modes;
        let n_feat = self.solver.n_feat.unwrap_or(n.min(4));
        let sup = (self.solver.sup_feature_grid >= 2 && n > 1).then_some(self.solver.sup_feature_grid);
        let basis = FeatureBasis::new(n, n_feat, self.solver.degree, sup).map_err(|e| bad("solver", e))?;
        Ok(SolverConfig {
            basis,
            full_picard: self.solver.full_picard,
            ..SolverConfig::standard(n)
        })
    }

    /// Regularized terminal cost for ladder index `n`.
    pub fn regularized_terminal(&self, phi: &CostSpec, n: usize) -> CostSpec {
        match self.regularize.method {
            RegularizeMethod::Mollify => CostSpec::Mollified {
                inner: Box::new(phi.clone()),
                n,
                samples: self.regularize.mollifier_samples,
                seed: self.mc.seed,
            },
            RegularizeMethod::Infsup => CostSpec::InfSup {
                inner: Box::new(phi.clone()),
                n: n as f64,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_fields_and_bad_values_are_config_errors() {
        assert!(matches!(
            RunConfig::from_toml("[model]\nmodes = 3"),
            Err(CliError::Config(_))
        ));
        let e = RunConfig::from_toml("[model]\na = 0.9").unwrap_err();
        assert!(e.to_string().contains("model"));
        let e = RunConfig::from_toml("[verify]\ndirections = [99]").unwrap_err();
        assert!(e.to_string().contains("verify.directions"));
    }

    #[test]
    fn hash_tracks_content_but_not_output_dir() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.mc.seed = 2;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.output.dir = "elsewhere".into();
        assert_eq!(a.hash(), c.hash());
    }

    #[test]
    fn custom_linear_terminal() {
        let text = r#"
[model]
n_modes = 2
[cost]
terminal = { kind = "custom", spec = { kind = "linear", weights = [1.0, 0.5] } }
running_scale = 0.0
[control]
driver = { kind = "zero" }
"#;
        let c = RunConfig::from_toml(text).unwrap();
        let hp = c.heat().unwrap();
        assert_eq!(
            hp.phi,
            CostSpec::Linear {
                weights: vec![1.0, 0.5]
            }
        );
        assert!(matches!(c.driver(&hp), Driver::Zero));
    }
}
