//! Experiment configuration: a versioned JSON document, optionally layered
//! on top of a named preset, then patched by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use iterreg::pdsolver::{PrecondMode, Validation};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

pub const PRESETS: [&str; 7] = [
    "fig3",
    "fig4",
    "fig5",
    "fig6",
    "completion-200",
    "certified",
    "unfeasible-toy",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    pub instance: InstanceSpec,
    /// Defaults to nuclear for completion, `½‖·‖²` for the toy and
    /// ill-posed systems, ℓ1 otherwise.
    #[serde(default)]
    pub regularizer: Option<RegKind>,
    #[serde(default)]
    pub solver: SolverSpec,
    /// Columns of `metrics.csv` to fill; empty means all that apply.
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// One replicate per seed; each seeds the instance generator.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub compare: CompareSpec,
    /// Noise levels of the completion semiconvergence figure.
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_deltas() -> Vec<f64> {
    vec![0.1, 0.5, 1.0, 2.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// Toeplitz-correlated Gaussian design, Gaussian signal on a random support.
    Sparse {
        n: usize,
        d: usize,
        rho: f64,
        support_frac: f64,
        snr: Option<f64>,
    },
    /// [`InstanceSpec::Sparse`] with columns rescaled by `U(scale_lo, scale_hi)`.
    ColumnScaled {
        n: usize,
        d: usize,
        rho: f64,
        support_frac: f64,
        snr: Option<f64>,
        scale_lo: f64,
        scale_hi: f64,
    },
    /// ℓ1 instance with a known saddle point.
    Certified {
        n: usize,
        d: usize,
        s: usize,
        delta: f64,
        #[serde(default = "default_tries")]
        max_tries: usize,
    },
    Completion {
        d: usize,
        rank: usize,
        hidden_frac: f64,
        delta: f64,
    },
    IllPosed {
        n: usize,
        delta: f64,
    },
    UnfeasibleToy {},
    /// A directory written by `gen`.
    Dir { path: PathBuf },
    /// LIBSVM file; labels become the data `b`.
    Libsvm { path: PathBuf },
}

fn default_tries() -> usize {
    200
}

impl InstanceSpec {
    pub fn generator(&self) -> &'static str {
        match self {
            InstanceSpec::Sparse { .. } => "sparse",
            InstanceSpec::ColumnScaled { .. } => "column_scaled",
            InstanceSpec::Certified { .. } => "certified",
            InstanceSpec::Completion { .. } => "completion",
            InstanceSpec::IllPosed { .. } => "ill_posed",
            InstanceSpec::UnfeasibleToy {} => "unfeasible_toy",
            InstanceSpec::Dir { .. } => "dir",
            InstanceSpec::Libsvm { .. } => "libsvm",
        }
    }

    /// Generator parameters as recorded in `meta.json`.
    pub fn params(&self) -> BTreeMap<String, Value> {
        match serde_json::to_value(self) {
            Ok(Value::Object(m)) => m.into_iter().filter(|(k, _)| k != "generator").collect(),
            _ => BTreeMap::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    L1,
    SqL2,
    Nuclear,
    NonNeg,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaRule {
    /// `σ = 1/‖A*b^δ‖_∞`, `τ = 0.99/(σ‖A‖²)`.
    Datadriven,
    /// `σ = τ = sqrt(0.99)/‖A‖`.
    Symmetric,
    /// `σ = 1`, `τ = 1/(4‖A‖²)`: satisfies the feasibility-bound condition.
    Strict,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Rule(SigmaRule),
    Value(f64),
}

impl std::str::FromStr for SigmaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "datadriven" => Ok(SigmaSpec::Rule(SigmaRule::Datadriven)),
            "symmetric" => Ok(SigmaSpec::Rule(SigmaRule::Symmetric)),
            "strict" => Ok(SigmaSpec::Rule(SigmaRule::Strict)),
            _ => s
                .parse::<f64>()
                .map(SigmaSpec::Value)
                .map_err(|_| format!("expected datadriven, symmetric, strict or a number, got {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecondSpec {
    pub mode: PrecondMode,
    /// Defaults to the value reproducing the data-driven dual step.
    #[serde(default)]
    pub theta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsilonSpec {
    Exact,
    Constant { c0: f64 },
    /// Budget `c0·δ` with the instance noise level.
    NoiseProportional { c0: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StoppingSpec {
    MaxIters {
        iters: usize,
    },
    /// `k = ⌈C̃/δ⌉`; `delta` defaults to the instance noise level.
    FixedK {
        ctilde: f64,
        #[serde(default)]
        delta: Option<f64>,
    },
    /// Hold out the trailing `rows` rows and report the MSE minimizer.
    Holdout {
        rows: usize,
        max_iters: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub sigma: SigmaSpec,
    /// Primal step with a numeric `sigma`; defaults to `0.99/(σ‖A‖²)`.
    pub tau: Option<f64>,
    pub preconditioner: Option<PrecondSpec>,
    pub xi: f64,
    pub eta: f64,
    pub epsilon: EpsilonSpec,
    pub averaging: bool,
    pub stopping: StoppingSpec,
    pub validation: Validation,
    pub log_every: Option<usize>,
    pub seed: u64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            sigma: SigmaSpec::Rule(SigmaRule::Datadriven),
            tau: None,
            preconditioner: None,
            xi: 0.25,
            eta: 1.5,
            epsilon: EpsilonSpec::Exact,
            averaging: true,
            stopping: StoppingSpec::MaxIters { iters: 1000 },
            validation: Validation::Convergence,
            log_every: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSpec {
    pub folds: usize,
    pub pd_iters: usize,
    pub grid_size: usize,
    pub lambda_min_ratio: f64,
    pub path_tol: f64,
    pub path_max_iters: usize,
    /// Trailing rows kept for the test MSE; defaults to a fifth.
    pub test_rows: Option<usize>,
}

impl Default for CompareSpec {
    fn default() -> Self {
        CompareSpec {
            folds: 4,
            pd_iters: 300,
            grid_size: 100,
            lambda_min_ratio: 1e-3,
            path_tol: 1e-4,
            path_max_iters: 5000,
            test_rows: None,
        }
    }
}

/// Built-in configurations, as JSON so a config file can be merged on top.
pub fn preset(name: &str) -> Result<Value, CliError> {
    let v = match name {
        "fig3" => serde_json::json!({
            "version": CONFIG_VERSION,
            "name": "fig3",
            "instance": {"generator": "sparse", "n": 200, "d": 500, "rho": 0.2, "support_frac": 0.1, "snr": 10.0},
            "solver": {"sigma": "datadriven", "averaging": false,
                       "stopping": {"rule": "max_iters", "iters": 100}, "log_every": 1},
        }),
        "fig4" => serde_json::json!({
            "version": CONFIG_VERSION,
            "name": "fig4",
            "instance": {"generator": "sparse", "n": 1250, "d": 2000, "rho": 0.2, "support_frac": 0.1, "snr": 5.0},
            "solver": {"sigma": "datadriven", "averaging": false},
            "compare": {"test_rows": 250},
        }),
        "fig5" => serde_json::json!({
            "version": CONFIG_VERSION,
            "name": "fig5",
            "instance": {"generator": "column_scaled", "n": 500, "d": 1000, "rho": 0.2, "support_frac": 0.1,
                         "snr": 5.0, "scale_lo": 1.0, "scale_hi": 5.0},
            "solver": {"sigma": "datadriven", "averaging": false,
                       "preconditioner": {"mode": "inverse_columns"},
                       "stopping": {"rule": "max_iters", "iters": 300}, "log_every": 1},
        }),
        "fig6" | "completion-200" => serde_json::json!({
            "version": CONFIG_VERSION,
            "name": name,
            "instance": {"generator": "completion", "d": 200, "rank": 5, "hidden_frac": 0.8, "delta": 0.1},
            "solver": {"sigma": 0.99, "tau": 0.99, "averaging": false,
                       "stopping": {"rule": "max_iters", "iters": 1000}, "log_every": 5},
        }),
        "certified" => serde_json::json!({
            "version": CONFIG_VERSION,
            "name": "certified",
            "instance": {"generator": "certified", "n": 50, "d": 100, "s": 5, "delta": 0.01},
            "solver": {"sigma": "strict", "validation": "strict",
                       "stopping": {"rule": "max_iters", "iters": 5000}},
        }),
        "unfeasible-toy" => serde_json::json!({
            "version": CONFIG_VERSION,
            "name": "unfeasible-toy",
            "instance": {"generator": "unfeasible_toy"},
            "solver": {"sigma": "symmetric", "stopping": {"rule": "max_iters", "iters": 10000}},
        }),
        _ => {
            return Err(CliError::Config(format!(
                "unknown preset {name:?} (available: {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(v)
}

/// Recursively overlay `top` on `base`; objects merge, anything else replaces.
/// A tagged object (`generator`, `rule`, `kind`) whose tag changes replaces
/// the base wholesale so stale variant fields do not leak through.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if !variant_changed(slot, &v) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn variant_changed(a: &Value, b: &Value) -> bool {
    ["generator", "rule", "kind"].iter().any(|tag| match (a.get(tag), b.get(tag)) {
        (Some(x), Some(y)) => x != y,
        _ => false,
    })
}

/// Preset, then the config file, validated together.
pub fn load(path: Option<&Path>, preset_name: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let mut value = match preset_name {
        Some(p) => preset(p)?,
        None => Value::Object(Default::default()),
    };
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text).map_err(CliError::from_json)?;
        if !file.is_object() {
            return Err(CliError::Config("config must be a JSON object".into()));
        }
        merge(&mut value, file);
    } else if preset_name.is_none() {
        return Err(CliError::Config("give --config FILE and/or --preset NAME".into()));
    }
    from_value(value)
}

pub fn from_value(value: Value) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

const METRIC_NAMES: [&str; 8] = [
    "feasibility",
    "lagrangian_gap",
    "bregman_l1",
    "l1_norm",
    "support_size",
    "f1",
    "holdout_mse",
    "epsilon_k",
];

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if let Some(m) = self.metrics.iter().find(|m| !METRIC_NAMES.contains(&m.as_str())) {
            return bad(format!("unknown metric {m:?} (known: {})", METRIC_NAMES.join(", ")));
        }
        if self.deltas.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return bad("deltas must be finite and nonnegative".into());
        }
        match self.solver.sigma {
            SigmaSpec::Value(s) if !(s > 0.0 && s.is_finite()) => return bad(format!("σ = {s}")),
            _ => {}
        }
        if let Some(t) = self.solver.tau {
            if !matches!(self.solver.sigma, SigmaSpec::Value(_)) {
                return bad("tau is only used with a numeric sigma".into());
            }
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("τ = {t}"));
            }
        }
        if self.solver.log_every == Some(0) {
            return bad("log_every must be positive".into());
        }
        match self.solver.stopping {
            StoppingSpec::MaxIters { iters: 0 } | StoppingSpec::Holdout { max_iters: 0, .. } => {
                return bad("iteration budget must be positive".into())
            }
            StoppingSpec::Holdout { rows: 0, .. } => return bad("holdout needs at least one row".into()),
            _ => {}
        }
        Ok(())
    }

    /// Metric columns kept in `metrics.csv`.
    pub fn keeps_metric(&self, name: &str) -> bool {
        self.metrics.is_empty() || self.metrics.iter().any(|m| m == name)
    }
}
