//! Experiment configuration: JSON schema, defaults, validation, and
//! worker materialization (explicit lists or generated geometric-decay
//! populations).

use std::path::Path;

use serde::{Deserialize, Serialize};
use taskalloc::moderate::NodeSelection;
use taskalloc::worker::{AssignmentMode, WorkerParams};

use crate::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// One worker's raw parameters as they appear in config files.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWorker {
    pub lambda: f64,
    pub mu: f64,
    #[serde(default = "default_ps")]
    pub ps: f64,
}

fn default_ps() -> f64 {
    1.0
}

/// Generated population: recovery rates `lambda_i = b q^{i-1}` with `b`
/// normalizing their sum to `lambda_sum`, common exhaustion rate `mu`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Population {
    pub n: usize,
    pub q: f64,
    pub lambda_sum: f64,
    pub mu: f64,
    #[serde(default = "default_ps")]
    pub ps: f64,
}

impl Population {
    /// Normalization constant and the materialized recovery rates.
    pub fn rates(&self) -> (f64, Vec<f64>) {
        let b = if self.q == 1.0 {
            self.lambda_sum / self.n as f64
        } else {
            self.lambda_sum * (1.0 - self.q) / (1.0 - self.q.powi(self.n as i32))
        };
        let lambdas = (0..self.n).map(|i| b * self.q.powi(i as i32)).collect();
        (b, lambdas)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Relative branch-and-bound gap tolerance.
    pub rho: f64,
    /// Alternation stops once a round improves utility by at most this.
    pub eps: f64,
    pub max_outer: usize,
    pub node_cap: usize,
    pub selection: NodeSelection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_p: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rho: 1e-4,
            eps: 1e-6,
            max_outer: 50,
            node_cap: 1_000_000,
            selection: NodeSelection::LargestEdge,
            initial_p: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridOptions {
    pub alpha_steps: usize,
    pub p_steps: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { alpha_steps: 401, p_steps: 101 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimOptions {
    pub horizon: f64,
    pub seed: u64,
    pub warmup: f64,
    pub batches: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { horizon: 1e5, seed: 1, warmup: 0.1, batches: 50 }
    }
}

/// Full experiment configuration. Defaults are filled at load time, so
/// serializing the loaded value echoes the effective settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub budget: f64,
    #[serde(default = "default_mode")]
    pub mode: AssignmentMode,
    #[serde(default)]
    pub allow_unstable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<Vec<RawWorker>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<Population>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub grid: GridOptions,
    #[serde(default)]
    pub sim: SimOptions,
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_mode() -> AssignmentMode {
    AssignmentMode::Strict
}

impl ExperimentConfig {
    pub fn validate(&self) -> CliResult<()> {
        let fail = |msg: String| Err(CliError::Validation(msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return fail(format!("budget must be positive, got {}", self.budget));
        }
        match (&self.workers, &self.population) {
            (Some(w), None) if w.is_empty() => {
                return fail("workers list must not be empty".into());
            }
            (Some(_), None) | (None, Some(_)) => {}
            _ => {
                return fail("exactly one of `workers` or `population` must be given".into());
            }
        }
        if let Some(p) = &self.population {
            if p.n == 0 {
                return fail("population.n must be at least 1".into());
            }
            if !(p.q > 0.0 && p.q <= 1.0) {
                return fail(format!("population.q must lie in (0, 1], got {}", p.q));
            }
            if !(p.lambda_sum.is_finite() && p.lambda_sum > 0.0) {
                return fail(format!(
                    "population.lambda_sum must be positive, got {}",
                    p.lambda_sum
                ));
            }
            if !(p.mu.is_finite() && p.mu > 0.0) {
                return fail(format!("population.mu must be positive, got {}", p.mu));
            }
        }
        let s = &self.solver;
        if !(s.rho.is_finite() && s.rho > 0.0) {
            return fail(format!("solver.rho must be positive, got {}", s.rho));
        }
        if !(s.eps.is_finite() && s.eps >= 0.0) {
            return fail(format!("solver.eps must be nonnegative, got {}", s.eps));
        }
        if s.max_outer == 0 {
            return fail("solver.max_outer must be at least 1".into());
        }
        if s.node_cap == 0 {
            return fail("solver.node_cap must be at least 1".into());
        }
        if self.grid.alpha_steps < 2 {
            return fail(format!(
                "grid.alpha_steps must be at least 2, got {}",
                self.grid.alpha_steps
            ));
        }
        if self.grid.p_steps < 2 {
            return fail(format!("grid.p_steps must be at least 2, got {}", self.grid.p_steps));
        }
        if !(self.sim.horizon.is_finite() && self.sim.horizon > 0.0) {
            return fail(format!("sim.horizon must be positive, got {}", self.sim.horizon));
        }
        if !((0.0..=0.5).contains(&self.sim.warmup) && self.sim.warmup.is_finite()) {
            return fail(format!("sim.warmup must lie in [0, 0.5], got {}", self.sim.warmup));
        }
        if self.sim.batches < 2 {
            return fail(format!("sim.batches must be at least 2, got {}", self.sim.batches));
        }
        Ok(())
    }

    /// Builds the validated worker list (explicit or generated).
    pub fn materialize_workers(&self) -> CliResult<Vec<WorkerParams>> {
        let build = |lambda: f64, mu: f64, ps: f64| -> CliResult<WorkerParams> {
            let w = if self.allow_unstable {
                WorkerParams::allow_unstable(lambda, mu, ps)
            } else {
                WorkerParams::new(lambda, mu, ps)
            };
            Ok(w?)
        };
        if let Some(raw) = &self.workers {
            return raw.iter().map(|r| build(r.lambda, r.mu, r.ps)).collect();
        }
        let pop = self.population.as_ref().expect("validated config has population");
        let (_, lambdas) = pop.rates();
        lambdas.into_iter().map(|l| build(l, pop.mu, pop.ps)).collect()
    }
}

/// Loads and validates a configuration file, reporting parse failures
/// with line/column positions and validation failures by the violated
/// invariant.
pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::Validation(format!(
            "config parse error in {} at line {} column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(extra: &str) -> ExperimentConfig {
        let text = format!(
            r#"{{"budget": 10.0, "population": {{"n": 10, "q": 1.0, "lambda_sum": 20.0, "mu": 1.0}}{extra}}}"#
        );
        let config: ExperimentConfig = serde_json::from_str(&text).unwrap();
        config.validate().unwrap();
        config
    }

    #[test]
    fn population_uniform_rates() {
        let config = base_config("");
        let (b, lambdas) = config.population.unwrap().rates();
        assert_eq!(b, 2.0);
        assert!(lambdas.iter().all(|&l| (l - 2.0).abs() < 1e-15));
        let workers = config.materialize_workers().unwrap();
        assert_eq!(workers.len(), 10);
        assert_eq!(workers[0].ps(), 1.0);
    }

    #[test]
    fn population_geometric_normalization() {
        let mut config = base_config("");
        let q: f64 = 0.9;
        config.population.as_mut().unwrap().q = q;
        let (b, lambdas) = config.population.unwrap().rates();
        let expected = 20.0 * (1.0 - q) / (1.0 - q.powi(10));
        assert!((b - expected).abs() < 1e-12);
        assert!((lambdas.iter().sum::<f64>() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn defaults_are_echoed() {
        let config = base_config("");
        assert_eq!(config.schema_version, SCHEMA_VERSION);
        assert_eq!(config.solver.rho, 1e-4);
        assert_eq!(config.solver.max_outer, 50);
        assert_eq!(config.grid.alpha_steps, 401);
        let echoed = serde_json::to_string(&config).unwrap();
        assert!(echoed.contains("\"rho\":0.0001"));
        assert!(echoed.contains("\"alpha_steps\":401"));
    }

    #[test]
    fn rejects_negative_budget() {
        let text = r#"{"budget": -1.0, "workers": [{"lambda": 2.0, "mu": 1.0}]}"#;
        let config: ExperimentConfig = serde_json::from_str(text).unwrap();
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("budget must be positive"));
    }

    #[test]
    fn rejects_worker_population_conflicts() {
        let both = r#"{"budget": 1.0, "workers": [{"lambda": 2.0, "mu": 1.0}],
                       "population": {"n": 2, "q": 1.0, "lambda_sum": 4.0, "mu": 1.0}}"#;
        let config: ExperimentConfig = serde_json::from_str(both).unwrap();
        assert!(config.validate().is_err());
        let neither = r#"{"budget": 1.0}"#;
        let config: ExperimentConfig = serde_json::from_str(neither).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn unstable_workers_need_flag() {
        let text = r#"{"budget": 1.0, "workers": [{"lambda": 1.0, "mu": 2.0}]}"#;
        let config: ExperimentConfig = serde_json::from_str(text).unwrap();
        config.validate().unwrap();
        assert!(config.materialize_workers().is_err());
        let text = r#"{"budget": 1.0, "allow_unstable": true,
                       "workers": [{"lambda": 1.0, "mu": 2.0}]}"#;
        let config: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert!(config.materialize_workers().is_ok());
    }

    #[test]
    fn parse_errors_carry_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\n  \"budget\": oops\n}").unwrap();
        let err = load_config(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }
}
