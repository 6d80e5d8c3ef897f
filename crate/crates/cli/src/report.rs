//! Solver run persistence and re-verification.
//!
//! A [`SolveReport`] captures everything needed to re-check a run without
//! recomputation drift: the effective configuration, the policy, the
//! utility, and the solver's certificate data. Floating-point values are
//! serialized at full precision; human-facing prints use nine significant
//! digits.

use std::path::Path;

use serde::{Deserialize, Serialize};
use taskalloc::moderate::policy_objective;
use taskalloc::oracle::{verify_kkt, KktReport};
use taskalloc::strict::StrictSolution;
use taskalloc::worker::Policy;

use crate::config::ExperimentConfig;
use crate::{CliError, CliResult};

/// Formats a value with the given number of significant digits, in plain
/// decimal for moderate magnitudes and scientific notation otherwise.
pub fn format_sig(value: f64, digits: u32) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return format!("{value}");
    }
    let exponent = value.abs().log10().floor() as i32;
    if !(-4..13).contains(&exponent) {
        let sci = format!("{:.*e}", digits.saturating_sub(1) as usize, value);
        let (mantissa, exp) = sci.split_once('e').expect("scientific format");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{mantissa}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
    let mut s = format!("{value:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

/// Certificate payload of the solver that produced a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SolverOutcome {
    Strict {
        water_level: f64,
        active_set: Vec<usize>,
        kkt_passed: bool,
    },
    Moderate {
        outer_iterations: usize,
        converged: bool,
        blocks_converged: bool,
        total_nodes: usize,
        initial_p: Vec<f64>,
        utility_trace: Vec<f64>,
    },
}

/// Persisted solver run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub policy: Policy,
    pub utility: f64,
    pub outcome: SolverOutcome,
}

impl SolveReport {
    pub fn save(&self, path: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Validation(format!("serialization failed: {e}")))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::Validation(format!(
                "report parse error in {} at line {} column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })
    }
}

/// Result of re-verifying a stored run.
#[derive(Debug)]
pub struct Verification {
    pub kkt: Option<KktReport>,
    /// Absolute difference between the stored utility and the value
    /// recomputed from the stored policy.
    pub utility_drift: f64,
    pub passed: bool,
}

/// Re-derives the run's certificate from its persisted data alone.
///
/// Strict runs are rebuilt into a solution and passed through the KKT
/// checks; moderate runs have their utility recomputed at the stored
/// policy. Either way the stored utility must match the recomputation
/// within `1e-9`.
pub fn verify_report(report: &SolveReport) -> CliResult<Verification> {
    report.config.validate()?;
    let workers = report.config.materialize_workers()?;
    report
        .policy
        .validate(workers.len(), report.config.budget)
        .map_err(|e| CliError::Validation(format!("stored policy invalid: {e}")))?;

    match &report.outcome {
        SolverOutcome::Strict { water_level, active_set, .. } => {
            let solution = StrictSolution {
                alpha: report.policy.alpha.clone(),
                water_level: *water_level,
                active_set: active_set.clone(),
                utility: report.utility,
            };
            let kkt = verify_kkt(&solution, &workers, report.config.budget);
            let recomputed: f64 = workers
                .iter()
                .zip(&report.policy.alpha)
                .map(|(w, &a)| taskalloc::worker::strict_utility(w, a))
                .sum();
            let drift = (recomputed - report.utility).abs();
            let passed = kkt.passed && drift <= 1e-9;
            Ok(Verification { kkt: Some(kkt), utility_drift: drift, passed })
        }
        SolverOutcome::Moderate { .. } => {
            let recomputed =
                policy_objective(&workers, &report.policy.alpha, &report.policy.p)?;
            let drift = (recomputed - report.utility).abs();
            Ok(Verification { kkt: None, utility_drift: drift, passed: drift <= 1e-9 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(4.0 / 23.0, 9), "0.173913043");
        assert_eq!(format_sig(12.0 / 23.0, 9), "0.52173913");
        assert_eq!(format_sig(40.0 / 23.0, 9), "1.73913043");
        assert_eq!(format_sig(0.0, 9), "0");
        assert_eq!(format_sig(-1.5, 9), "-1.5");
        assert_eq!(format_sig(123456789.0, 9), "123456789");
        assert_eq!(format_sig(1.0e-7, 9), "1e-7");
        assert_eq!(format_sig(28.0 / 529.0, 9), "0.0529300567");
    }

    #[test]
    fn report_round_trip() {
        let config: ExperimentConfig = serde_json::from_str(
            r#"{"budget": 4.0, "workers": [{"lambda": 2.0, "mu": 1.0}, {"lambda": 2.0, "mu": 1.0}]}"#,
        )
        .unwrap();
        let workers = config.materialize_workers().unwrap();
        let solution = taskalloc::strict::solve_strict(&workers, 4.0).unwrap();
        let report = SolveReport {
            schema_version: 1,
            config,
            policy: Policy { alpha: solution.alpha.clone(), p: vec![0.0; 2] },
            utility: solution.utility,
            outcome: SolverOutcome::Strict {
                water_level: solution.water_level,
                active_set: solution.active_set.clone(),
                kkt_passed: true,
            },
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        report.save(&path).unwrap();
        let loaded = SolveReport::load(&path).unwrap();
        let verification = verify_report(&loaded).unwrap();
        assert!(verification.passed);
        assert!(verification.utility_drift <= 1e-9);
        assert!(verification.kkt.unwrap().passed);
    }
}
