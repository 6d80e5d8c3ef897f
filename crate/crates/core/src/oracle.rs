//! Independent brute-force verifiers: separable grid search by dynamic
//! programming over budget units for both assignment problems, and KKT
//! certificate checks for water-filling solutions.
//!
//! Both objectives are sums of per-worker terms coupled only through the
//! sampling budget, so an exact search over the grid
//! `{0, d, 2d, ..., C}^n` intersected with `sum <= C` reduces to a
//! dynamic program over (worker, remaining budget units). The per-worker
//! value tables are evaluated through the balance-equation route, keeping
//! the oracle independent of the polynomial path the solvers optimize.

use rayon::prelude::*;
use serde::Serialize;

use crate::strict::{marginal_derivative, StrictSolution};
use crate::worker::{moderate_utility, strict_utility, Policy, WorkerParams};
use crate::{Error, Result};

/// Grid resolution: point counts on `[0, C]` and `[0, 1]`; both ends
/// inclusive so boundary optima are exact.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridSpec {
    alpha_steps: usize,
    p_steps: usize,
}

impl GridSpec {
    pub fn new(alpha_steps: usize, p_steps: usize) -> Result<Self> {
        if alpha_steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 sampling-rate points, got {alpha_steps}"
            )));
        }
        if p_steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 probability points, got {p_steps}"
            )));
        }
        Ok(Self { alpha_steps, p_steps })
    }

    pub fn alpha_steps(&self) -> usize {
        self.alpha_steps
    }

    pub fn p_steps(&self) -> usize {
        self.p_steps
    }

    /// Spacing `d = C / (alpha_steps - 1)` of the rate grid.
    pub fn alpha_resolution(&self, budget: f64) -> f64 {
        budget / (self.alpha_steps - 1) as f64
    }
}

/// Grid-search result. `grid_utility` is the dynamic program's
/// accumulated value; `utility` re-evaluates the objective at the chosen
/// point in one fresh pass, separating accumulation error from the
/// discretization error recorded in `alpha_resolution`.
#[derive(Debug, Clone, Serialize)]
pub struct OracleSolution {
    pub policy: Policy,
    pub utility: f64,
    pub grid_utility: f64,
    pub alpha_resolution: f64,
}

/// Exact maximizer over the budget grid: `dp[i][k]` is the best value of
/// workers `0..=i` using at most `k` budget units. Returns per-worker
/// unit counts and the DP value.
fn budget_dp(tables: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let units = tables[0].len();
    let mut dp = tables[0].clone();
    // Worker 0 alone: more budget never hurts because unused units are
    // allowed; make the row monotone so later maxima are prefix maxima.
    let mut choice0 = vec![0usize; units];
    for k in 1..units {
        if dp[k - 1] > dp[k] {
            dp[k] = dp[k - 1];
            choice0[k] = choice0[k - 1];
        } else {
            choice0[k] = k;
        }
    }
    let mut choices = vec![choice0];
    for table in &tables[1..] {
        let mut next = vec![f64::NEG_INFINITY; units];
        let mut choice = vec![0usize; units];
        for k in 0..units {
            for j in 0..=k {
                let v = dp[k - j] + table[j];
                if v > next[k] {
                    next[k] = v;
                    choice[k] = j;
                }
            }
        }
        dp = next;
        choices.push(choice);
    }
    let mut remaining = units - 1;
    let mut allocation = vec![0usize; tables.len()];
    for i in (1..tables.len()).rev() {
        allocation[i] = choices[i][remaining];
        remaining -= allocation[i];
    }
    allocation[0] = choices[0][remaining];
    (allocation, dp[units - 1])
}

fn validate_instance(workers: &[WorkerParams], budget: f64) -> Result<()> {
    if workers.is_empty() {
        return Err(Error::InvalidParameter("need at least one worker".into()));
    }
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "budget must be positive, got {budget}"
        )));
    }
    Ok(())
}

/// Grid search for the strict assignment problem.
pub fn oracle_strict(
    workers: &[WorkerParams],
    budget: f64,
    grid: &GridSpec,
) -> Result<OracleSolution> {
    validate_instance(workers, budget)?;
    let delta = grid.alpha_resolution(budget);
    let tables: Vec<Vec<f64>> = workers
        .par_iter()
        .map(|w| {
            (0..grid.alpha_steps)
                .map(|k| strict_utility(w, k as f64 * delta))
                .collect()
        })
        .collect();
    let (units, grid_utility) = budget_dp(&tables);
    let alpha: Vec<f64> = units.iter().map(|&k| k as f64 * delta).collect();
    let utility = workers
        .iter()
        .zip(&alpha)
        .map(|(w, &a)| strict_utility(w, a))
        .sum();
    Ok(OracleSolution {
        policy: Policy { p: vec![0.0; alpha.len()], alpha },
        utility,
        grid_utility,
        alpha_resolution: delta,
    })
}

/// Grid search for the moderate assignment problem: at every rate grid
/// point each worker's value is maximized over the probability grid, then
/// the budget dynamic program runs on the resulting tables.
pub fn oracle_moderate(
    workers: &[WorkerParams],
    budget: f64,
    grid: &GridSpec,
) -> Result<OracleSolution> {
    validate_instance(workers, budget)?;
    let delta = grid.alpha_resolution(budget);
    let p_step = 1.0 / (grid.p_steps - 1) as f64;
    let evaluated: Vec<Result<(Vec<f64>, Vec<f64>)>> = workers
        .par_iter()
        .map(|w| {
            let mut values = Vec::with_capacity(grid.alpha_steps);
            let mut best_p = Vec::with_capacity(grid.alpha_steps);
            for k in 0..grid.alpha_steps {
                let a = k as f64 * delta;
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0.0;
                for j in 0..grid.p_steps {
                    let p = (j as f64 * p_step).min(1.0);
                    let u = moderate_utility(w, a, p)?;
                    if u > best {
                        best = u;
                        arg = p;
                    }
                }
                values.push(best);
                best_p.push(arg);
            }
            Ok((values, best_p))
        })
        .collect();
    let mut tables = Vec::with_capacity(workers.len());
    let mut best_p = Vec::with_capacity(workers.len());
    for item in evaluated {
        let (values, p) = item?;
        tables.push(values);
        best_p.push(p);
    }
    let (units, grid_utility) = budget_dp(&tables);
    let alpha: Vec<f64> = units.iter().map(|&k| k as f64 * delta).collect();
    let p: Vec<f64> = units.iter().zip(&best_p).map(|(&k, row)| row[k]).collect();
    let utility = workers
        .iter()
        .zip(alpha.iter().zip(&p))
        .map(|(w, (&a, &pi))| moderate_utility(w, a, pi))
        .sum::<Result<f64>>()?;
    Ok(OracleSolution {
        policy: Policy { alpha, p },
        utility,
        grid_utility,
        alpha_resolution: delta,
    })
}

/// Grid search over sampling rates with the assignment probabilities held
/// fixed; certifies exactly the problem the rate-block search solves.
pub fn oracle_moderate_fixed_p(
    workers: &[WorkerParams],
    p: &[f64],
    budget: f64,
    grid: &GridSpec,
) -> Result<OracleSolution> {
    validate_instance(workers, budget)?;
    if p.len() != workers.len() {
        return Err(Error::InvalidParameter(format!(
            "{} probabilities for {} workers",
            p.len(),
            workers.len()
        )));
    }
    let delta = grid.alpha_resolution(budget);
    let tables: Vec<Vec<f64>> = workers
        .par_iter()
        .zip(p.par_iter())
        .map(|(w, &pi)| {
            (0..grid.alpha_steps)
                .map(|k| moderate_utility(w, k as f64 * delta, pi))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let (units, grid_utility) = budget_dp(&tables);
    let alpha: Vec<f64> = units.iter().map(|&k| k as f64 * delta).collect();
    let utility = workers
        .iter()
        .zip(alpha.iter().zip(p))
        .map(|(w, (&a, &pi))| moderate_utility(w, a, pi))
        .sum::<Result<f64>>()?;
    Ok(OracleSolution {
        policy: Policy { alpha, p: p.to_vec() },
        utility,
        grid_utility,
        alpha_resolution: delta,
    })
}

/// One verified optimality condition.
#[derive(Debug, Clone, Serialize)]
pub struct KktCheck {
    pub name: String,
    pub passed: bool,
    /// Signed violation; at most zero slack means a pass.
    pub residual: f64,
    pub tolerance: f64,
}

/// Certificate report for a strict-problem solution. Never fails to
/// produce; inspect `passed`.
#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    pub checks: Vec<KktCheck>,
    pub passed: bool,
}

impl KktReport {
    fn push(&mut self, name: &str, residual: f64, tolerance: f64) {
        let passed = residual <= tolerance;
        self.passed &= passed;
        self.checks.push(KktCheck { name: name.to_string(), passed, residual, tolerance });
    }
}

/// Checks a water-filling solution against the optimality conditions of
/// the strict problem:
///
/// - primal feasibility (`alpha >= 0`) and consistency of the recorded
///   active set with the rates;
/// - a binding budget, `|sum(alpha) - C| <= 1e-9`;
/// - stationarity: every funded worker's marginal derivative equals the
///   water level within `1e-8` relative;
/// - threshold: every unfunded worker's marginal at zero is at most the
///   water level plus `1e-8`.
pub fn verify_kkt(
    solution: &StrictSolution,
    workers: &[WorkerParams],
    budget: f64,
) -> KktReport {
    let mut report = KktReport { checks: Vec::new(), passed: true };
    let beta = solution.water_level;

    if solution.alpha.len() != workers.len() {
        report.push("dimension", 1.0, 0.0);
        return report;
    }

    let min_alpha = solution.alpha.iter().cloned().fold(f64::INFINITY, f64::min);
    report.push("primal-nonnegativity", -min_alpha.min(0.0), 0.0);

    let total: f64 = solution.alpha.iter().sum();
    report.push("budget-binding", (total - budget).abs(), 1e-9);

    let declared_active: Vec<usize> =
        (0..workers.len()).filter(|&i| solution.alpha[i] > 0.0).collect();
    let consistent = declared_active == solution.active_set;
    report.push("active-set-consistency", if consistent { 0.0 } else { 1.0 }, 0.0);

    let mut stationarity = 0.0_f64;
    let mut threshold = 0.0_f64;
    for (i, (w, &a)) in workers.iter().zip(&solution.alpha).enumerate() {
        if solution.active_set.contains(&i) {
            stationarity = stationarity.max((marginal_derivative(w, a) - beta).abs());
        } else {
            threshold = threshold.max(marginal_derivative(w, 0.0) - beta);
        }
    }
    report.push("active-stationarity", stationarity, 1e-8 * beta);
    report.push("inactive-threshold", threshold, 1e-8);

    report
}
