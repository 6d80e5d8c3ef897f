//! Water-filling solver for the strict assignment problem: maximize the
//! total task success rate `sum_i alpha_i pi_3,i` subject to the sampling
//! budget `sum_i alpha_i <= C`.
//!
//! The objective is concave and separable, so the optimum is characterized
//! by a common marginal level `beta`: every funded worker's marginal gain
//! equals `beta`, and workers whose marginal at zero already falls below
//! `beta` receive nothing. Writing
//! `A = lambda^2 mu^2 + lambda mu^3 + mu^4` and
//! `B = lambda^3 + 2 lambda^2 mu`, the per-worker allocation is
//!
//! ```text
//! alpha = (A / B) * (lambda mu / sqrt(A beta) - 1)+
//! ```
//!
//! and `beta` follows in closed form from the budget equation because the
//! unclipped allocations are linear in `beta^{-1/2}`. Workers are
//! deactivated one at a time — always the one with the largest
//! `1 + mu/lambda + mu^2/lambda^2`, ties broken by lowest index — until
//! all remaining allocations are nonnegative.

use serde::{Deserialize, Serialize};

use crate::worker::{strict_utility, WorkerParams};
use crate::{Error, Result};

/// `(A, B)` with `A = lambda^2 mu^2 + lambda mu^3 + mu^4` and
/// `B = lambda^3 + 2 lambda^2 mu`; both positive for valid parameters.
pub fn ab_coefficients(w: &WorkerParams) -> (f64, f64) {
    let (l, m) = (w.lambda(), w.mu());
    let a = l * l * m * m + l * m.powi(3) + m.powi(4);
    let b = l.powi(3) + 2.0 * l * l * m;
    (a, b)
}

/// Derivative of the strict objective with respect to the sampling rate:
/// `lambda^2 mu^2 A / (A + alpha B)^2`. Positive and strictly decreasing
/// in `alpha`.
pub fn marginal_derivative(w: &WorkerParams, alpha: f64) -> f64 {
    debug_assert!(alpha >= 0.0, "marginal_derivative requires alpha >= 0");
    let (l, m) = (w.lambda(), w.mu());
    let (a, b) = ab_coefficients(w);
    let denom = a + alpha * b;
    l * l * m * m * a / (denom * denom)
}

/// Worker's marginal-ordering term `1 + mu/lambda + mu^2/lambda^2`;
/// `1 / h` equals the marginal derivative at zero, so larger `h` means a
/// less attractive worker.
fn ordering_term(w: &WorkerParams) -> f64 {
    let r = w.mu() / w.lambda();
    1.0 + r + r * r
}

/// `beta^{-1/2}` honoring `sum alpha_hat = budget` over the given set:
/// `(budget + sum A/B) / (sum lambda mu sqrt(A) / B)`.
fn inverse_sqrt_level(workers: &[WorkerParams], budget: f64) -> f64 {
    let mut num = budget;
    let mut den = 0.0;
    for w in workers {
        let (a, b) = ab_coefficients(w);
        num += a / b;
        den += w.lambda() * w.mu() * a.sqrt() / b;
    }
    num / den
}

/// Water level `beta > 0` solving the budget equation
/// `sum_i (A_i/B_i) (lambda_i mu_i / sqrt(A_i beta) - 1) = budget` over
/// the given (active) workers.
pub fn water_level(workers: &[WorkerParams], budget: f64) -> Result<f64> {
    if workers.is_empty() {
        return Err(Error::InvalidParameter(
            "water level needs at least one worker".into(),
        ));
    }
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "budget must be positive, got {budget}"
        )));
    }
    let t = inverse_sqrt_level(workers, budget);
    Ok(1.0 / (t * t))
}

/// Unclipped allocation for one worker at a given `beta^{-1/2}`.
fn allocation_at_level(w: &WorkerParams, inv_sqrt_beta: f64) -> f64 {
    let (a, b) = ab_coefficients(w);
    (a / b) * (w.lambda() * w.mu() / a.sqrt() * inv_sqrt_beta - 1.0)
}

/// Solution of the strict assignment problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrictSolution {
    /// Optimal sampling rate per worker; exhausts the budget.
    pub alpha: Vec<f64>,
    /// Water level `beta`: the common marginal derivative of all funded
    /// workers.
    pub water_level: f64,
    /// Indices of workers with strictly positive rates, ascending.
    pub active_set: Vec<usize>,
    /// Objective value at the solution, tasks per unit time.
    pub utility: f64,
}

/// Solves the strict assignment problem exactly.
///
/// Computes the closed-form water level on the current active set; if any
/// allocation comes out negative, deactivates the single worker with the
/// largest `1 + mu/lambda + mu^2/lambda^2` (lowest index on ties) and
/// repeats. Terminates within `n` rounds. Allocations below `1e-12` are
/// snapped to zero.
pub fn solve_strict(workers: &[WorkerParams], budget: f64) -> Result<StrictSolution> {
    if workers.is_empty() {
        return Err(Error::InvalidParameter(
            "strict solve needs at least one worker".into(),
        ));
    }
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "budget must be positive, got {budget}"
        )));
    }

    let mut active: Vec<usize> = (0..workers.len()).collect();
    let mut deactivated = vec![false; workers.len()];
    let mut inv_sqrt_beta;
    loop {
        let subset: Vec<WorkerParams> = active.iter().map(|&i| workers[i]).collect();
        inv_sqrt_beta = inverse_sqrt_level(&subset, budget);
        let allocations: Vec<f64> = subset
            .iter()
            .map(|w| allocation_at_level(w, inv_sqrt_beta))
            .collect();
        if allocations.iter().all(|&a| a >= 0.0) {
            let mut alpha = vec![0.0; workers.len()];
            for (&i, &a) in active.iter().zip(&allocations) {
                alpha[i] = if a < 1e-12 { 0.0 } else { a };
            }
            let active_set: Vec<usize> =
                (0..workers.len()).filter(|&i| alpha[i] > 0.0).collect();
            let utility = workers
                .iter()
                .zip(&alpha)
                .map(|(w, &a)| strict_utility(w, a))
                .sum();
            return Ok(StrictSolution {
                alpha,
                water_level: 1.0 / (inv_sqrt_beta * inv_sqrt_beta),
                active_set,
                utility,
            });
        }
        // Deactivate exactly one worker: the largest ordering term wins,
        // ties go to the lowest index.
        let (pos, worst) = active
            .iter()
            .enumerate()
            .map(|(pos, &i)| (pos, i))
            .max_by(|&(_, i), &(_, j)| {
                ordering_term(&workers[i])
                    .total_cmp(&ordering_term(&workers[j]))
                    .then(j.cmp(&i))
            })
            .expect("active set is nonempty");
        debug_assert!(!deactivated[worst], "worker re-entered the active set");
        deactivated[worst] = true;
        active.remove(pos);
        debug_assert!(!active.is_empty(), "deactivation loop emptied the active set");
    }
}
