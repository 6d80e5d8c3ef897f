//! Worker model: parameters, chain construction, stationary analysis, and
//! the two task-success-rate objectives.
//!
//! A worker occupies one of five states ordered `(1, 2, 3, 1*, 2*)`:
//! states 1/2/3 are the inefficient, moderately efficient, and highly
//! efficient levels of the normal ladder, and 1*/2* are the inefficient
//! and moderately efficient levels of the post-task exhaustion ladder.
//! The normal ladder climbs at the recovery rate `lambda` and descends at
//! the exhaustion rate `mu`; the exhaustion ladder climbs at `mu` and
//! falls back at `lambda`, which is what makes recovery after a task slow
//! when `lambda >= mu`.
//!
//! Sampling at Poisson rate `alpha` triggers a task whenever the probe
//! finds the worker in state 3 (always successful) and, in moderate mode,
//! in states 2/2* with assignment probability `p` and success probability
//! `ps`. Every assignment sends the worker to state 1*.

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::{Error, Result};

/// Number of chain states.
pub const STATE_COUNT: usize = 5;

/// Chain state, ordered `(1, 2, 3, 1*, 2*)`.
///
/// Serialized names are `"s1"`, `"s2"`, `"s3"`, `"s1x"`, `"s2x"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum State {
    S1,
    S2,
    S3,
    S1x,
    S2x,
}

impl State {
    /// All states in index order.
    pub const ALL: [State; STATE_COUNT] = [State::S1, State::S2, State::S3, State::S1x, State::S2x];

    /// Position of the state in the fixed `(1, 2, 3, 1*, 2*)` ordering.
    pub fn index(self) -> usize {
        match self {
            State::S1 => 0,
            State::S2 => 1,
            State::S3 => 2,
            State::S1x => 3,
            State::S2x => 4,
        }
    }

    /// Serialized state name.
    pub fn name(self) -> &'static str {
        match self {
            State::S1 => "s1",
            State::S2 => "s2",
            State::S3 => "s3",
            State::S1x => "s1x",
            State::S2x => "s2x",
        }
    }
}

impl std::fmt::Display for State {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether tasks are assigned only at peak efficiency or also in the
/// moderately efficient states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentMode {
    /// Assign only when the probe finds state 3.
    Strict,
    /// Additionally assign with probability `p` when the probe finds
    /// state 2 or 2*.
    Moderate,
}

/// One worker's rate parameters and moderate-state success probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorkerParams {
    lambda: f64,
    mu: f64,
    ps: f64,
}

impl WorkerParams {
    /// Builds validated parameters. Requires `lambda > 0`, `mu > 0`,
    /// `ps` in `[0, 1]`, and `lambda >= mu`.
    pub fn new(lambda: f64, mu: f64, ps: f64) -> Result<Self> {
        let w = Self::allow_unstable(lambda, mu, ps)?;
        if lambda < mu {
            return Err(Error::UnstableWorker { lambda, mu });
        }
        Ok(w)
    }

    /// Builds parameters without the `lambda >= mu` requirement. The math
    /// stays well defined; a warning is logged because slow-recovery
    /// workers fall outside the intended operating regime.
    pub fn allow_unstable(lambda: f64, mu: f64, ps: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "recovery rate lambda must be positive and finite, got {lambda}"
            )));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "exhaustion rate mu must be positive and finite, got {mu}"
            )));
        }
        if !(ps.is_finite() && (0.0..=1.0).contains(&ps)) {
            return Err(Error::InvalidParameter(format!(
                "success probability ps must lie in [0, 1], got {ps}"
            )));
        }
        if lambda < mu {
            log::warn!("worker with lambda = {lambda} < mu = {mu}: recovery slower than exhaustion");
        }
        Ok(Self { lambda, mu, ps })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn ps(&self) -> f64 {
        self.ps
    }
}

/// Probability vector over the five states, in `(1, 2, 3, 1*, 2*)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    probs: [f64; STATE_COUNT],
}

impl StationaryDistribution {
    /// Validates an externally supplied vector: entries at least
    /// `-1e-14` (tiny negatives are clamped to zero) and summing to 1
    /// within `1e-12`.
    pub fn new(probs: [f64; STATE_COUNT]) -> Result<Self> {
        let mut clamped = probs;
        for v in &mut clamped {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("nonfinite probability {v}")));
            }
            if *v < 0.0 {
                if *v < -1e-14 {
                    return Err(Error::Numeric(format!("negative probability {v}")));
                }
                *v = 0.0;
            }
        }
        let sum: f64 = clamped.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Numeric(format!(
                "probabilities sum to {sum}, expected 1 within 1e-12"
            )));
        }
        Ok(Self { probs: clamped })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub(crate) fn from_weights(weights: [f64; STATE_COUNT]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::Numeric(format!("weights sum to {sum}")));
        }
        let mut probs = weights;
        for v in &mut probs {
            *v /= sum;
            if *v < 0.0 {
                if *v < -1e-14 {
                    return Err(Error::Numeric(format!("negative probability {v}")));
                }
                *v = 0.0;
            }
        }
        Ok(Self { probs })
    }

    pub fn prob(&self, state: State) -> f64 {
        self.probs[state.index()]
    }

    pub fn as_array(&self) -> &[f64; STATE_COUNT] {
        &self.probs
    }
}

impl Serialize for StationaryDistribution {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serialize_state_map(&self.probs, serializer)
    }
}

/// Serializes a per-state vector as a `{"s1": .., .., "s2x": ..}` map.
pub fn serialize_state_map<S: Serializer>(
    values: &[f64; STATE_COUNT],
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    let mut map = serializer.serialize_map(Some(STATE_COUNT))?;
    for state in State::ALL {
        map.serialize_entry(state.name(), &values[state.index()])?;
    }
    map.end()
}

/// Per-worker sampling rates and moderate-assignment probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    /// Sampling rates, one per worker, each nonnegative.
    pub alpha: Vec<f64>,
    /// Moderate-assignment probabilities, one per worker, each in `[0, 1]`.
    pub p: Vec<f64>,
}

impl Policy {
    /// Checks lengths, entry ranges, and the sampling budget
    /// (`sum(alpha) <= budget + 1e-9`).
    pub fn validate(&self, worker_count: usize, budget: f64) -> Result<()> {
        if self.alpha.len() != worker_count || self.p.len() != worker_count {
            return Err(Error::InvalidParameter(format!(
                "policy holds {} rates and {} probabilities for {} workers",
                self.alpha.len(),
                self.p.len(),
                worker_count
            )));
        }
        for (i, &a) in self.alpha.iter().enumerate() {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "sampling rate alpha[{i}] = {a} must be nonnegative"
                )));
            }
        }
        for (i, &p) in self.p.iter().enumerate() {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidParameter(format!(
                    "assignment probability p[{i}] = {p} must lie in [0, 1]"
                )));
            }
        }
        let total: f64 = self.alpha.iter().sum();
        if total > budget + 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "sampling rates sum to {total}, exceeding budget {budget}"
            )));
        }
        Ok(())
    }
}

/// 5x5 transition-rate matrix: off-diagonals are jump rates, each diagonal
/// entry is minus its row's off-diagonal sum.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    rates: [[f64; STATE_COUNT]; STATE_COUNT],
}

impl GeneratorMatrix {
    pub fn rate(&self, from: State, to: State) -> f64 {
        self.rates[from.index()][to.index()]
    }

    pub fn rates(&self) -> &[[f64; STATE_COUNT]; STATE_COUNT] {
        &self.rates
    }

    /// Total exit rate from a state (negated diagonal entry).
    pub fn exit_rate(&self, from: State) -> f64 {
        -self.rates[from.index()][from.index()]
    }

    /// Maximum absolute row sum; zero for an exact generator.
    pub fn max_row_sum(&self) -> f64 {
        self.rates
            .iter()
            .map(|row| row.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

/// Builds the worker chain generator for the given sampling rate and
/// assignment probability.
///
/// Strict-mode transitions: `1->2` at `lambda`; `2->3` at `lambda`, `2->1`
/// at `mu`; `3->2` at `mu`, `3->1*` at `alpha`; `1*->2*` at `mu`; `2*->3`
/// at `mu`, `2*->1*` at `lambda`. Moderate mode adds `2->1*` at
/// `alpha * p` and raises the `2*->1*` rate to `lambda + alpha * p`.
/// In strict mode `p` is ignored (treated as zero).
pub fn build_generator(
    w: &WorkerParams,
    alpha: f64,
    p: f64,
    mode: AssignmentMode,
) -> Result<GeneratorMatrix> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sampling rate alpha must be nonnegative, got {alpha}"
        )));
    }
    if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidParameter(format!(
            "assignment probability p must lie in [0, 1], got {p}"
        )));
    }
    let (lambda, mu) = (w.lambda(), w.mu());
    let ap = match mode {
        AssignmentMode::Strict => 0.0,
        AssignmentMode::Moderate => alpha * p,
    };

    let mut rates = [[0.0; STATE_COUNT]; STATE_COUNT];
    let mut set = |from: State, to: State, r: f64| {
        rates[from.index()][to.index()] = r;
    };
    set(State::S1, State::S2, lambda);
    set(State::S2, State::S1, mu);
    set(State::S2, State::S3, lambda);
    set(State::S2, State::S1x, ap);
    set(State::S3, State::S2, mu);
    set(State::S3, State::S1x, alpha);
    set(State::S1x, State::S2x, mu);
    set(State::S2x, State::S3, mu);
    set(State::S2x, State::S1x, lambda + ap);

    for (i, row) in rates.iter_mut().enumerate() {
        let exit: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, r)| r).sum();
        row[i] = -exit;
    }
    Ok(GeneratorMatrix { rates })
}

/// Solves `A x = b` in place by Gaussian elimination with partial
/// pivoting. Returns the smallest pivot magnitude encountered, or `None`
/// if a pivot vanished.
fn solve5(a: &mut [[f64; 5]; 5], b: &mut [f64; 5]) -> Option<f64> {
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-14 * scale.max(1.0);
    let mut min_pivot = f64::INFINITY;
    for col in 0..5 {
        let pivot_row = (col..5)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() <= tol {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        min_pivot = min_pivot.min(a[col][col].abs());
        for row in (col + 1)..5 {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..5 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..5).rev() {
        let mut v = b[col];
        for k in (col + 1)..5 {
            v -= a[col][k] * b[k];
        }
        b[col] = v / a[col][col];
    }
    Some(min_pivot)
}

/// Stationary distribution of a generator: solves `pi Q = 0` with the
/// normalization row replacing the last balance equation, by
/// partial-pivot elimination. The residual `max |pi Q|` is verified to be
/// at most `1e-10`.
///
/// When the sampling rate is zero the exhaustion states are transient;
/// the solve still yields the unique distribution supported on
/// `{1, 2, 3}`. Should the linear system nonetheless turn out
/// rank-deficient, a three-state sub-solve is attempted before reporting
/// a degenerate chain.
pub fn stationary_generic(q: &GeneratorMatrix) -> Result<StationaryDistribution> {
    let mut a = [[0.0; 5]; 5];
    let mut b = [0.0; 5];
    // Rows 0..3 carry the balance equations (columns of Q), row 4 the
    // normalization.
    for (j, row) in a.iter_mut().take(4).enumerate() {
        for (i, entry) in row.iter_mut().enumerate() {
            *entry = q.rates[i][j];
        }
    }
    a[4] = [1.0; 5];
    b[4] = 1.0;

    let scale = q
        .rates
        .iter()
        .flat_map(|row| row.iter())
        .fold(1.0_f64, |m, v| m.max(v.abs()));

    let probs = match solve5(&mut a, &mut b) {
        Some(min_pivot) => {
            if scale / min_pivot > 1e12 {
                log::warn!(
                    "ill-conditioned balance system: pivot ratio {:.3e}",
                    scale / min_pivot
                );
            }
            b
        }
        None => stationary_absorbing_ladder(q)?,
    };

    let dist = StationaryDistribution::from_weights(probs)?;
    let residual = stationary_residual(&dist, q);
    if residual > 1e-10 {
        return Err(Error::Numeric(format!(
            "stationary residual {residual:.3e} exceeds 1e-10"
        )));
    }
    Ok(dist)
}

/// Fallback for a rank-deficient system: when nothing flows into the
/// exhaustion states they are transient, and the stationary distribution
/// is that of the three-state normal ladder.
fn stationary_absorbing_ladder(q: &GeneratorMatrix) -> Result<[f64; 5]> {
    let inflow: f64 = (0..3)
        .map(|i| q.rates[i][State::S1x.index()] + q.rates[i][State::S2x.index()])
        .sum();
    if inflow != 0.0 {
        return Err(Error::DegenerateChain(
            "balance system rank-deficient beyond the expected null direction".into(),
        ));
    }
    // Birth-death ladder 1 <-> 2 <-> 3 with up-rate lambda and down-rate
    // mu: weights (1, r, r^2) with r = lambda / mu.
    let lambda = q.rate(State::S1, State::S2);
    let mu = q.rate(State::S2, State::S1);
    if !(lambda > 0.0 && mu > 0.0) {
        return Err(Error::DegenerateChain("normal ladder has a zero rate".into()));
    }
    let r = lambda / mu;
    Ok([1.0, r, r * r, 0.0, 0.0])
}

/// `max_j |sum_i pi_i Q_ij|`.
pub fn stationary_residual(pi: &StationaryDistribution, q: &GeneratorMatrix) -> f64 {
    let probs = pi.as_array();
    (0..STATE_COUNT)
        .map(|j| {
            (0..STATE_COUNT)
                .map(|i| probs[i] * q.rates[i][j])
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

/// Closed-form stationary distribution of the strict-mode chain:
/// weights `(mu^4, lambda mu^3, lambda^2 mu^2, alpha lambda^2 (lambda + mu),
/// alpha lambda^2 mu)` normalized by
/// `K = alpha lambda^3 + lambda^2 mu^2 + 2 alpha lambda^2 mu + lambda mu^3 + mu^4`.
pub fn stationary_strict_closed_form(
    w: &WorkerParams,
    alpha: f64,
) -> Result<StationaryDistribution> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sampling rate alpha must be nonnegative, got {alpha}"
        )));
    }
    let (l, m) = (w.lambda(), w.mu());
    let weights = [
        m.powi(4),
        l * m.powi(3),
        l * l * m * m,
        alpha * l * l * (l + m),
        alpha * l * l * m,
    ];
    StationaryDistribution::from_weights(weights)
}

/// Strict-mode task success rate `alpha * pi_3`, in the division-safe form
/// `alpha lambda^2 mu^2 / (A + B alpha)` with
/// `A = lambda^2 mu^2 + lambda mu^3 + mu^4` and
/// `B = lambda^3 + 2 lambda^2 mu`. Value 0 at `alpha = 0`; strictly
/// increasing and concave in `alpha`, approaching
/// `lambda^2 mu^2 / B` as `alpha -> inf`.
pub fn strict_utility(w: &WorkerParams, alpha: f64) -> f64 {
    debug_assert!(alpha >= 0.0, "strict_utility requires alpha >= 0");
    let (l, m) = (w.lambda(), w.mu());
    let a = l * l * m * m + l * m.powi(3) + m.powi(4);
    let b = l.powi(3) + 2.0 * l * l * m;
    alpha * l * l * m * m / (a + b * alpha)
}

/// Stationary distribution of the moderate-mode chain, from the
/// five-state balance system.
pub fn moderate_stationary(w: &WorkerParams, alpha: f64, p: f64) -> Result<StationaryDistribution> {
    let q = build_generator(w, alpha, p, AssignmentMode::Moderate)?;
    stationary_generic(&q)
}

/// Moderate-mode task success rate
/// `alpha * pi_3 + ps * alpha * p * (pi_2 + pi_2*)`, with the stationary
/// distribution taken from the balance equations.
pub fn moderate_utility(w: &WorkerParams, alpha: f64, p: f64) -> Result<f64> {
    let pi = moderate_stationary(w, alpha, p)?;
    Ok(alpha * pi.prob(State::S3)
        + w.ps() * alpha * p * (pi.prob(State::S2) + pi.prob(State::S2x)))
}

/// Cubic coefficients `(f, g)` of the moderate-mode success rate as a
/// ratio `f(alpha) / g(alpha)` at fixed assignment probability `p`;
/// index `k` holds the `alpha^k` coefficient.
///
/// Derived by eliminating the balance equations symbolically, so the
/// ratio agrees with [`moderate_utility`] to machine precision. `f` has a
/// zero constant term; `g` has constant term
/// `1 + lambda/mu + lambda^2/mu^2 >= 3`, and all coefficients of both are
/// nonnegative, making each polynomial convex on `alpha >= 0`.
pub fn ratio_coefficients(w: &WorkerParams, p: f64) -> Result<([f64; 4], [f64; 4])> {
    if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidParameter(format!(
            "assignment probability p must lie in [0, 1], got {p}"
        )));
    }
    let (l, m, ps) = (w.lambda(), w.mu(), w.ps());
    let r = l / m;
    let f = [
        0.0,
        ps * p * r + r * r,
        (p * l / (m * m)) * (1.0 + p * ps + ps * r),
        ps * p * p * l / m.powi(3),
    ];
    let g = [
        1.0 + r + r * r,
        l.powi(3) / m.powi(4) + (2.0 + p) * l * l / m.powi(3) + 3.0 * p * l / (m * m),
        (l * p / m.powi(3)) * (2.0 + 2.0 * r + p),
        l * p * p / m.powi(4),
    ];
    Ok((f, g))
}

/// Quadratic coefficients `(f, g)` of the moderate-mode success rate as a
/// ratio in the assignment probability `p` at fixed sampling rate
/// `alpha`; padded to cubic arrays (index `k` holds the `p^k`
/// coefficient, index 3 is zero).
///
/// Same derivation as [`ratio_coefficients`] with the roles of the two
/// variables exchanged; all coefficients are nonnegative for
/// `alpha >= 0`, so both polynomials are convex in `p`.
pub fn ratio_coefficients_in_p(w: &WorkerParams, alpha: f64) -> Result<([f64; 4], [f64; 4])> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sampling rate alpha must be nonnegative, got {alpha}"
        )));
    }
    let (l, m, ps) = (w.lambda(), w.mu(), w.ps());
    let a = alpha;
    let f = [
        a * l * l / (m * m),
        a * a * l / (m * m) + ps * a * l / m + ps * a * a * l * l / m.powi(3),
        ps * a.powi(3) * l / m.powi(3) + ps * a * a * l / (m * m),
        0.0,
    ];
    let g = [
        1.0 + l / m + l * l / (m * m) + 2.0 * a * l * l / m.powi(3) + a * l.powi(3) / m.powi(4),
        3.0 * a * l / (m * m)
            + 2.0 * a * a * l / m.powi(3)
            + 2.0 * a * a * l * l / m.powi(4)
            + a * l * l / m.powi(3),
        a.powi(3) * l / m.powi(4) + a * a * l / m.powi(3),
        0.0,
    ];
    Ok((f, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(actual: f64, expected: f64, tol: f64) {
        assert!(
            (actual - expected).abs() <= tol,
            "expected {expected}, got {actual} (tol {tol})"
        );
    }

    fn poly(c: &[f64; 4], x: f64) -> f64 {
        ((c[3] * x + c[2]) * x + c[1]) * x + c[0]
    }

    #[test]
    fn params_validation() {
        assert!(WorkerParams::new(2.0, 1.0, 0.5).is_ok());
        assert!(matches!(
            WorkerParams::new(1.0, 2.0, 0.5),
            Err(Error::UnstableWorker { .. })
        ));
        assert!(WorkerParams::allow_unstable(1.0, 2.0, 0.5).is_ok());
        assert!(WorkerParams::new(0.0, 1.0, 0.5).is_err());
        assert!(WorkerParams::new(1.0, -1.0, 0.5).is_err());
        assert!(WorkerParams::new(1.0, 1.0, 1.5).is_err());
        assert!(WorkerParams::new(f64::NAN, 1.0, 0.5).is_err());
    }

    #[test]
    fn generator_strict_structure() {
        let w = WorkerParams::new(2.0, 1.0, 1.0).unwrap();
        let q = build_generator(&w, 1.0, 0.0, AssignmentMode::Strict).unwrap();
        assert_eq!(q.rate(State::S3, State::S2), 1.0);
        assert_eq!(q.rate(State::S3, State::S1x), 1.0);
        assert_eq!(q.rate(State::S1, State::S2), 2.0);
        assert_eq!(q.rate(State::S2, State::S1x), 0.0);
        assert_eq!(q.rate(State::S2x, State::S1x), 2.0);
        assert!(q.max_row_sum() <= 1e-12);
    }

    #[test]
    fn generator_moderate_structure() {
        let w = WorkerParams::new(2.0, 1.0, 1.0).unwrap();
        let q = build_generator(&w, 1.0, 1.0, AssignmentMode::Moderate).unwrap();
        assert_eq!(q.rate(State::S2x, State::S3), 1.0);
        assert_eq!(q.rate(State::S2x, State::S1x), 3.0);
        assert_eq!(q.rate(State::S2, State::S1x), 1.0);
        assert!(q.max_row_sum() <= 1e-12);
    }

    #[test]
    fn generator_strict_ignores_p() {
        let w = WorkerParams::new(2.0, 1.0, 1.0).unwrap();
        let a = build_generator(&w, 1.0, 0.7, AssignmentMode::Strict).unwrap();
        let b = build_generator(&w, 1.0, 0.0, AssignmentMode::Strict).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generator_rejects_bad_arguments() {
        let w = WorkerParams::new(2.0, 1.0, 1.0).unwrap();
        assert!(build_generator(&w, -0.5, 0.0, AssignmentMode::Strict).is_err());
        assert!(build_generator(&w, 1.0, 1.5, AssignmentMode::Moderate).is_err());
    }

    #[test]
    fn stationary_zero_alpha_uniform_ladder() {
        let w = WorkerParams::new(1.0, 1.0, 1.0).unwrap();
        let q = build_generator(&w, 0.0, 0.0, AssignmentMode::Strict).unwrap();
        let pi = stationary_generic(&q).unwrap();
        let third = 1.0 / 3.0;
        for (i, expected) in [third, third, third, 0.0, 0.0].iter().enumerate() {
            assert_close(pi.as_array()[i], *expected, 1e-12);
        }
    }

    #[test]
    fn stationary_generic_matches_fixture() {
        let w = WorkerParams::new(2.0, 1.0, 1.0).unwrap();
        let q = build_generator(&w, 1.0, 0.0, AssignmentMode::Strict).unwrap();
        let pi = stationary_generic(&q).unwrap();
        let expected = [1.0 / 23.0, 2.0 / 23.0, 4.0 / 23.0, 12.0 / 23.0, 4.0 / 23.0];
        for (a, e) in pi.as_array().iter().zip(expected) {
            assert_close(*a, e, 1e-12);
        }
        assert!(stationary_residual(&pi, &q) <= 1e-10);
    }

    #[test]
    fn closed_form_examples() {
        let w = WorkerParams::new(2.0, 1.0, 1.0).unwrap();
        let pi = stationary_strict_closed_form(&w, 1.0).unwrap();
        let expected = [1.0 / 23.0, 2.0 / 23.0, 4.0 / 23.0, 12.0 / 23.0, 4.0 / 23.0];
        for (a, e) in pi.as_array().iter().zip(expected) {
            assert_close(*a, e, 1e-15);
        }

        let pi0 = stationary_strict_closed_form(&w, 0.0).unwrap();
        let expected0 = [1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0, 0.0, 0.0];
        for (a, e) in pi0.as_array().iter().zip(expected0) {
            assert_close(*a, e, 1e-15);
        }

        let ww = WorkerParams::new(3.5, 3.5, 0.0).unwrap();
        let piu = stationary_strict_closed_form(&ww, 0.0).unwrap();
        for (a, e) in piu.as_array().iter().zip([1.0 / 3.0; 3].iter().chain([0.0, 0.0].iter())) {
            assert_close(*a, *e, 1e-15);
        }
    }

    #[test]
    fn closed_form_matches_generic_solve() {
        let cases = [
            (2.0, 1.0, 1.0),
            (10.0, 5.0, 3.0),
            (1.0, 1.0, 0.25),
            (7.5, 0.5, 12.0),
            (3.0, 2.9, 0.0),
        ];
        for (l, m, a) in cases {
            let w = WorkerParams::new(l, m, 0.5).unwrap();
            let closed = stationary_strict_closed_form(&w, a).unwrap();
            let q = build_generator(&w, a, 0.0, AssignmentMode::Strict).unwrap();
            let generic = stationary_generic(&q).unwrap();
            for (x, y) in closed.as_array().iter().zip(generic.as_array()) {
                assert_close(*x, *y, 1e-10);
            }
        }
    }

    #[test]
    fn strict_utility_examples() {
        let w = WorkerParams::new(2.0, 1.0, 1.0).unwrap();
        assert_close(strict_utility(&w, 1.0), 4.0 / 23.0, 1e-15);
        assert_eq!(strict_utility(&w, 0.0), 0.0);
        assert_close(strict_utility(&w, 1e9), 0.25, 1e-9);
    }

    #[test]
    fn moderate_stationary_fixture() {
        // Unnormalized chain masses for (lambda=2, mu=1, alpha=1, p=1):
        // (1, 2, 6, 32, 8), total 49, by direct elimination of the
        // balance equations.
        let w = WorkerParams::new(2.0, 1.0, 0.7).unwrap();
        let pi = moderate_stationary(&w, 1.0, 1.0).unwrap();
        let expected = [1.0 / 49.0, 2.0 / 49.0, 6.0 / 49.0, 32.0 / 49.0, 8.0 / 49.0];
        for (a, e) in pi.as_array().iter().zip(expected) {
            assert_close(*a, e, 1e-12);
        }
        assert_close(moderate_utility(&w, 1.0, 1.0).unwrap(), 13.0 / 49.0, 1e-12);
    }

    #[test]
    fn moderate_reduces_to_strict_at_p_zero() {
        let w = WorkerParams::new(2.0, 1.0, 0.7).unwrap();
        let pi = moderate_stationary(&w, 1.0, 0.0).unwrap();
        let closed = stationary_strict_closed_form(&w, 1.0).unwrap();
        for (a, e) in pi.as_array().iter().zip(closed.as_array()) {
            assert_close(*a, *e, 1e-12);
        }
        assert_close(
            moderate_utility(&w, 1.0, 0.0).unwrap(),
            strict_utility(&w, 1.0),
            1e-12,
        );
    }

    #[test]
    fn moderate_zero_alpha() {
        let w = WorkerParams::new(2.0, 1.0, 0.7).unwrap();
        let pi = moderate_stationary(&w, 0.0, 0.4).unwrap();
        let expected = [1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0, 0.0, 0.0];
        for (a, e) in pi.as_array().iter().zip(expected) {
            assert_close(*a, e, 1e-12);
        }
        assert_eq!(moderate_utility(&w, 0.0, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn moderate_utility_saturates_at_mu() {
        // With p = 1 and ps = 1 the ratio's leading coefficients give a
        // large-alpha limit of mu.
        let w = WorkerParams::new(3.0, 1.5, 1.0).unwrap();
        let u = moderate_utility(&w, 1e8, 1.0).unwrap();
        assert_close(u, 1.5, 1e-5);
    }

    #[test]
    fn ratio_coefficients_examples() {
        let w = WorkerParams::new(2.0, 1.0, 0.7).unwrap();
        let (f, g) = ratio_coefficients(&w, 0.0).unwrap();
        assert_eq!(f, [0.0, 4.0, 0.0, 0.0]);
        assert_eq!(g, [7.0, 16.0, 0.0, 0.0]);

        let w1 = WorkerParams::new(1.0, 1.0, 1.0).unwrap();
        let (f1, g1) = ratio_coefficients(&w1, 1.0).unwrap();
        assert_eq!(f1, [0.0, 2.0, 3.0, 1.0]);
        assert_eq!(g1, [3.0, 7.0, 5.0, 1.0]);
        // Cross-check the ratio against the balance solve at a few rates.
        for alpha in [0.5, 1.0, 2.0] {
            let u = moderate_utility(&w1, alpha, 1.0).unwrap();
            assert_close(poly(&f1, alpha) / poly(&g1, alpha), u, 1e-12);
        }
    }

    #[test]
    fn ratio_constant_term_at_least_three() {
        for (l, m) in [(2.0, 1.0), (1.0, 1.0), (10.0, 0.1), (3.0, 2.99)] {
            let w = WorkerParams::new(l, m, 0.3).unwrap();
            let (_, g) = ratio_coefficients(&w, 0.77).unwrap();
            assert!(g[0] >= 3.0, "g(0) = {} below 3", g[0]);
        }
    }

    #[test]
    fn ratio_in_p_matches_balance() {
        let w = WorkerParams::new(10.0, 5.0, 0.4).unwrap();
        for alpha in [0.0, 0.7, 3.0, 9.5] {
            let (f, g) = ratio_coefficients_in_p(&w, alpha).unwrap();
            for p in [0.0, 0.3, 0.8, 1.0] {
                let u = moderate_utility(&w, alpha, p).unwrap();
                assert_close(poly(&f, p) / poly(&g, p), u, 1e-11);
            }
        }
    }

    #[test]
    fn moderate_utility_nondecreasing_in_ps() {
        let alpha = 2.0;
        let p = 0.6;
        let mut prev = -1.0;
        for ps in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let w = WorkerParams::new(4.0, 1.5, ps).unwrap();
            let u = moderate_utility(&w, alpha, p).unwrap();
            assert!(u >= prev - 1e-12, "utility dropped as ps grew");
            prev = u;
        }
    }

    #[test]
    fn distribution_serializes_with_state_names() {
        let w = WorkerParams::new(2.0, 1.0, 1.0).unwrap();
        let pi = stationary_strict_closed_form(&w, 0.0).unwrap();
        let json = serde_json::to_string(&pi).unwrap();
        assert!(json.contains("\"s1\""));
        assert!(json.contains("\"s1x\""));
        assert!(json.contains("\"s2x\""));
    }

    #[test]
    fn policy_validation() {
        let ok = Policy { alpha: vec![1.0, 2.0], p: vec![0.0, 1.0] };
        assert!(ok.validate(2, 3.0).is_ok());
        assert!(ok.validate(3, 3.0).is_err());
        assert!(ok.validate(2, 2.0).is_err());
        let bad = Policy { alpha: vec![-0.1], p: vec![0.5] };
        assert!(bad.validate(1, 1.0).is_err());
    }
}
