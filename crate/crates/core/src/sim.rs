//! Discrete-event Monte-Carlo simulation of workers under Poisson
//! sampling, validating the stationary analysis and both objectives
//! without reusing any of their algebra.
//!
//! Each worker runs an independent event loop. In every state the total
//! exit rate is the sum of the competing exponential clocks: the chain's
//! own transitions plus the sampling clock at rate `alpha`. A sojourn is
//! drawn from the total rate, then a categorical draw picks which clock
//! fired; this is distributionally identical to racing independent
//! clocks. A sampling event in state 3 assigns a task (always
//! successful); in states 2/2* under moderate mode it assigns with
//! probability `p` and succeeds with probability `ps`; in states 1/1* it
//! is a no-op. Every assignment moves the worker to state 1*.
//!
//! State occupancies accumulate sojourn time after the warmup window, and
//! the success-rate standard error comes from batch means over the
//! measured window. Runs are reproducible bit for bit: all randomness
//! flows from one counter-derived stream per worker (see [`RNG_SCHEME`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::worker::{serialize_state_map, AssignmentMode, Policy, State, WorkerParams, STATE_COUNT};
use crate::{Error, Result};

/// Stream derivation recorded in run metadata: ChaCha12 keyed by a
/// splitmix64 chain over `(seed, worker index, purpose tag)`.
pub const RNG_SCHEME: &str = "chacha12/splitmix64(seed,worker,purpose)";

const PURPOSE_WORKER_STREAM: u64 = 1;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(seed: u64, worker: u64, purpose: u64) -> [u8; 32] {
    let mut state = seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    state = state.wrapping_add(worker.wrapping_mul(0xD1B5_4A32_D192_ED03));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Seed for one worker's stream within a multi-worker run.
fn derive_worker_seed(master: u64, worker: u64) -> u64 {
    let mut state = master ^ worker.wrapping_mul(0xA24B_AED4_963E_E407);
    splitmix64(&mut state)
}

/// Simulation controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimConfig {
    /// Simulated time units.
    pub horizon: f64,
    /// Master reproducibility seed.
    pub seed: u64,
    /// Fraction of the horizon discarded before measuring, in `[0, 0.5]`.
    pub warmup: f64,
    /// Batch count for the batch-means standard error.
    pub batches: usize,
}

impl SimConfig {
    pub fn new(horizon: f64, seed: u64) -> Result<Self> {
        let cfg = Self { horizon, seed, warmup: 0.1, batches: 50 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.warmup.is_finite() && (0.0..=0.5).contains(&self.warmup)) {
            return Err(Error::InvalidParameter(format!(
                "warmup fraction must lie in [0, 0.5], got {}",
                self.warmup
            )));
        }
        if self.batches < 2 {
            return Err(Error::InvalidParameter(format!(
                "batch means need at least 2 batches, got {}",
                self.batches
            )));
        }
        Ok(())
    }
}

/// Measured statistics of one run (or one worker within a run).
#[derive(Debug, Clone, Serialize)]
pub struct SimStats {
    /// Fraction of measured time spent in each state; sums to 1.
    #[serde(serialize_with = "serialize_state_map")]
    pub occupancy: [f64; STATE_COUNT],
    /// Successfully completed tasks per unit time.
    pub success_rate: f64,
    /// Assigned tasks per unit time; at least `success_rate`.
    pub assign_rate: f64,
    /// Batch-means standard error of `success_rate`.
    pub stderr: f64,
    /// Total simulated events, warmup included.
    pub events: u64,
    /// Length of the measured window.
    pub measured_time: f64,
}

/// Simulates one worker under Poisson sampling.
///
/// The worker starts fully efficient (state 3); the warmup window
/// absorbs the transient. In strict mode the supplied `p` is forced to
/// zero pathwise, so runs with any `p` coincide bit for bit. Identical
/// configuration and seed reproduce identical output exactly.
pub fn simulate_worker(
    w: &WorkerParams,
    alpha: f64,
    p: f64,
    mode: AssignmentMode,
    cfg: &SimConfig,
) -> Result<SimStats> {
    cfg.validate()?;
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
    let p_eff = match mode {
        AssignmentMode::Strict => 0.0,
        AssignmentMode::Moderate => p,
    };
    let (lambda, mu, ps) = (w.lambda(), w.mu(), w.ps());
    let mut rng =
        ChaCha12Rng::from_seed(derive_key(cfg.seed, 0, PURPOSE_WORKER_STREAM));

    // Chain clocks per state, excluding the sampling clock.
    let clocks: [&[(f64, State)]; STATE_COUNT] = [
        &[(lambda, State::S2)],
        &[(mu, State::S1), (lambda, State::S3)],
        &[(mu, State::S2)],
        &[(mu, State::S2x)],
        &[(mu, State::S3), (lambda, State::S1x)],
    ];

    let warm_end = cfg.warmup * cfg.horizon;
    let measured_time = cfg.horizon - warm_end;
    let batch_len = measured_time / cfg.batches as f64;

    let mut occupancy = [0.0; STATE_COUNT];
    let mut batch_successes = vec![0u64; cfg.batches];
    let mut successes = 0u64;
    let mut assignments = 0u64;
    let mut events = 0u64;

    let mut state = State::S3;
    let mut t = 0.0_f64;
    loop {
        let chain: &[(f64, State)] = clocks[state.index()];
        let chain_rate: f64 = chain.iter().map(|(r, _)| r).sum();
        let total_rate = chain_rate + alpha;
        let u: f64 = rng.gen();
        let dt = -(1.0 - u).ln() / total_rate;
        let next_t = t + dt;

        // Sojourn time inside the measured window.
        let seg_start = t.max(warm_end);
        let seg_end = next_t.min(cfg.horizon);
        if seg_end > seg_start {
            occupancy[state.index()] += seg_end - seg_start;
        }
        if next_t > cfg.horizon {
            break;
        }

        let draw = rng.gen::<f64>() * total_rate;
        if draw < chain_rate {
            let mut acc = 0.0;
            for &(rate, target) in chain {
                acc += rate;
                if draw < acc {
                    state = target;
                    break;
                }
            }
        } else {
            // Sampling event.
            match state {
                State::S3 => {
                    if next_t >= warm_end {
                        assignments += 1;
                        successes += 1;
                        let idx = (((next_t - warm_end) / batch_len) as usize)
                            .min(cfg.batches - 1);
                        batch_successes[idx] += 1;
                    }
                    state = State::S1x;
                }
                State::S2 | State::S2x => {
                    let assign: f64 = rng.gen();
                    if assign < p_eff {
                        let success = rng.gen::<f64>() < ps;
                        if next_t >= warm_end {
                            assignments += 1;
                            if success {
                                successes += 1;
                                let idx = (((next_t - warm_end) / batch_len) as usize)
                                    .min(cfg.batches - 1);
                                batch_successes[idx] += 1;
                            }
                        }
                        state = State::S1x;
                    }
                }
                State::S1 | State::S1x => {} // probe finds nothing assignable
            }
        }
        t = next_t;
        events += 1;
    }

    for v in &mut occupancy {
        *v /= measured_time;
    }
    let success_rate = successes as f64 / measured_time;
    let assign_rate = assignments as f64 / measured_time;
    let batch_mean = success_rate;
    let variance = batch_successes
        .iter()
        .map(|&c| {
            let r = c as f64 / batch_len;
            (r - batch_mean) * (r - batch_mean)
        })
        .sum::<f64>()
        / (cfg.batches - 1) as f64;
    let stderr = (variance / cfg.batches as f64).sqrt();

    Ok(SimStats {
        occupancy,
        success_rate,
        assign_rate,
        stderr,
        events,
        measured_time,
    })
}

/// Aggregate and per-worker statistics of a multi-worker run.
#[derive(Debug, Clone, Serialize)]
pub struct SystemSimStats {
    /// Success and assignment rates summed over workers; occupancy
    /// averaged; standard errors combined in quadrature.
    pub aggregate: SimStats,
    pub per_worker: Vec<SimStats>,
}

/// Simulates every worker independently under the given policy.
///
/// Workers run in parallel; each draws from its own stream seeded by
/// `(master seed, worker index)`, so results do not depend on
/// scheduling.
pub fn simulate_system(
    workers: &[WorkerParams],
    policy: &Policy,
    mode: AssignmentMode,
    cfg: &SimConfig,
) -> Result<SystemSimStats> {
    cfg.validate()?;
    if workers.is_empty() {
        return Err(Error::InvalidParameter("need at least one worker".into()));
    }
    policy.validate(workers.len(), f64::INFINITY)?;

    let per_worker: Vec<SimStats> = workers
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let child = SimConfig {
                seed: derive_worker_seed(cfg.seed, i as u64),
                ..*cfg
            };
            simulate_worker(w, policy.alpha[i], policy.p[i], mode, &child)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = per_worker.len() as f64;
    let mut occupancy = [0.0; STATE_COUNT];
    let mut success_rate = 0.0;
    let mut assign_rate = 0.0;
    let mut var = 0.0;
    let mut events = 0;
    for stats in &per_worker {
        for (acc, v) in occupancy.iter_mut().zip(&stats.occupancy) {
            *acc += v / n;
        }
        success_rate += stats.success_rate;
        assign_rate += stats.assign_rate;
        var += stats.stderr * stats.stderr;
        events += stats.events;
    }
    let aggregate = SimStats {
        occupancy,
        success_rate,
        assign_rate,
        stderr: var.sqrt(),
        events,
        measured_time: per_worker[0].measured_time,
    };
    Ok(SystemSimStats { aggregate, per_worker })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worker::{moderate_stationary, stationary_strict_closed_form};

    fn w(l: f64, m: f64, ps: f64) -> WorkerParams {
        WorkerParams::new(l, m, ps).unwrap()
    }

    fn cfg(horizon: f64, seed: u64) -> SimConfig {
        SimConfig::new(horizon, seed).unwrap()
    }

    #[test]
    fn identical_seeds_reproduce_bitwise() {
        let worker = w(2.0, 1.0, 0.6);
        let a = simulate_worker(&worker, 1.0, 0.5, AssignmentMode::Moderate, &cfg(5e3, 7)).unwrap();
        let b = simulate_worker(&worker, 1.0, 0.5, AssignmentMode::Moderate, &cfg(5e3, 7)).unwrap();
        assert_eq!(a.occupancy, b.occupancy);
        assert_eq!(a.success_rate, b.success_rate);
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn strict_mode_ignores_p_pathwise() {
        let worker = w(2.0, 1.0, 0.6);
        let a = simulate_worker(&worker, 1.5, 0.9, AssignmentMode::Strict, &cfg(1e4, 3)).unwrap();
        let b = simulate_worker(&worker, 1.5, 0.0, AssignmentMode::Strict, &cfg(1e4, 3)).unwrap();
        let c =
            simulate_worker(&worker, 1.5, 0.0, AssignmentMode::Moderate, &cfg(1e4, 3)).unwrap();
        assert_eq!(a.occupancy, b.occupancy);
        assert_eq!(a.success_rate, b.success_rate);
        assert_eq!(b.occupancy, c.occupancy);
        assert_eq!(b.events, c.events);
    }

    #[test]
    fn zero_sampling_never_assigns() {
        let worker = w(2.0, 1.0, 1.0);
        let stats =
            simulate_worker(&worker, 0.0, 1.0, AssignmentMode::Moderate, &cfg(1e4, 11)).unwrap();
        assert_eq!(stats.success_rate, 0.0);
        assert_eq!(stats.assign_rate, 0.0);
        assert_eq!(stats.occupancy[State::S1x.index()], 0.0);
        assert_eq!(stats.occupancy[State::S2x.index()], 0.0);
    }

    #[test]
    fn occupancy_tracks_strict_stationary_distribution() {
        let worker = w(2.0, 1.0, 1.0);
        let stats =
            simulate_worker(&worker, 1.0, 0.0, AssignmentMode::Strict, &cfg(5e4, 42)).unwrap();
        let pi = stationary_strict_closed_form(&worker, 1.0).unwrap();
        for (o, e) in stats.occupancy.iter().zip(pi.as_array()) {
            assert!((o - e).abs() < 0.02, "occupancy {o} far from {e}");
        }
        assert!((stats.success_rate - 4.0 / 23.0).abs() < 0.02);
        let total: f64 = stats.occupancy.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn moderate_zero_success_still_assigns() {
        let worker = w(2.0, 1.0, 0.0);
        let stats =
            simulate_worker(&worker, 1.0, 1.0, AssignmentMode::Moderate, &cfg(5e4, 9)).unwrap();
        let pi = moderate_stationary(&worker, 1.0, 1.0).unwrap();
        let expected = 1.0 * pi.prob(State::S3);
        assert!(stats.assign_rate > stats.success_rate);
        assert!(
            (stats.success_rate - expected).abs() < 5.0 * stats.stderr.max(2e-3),
            "success {} vs analytic {expected}",
            stats.success_rate
        );
    }

    #[test]
    fn system_aggregates_workers() {
        let workers = vec![w(2.0, 1.0, 1.0); 3];
        let policy = Policy { alpha: vec![1.0; 3], p: vec![0.0; 3] };
        let out =
            simulate_system(&workers, &policy, AssignmentMode::Strict, &cfg(1e4, 5)).unwrap();
        let sum: f64 = out.per_worker.iter().map(|s| s.success_rate).sum();
        assert!((out.aggregate.success_rate - sum).abs() < 1e-12);
        // Distinct per-worker streams.
        assert_ne!(out.per_worker[0].events, out.per_worker[1].events);
    }

    #[test]
    fn zero_policy_is_all_zero() {
        let workers = vec![w(2.0, 1.0, 1.0); 2];
        let policy = Policy { alpha: vec![0.0; 2], p: vec![0.0; 2] };
        let out =
            simulate_system(&workers, &policy, AssignmentMode::Moderate, &cfg(1e3, 5)).unwrap();
        assert_eq!(out.aggregate.success_rate, 0.0);
        assert_eq!(out.aggregate.assign_rate, 0.0);
    }

    #[test]
    fn validation_errors() {
        let worker = w(2.0, 1.0, 1.0);
        assert!(SimConfig::new(0.0, 1).is_err());
        let mut bad = cfg(10.0, 1);
        bad.warmup = 0.6;
        assert!(simulate_worker(&worker, 1.0, 0.0, AssignmentMode::Strict, &bad).is_err());
        let good = cfg(10.0, 1);
        assert!(simulate_worker(&worker, -1.0, 0.0, AssignmentMode::Strict, &good).is_err());
        assert!(simulate_worker(&worker, 1.0, 1.5, AssignmentMode::Moderate, &good).is_err());
    }
}
