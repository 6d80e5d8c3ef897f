//! Cross-module invariants: closed forms against generic solves, ratio
//! polynomials against balance equations, optimizer certificates against
//! oracles, bound evolution of the branch-and-bound search, and
//! estimator behavior of the simulator.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use taskalloc::moderate::{
    branch_and_bound, poly_eval, BnBOptions, Simplex, SumOfRatiosProblem,
};
use taskalloc::oracle::{oracle_moderate_fixed_p, oracle_strict, verify_kkt, GridSpec};
use taskalloc::sim::{simulate_worker, SimConfig};
use taskalloc::strict::{marginal_derivative, solve_strict};
use taskalloc::worker::{
    build_generator, moderate_utility, ratio_coefficients, ratio_coefficients_in_p,
    stationary_generic, stationary_strict_closed_form, strict_utility, AssignmentMode,
    WorkerParams,
};

fn worker_strategy() -> impl Strategy<Value = WorkerParams> {
    (0.1f64..10.0, 0.1f64..=1.0, 0.0f64..=1.0)
        .prop_map(|(lambda, ratio, ps)| WorkerParams::new(lambda, lambda * ratio, ps).unwrap())
}

proptest! {
    #[test]
    fn closed_form_equals_generic_solve(w in worker_strategy(), alpha in 0.0f64..10.0) {
        let closed = stationary_strict_closed_form(&w, alpha).unwrap();
        let q = build_generator(&w, alpha, 0.0, AssignmentMode::Strict).unwrap();
        let generic = stationary_generic(&q).unwrap();
        for (a, b) in closed.as_array().iter().zip(generic.as_array()) {
            prop_assert!((a - b).abs() <= 1e-10, "closed {a} vs generic {b}");
        }
    }

    #[test]
    fn ratio_polynomials_match_balance_equations(
        w in worker_strategy(),
        alpha in 0.0f64..10.0,
        p in 0.0f64..=1.0,
    ) {
        let u = moderate_utility(&w, alpha, p).unwrap();
        let (f, g) = ratio_coefficients(&w, p).unwrap();
        prop_assert!((poly_eval(&f, alpha) / poly_eval(&g, alpha) - u).abs() <= 1e-9);
        let (fp, gp) = ratio_coefficients_in_p(&w, alpha).unwrap();
        prop_assert!((poly_eval(&fp, p) / poly_eval(&gp, p) - u).abs() <= 1e-9);
    }

    #[test]
    fn moderate_at_p_zero_is_strict(w in worker_strategy(), alpha in 0.0f64..10.0) {
        let u = moderate_utility(&w, alpha, 0.0).unwrap();
        prop_assert!((u - strict_utility(&w, alpha)).abs() <= 1e-12);
    }

    #[test]
    fn stationary_distributions_are_normalized(
        w in worker_strategy(),
        alpha in 0.0f64..10.0,
        p in 0.0f64..=1.0,
    ) {
        let q = build_generator(&w, alpha, p, AssignmentMode::Moderate).unwrap();
        let pi = stationary_generic(&q).unwrap();
        let sum: f64 = pi.as_array().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!(pi.as_array().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn moderate_utility_nondecreasing_in_ps(
        lambda in 0.5f64..8.0,
        ratio in 0.1f64..=1.0,
        alpha in 0.0f64..8.0,
        p in 0.0f64..=1.0,
        ps_lo in 0.0f64..=1.0,
        bump in 0.0f64..=1.0,
    ) {
        let mu = lambda * ratio;
        let ps_hi = (ps_lo + bump).min(1.0);
        let lo = WorkerParams::new(lambda, mu, ps_lo).unwrap();
        let hi = WorkerParams::new(lambda, mu, ps_hi).unwrap();
        let u_lo = moderate_utility(&lo, alpha, p).unwrap();
        let u_hi = moderate_utility(&hi, alpha, p).unwrap();
        prop_assert!(u_hi >= u_lo - 1e-12);
    }

    #[test]
    fn bisect_conserves_volume(
        base in prop::collection::vec(0.0f64..5.0, 2..=3),
        spread in 0.5f64..4.0,
    ) {
        let dim = base.len();
        let mut vertices = vec![base.clone()];
        for i in 0..dim {
            let mut v = base.clone();
            v[i] += spread * (1.0 + i as f64 * 0.35);
            vertices.push(v);
        }
        let s = Simplex::new(vertices).unwrap();
        let (parent_len, _) = s.longest_edge();
        let (a, b) = s.bisect_longest_edge();
        prop_assert!((a.volume() + b.volume() - s.volume()).abs() <= 1e-12 * s.volume().max(1.0));
        prop_assert!(a.longest_edge().0 <= parent_len + 1e-12);
        prop_assert!(b.longest_edge().0 <= parent_len + 1e-12);
    }
}

#[test]
fn strict_utility_increasing_and_concave() {
    let mut rng = ChaCha12Rng::seed_from_u64(41);
    for _ in 0..100 {
        let lambda: f64 = rng.gen_range(0.2..8.0);
        let mu = lambda * rng.gen_range(0.1..1.0);
        let w = WorkerParams::new(lambda, mu, 1.0).unwrap();
        let alpha: f64 = rng.gen_range(0.05..8.0);
        let h = 1e-4 * alpha.max(1.0);
        let left = strict_utility(&w, alpha - h.min(alpha * 0.5));
        let mid = strict_utility(&w, alpha);
        let right = strict_utility(&w, alpha + h);
        assert!(mid > left && right > mid, "utility not increasing at {alpha}");
        let second = (right - 2.0 * mid + left) / (h * h);
        assert!(second <= 1e-6, "second difference {second} positive at {alpha}");
    }
}

#[test]
fn marginal_matches_finite_difference() {
    let mut rng = ChaCha12Rng::seed_from_u64(17);
    for _ in 0..100 {
        let lambda: f64 = rng.gen_range(0.2..8.0);
        let mu = lambda * rng.gen_range(0.1..1.0);
        let w = WorkerParams::new(lambda, mu, 1.0).unwrap();
        let alpha: f64 = rng.gen_range(0.01..8.0);
        let h = 1e-5 * alpha.max(1.0);
        let numeric = (strict_utility(&w, alpha + h) - strict_utility(&w, alpha - h)) / (2.0 * h);
        let analytic = marginal_derivative(&w, alpha);
        assert!(
            (numeric - analytic).abs() <= 1e-6 * analytic.abs(),
            "finite difference {numeric} vs derivative {analytic}"
        );
    }
}

fn random_workers(rng: &mut ChaCha12Rng, n: usize) -> Vec<WorkerParams> {
    (0..n)
        .map(|_| {
            let lambda = rng.gen_range(0.3..6.0);
            let mu = lambda * rng.gen_range(0.15..1.0);
            let ps = rng.gen_range(0.0..1.0);
            WorkerParams::new(lambda, mu, ps).unwrap()
        })
        .collect()
}

#[test]
fn strict_solver_certified_against_oracle() {
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    for _ in 0..25 {
        let n = rng.gen_range(1..=4);
        let workers = random_workers(&mut rng, n);
        let budget = rng.gen_range(0.5..12.0);
        let sol = solve_strict(&workers, budget).unwrap();
        let report = verify_kkt(&sol, &workers, budget);
        assert!(report.passed, "KKT failed: {:#?}", report.checks);

        let grid = GridSpec::new(2001, 2).unwrap();
        let oracle = oracle_strict(&workers, budget, &grid).unwrap();
        let lipschitz = workers
            .iter()
            .map(|w| marginal_derivative(w, 0.0))
            .fold(0.0, f64::max);
        let grid_error = lipschitz * oracle.alpha_resolution * n as f64;
        assert!(sol.utility >= oracle.utility - 1e-9);
        assert!(sol.utility <= oracle.utility + grid_error + 1e-9);
    }
}

#[test]
fn strict_solver_scales_with_rates() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    for _ in 0..20 {
        let n = rng.gen_range(1..=5);
        let workers = random_workers(&mut rng, n);
        let budget = rng.gen_range(1.0..8.0);
        let scale = rng.gen_range(0.25..4.0);
        let scaled: Vec<WorkerParams> = workers
            .iter()
            .map(|w| WorkerParams::new(w.lambda() * scale, w.mu() * scale, w.ps()).unwrap())
            .collect();
        let base = solve_strict(&workers, budget).unwrap();
        let big = solve_strict(&scaled, budget * scale).unwrap();
        assert!((big.utility - base.utility * scale).abs() <= 1e-9 * base.utility * scale);
        for (a, b) in base.alpha.iter().zip(&big.alpha) {
            assert!((b - a * scale).abs() <= 1e-8 * scale.max(1.0));
        }
    }
}

#[test]
fn strict_active_set_is_ratio_prefix() {
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    for _ in 0..40 {
        let n = rng.gen_range(2..=6);
        let workers = random_workers(&mut rng, n);
        let budget = rng.gen_range(0.05..4.0);
        let sol = solve_strict(&workers, budget).unwrap();
        // Funded workers form a prefix of the mu/lambda ordering: every
        // funded worker has a ratio no larger than every unfunded one,
        // equivalently marginal-at-zero no smaller than the water level
        // cutoff ordering.
        let funded_max = sol
            .active_set
            .iter()
            .map(|&i| workers[i].mu() / workers[i].lambda())
            .fold(0.0, f64::max);
        for i in 0..n {
            if !sol.active_set.contains(&i) {
                let ratio = workers[i].mu() / workers[i].lambda();
                assert!(
                    ratio >= funded_max - 1e-12,
                    "unfunded worker {i} has better ratio than a funded one"
                );
            }
        }
        // Threshold characterization: funded iff marginal at zero exceeds
        // the water level.
        for (i, w) in workers.iter().enumerate() {
            let at_zero = marginal_derivative(w, 0.0);
            if sol.active_set.contains(&i) {
                assert!(at_zero >= sol.water_level * (1.0 - 1e-9));
            } else {
                assert!(at_zero <= sol.water_level + 1e-8);
            }
        }
    }
}

#[test]
fn bnb_bounds_are_sound_and_monotone() {
    let mut rng = ChaCha12Rng::seed_from_u64(5150);
    for case in 0..10 {
        let n = rng.gen_range(1..=3);
        let workers = random_workers(&mut rng, n);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let budget = rng.gen_range(1.0..8.0);

        let problem = SumOfRatiosProblem::alpha_block(&workers, &p, budget).unwrap();
        let opts = BnBOptions {
            rho: 1e-3,
            record_trace: true,
            node_cap: 200_000,
            iteration_cap: 200_000,
            ..BnBOptions::default()
        };
        let report = branch_and_bound(&problem, &opts).unwrap();

        let grid = GridSpec::new(201, 2).unwrap();
        let oracle = oracle_moderate_fixed_p(&workers, &p, budget, &grid).unwrap();
        let delta = oracle.alpha_resolution;
        // Slope estimate over the grid gives the discretization error.
        let mut slope = 0.0_f64;
        for (w, &pi) in workers.iter().zip(&p) {
            let mut prev = moderate_utility(w, 0.0, pi).unwrap();
            for k in 1..201 {
                let u = moderate_utility(w, k as f64 * delta, pi).unwrap();
                slope = slope.max((u - prev).abs() / delta);
                prev = u;
            }
        }
        let grid_error = slope * delta * n as f64;

        assert!(
            report.lower_bound <= oracle.utility + grid_error + 1e-9,
            "case {case}: incumbent {} above oracle {} + error {grid_error}",
            report.lower_bound,
            oracle.utility
        );
        assert!(
            report.upper_bound >= oracle.utility - 1e-9,
            "case {case}: upper bound {} below oracle {}",
            report.upper_bound,
            oracle.utility
        );
        if report.converged {
            assert!(
                report.upper_bound - report.lower_bound
                    <= opts.rho * report.upper_bound + 1e-12
            );
        }

        let s0_volume = problem.initial().volume();
        let mut prev_ub = f64::INFINITY;
        let mut prev_lb = f64::NEG_INFINITY;
        for entry in &report.trace {
            assert!(entry.upper_bound <= prev_ub + 1e-12, "upper bound rose");
            assert!(entry.lower_bound >= prev_lb - 1e-12, "lower bound fell");
            assert!(entry.lower_bound <= oracle.utility + grid_error + 1e-9);
            assert!(entry.upper_bound >= oracle.utility - 1e-9);
            // Active cells plus pruned cells tile the initial simplex.
            let covered = entry.active_volume + entry.pruned_volume;
            assert!(
                (covered - s0_volume).abs() <= 1e-6 * s0_volume.max(1e-12),
                "case {case}: volume {covered} vs simplex {s0_volume}"
            );
            prev_ub = entry.upper_bound;
            prev_lb = entry.lower_bound;
        }
    }
}

#[test]
fn sim_stderr_shrinks_with_horizon() {
    let w = WorkerParams::new(2.0, 1.0, 1.0).unwrap();
    let mut short_total = 0.0;
    let mut long_total = 0.0;
    for seed in 0..10 {
        let short = SimConfig::new(2e4, seed).unwrap();
        let long = SimConfig::new(4e4, seed + 1000).unwrap();
        short_total +=
            simulate_worker(&w, 1.0, 0.0, AssignmentMode::Strict, &short).unwrap().stderr;
        long_total +=
            simulate_worker(&w, 1.0, 0.0, AssignmentMode::Strict, &long).unwrap().stderr;
    }
    let ratio = short_total / long_total;
    let expected = 2.0_f64.sqrt();
    assert!(
        (ratio - expected).abs() <= 0.2 * expected,
        "stderr ratio {ratio} not within 20% of sqrt(2)"
    );
}
