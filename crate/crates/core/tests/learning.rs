//! Longer-horizon learning-dynamics checks on the benchmark model: trend of
//! the synchronous error, the fixed-point identity behind the shifted
//! asynchronous update, and the shift-support variant.

use qmdp::environments::CaseStudyModel;
use qmdp::finite_solver::{acoe_residual, solve_shifted_kernel, SolverConfig};
use qmdp::mdp_core::Interval;
use qmdp::numerics::{linear_fit, span_diff};
use qmdp::q_async::{
    gain_estimate, occupation_weights, train_async, AsyncConfig, ShiftSupport,
};
use qmdp::q_sync::{train_sync, SyncConfig, SyncReference};
use qmdp::quantization::{build_finite_model, BuildMethod, QuantizationScheme, WeightMeasure};

fn case_scheme(m: usize, net: Vec<f64>) -> QuantizationScheme {
    QuantizationScheme::uniform(Interval::closed(0.0, 1.0), m, net, WeightMeasure::Uniform)
        .unwrap()
}

#[test]
fn sync_error_trend_is_nonincreasing() {
    let model = CaseStudyModel;
    let scheme = case_scheme(5, vec![-1.0, 0.0, 1.0]);
    let finite = build_finite_model(&model, &scheme, BuildMethod::Exact).unwrap();
    let sol = solve_shifted_kernel(&finite, &SolverConfig::default()).unwrap();
    let offset = sol.q[0];
    let q_star: Vec<f64> = sol.q.iter().map(|v| v - offset).collect();
    for seed in [21u64, 22, 23] {
        let cfg = SyncConfig {
            num_sweeps: 200_000,
            seed,
            snapshot_every: 1000,
            ..Default::default()
        };
        let out = train_sync(
            &model,
            &scheme,
            &cfg,
            Some(SyncReference {
                finite: &finite,
                q_star: &q_star,
            }),
        )
        .unwrap();
        // span distance per 1000-sweep window, after a 10^4-sweep burn-in:
        // the trend must be downward even though single windows wiggle
        let spans: Vec<f64> = out
            .curve
            .iter()
            .filter(|row| row.sweep > 10_000)
            .map(|row| row.span_to_ref.unwrap())
            .collect();
        let xs: Vec<f64> = (0..spans.len()).map(|i| i as f64).collect();
        let (slope, _, _) = linear_fit(&xs, &spans);
        assert!(slope <= 0.0, "seed {seed}: error trend slope {slope} is positive");
        assert!(
            spans.last().unwrap() <= spans.first().unwrap(),
            "seed {seed}: error grew over training"
        );
    }
}

#[test]
fn sync_gain_estimate_tracks_solver() {
    let model = CaseStudyModel;
    let scheme = case_scheme(5, vec![-1.0, 0.0, 1.0]);
    let finite = build_finite_model(&model, &scheme, BuildMethod::Exact).unwrap();
    let sol = solve_shifted_kernel(&finite, &SolverConfig::default()).unwrap();
    let offset = sol.q[0];
    let q_star: Vec<f64> = sol.q.iter().map(|v| v - offset).collect();
    let cfg = SyncConfig {
        num_sweeps: 200_000,
        seed: 5,
        snapshot_every: 200_000,
        ..Default::default()
    };
    let out = train_sync(
        &model,
        &scheme,
        &cfg,
        Some(SyncReference {
            finite: &finite,
            q_star: &q_star,
        }),
    )
    .unwrap();
    let last = out.curve.last().unwrap();
    assert!((last.gain_estimate.unwrap() - sol.gain).abs() <= 0.05);
    assert!(last.span_to_ref.unwrap() <= 0.05);
}

#[test]
fn async_fixed_point_satisfies_optimality_identity() {
    // the delta-shifted fixed point on the occupation-weighted model solves
    // the optimality equation with gain delta * sum of state values
    let model = CaseStudyModel;
    let scheme = case_scheme(4, vec![-1.0, 0.0, 1.0]);
    let delta = 0.02;
    let cfg = AsyncConfig {
        horizon: 200_000,
        delta,
        initial_state: 0.5,
        seed: 31,
        snapshot_every: 200_000,
        log_trajectory: true,
        ..Default::default()
    };
    let out = train_async(&model, &scheme, &cfg, None).unwrap();
    let occ = occupation_weights(&out.trajectory, &scheme).unwrap();
    // the restart mass lower-bounds every bin's occupancy
    let n = out.trajectory.len() as f64;
    for freq in &occ.frequencies {
        let se = (0.025f64 * 0.975 / n).sqrt();
        assert!(*freq >= 0.025 - 3.0 * se, "occupancy {freq} below the certified floor");
    }
    let occ_scheme = QuantizationScheme::uniform(
        Interval::closed(0.0, 1.0),
        4,
        vec![-1.0, 0.0, 1.0],
        occ.to_weight_measure().unwrap(),
    )
    .unwrap();
    let occ_finite = build_finite_model(&model, &occ_scheme, BuildMethod::Exact).unwrap();
    let eq25 = solve_shifted_kernel(
        &occ_finite,
        &SolverConfig {
            floor_override: Some(vec![delta; 4]),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(acoe_residual(&occ_finite, &eq25.q, eq25.gain) <= 1e-9);
    let g = gain_estimate(&eq25.q, 4, 3, delta, &ShiftSupport::AllBins);
    assert!((g - eq25.gain).abs() <= 1e-9);
    // and it coincides with the plain minorization-floor solve
    let plain = solve_shifted_kernel(&occ_finite, &SolverConfig::default()).unwrap();
    assert!((plain.gain - eq25.gain).abs() <= 1e-9);
}

#[test]
fn async_visits_cover_all_pairs() {
    let model = CaseStudyModel;
    let scheme = case_scheme(4, vec![-1.0, 0.0, 1.0]);
    let cfg = AsyncConfig {
        horizon: 100_000,
        delta: 0.02,
        initial_state: 0.3,
        seed: 8,
        snapshot_every: 10_000,
        log_trajectory: false,
        ..Default::default()
    };
    let out = train_async(&model, &scheme, &cfg, None).unwrap();
    // every pair is visited at a nontrivial fraction of the uniform share
    let share = 100_000 / 12;
    for (cell, n) in out.visits.iter().enumerate() {
        assert!(
            *n >= share / 4,
            "pair {cell} visited only {n} times in 1e5 steps"
        );
    }
    // visit minima on the curve grow with the horizon
    let minima: Vec<u64> = out.curve.iter().map(|r| r.visits_min).collect();
    assert!(minima.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn async_restricted_shift_support_agrees() {
    // restricting the shift support to a subset of certified bins moves the
    // transient only slightly on the benchmark
    let model = CaseStudyModel;
    let scheme = case_scheme(4, vec![-1.0, 0.0, 1.0]);
    let base = AsyncConfig {
        horizon: 1_000_000,
        delta: 0.02,
        initial_state: 0.5,
        seed: 10,
        snapshot_every: 1_000_000,
        log_trajectory: false,
        ..Default::default()
    };
    let all = train_async(&model, &scheme, &base, None).unwrap();
    let restricted_cfg = AsyncConfig {
        shift_support: ShiftSupport::Bins(vec![0, 1, 2]),
        ..base
    };
    let restricted = train_async(&model, &scheme, &restricted_cfg, None).unwrap();
    let g_all = all.curve.last().unwrap().gain_estimate;
    let g_restricted = restricted.curve.last().unwrap().gain_estimate;
    assert!(
        (g_all - g_restricted).abs() <= 0.05,
        "all-bins {g_all} vs restricted {g_restricted}"
    );
}

#[test]
fn sync_reference_curve_spans_match_table() {
    // the reported curve is consistent with the returned table at the final
    // snapshot
    let model = CaseStudyModel;
    let scheme = case_scheme(4, vec![-1.0, 0.0, 1.0]);
    let finite = build_finite_model(&model, &scheme, BuildMethod::Exact).unwrap();
    let sol = solve_shifted_kernel(&finite, &SolverConfig::default()).unwrap();
    let offset = sol.q[0];
    let q_star: Vec<f64> = sol.q.iter().map(|v| v - offset).collect();
    let cfg = SyncConfig {
        num_sweeps: 5000,
        seed: 3,
        snapshot_every: 500,
        ..Default::default()
    };
    let out = train_sync(
        &model,
        &scheme,
        &cfg,
        Some(SyncReference {
            finite: &finite,
            q_star: &q_star,
        }),
    )
    .unwrap();
    let last = out.curve.last().unwrap();
    assert_eq!(last.sweep, 5000);
    assert!((last.span_to_ref.unwrap() - span_diff(&out.q_hat, &q_star)).abs() < 1e-12);
}
