#![allow(clippy::excessive_precision)]

mod common;

use pacset_core::predset::{empirical_error_count, evaluate_label_scores};
use pacset_core::{
    cp_upper, k_max, ps_c_calibrate, ps_calibrate, u_cp, ConfidenceLevel, GridSpec, LabelScores, ScanMode,
    ScoreSet, SolveMode, Threshold,
};
use proptest::prelude::*;

fn d(x: f64) -> ConfidenceLevel {
    ConfidenceLevel::new(x).unwrap()
}

fn tau(t: f64) -> Threshold {
    Threshold::new(t).unwrap()
}

/// Every grid point in order, stopping the way the calibrator does.
fn brute_grid(scores: &ScoreSet, grid: GridSpec, scan: ScanMode, eps: f64, delta: f64) -> (f64, bool) {
    let cap = scores.max_score() + 1.0;
    let (mut best, mut feasible) = (0.0, false);
    let mut i = 0u64;
    loop {
        let t = grid.start + i as f64 * grid.step;
        if t > cap {
            break;
        }
        let bound = u_cp(scores, tau(t), d(delta));
        if bound <= eps {
            best = t;
            feasible = true;
        } else if scan == ScanMode::Break || bound > grid.stop_factor * eps {
            break;
        }
        i += 1;
    }
    (best, feasible)
}

#[test]
fn ps_examples() {
    let s = ScoreSet::new((1..=10).map(|i| i as f64 / 10.0).collect()).unwrap();
    let r = ps_calibrate(&s, 0.5, d(0.05), SolveMode::Exact).unwrap();
    assert_eq!(r.tau_hat.value(), 0.2);
    assert_eq!(r.error_count, 1);
    assert!(r.feasible);

    let s = ScoreSet::new(vec![0.3, 0.4, 0.5, 0.6, 0.7]).unwrap();
    let r = ps_calibrate(&s, 0.001, d(0.001), SolveMode::Exact).unwrap();
    assert!(!r.feasible);
    assert_eq!(r.tau_hat, Threshold::ZERO);

    let s = ScoreSet::new(vec![0.4; 40]).unwrap();
    let r = ps_calibrate(&s, 0.2, d(0.1), SolveMode::Exact).unwrap();
    assert!(r.tau_hat.value() <= 0.4);
    assert_eq!(r.error_count, 0);
}

#[test]
fn u_cp_examples() {
    let s = ScoreSet::new((0..10).map(|i| 0.5 + i as f64 * 0.01).collect()).unwrap();
    assert!((u_cp(&s, tau(0.1), d(0.05)) - 0.25886555089305227856).abs() < 1e-10);
    assert_eq!(u_cp(&s, tau(2.0), d(0.05)), 1.0);
    let s = ScoreSet::new((0..100).map(|i| i as f64 / 100.0).collect()).unwrap();
    // five scores below 0.05
    assert!((u_cp(&s, tau(0.05), d(0.1)) - 0.090771469614070170168).abs() < 1e-10);
}

#[test]
fn ps_c_examples() {
    let s = ScoreSet::new((0..300).map(|i| ((i * 37) % 300) as f64 / 300.0).collect()).unwrap();
    let base = ps_calibrate(&s, 0.01, d(0.1), SolveMode::Exact).unwrap();
    let scaled = ps_c_calibrate(&s, 0.1, d(0.1), 10.0, SolveMode::Exact).unwrap();
    assert_eq!(scaled.tau_hat, base.tau_hat);
    assert_eq!(scaled.bound_at_tau, base.bound_at_tau);
    assert_eq!(scaled.error_count, base.error_count);
    let huge = ps_c_calibrate(&s, 0.1, d(0.1), 1e6, SolveMode::Exact).unwrap();
    assert!(!huge.feasible);
    assert_eq!(huge.tau_hat, Threshold::ZERO);
    assert!(ps_c_calibrate(&s, 0.1, d(0.1), 0.5, SolveMode::Exact).is_err());
}

#[test]
fn evaluate_mixed_case() {
    // true labels 0, 1, 2 with scores 0.6, 0.3, 0.1
    let test = vec![
        LabelScores { true_label: 0, scores: vec![0.6, 0.3, 0.1] },
        LabelScores { true_label: 1, scores: vec![0.6, 0.3, 0.1] },
        LabelScores { true_label: 2, scores: vec![0.6, 0.3, 0.1] },
    ];
    let e = evaluate_label_scores(&test, tau(0.3)).unwrap();
    assert!((e.error_rate - 1.0 / 3.0).abs() < 1e-15);
    assert!((e.mean_size - 2.0).abs() < 1e-15);
    let e = evaluate_label_scores(&test, Threshold::ZERO).unwrap();
    assert_eq!((e.error_rate, e.mean_size), (0.0, 3.0));
    let e = evaluate_label_scores(&test, tau(0.7)).unwrap();
    assert_eq!((e.error_rate, e.mean_size), (1.0, 0.0));
}

fn score_vec() -> impl Strategy<Value = Vec<f64>> {
    // coarse values so ties are common
    prop::collection::vec((0u32..60).prop_map(|x| x as f64 / 50.0), 1..120)
}

proptest! {
    #[test]
    fn exact_solution_is_the_k_max_order_statistic(
        scores in score_vec(),
        eps in 0.01f64..0.6,
        delta in 0.001f64..0.5,
    ) {
        let s = ScoreSet::new(scores).unwrap();
        let m = s.len() as u64;
        let r = ps_calibrate(&s, eps, d(delta), SolveMode::Exact).unwrap();
        match k_max(m, eps, d(delta)).unwrap() {
            None => {
                prop_assert!(!r.feasible);
                prop_assert_eq!(r.tau_hat, Threshold::ZERO);
            }
            Some(k) => {
                prop_assert!(r.feasible);
                prop_assert!(r.error_count <= k);
                prop_assert_eq!(r.error_count, empirical_error_count(&s, r.tau_hat));
                prop_assert!(r.bound_at_tau <= eps);
                prop_assert!(cp_upper(r.error_count, m, d(delta)).unwrap() <= eps);
                // any larger score would add an error beyond k
                let above = s.sorted().iter().copied().find(|&x| x > r.tau_hat.value());
                if let Some(next) = above {
                    prop_assert!(empirical_error_count(&s, tau(next)) > k);
                }
            }
        }
    }

    #[test]
    fn grid_trails_exact_by_less_than_a_step(
        scores in score_vec(),
        eps in 0.01f64..0.6,
        delta in 0.001f64..0.5,
        step in 1e-4f64..0.05,
    ) {
        let s = ScoreSet::new(scores).unwrap();
        let grid = GridSpec { step, ..GridSpec::default() };
        let exact = ps_calibrate(&s, eps, d(delta), SolveMode::Exact).unwrap();
        let g = ps_calibrate(&s, eps, d(delta), SolveMode::Grid(grid, ScanMode::Break)).unwrap();
        prop_assert_eq!(exact.feasible, g.feasible);
        if exact.feasible {
            prop_assert!(g.tau_hat.value() <= exact.tau_hat.value());
            prop_assert!(exact.tau_hat.value() - g.tau_hat.value() < step + 1e-12);
        }
    }

    #[test]
    fn event_scan_equals_brute_force_scan(
        scores in score_vec(),
        eps in 0.01f64..0.6,
        delta in 0.001f64..0.5,
        step in 0.004f64..0.05,
        start in 0.0f64..0.01,
        to_stop in any::<bool>(),
    ) {
        let s = ScoreSet::new(scores).unwrap();
        let scan = if to_stop { ScanMode::ScanToStop } else { ScanMode::Break };
        let grid = GridSpec { step, start, stop_factor: 1.5 };
        let r = ps_calibrate(&s, eps, d(delta), SolveMode::Grid(grid, scan)).unwrap();
        let (t, feasible) = brute_grid(&s, grid, scan, eps, delta);
        prop_assert_eq!(r.feasible, feasible);
        prop_assert_eq!(r.tau_hat.value(), t);
    }

    #[test]
    fn ps_c_never_exceeds_ps(
        scores in score_vec(),
        eps in 0.01f64..0.6,
        delta in 0.001f64..0.5,
        b in 1.0f64..20.0,
    ) {
        let s = ScoreSet::new(scores).unwrap();
        let ps = ps_calibrate(&s, eps, d(delta), SolveMode::Exact).unwrap();
        let psc = ps_c_calibrate(&s, eps, d(delta), b, SolveMode::Exact).unwrap();
        prop_assert!(psc.tau_hat <= ps.tau_hat);
    }
}
