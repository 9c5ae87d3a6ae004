mod common;

use common::rscp_oracle;
use pacset_core::rejection::{draw_uniforms, ps_r_calibrate_with_uniforms};
use pacset_core::robust::ps_w_calibrate_with_uniforms;
use pacset_core::{
    greedy_worst_case, ps_calibrate, robust_u_rscp, u_rscp, ConfidenceLevel, GridSpec, IWInterval,
    RejectionInput, ScanMode, ScoreSet, SolveMode, Threshold, UncertaintySet,
};
use proptest::prelude::*;

fn d(x: f64) -> ConfidenceLevel {
    ConfidenceLevel::new(x).unwrap()
}

fn tau(t: f64) -> Threshold {
    Threshold::new(t).unwrap()
}

fn set(iv: &[(f64, f64)]) -> UncertaintySet {
    UncertaintySet::new(iv.iter().map(|&(l, u)| IWInterval::new(l, u).unwrap()).collect(), d(0.05))
}

fn rscp(scores: &ScoreSet, w: &[f64], b: f64, v: &[f64], t: f64, delta: f64) -> f64 {
    u_rscp(&RejectionInput::new(scores, w, b, v).unwrap(), tau(t), d(delta))
}

/// All `levels^m` weight vectors built from per-coordinate candidates.
fn exhaustive_max(scores: &[f64], cands: &[Vec<f64>], b: f64, v: &[f64], t: f64, delta: f64) -> f64 {
    let m = scores.len();
    let mut idx = vec![0usize; m];
    let mut w = vec![0.0; m];
    let mut best = f64::NEG_INFINITY;
    loop {
        for i in 0..m {
            w[i] = cands[i][idx[i]];
        }
        best = best.max(rscp_oracle(scores, &w, b, v, t, delta));
        let mut i = 0;
        loop {
            if i == m {
                return best;
            }
            idx[i] += 1;
            if idx[i] < cands[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn greedy_example() {
    let s = ScoreSet::new(vec![0.2, 0.5, 0.9]).unwrap();
    let w = set(&[(1.0, 2.0); 3]);
    assert_eq!(greedy_worst_case(&s, tau(0.4), &w).unwrap().0, vec![2.0, 1.0, 1.0]);
    assert_eq!(greedy_worst_case(&s, Threshold::ZERO, &w).unwrap().0, vec![1.0; 3]);
    assert_eq!(greedy_worst_case(&s, tau(1.5), &w).unwrap().0, vec![2.0; 3]);
}

#[test]
fn degenerate_box_is_point_rscp() {
    let scores: Vec<f64> = (0..40).map(|i| ((i * 13) % 40) as f64 / 40.0).collect();
    let s = ScoreSet::new(scores.clone()).unwrap();
    let w: Vec<f64> = (0..40).map(|i| 0.5 + (i % 7) as f64 * 0.4).collect();
    let v = draw_uniforms(5, 40);
    let box_ = set(&w.iter().map(|&x| (x, x)).collect::<Vec<_>>());
    for t in [0.0, 0.1, 0.3, 0.55, 0.9, 2.0] {
        let robust = robust_u_rscp(&s, tau(t), &box_, 3.0, &v, d(0.1)).unwrap();
        assert_eq!(robust, rscp(&s, &w, 3.0, &v, t, 0.1));
        assert_eq!(robust, rscp_oracle(&scores, &w, 3.0, &v, t, 0.1));
    }
}

#[test]
fn three_point_discretization_m6() {
    let scores = [0.1, 0.35, 0.5, 0.62, 0.8, 0.95];
    let s = ScoreSet::new(scores.to_vec()).unwrap();
    let iv = [(0.2, 1.5), (0.5, 2.5), (0.0, 3.0), (1.0, 1.2), (0.3, 2.9), (0.8, 3.0)];
    let cands: Vec<Vec<f64>> = iv.iter().map(|&(l, u)| vec![l, 0.5 * (l + u), u]).collect();
    let w = set(&iv);
    for seed in 0..20 {
        let v = draw_uniforms(seed, 6);
        for t in [0.0, 0.2, 0.4, 0.55, 0.7, 0.9, 1.0] {
            let greedy = robust_u_rscp(&s, tau(t), &w, 3.0, &v, d(0.1)).unwrap();
            let brute = exhaustive_max(&scores, &cands, 3.0, &v, t, 0.1);
            assert_eq!(greedy, brute, "seed {seed} τ {t}");
        }
    }
}

#[test]
fn ps_w_with_point_box_equals_ps_r() {
    let scores: Vec<f64> = (0..300).map(|i| ((i * 7919) % 300) as f64 / 300.0).collect();
    let s = ScoreSet::new(scores).unwrap();
    let w: Vec<f64> = (0..300).map(|i| 0.2 + (i % 11) as f64 * 0.3).collect();
    let v = draw_uniforms(9, 300);
    let grid = GridSpec { step: 1e-3, ..GridSpec::default() };
    for scan in [ScanMode::Break, ScanMode::ScanToStop] {
        let box_ = set(&w.iter().map(|&x| (x, x)).collect::<Vec<_>>());
        let mut psw = ps_w_calibrate_with_uniforms(&s, &box_, 3.2, &v, 0.1, d(0.05), &grid, scan).unwrap();
        let input = RejectionInput::new(&s, &w, 3.2, &v).unwrap();
        let psr = ps_r_calibrate_with_uniforms(&input, 0.1, d(0.05), SolveMode::Grid(grid, scan)).unwrap();
        psw.method = psr.method;
        assert_eq!(psw, psr);
    }
}

#[test]
fn weights_equal_to_b_reduce_to_ps() {
    let scores: Vec<f64> = (0..500).map(|i| ((i * 31) % 500) as f64 / 500.0).collect();
    let s = ScoreSet::new(scores).unwrap();
    let v = draw_uniforms(2, 500);
    let input = RejectionInput::new(&s, &[4.0; 500], 4.0, &v).unwrap();
    let psr = ps_r_calibrate_with_uniforms(&input, 0.1, d(0.05), SolveMode::Exact).unwrap();
    let ps = ps_calibrate(&s, 0.1, d(0.05), SolveMode::Exact).unwrap();
    assert_eq!(psr.tau_hat, ps.tau_hat);
    assert_eq!(psr.bound_at_tau, ps.bound_at_tau);
    assert_eq!(psr.n_accepted, 500);
}

#[test]
fn infinite_upper_is_rejected() {
    let s = ScoreSet::new(vec![0.2, 0.4]).unwrap();
    let w = set(&[(0.5, 1.0), (0.5, f64::INFINITY)]);
    let v = [0.1, 0.2];
    assert!(robust_u_rscp(&s, tau(0.3), &w, 2.0, &v, d(0.1)).is_err());
    let grid = GridSpec::default();
    assert!(ps_w_calibrate_with_uniforms(&s, &w, 2.0, &v, 0.1, d(0.05), &grid, ScanMode::Break).is_err());
}

/// Scores, IW intervals, uniforms, τ and δ.
type Instance = (Vec<f64>, Vec<(f64, f64)>, Vec<f64>, f64, f64);

fn instance(max_m: usize) -> impl Strategy<Value = Instance> {
    (1..=max_m).prop_flat_map(|m| {
        (
            prop::collection::vec((0u32..20).prop_map(|x| x as f64 / 20.0), m),
            prop::collection::vec((0.0f64..3.0, 0.0f64..2.0).prop_map(|(l, w)| (l, l + w)), m),
            prop::collection::vec(0.0f64..1.0, m),
            0.0f64..1.1,
            prop::sample::select(vec![0.01, 0.1, 0.5]),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bound_monotone_in_each_weight(
        (scores, iv, v, t, delta) in instance(20),
        pick in any::<prop::sample::Index>(),
        grid in prop::collection::vec(0.0f64..6.0, 2..8),
    ) {
        let b = 5.0;
        let s = ScoreSet::new(scores.clone()).unwrap();
        let i = pick.index(scores.len());
        let mut w: Vec<f64> = iv.iter().map(|&(l, u)| 0.5 * (l + u)).collect();
        // values below, at and above the acceptance threshold V_i·b
        let mut values = grid;
        values.push(v[i] * b);
        values.sort_by(f64::total_cmp);
        let mut prev: Option<f64> = None;
        for &x in &values {
            w[i] = x;
            let u = rscp(&s, &w, b, &v, t, delta);
            if let Some(p) = prev {
                if scores[i] < t {
                    prop_assert!(u >= p, "error example: {p} -> {u}");
                } else {
                    prop_assert!(u <= p, "covered example: {p} -> {u}");
                }
            }
            prev = Some(u);
        }
    }

    #[test]
    fn greedy_matches_corner_enumeration((scores, iv, v, t, delta) in instance(8)) {
        let b = 5.0;
        let s = ScoreSet::new(scores.clone()).unwrap();
        let cands: Vec<Vec<f64>> = iv.iter().map(|&(l, u)| vec![l, u]).collect();
        let greedy = robust_u_rscp(&s, tau(t), &set(&iv), b, &v, d(delta)).unwrap();
        prop_assert_eq!(greedy, exhaustive_max(&scores, &cands, b, &v, t, delta));
    }

    #[test]
    fn wider_intervals_never_lower_the_bound(
        (scores, iv, v, t, delta) in instance(20),
        widen in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 20),
    ) {
        let b = 5.0;
        let s = ScoreSet::new(scores).unwrap();
        let wide: Vec<(f64, f64)> = iv
            .iter()
            .zip(&widen)
            .map(|(&(l, u), &(a, c))| ((l - a).max(0.0), u + c))
            .collect();
        let narrow = robust_u_rscp(&s, tau(t), &set(&iv), b, &v, d(delta)).unwrap();
        let broad = robust_u_rscp(&s, tau(t), &set(&wide), b, &v, d(delta)).unwrap();
        prop_assert!(broad >= narrow);
    }
}
