use pacset_core::rng::stream_rng;
use pacset_core::synth::Domain;
use pacset_core::{mc_validate, IwMode, Method, RunConfig, TwoGaussian, TwoGaussianConfig};

fn model(config: TwoGaussianConfig) -> TwoGaussian {
    TwoGaussian::new(config).unwrap()
}

#[test]
fn true_weights_average_to_one_under_source() {
    let g = model(TwoGaussianConfig::default());
    let xs = g.sample(Domain::Source, 1_000_000, &mut stream_rng(11, "source"));
    let mean = xs.iter().map(|e| e.true_iw).sum::<f64>() / xs.len() as f64;
    // Var_P[w] = 25/7 - 1 here, so the standard error is about 0.0016
    assert!((mean - 1.0).abs() < 0.01, "{mean}");
    assert!(xs.iter().all(|e| e.true_iw <= g.b()));
    assert!((g.b() - 5.0).abs() < 1e-12);
}

#[test]
fn weight_ignores_the_unshifted_coordinates() {
    let g = model(TwoGaussianConfig::default());
    for x in g.sample_full(Domain::Source, 200, &mut stream_rng(12, "full")) {
        let full = g.density_ratio(&x);
        assert!((full - g.true_iw(x[0])).abs() <= 1e-12 * full.max(1.0));
    }
}

#[test]
fn quadrature_error_matches_monte_carlo() {
    let g = model(TwoGaussianConfig::default());
    let xs = g.sample(Domain::Target, 400_000, &mut stream_rng(13, "target"));
    for tau in [0.01, 0.05, 0.2, 0.5, 0.9] {
        let mc = xs.iter().filter(|e| e.true_score() < tau).count() as f64 / xs.len() as f64;
        let exact = g.target_error(tau);
        let se = (exact * (1.0 - exact) / xs.len() as f64).sqrt();
        assert!((mc - exact).abs() <= 4.0 * se + 1e-12, "τ {tau}: {mc} vs {exact}");
        let size = xs.iter().map(|e| e.label_scores.iter().filter(|&&s| s >= tau).count()).sum::<usize>() as f64
            / xs.len() as f64;
        assert!((size - g.target_size(tau)).abs() < 0.01, "τ {tau}: {size}");
    }
}

#[test]
fn ps_holds_without_shift() {
    let config = RunConfig {
        methods: vec![Method::Ps, Method::PsR],
        synth: TwoGaussianConfig { target_var1: 25.0, ..TwoGaussianConfig::default() },
        seed: 21,
        ..RunConfig::default()
    };
    let trials = 300;
    let reports = mc_validate(&config, trials).unwrap();
    let limit = 0.1 + 3.0 * (0.09 / trials as f64).sqrt();
    for r in &reports {
        let agg = r.aggregate.as_ref().unwrap();
        assert!(agg.violation_rate <= limit, "{}: {}", r.method, agg.violation_rate);
        assert_eq!(agg.feasible_rate, 1.0);
    }
}

#[test]
fn single_trial_is_the_first_trial_of_a_longer_run() {
    let config = RunConfig {
        methods: Method::ALL.to_vec(),
        iw: IwMode::Estimated,
        synth: TwoGaussianConfig { m: 800, n: 800, test_size: 500, ..TwoGaussianConfig::default() },
        seed: 4,
        ..RunConfig::default()
    };
    let one = mc_validate(&config, 1).unwrap();
    let again = mc_validate(&config, 1).unwrap();
    let five = mc_validate(&config, 5).unwrap();
    assert_eq!(one, again);
    for (a, b) in one.iter().zip(&five) {
        assert_eq!(a.trials[0], b.trials[0]);
    }
}
