//! Stable beliefs of the binary model under different priors on `ω₁`.

use assumption_lab::scenarios::{BinaryOptions, BinaryPrior, Scenario, ScenarioSpec};
use assumption_lab::stable::{certitude_report, solve_stable, StableOptions};

fn attractors(prior: BinaryPrior) -> Vec<f64> {
    let spec = ScenarioSpec::ContaminatedBinary(BinaryOptions { prior_omega1: prior, ..BinaryOptions::default() });
    let sc = Scenario::new(spec, None, None).unwrap();
    let report = solve_stable(&sc, &[0.7, 0.3], 1e-3, &StableOptions { starts: 16, ..StableOptions::default() }).unwrap();
    let summary = certitude_report(&report, &[0.7, 0.3], 1e-6).unwrap();
    assert!(summary.all_attracting_biased);
    report.attracting().map(|c| c.omega_hat[0]).collect()
}

#[test]
fn attracting_points_do_not_depend_on_the_prior_over_the_learned_coordinate() {
    let uniform = attractors(BinaryPrior::Uniform);
    let beta = attractors(BinaryPrior::Beta { mean: 0.6, concentration: 8.0 });
    assert!(uniform.len() >= 2, "{uniform:?}");
    assert_eq!(uniform.len(), beta.len());
    for (a, b) in uniform.iter().zip(&beta) {
        assert!((a - b).abs() < 1e-8, "{uniform:?} vs {beta:?}");
    }
}
