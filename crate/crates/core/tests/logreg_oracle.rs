//! Weighted logistic regression against an independent Newton solver.

mod oracles;

use bagged_gmia::attacks::{attack_decision, fit_weighted_logreg, LogRegConfig};
use oracles::{converged_config, newton_reference, random_instance};

#[test]
fn gradient_descent_matches_newton() {
    let config = converged_config();
    for seed in 0..30 {
        let (features, labels) = random_instance(seed, 20, 4);
        let fitted = fit_weighted_logreg(&features, &labels, 4, &config).unwrap();
        let reference = newton_reference(&features, &labels, 4, config.l2_penalty);
        for (a, b) in fitted.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-4, "seed {seed}: {fitted:?} vs {reference:?}");
        }
    }
}

#[test]
fn imbalanced_constant_features_give_even_odds() {
    let features = [0.1, 0.6, 0.3].repeat(100);
    let labels: Vec<bool> = (0..100).map(|i| i % 10 != 0).collect();
    let w = fit_weighted_logreg(&features, &labels, 3, &LogRegConfig::default()).unwrap();
    let (score, _) = attack_decision(&w, &[0.1, 0.6, 0.3]).unwrap();
    assert!((score - 0.5).abs() < 1e-3, "{score}");
}
