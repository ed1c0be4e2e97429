//! Independent reference computations shared by the test targets.

#![allow(dead_code)]

use bagged_gmia::attacks::{ClassWeighting, LogRegConfig};
use bagged_gmia::dataset::LabeledDataset;
use bagged_gmia::modelkit::{Architecture, Classifier, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Newton's method with backtracking on the same objective, solved with
/// Gaussian elimination.
pub fn newton_reference(features: &[f64], labels: &[bool], dim: usize, l2: f64) -> Vec<f64> {
    let n_in = labels.iter().filter(|&&y| y).count() as f64;
    let n_out = labels.len() as f64 - n_in;
    let weight = |y: bool| if y { 0.5 / n_in } else { 0.5 / n_out };
    let m = dim + 1;
    let aug = |row: &[f64]| row.iter().copied().chain(std::iter::once(1.0)).collect::<Vec<f64>>();
    let objective = |theta: &[f64]| -> f64 {
        let mut f = 0.0;
        for (x, &y) in features.chunks_exact(dim).zip(labels) {
            let z: f64 = aug(x).iter().zip(theta).map(|(a, b)| a * b).sum();
            // log(1 + e^z) - y z, computed stably
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            f += weight(y) * (softplus - if y { z } else { 0.0 });
        }
        f + l2 * theta[..dim].iter().map(|w| w * w).sum::<f64>()
    };

    let mut theta = vec![0.0; m];
    for _ in 0..100 {
        let mut g = vec![0.0; m];
        let mut h = vec![vec![0.0; m]; m];
        for (x, &y) in features.chunks_exact(dim).zip(labels) {
            let xa = aug(x);
            let z: f64 = xa.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-z).exp());
            let s = weight(y);
            for a in 0..m {
                g[a] += s * (p - if y { 1.0 } else { 0.0 }) * xa[a];
                for b in 0..m {
                    h[a][b] += s * p * (1.0 - p) * xa[a] * xa[b];
                }
            }
        }
        for a in 0..dim {
            g[a] += 2.0 * l2 * theta[a];
            h[a][a] += 2.0 * l2;
        }
        let step = solve(h, g.clone());
        let f0 = objective(&theta);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, d)| a - t * d).collect();
            if objective(&cand) <= f0 || t < 1e-10 {
                theta = cand;
                break;
            }
            t *= 0.5;
        }
        if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-15 {
            break;
        }
    }
    theta
}

pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (upper, lower) = a.split_at_mut(col + 1);
        let pivot_row = &upper[col];
        for (offset, row) in lower.iter_mut().enumerate() {
            let f = row[col] / pivot_row[col];
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[col + 1 + offset] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

pub fn random_instance(seed: u64, rows: usize, dim: usize) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(rows * dim);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        features.extend(raw.iter().map(|v| v / total));
    }
    let mut labels: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.3)).collect();
    labels[0] = true;
    labels[1] = false;
    (features, labels)
}

pub fn converged_config() -> LogRegConfig {
    LogRegConfig {
        l2_penalty: 1e-3,
        learning_rate: 2.0,
        iterations: 20_000,
        class_weighting: ClassWeighting::InverseFrequency,
    }
}

pub fn gradient_instance() -> LabeledDataset {
    let points = vec![
        0.3, -1.2, 0.8, 0.1, //
        -0.7, 0.4, 1.1, -0.5, //
        1.5, 0.2, -0.3, 0.9, //
        -0.2, -0.8, 0.6, 1.3, //
        0.9, 1.4, -1.0, -0.6,
    ];
    LabeledDataset::new(points, vec![0, 2, 1, 1, 0], 4, 3).unwrap()
}

/// Worst relative error between analytic and central-difference gradients.
pub fn worst_gradient_error(architecture: Architecture, l2: f64) -> f64 {
    let spec = ModelSpec {
        architecture,
        seed: 21,
        ..ModelSpec::default()
    };
    let data = gradient_instance();
    let mut model = Classifier::initialize(spec, 4, 3);
    // nudge biases off zero so they are exercised too
    let mut params = model.parameters();
    for (i, p) in params.iter_mut().enumerate() {
        *p += 0.01 * (i % 5) as f64;
    }
    model.set_parameters(&params).unwrap();

    let (_, analytic) = model.objective_gradient(&data, l2).unwrap();
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut probe = model.clone();
        let mut p = params.clone();
        p[i] = params[i] + step;
        probe.set_parameters(&p).unwrap();
        let up = probe.objective(&data, l2).unwrap();
        p[i] = params[i] - step;
        probe.set_parameters(&p).unwrap();
        let down = probe.objective(&data, l2).unwrap();
        let numeric = (up - down) / (2.0 * step);
        let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

/// AUC by enumerating every (In, Out) pair, as the exact fraction
/// `(2 wins + ties) / (2 pairs)`.
pub fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut twice_wins: u64 = 0;
    let mut pairs: u64 = 0;
    for (si, _) in scores.iter().zip(labels).filter(|(_, &y)| y) {
        for (so, _) in scores.iter().zip(labels).filter(|(_, &y)| !y) {
            pairs += 1;
            twice_wins += if si > so { 2 } else if si == so { 1 } else { 0 };
        }
    }
    twice_wins as f64 / (2 * pairs) as f64
}
