//! Overlap of the vulnerable-point sets found by different attacks.

use std::collections::BTreeSet;

use bagged_gmia::eval::{jaccard, EvaluationReport};
use bagged_gmia::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSet {
    pub attack: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    pub size_a: usize,
    pub size_b: usize,
    pub intersection: usize,
    pub jaccard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdComparison {
    pub threshold: f64,
    pub attacks: Vec<AttackSet>,
    pub pairs: Vec<PairComparison>,
    /// Points vulnerable under every attack at this threshold.
    pub all_intersection: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub thresholds: Vec<ThresholdComparison>,
}

/// Pairwise Jaccard indices of vulnerable-point sets at each threshold.
pub fn compare_attacks(reports: &[EvaluationReport], thresholds: &[f64]) -> Result<Comparison, Error> {
    if let Some(first) = reports.first() {
        if let Some(r) = reports.iter().find(|r| r.n_points() != first.n_points()) {
            return Err(Error::InvalidArgument(format!(
                "report {:?} covers {} points, {:?} covers {}",
                r.attack,
                r.n_points(),
                first.attack,
                first.n_points()
            )));
        }
    }
    if let Some(t) = thresholds.iter().find(|&&t| !(t > 50.0 && t <= 100.0)) {
        return Err(Error::InvalidArgument(format!("threshold {t} outside (50, 100]")));
    }

    let thresholds = thresholds
        .iter()
        .map(|&threshold| {
            let sets: Vec<BTreeSet<usize>> = reports.iter().map(|r| r.vulnerable_points(threshold)).collect();
            let mut pairs = Vec::new();
            for i in 0..reports.len() {
                for j in i + 1..reports.len() {
                    pairs.push(PairComparison {
                        a: reports[i].attack.clone(),
                        b: reports[j].attack.clone(),
                        size_a: sets[i].len(),
                        size_b: sets[j].len(),
                        intersection: sets[i].intersection(&sets[j]).count(),
                        jaccard: jaccard(&sets[i], &sets[j]),
                    });
                }
            }
            let all_intersection = match sets.split_first() {
                Some((head, rest)) => head.iter().filter(|p| rest.iter().all(|s| s.contains(p))).count(),
                None => 0,
            };
            ThresholdComparison {
                threshold,
                attacks: reports
                    .iter()
                    .zip(&sets)
                    .map(|(r, s)| AttackSet {
                        attack: r.attack.clone(),
                        size: s.len(),
                    })
                    .collect(),
                pairs,
                all_intersection,
            }
        })
        .collect();
    Ok(Comparison { thresholds })
}
