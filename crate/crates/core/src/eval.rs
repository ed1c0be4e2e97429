//! Attack validation against complementary half-split target models, and the
//! metrics reported for it.

use std::collections::BTreeSet;
use std::path::Path;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{AllocationPlan, PlanKind};
use crate::attacks::{MembershipScorer, ScoreQuery};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::farm::{extract_confidence_tensor, ConfidenceTensor, ModelSet};
use crate::seed;

pub const DEFAULT_THRESHOLDS: [f64; 3] = [65.0, 75.0, 90.0];

/// Confusion counts of one point across all target models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerPointOutcome {
    pub point_id: usize,
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
    pub accuracy_pct: f64,
}

impl PerPointOutcome {
    pub fn correct(&self) -> usize {
        self.tp + self.tn
    }

    pub fn n_targets(&self) -> usize {
        self.tp + self.fn_ + self.tn + self.fp
    }

    /// Correct in at least `threshold` percent of targets.
    pub fn meets(&self, threshold: f64) -> bool {
        self.correct() as f64 * 100.0 >= threshold * self.n_targets() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCount {
    pub threshold: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub mean_auc: f64,
    /// Mean accuracy of each target model on its own training split.
    pub mean_task_accuracy: f64,
    pub task_accuracy_split: String,
    pub n_points: usize,
    pub n_targets: usize,
    pub threshold_counts: Vec<ThresholdCount>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub attack: String,
    pub summary: ReportSummary,
    pub per_target_auc: Vec<f64>,
    pub outcomes: Vec<PerPointOutcome>,
    /// `histogram[c]` = number of points predicted correctly by exactly `c` targets.
    pub histogram: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    attack: String,
    summary: ReportSummary,
    per_target_auc: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HistogramRow {
    correct_count: usize,
    n_points: usize,
}

impl EvaluationReport {
    pub fn mean_auc(&self) -> f64 {
        self.summary.mean_auc
    }

    pub fn n_points(&self) -> usize {
        self.summary.n_points
    }

    pub fn n_targets(&self) -> usize {
        self.summary.n_targets
    }

    pub fn threshold_counts(&self, thresholds: &[f64]) -> Result<Vec<ThresholdCount>> {
        threshold_counts(&self.outcomes, thresholds)
    }

    /// Points attacked correctly in at least `threshold` percent of targets.
    pub fn vulnerable_points(&self, threshold: f64) -> BTreeSet<usize> {
        self.outcomes
            .iter()
            .filter(|o| o.meets(threshold))
            .map(|o| o.point_id)
            .collect()
    }

    /// Writes `<stem>.json`, `<stem>.outcomes.csv` and `<stem>.histogram.csv`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let file = ReportFile {
            attack: self.attack.clone(),
            summary: self.summary.clone(),
            per_target_auc: self.per_target_auc.clone(),
        };
        let mut json = serde_json::to_vec_pretty(&file)?;
        json.push(b'\n');
        std::fs::write(dir.join(format!("{stem}.json")), json)?;

        let mut w = csv::Writer::from_path(dir.join(format!("{stem}.outcomes.csv"))).map_err(csv_err)?;
        for o in &self.outcomes {
            w.serialize(o).map_err(csv_err)?;
        }
        w.flush()?;

        write_histogram_csv(dir.join(format!("{stem}.histogram.csv")), &self.histogram)
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let file: ReportFile = serde_json::from_slice(&std::fs::read(dir.join(format!("{stem}.json")))?)?;
        let mut r = csv::Reader::from_path(dir.join(format!("{stem}.outcomes.csv"))).map_err(csv_err)?;
        let outcomes = r.deserialize().collect::<std::result::Result<Vec<PerPointOutcome>, _>>().map_err(csv_err)?;
        let mut r = csv::Reader::from_path(dir.join(format!("{stem}.histogram.csv"))).map_err(csv_err)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<HistogramRow>, _>>().map_err(csv_err)?;
        let histogram = rows.into_iter().map(|h| h.n_points).collect();
        Ok(Self {
            attack: file.attack,
            summary: file.summary,
            per_target_auc: file.per_target_auc,
            outcomes,
            histogram,
        })
    }
}

pub fn write_histogram_csv(path: impl AsRef<Path>, histogram: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for (correct_count, &n_points) in histogram.iter().enumerate() {
        w.serialize(HistogramRow {
            correct_count,
            n_points,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Corrupt(format!("{other:?}")),
    }
}

/// Scores every point under every target model of `targets` and tallies
/// confusion counts, per-target AUCs and threshold counts.
pub fn run_attack_validation(
    scorer: &dyn MembershipScorer,
    targets: &ModelSet,
    data: &LabeledDataset,
    thresholds: &[f64],
) -> Result<EvaluationReport> {
    check_target_plan(&targets.plan)?;
    let tensor = extract_confidence_tensor(targets, data)?;
    validate_on_tensor(scorer, &tensor, data, targets.mean_train_accuracy(), thresholds)
}

/// [`run_attack_validation`] on target confidences that were already extracted.
pub fn validate_on_tensor(
    scorer: &dyn MembershipScorer,
    targets: &ConfidenceTensor,
    data: &LabeledDataset,
    mean_task_accuracy: f64,
    thresholds: &[f64],
) -> Result<EvaluationReport> {
    let plan = targets.plan();
    check_target_plan(plan)?;
    check_thresholds(thresholds)?;
    let (n, k, _) = targets.dims();
    if data.len() != n {
        return Err(Error::invalid(format!("targets cover {n} points, dataset has {}", data.len())));
    }

    let scores: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|t| {
            (0..n)
                .map(|i| {
                    scorer.score(&ScoreQuery {
                        point: i,
                        label: data.labels()[i],
                        target: t,
                        confidence: targets.fiber(i, t),
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let per_target_auc = scores
        .par_iter()
        .enumerate()
        .map(|(t, s)| {
            let truth: Vec<bool> = (0..n).map(|i| plan.is_member(i, t)).collect();
            roc_auc(s, &truth)
        })
        .collect::<Result<Vec<f64>>>()?;

    let outcomes: Vec<PerPointOutcome> = (0..n)
        .map(|i| {
            let mut o = PerPointOutcome {
                point_id: data.point_ids()[i],
                tp: 0,
                fn_: 0,
                tn: 0,
                fp: 0,
                accuracy_pct: 0.0,
            };
            for (t, s) in scores.iter().enumerate() {
                match (plan.is_member(i, t), s[i] >= 0.5) {
                    (true, true) => o.tp += 1,
                    (true, false) => o.fn_ += 1,
                    (false, false) => o.tn += 1,
                    (false, true) => o.fp += 1,
                }
            }
            o.accuracy_pct = 100.0 * o.correct() as f64 / k as f64;
            o
        })
        .collect();

    let mut histogram = vec![0; k + 1];
    for o in &outcomes {
        histogram[o.correct()] += 1;
    }
    let mean_auc = per_target_auc.iter().sum::<f64>() / k as f64;
    Ok(EvaluationReport {
        attack: scorer.name().to_owned(),
        summary: ReportSummary {
            mean_auc,
            mean_task_accuracy,
            task_accuracy_split: "train".into(),
            n_points: n,
            n_targets: k,
            threshold_counts: threshold_counts(&outcomes, thresholds)?,
        },
        per_target_auc,
        outcomes,
        histogram,
    })
}

fn check_target_plan(plan: &AllocationPlan) -> Result<()> {
    if plan.kind() != PlanKind::Target {
        return Err(Error::invalid("attack validation needs a target plan"));
    }
    Ok(())
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    match thresholds.iter().find(|&&t| !(t > 50.0 && t <= 100.0)) {
        Some(t) => Err(Error::invalid(format!("threshold {t} outside (50, 100]"))),
        None => Ok(()),
    }
}

/// Number of points correct in at least `threshold` percent of targets, for
/// each threshold.
pub fn threshold_counts(outcomes: &[PerPointOutcome], thresholds: &[f64]) -> Result<Vec<ThresholdCount>> {
    check_thresholds(thresholds)?;
    Ok(thresholds
        .iter()
        .map(|&threshold| ThresholdCount {
            threshold,
            count: outcomes.iter().filter(|o| o.meets(threshold)).count(),
        })
        .collect())
}

/// Mann-Whitney AUC with mid-ranks: the probability that a random positive
/// outscores a random negative, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the rank sum keeps mid-ranks integral.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end, mean (start + 1 + end) / 2
        let twice_mid = (start + 1 + end) as u128;
        let positives = order[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        twice_rank_sum += twice_mid * positives;
        start = end;
    }
    let (p, q) = (n_pos as u128, n_neg as u128);
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * q) as f64)
}

/// Number of outcomes of `n` fair coin flips with at least `t` heads.
pub fn binomial_upper_count(n: u64, t: u64) -> BigUint {
    binomial_coefficients(n).skip(t as usize).fold(BigUint::zero(), |acc, c| acc + c)
}

/// Number of outcomes of `n` fair coin flips with fewer than `t` heads.
pub fn binomial_lower_count(n: u64, t: u64) -> BigUint {
    binomial_coefficients(n).take(t as usize).fold(BigUint::zero(), |acc, c| acc + c)
}

/// `C(n, 0), C(n, 1), ..., C(n, n)` in exact arithmetic.
fn binomial_coefficients(n: u64) -> impl Iterator<Item = BigUint> {
    let mut current = BigUint::one();
    (0..=n).map(move |j| {
        let out = current.clone();
        current = &current * (n - j) / (j + 1);
        out
    })
}

/// Exact `P(X >= t)` for `X ~ Binomial(n, 1/2)`, rounded to `f64` once.
pub fn binomial_tail(n: u64, t: u64) -> Result<f64> {
    if t > n {
        return Err(Error::invalid(format!("threshold count {t} exceeds n = {n}")));
    }
    Ok(ratio_to_power_of_two(&binomial_upper_count(n, t), n))
}

fn ratio_to_power_of_two(numerator: &BigUint, exponent: u64) -> f64 {
    let bits = numerator.bits();
    let shift = bits.saturating_sub(64);
    let mantissa = (numerator >> shift).to_f64().unwrap_or(f64::INFINITY);
    let mut e = shift as i64 - exponent as i64;
    let mut value = mantissa;
    while e < -1000 {
        value *= 2f64.powi(-1000);
        e += 1000;
    }
    value * 2f64.powi(e as i32)
}

/// Outcome of simulating a coin-flip attacker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomGuessSummary {
    pub n_points: usize,
    pub n_targets: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std_dev: f64,
    pub threshold_counts: Vec<ThresholdCount>,
    #[serde(skip)]
    pub histogram: Vec<usize>,
}

/// For each point, `n_targets` fair-coin verdicts against balanced ground
/// truth (targets come in complementary pairs). Point `i` uses stream `(seed, i)`.
pub fn random_guess_simulation(
    n_points: usize,
    n_targets: usize,
    seed: u64,
    thresholds: &[f64],
) -> Result<RandomGuessSummary> {
    if n_points < 1 || n_targets < 1 {
        return Err(Error::invalid("n_points and n_targets must be at least 1"));
    }
    check_thresholds(thresholds)?;
    let correct: Vec<usize> = (0..n_points)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::stream_rng(seed, i as u64);
            let mut hits = 0;
            let mut truth = false;
            for t in 0..n_targets {
                truth = if t % 2 == 0 { rng.random() } else { !truth };
                let guess: bool = rng.random();
                hits += usize::from(guess == truth);
            }
            hits
        })
        .collect();

    let mut histogram = vec![0; n_targets + 1];
    for &c in &correct {
        histogram[c] += 1;
    }
    let mean = correct.iter().sum::<usize>() as f64 / n_points as f64;
    let var = if n_points > 1 {
        correct.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n_points - 1) as f64
    } else {
        0.0
    };
    let threshold_counts = thresholds
        .iter()
        .map(|&threshold| ThresholdCount {
            threshold,
            count: correct
                .iter()
                .filter(|&&c| c as f64 * 100.0 >= threshold * n_targets as f64)
                .count(),
        })
        .collect();
    Ok(RandomGuessSummary {
        n_points,
        n_targets,
        mean,
        std_dev: var.sqrt(),
        threshold_counts,
        histogram,
    })
}

/// `|A ∩ B| / |A ∪ B|`, with two empty sets defined to have index 1.
pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Jaccard index from set sizes and their intersection size.
pub fn jaccard_from_counts(size_a: usize, size_b: usize, intersection: usize) -> Result<f64> {
    if intersection > size_a.min(size_b) {
        return Err(Error::invalid("intersection larger than one of the sets"));
    }
    let union = size_a + size_b - intersection;
    Ok(if union == 0 { 1.0 } else { intersection as f64 / union as f64 })
}

/// Scorer that knows the target plan: scores 1 for In, 0 for Out.
pub struct OracleScorer<'a> {
    pub plan: &'a AllocationPlan,
}

impl MembershipScorer for OracleScorer<'_> {
    fn name(&self) -> &str {
        "oracle"
    }

    fn score(&self, q: &ScoreQuery<'_>) -> Result<f64> {
        Ok(if self.plan.is_member(q.point, q.target) { 1.0 } else { 0.0 })
    }
}

/// Scorer that always returns the same value.
pub struct ConstantScorer(pub f64);

impl MembershipScorer for ConstantScorer {
    fn name(&self) -> &str {
        "constant"
    }

    fn score(&self, _: &ScoreQuery<'_>) -> Result<f64> {
        Ok(self.0)
    }
}

/// Scorer that flips a seeded coin per `(point, target)`.
pub struct CoinFlipScorer(pub u64);

impl MembershipScorer for CoinFlipScorer {
    fn name(&self) -> &str {
        "coin-flip"
    }

    fn score(&self, q: &ScoreQuery<'_>) -> Result<f64> {
        let key = seed::derive(self.0, q.point as u64);
        Ok(seed::stream_rng(key, q.target as u64).random::<f64>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &yi) in labels.iter().enumerate() {
            for (j, &yj) in labels.iter().enumerate() {
                if yi && !yj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(roc_auc(&[0.3; 6], &[true, false, true, false, true, false]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap(), 1.0);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedAuc)));
    }

    #[test]
    fn auc_with_ties_matches_pair_count() {
        let scores = [0.1, 0.4, 0.4, 0.35, 0.8, 0.8, 0.8, 0.2, 0.4, 0.9, 0.1, 0.35];
        let labels = [false, true, false, true, true, false, true, false, true, true, true, false];
        assert_eq!(roc_auc(&scores, &labels).unwrap(), brute_auc(&scores, &labels));
    }

    #[test]
    fn binomial_tail_fixed_points() {
        assert_eq!(binomial_tail(100, 0).unwrap(), 1.0);
        // P(X >= 50) = 1/2 + P(X = 50)/2
        let p50 = binomial_coefficients(100).nth(50).unwrap();
        let half_mass = ratio_to_power_of_two(&p50, 101);
        assert!((binomial_tail(100, 50).unwrap() - (0.5 + half_mass)).abs() < 1e-15);
        assert!(binomial_tail(10, 11).is_err());
    }

    #[test]
    fn binomial_tail_against_f64_summation() {
        // Independent route: pmf by repeated multiplication in f64.
        for n in [1u64, 7, 30, 100] {
            let mut pmf = vec![0.5f64.powi(n as i32)];
            for j in 0..n {
                let next = pmf[j as usize] * (n - j) as f64 / (j + 1) as f64;
                pmf.push(next);
            }
            for t in 0..=n {
                let direct: f64 = pmf[t as usize..].iter().sum();
                let tail = binomial_tail(n, t).unwrap();
                assert!((tail - direct).abs() <= 1e-13 * direct.max(1e-300) + 1e-300, "n={n} t={t}");
            }
        }
    }

    #[test]
    fn expected_random_guess_counts_near_65_percent() {
        // expected number of 50,000 coin-flip points at or above each count
        let expected = |t| 50_000.0 * binomial_tail(100, t).unwrap();
        assert!((expected(65) - 87.941).abs() < 1e-3, "{}", expected(65));
        assert!((expected(66) - 44.748).abs() < 1e-3, "{}", expected(66));
        // an observed count of 42 sits between the >=66 and >=67 expectations
        assert!(expected(67) < 42.0 && 42.0 < expected(66));
    }

    #[test]
    fn tail_counts_partition_outcomes() {
        for t in 0..=100u64 {
            let total = binomial_upper_count(100, t) + binomial_lower_count(100, t);
            assert_eq!(total, BigUint::one() << 100u32);
        }
    }

    #[test]
    fn random_guess_small() {
        let s = random_guess_simulation(4, 2, 1, &DEFAULT_THRESHOLDS).unwrap();
        assert_eq!(s.histogram.len(), 3);
        assert_eq!(s.histogram.iter().sum::<usize>(), 4);
        assert!(random_guess_simulation(0, 2, 1, &DEFAULT_THRESHOLDS).is_err());
    }

    #[test]
    fn jaccard_cases() {
        let a: BTreeSet<usize> = (0..10).collect();
        let b: BTreeSet<usize> = (10..20).collect();
        assert_eq!(jaccard(&a, &a), 1.0);
        assert_eq!(jaccard(&a, &b), 0.0);
        assert_eq!(jaccard(&BTreeSet::new(), &BTreeSet::new()), 1.0);
        assert!((jaccard_from_counts(9974, 9521, 7565).unwrap() - 0.634).abs() < 1e-3);
        assert!(jaccard_from_counts(3, 4, 5).is_err());
    }

    #[test]
    fn thresholds_are_validated() {
        assert!(threshold_counts(&[], &[50.0]).is_err());
        assert!(threshold_counts(&[], &[100.5]).is_err());
        assert!(threshold_counts(&[], &[100.0]).is_ok());
    }

    #[test]
    fn threshold_counts_recount() {
        let outcomes: Vec<PerPointOutcome> = (0..100)
            .map(|i| {
                let tp = i % 11;
                let tn = (i * 7) % 9;
                PerPointOutcome {
                    point_id: i,
                    tp,
                    fn_: 10 - tp,
                    tn,
                    fp: 10 - tn,
                    accuracy_pct: 100.0 * (tp + tn) as f64 / 20.0,
                }
            })
            .collect();
        let counts = threshold_counts(&outcomes, &DEFAULT_THRESHOLDS).unwrap();
        for c in &counts {
            let manual = outcomes.iter().filter(|o| o.accuracy_pct >= c.threshold).count();
            assert_eq!(c.count, manual);
        }
        assert!(counts.windows(2).all(|w| w[0].count >= w[1].count));
    }

    proptest! {
        #[test]
        fn auc_matches_brute_force(
            raw in proptest::collection::vec((0u8..6, any::<bool>()), 2..20)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 5.0).collect();
            let labels: Vec<bool> = raw.iter().map(|(_, y)| *y).collect();
            prop_assume!(labels.iter().any(|&y| y) && labels.iter().any(|&y| !y));
            prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), brute_auc(&scores, &labels));
        }

        #[test]
        fn auc_invariant_under_monotone_transform(
            raw in proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 2..30)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s).collect();
            let labels: Vec<bool> = raw.iter().map(|(_, y)| *y).collect();
            prop_assume!(labels.iter().any(|&y| y) && labels.iter().any(|&y| !y));
            let squashed: Vec<f64> = scores.iter().map(|s| 3.0 * s + 1.0).collect();
            prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), roc_auc(&squashed, &labels).unwrap());
        }
    }
}
