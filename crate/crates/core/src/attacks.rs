//! Membership attacks built on weighted logistic regression.
//!
//! A point attack is fitted on the `k` confidence vectors one point received
//! from the reference models, labeled In for the `p` models that trained on
//! it and Out for the rest. A class attack pools those rows over every point
//! of a class. Both produce `C + 1` weights (intercept last) scored with
//! [`attack_decision`].

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::farm::ConfidenceTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    /// Each label class carries total weight 1/2.
    InverseFrequency,
    /// Every row carries weight `1 / rows`.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    /// Applies to feature weights only; the intercept is unpenalized.
    pub l2_penalty: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub class_weighting: ClassWeighting,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            l2_penalty: 1e-3,
            learning_rate: 0.1,
            iterations: 500,
            class_weighting: ClassWeighting::InverseFrequency,
        }
    }
}

impl LogRegConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::invalid("l2_penalty must be non-negative"));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-row weights under `weighting`, or an error if a label class is empty
/// and inverse-frequency weighting needs it.
pub fn sample_weights(labels: &[bool], weighting: ClassWeighting) -> Result<Vec<f64>> {
    let n_in = labels.iter().filter(|&&y| y).count();
    let n_out = labels.len() - n_in;
    match weighting {
        ClassWeighting::InverseFrequency => {
            if n_in == 0 || n_out == 0 {
                return Err(Error::DegenerateLabels(format!(
                    "{n_in} In and {n_out} Out rows; inverse-frequency weighting needs both"
                )));
            }
            let (w_in, w_out) = (0.5 / n_in as f64, 0.5 / n_out as f64);
            Ok(labels.iter().map(|&y| if y { w_in } else { w_out }).collect())
        }
        ClassWeighting::None => {
            if labels.is_empty() {
                return Err(Error::DegenerateLabels("no rows".into()));
            }
            Ok(vec![1.0 / labels.len() as f64; labels.len()])
        }
    }
}

/// Fits `sigmoid(w . x + b)` to binary `labels` by full-batch gradient descent.
///
/// Minimizes the sample-weighted cross-entropy plus `l2_penalty * ||w||^2`,
/// starting from zero and taking exactly `config.iterations` steps. `features`
/// is row-major with `dim` columns; the result is `[w_0 .. w_{dim-1}, b]`.
pub fn fit_weighted_logreg(features: &[f64], labels: &[bool], dim: usize, config: &LogRegConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if dim == 0 || features.len() != labels.len() * dim {
        return Err(Error::invalid(format!(
            "{} feature values do not form {} rows of dimension {dim}",
            features.len(),
            labels.len()
        )));
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("features must be finite"));
    }
    let weights = sample_weights(labels, config.class_weighting)?;

    let mut theta = vec![0.0; dim + 1];
    let mut grad = vec![0.0; dim + 1];
    for _ in 0..config.iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for ((x, &y), &s) in features.chunks_exact(dim).zip(labels).zip(&weights) {
            let z = theta[dim] + x.iter().zip(&theta).map(|(x, w)| x * w).sum::<f64>();
            let r = s * (sigmoid(z) - if y { 1.0 } else { 0.0 });
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += r * xi;
            }
            grad[dim] += r;
        }
        for (t, g) in theta[..dim].iter_mut().zip(&grad) {
            *t -= config.learning_rate * (g + 2.0 * config.l2_penalty * *t);
        }
        theta[dim] -= config.learning_rate * grad[dim];
    }
    Ok(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    In,
    Out,
}

/// `score = sigmoid(w . x + b)`; the verdict is In iff `score >= 0.5`.
pub fn attack_decision(weights: &[f64], confidence: &[f64]) -> Result<(f64, Verdict)> {
    if weights.len() != confidence.len() + 1 {
        return Err(Error::invalid(format!(
            "{} weights cannot score a confidence vector of length {}",
            weights.len(),
            confidence.len()
        )));
    }
    let score = sigmoid(linear(weights, confidence.iter().copied()));
    Ok((score, verdict(score)))
}

pub fn verdict(score: f64) -> Verdict {
    if score >= 0.5 {
        Verdict::In
    } else {
        Verdict::Out
    }
}

fn linear(weights: &[f64], x: impl Iterator<Item = f64>) -> f64 {
    let (w, b) = weights.split_at(weights.len() - 1);
    b[0] + w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointAttackModel {
    pub point_id: usize,
    pub weights: Vec<f64>,
    pub in_count: usize,
    pub out_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAttackModel {
    pub class_id: usize,
    pub weights: Vec<f64>,
    pub in_count: usize,
    pub out_count: usize,
}

/// One attack model per point of `tensor`, fitted on that point's `k` fibers.
pub fn train_point_attacks(tensor: &ConfidenceTensor, config: &LogRegConfig) -> Result<Vec<PointAttackModel>> {
    config.validate()?;
    let plan = tensor.plan();
    let (n, k, c) = tensor.dims();
    let p = plan.per_point_count();
    if p == 0 || p >= k {
        return Err(Error::DegenerateLabels(format!(
            "{:?} plan (seed {}) puts every point in {p} of {k} models; point attacks need both In and Out",
            plan.kind(),
            plan.seed()
        )));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let features: Vec<f64> = tensor.point_block(i).iter().map(|&v| v as f64).collect();
            let labels = plan.row(i);
            let weights = fit_weighted_logreg(&features, labels, c, config)?;
            let in_count = labels.iter().filter(|&&b| b).count();
            Ok(PointAttackModel {
                point_id: i,
                weights,
                in_count,
                out_count: k - in_count,
            })
        })
        .collect()
}

/// One attack model per class, pooling every `(point, model)` fiber whose
/// point carries that label.
pub fn train_class_attacks(
    tensor: &ConfidenceTensor,
    data: &LabeledDataset,
    config: &LogRegConfig,
) -> Result<Vec<ClassAttackModel>> {
    config.validate()?;
    let (n, k, c) = tensor.dims();
    if data.len() != n {
        return Err(Error::invalid(format!("tensor has {n} points, dataset has {}", data.len())));
    }
    (0..data.class_count())
        .into_par_iter()
        .map(|class| {
            let (features, labels) = pooled_class_rows(tensor, data, class);
            let in_count = labels.iter().filter(|&&b| b).count();
            if in_count == 0 || in_count == labels.len() {
                return Err(Error::DegenerateLabels(format!(
                    "class {class} has {in_count} In and {} Out rows",
                    labels.len() - in_count
                )));
            }
            let weights = fit_weighted_logreg(&features, &labels, c, config)?;
            debug_assert_eq!(labels.len() % k, 0);
            Ok(ClassAttackModel {
                class_id: class,
                weights,
                in_count,
                out_count: labels.len() - in_count,
            })
        })
        .collect()
}

/// Rows pooled for `class`: every fiber of every point labeled `class`, in
/// `(point, model)` order.
pub fn pooled_class_rows(tensor: &ConfidenceTensor, data: &LabeledDataset, class: usize) -> (Vec<f64>, Vec<bool>) {
    let (_, k, _) = tensor.dims();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, _) in data.labels().iter().enumerate().filter(|(_, &l)| l == class) {
        features.extend(tensor.point_block(i).iter().map(|&v| v as f64));
        labels.extend_from_slice(&tensor.plan().row(i)[..k]);
    }
    (features, labels)
}

/// What a scorer sees when asked about one point under one target model.
#[derive(Debug, Clone, Copy)]
pub struct ScoreQuery<'a> {
    /// Population index of the point.
    pub point: usize,
    pub label: usize,
    pub target: usize,
    pub confidence: &'a [f32],
}

/// Maps a target model's confidence vector for a point to a membership score
/// in `[0, 1]`; scores at or above 1/2 mean In.
pub trait MembershipScorer: Sync {
    fn name(&self) -> &str;
    fn score(&self, query: &ScoreQuery<'_>) -> Result<f64>;
}

/// Per-point attacks indexed by point id.
#[derive(Debug, Clone)]
pub struct PointAttacks {
    name: String,
    models: Vec<PointAttackModel>,
}

impl PointAttacks {
    pub fn new(name: impl Into<String>, mut models: Vec<PointAttackModel>) -> Self {
        models.sort_by_key(|m| m.point_id);
        Self {
            name: name.into(),
            models,
        }
    }

    pub fn models(&self) -> &[PointAttackModel] {
        &self.models
    }

    pub fn get(&self, point_id: usize) -> Option<&PointAttackModel> {
        match self.models.get(point_id) {
            Some(m) if m.point_id == point_id => Some(m),
            _ => self
                .models
                .binary_search_by_key(&point_id, |m| m.point_id)
                .ok()
                .map(|ix| &self.models[ix]),
        }
    }
}

impl MembershipScorer for PointAttacks {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, query: &ScoreQuery<'_>) -> Result<f64> {
        let model = self.get(query.point).ok_or(Error::MissingPointModel(query.point))?;
        score_f32(&model.weights, query.confidence)
    }
}

/// Per-class attacks indexed by the point's true label.
#[derive(Debug, Clone)]
pub struct ClassAttacks {
    name: String,
    models: Vec<ClassAttackModel>,
}

impl ClassAttacks {
    pub fn new(name: impl Into<String>, mut models: Vec<ClassAttackModel>) -> Self {
        models.sort_by_key(|m| m.class_id);
        Self {
            name: name.into(),
            models,
        }
    }

    pub fn models(&self) -> &[ClassAttackModel] {
        &self.models
    }
}

impl MembershipScorer for ClassAttacks {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, query: &ScoreQuery<'_>) -> Result<f64> {
        let model = self
            .models
            .iter()
            .find(|m| m.class_id == query.label)
            .ok_or_else(|| Error::invalid(format!("no attack model for class {}", query.label)))?;
        score_f32(&model.weights, query.confidence)
    }
}

fn score_f32(weights: &[f64], confidence: &[f32]) -> Result<f64> {
    if weights.len() != confidence.len() + 1 {
        return Err(Error::invalid(format!(
            "{} weights cannot score a confidence vector of length {}",
            weights.len(),
            confidence.len()
        )));
    }
    Ok(sigmoid(linear(weights, confidence.iter().map(|&v| v as f64))))
}

#[derive(Serialize)]
struct LineOut<'a, M> {
    #[serde(flatten)]
    model: &'a M,
    config: &'a LogRegConfig,
}

#[derive(Deserialize)]
struct LineIn<M> {
    #[serde(flatten)]
    model: M,
    config: LogRegConfig,
}

/// One JSON object per line: the model's fields plus the fitting config.
pub fn write_attack_models<M: Serialize>(path: impl AsRef<Path>, models: &[M], config: &LogRegConfig) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for model in models {
        serde_json::to_writer(&mut out, &LineOut { model, config })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_attack_models<M: DeserializeOwned>(path: impl AsRef<Path>) -> Result<(Vec<M>, Option<LogRegConfig>)> {
    let input = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut models = Vec::new();
    let mut config = None;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LineIn<M> =
            serde_json::from_str(&line).map_err(|e| Error::Corrupt(format!("attack file line {}: {e}", lineno + 1)))?;
        config = Some(parsed.config);
        models.push(parsed.model);
    }
    Ok((models, config))
}
