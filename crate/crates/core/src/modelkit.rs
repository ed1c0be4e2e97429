//! Small softmax classifiers used as target and reference models.
//!
//! Two architectures are provided: multinomial (softmax) regression and a
//! one-hidden-layer ReLU network. Both minimize mean cross-entropy plus
//! `l2_penalty * ||W||^2` over weight matrices (biases unpenalized) with
//! mini-batch Adam. Everything random derives from `ModelSpec::seed`.
//!
//! Trained weights are rounded to `f32` so a model written to disk and read
//! back is bit-for-bit the model that was trained.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::seed;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    SoftmaxRegression,
    /// One hidden ReLU layer.
    Mlp { hidden_width: usize },
}

impl Architecture {
    fn name(&self) -> &'static str {
        match self {
            Architecture::SoftmaxRegression => "softmax_regression",
            Architecture::Mlp { .. } => "mlp",
        }
    }

    fn hidden_width(&self) -> Option<usize> {
        match *self {
            Architecture::SoftmaxRegression => None,
            Architecture::Mlp { hidden_width } => Some(hidden_width),
        }
    }

    /// `(inputs, outputs)` of each dense layer in forward order.
    fn layer_shapes(&self, input_dim: usize, class_count: usize) -> Vec<(usize, usize)> {
        match *self {
            Architecture::SoftmaxRegression => vec![(input_dim, class_count)],
            Architecture::Mlp { hidden_width } => {
                vec![(input_dim, hidden_width), (hidden_width, class_count)]
            }
        }
    }
}

/// Training recipe for a classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub l2_penalty: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            architecture: Architecture::Mlp { hidden_width: 32 },
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-3,
            l2_penalty: 0.0,
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.epochs < 1 {
            problems.push("epochs must be at least 1");
        }
        if self.batch_size < 1 {
            problems.push("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push("learning_rate must be positive");
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            problems.push("l2_penalty must be non-negative");
        }
        if let Architecture::Mlp { hidden_width: 0 } = self.architecture {
            problems.push("hidden_width must be at least 1");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Dense layer, weights row-major `(outputs, inputs)`.
#[derive(Debug, Clone, PartialEq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weights.chunks_exact(self.inputs).zip(&self.bias)) {
            *o = b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// A trained (or freshly initialized) softmax classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    spec: ModelSpec,
    input_dim: usize,
    class_count: usize,
    layers: Vec<Dense>,
}

/// Reusable activation buffers for one forward/backward pass.
struct Scratch {
    hidden: Vec<f64>,
    probs: Vec<f64>,
    delta_out: Vec<f64>,
    delta_hidden: Vec<f64>,
}

impl Classifier {
    /// All-zero weights; every prediction is the uniform vector.
    pub fn zeros(spec: ModelSpec, input_dim: usize, class_count: usize) -> Self {
        let layers = spec
            .architecture
            .layer_shapes(input_dim, class_count)
            .into_iter()
            .map(|(i, o)| Dense::zeros(i, o))
            .collect();
        Self {
            spec,
            input_dim,
            class_count,
            layers,
        }
    }

    /// Glorot-uniform weights in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`,
    /// zero biases.
    pub fn initialize(spec: ModelSpec, input_dim: usize, class_count: usize) -> Self {
        let mut model = Self::zeros(spec, input_dim, class_count);
        let mut rng = seed::stream_rng(spec.seed, STREAM_INIT);
        for layer in &mut model.layers {
            let a = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-a..=a);
            }
        }
        model
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Flat parameter vector: per layer, weights then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut rest = params;
        for layer in &mut self.layers {
            let (w, tail) = rest.split_at(layer.weights.len());
            let (b, tail) = tail.split_at(layer.bias.len());
            layer.weights.copy_from_slice(w);
            layer.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    fn scratch(&self) -> Scratch {
        let hidden = self.spec.architecture.hidden_width().unwrap_or(0);
        Scratch {
            hidden: vec![0.0; hidden],
            probs: vec![0.0; self.class_count],
            delta_out: vec![0.0; self.class_count],
            delta_hidden: vec![0.0; hidden],
        }
    }

    /// Forward pass leaving softmax probabilities in `s.probs`.
    fn forward(&self, x: &[f64], s: &mut Scratch) {
        match self.layers.as_slice() {
            [out] => out.forward(x, &mut s.probs),
            [hidden, out] => {
                hidden.forward(x, &mut s.hidden);
                s.hidden.iter_mut().for_each(|h| *h = h.max(0.0));
                out.forward(&s.hidden, &mut s.probs);
            }
            _ => unreachable!("architectures have one or two layers"),
        }
        softmax_in_place(&mut s.probs);
    }

    /// Adds the cross-entropy gradient of one sample (scaled by `scale`) to
    /// `grad` and returns its loss. Expects `forward` to have run on `x`.
    fn backward(&self, x: &[f64], label: usize, scale: f64, s: &mut Scratch, grad: &mut [f64]) -> f64 {
        let loss = -s.probs[label].ln();
        for (d, p) in s.delta_out.iter_mut().zip(&s.probs) {
            *d = p * scale;
        }
        s.delta_out[label] -= scale;

        match self.layers.as_slice() {
            [out] => accumulate_dense(out, x, &s.delta_out, grad),
            [hidden, out] => {
                let offset = hidden.param_count();
                accumulate_dense(out, &s.hidden, &s.delta_out, &mut grad[offset..]);
                for (j, dh) in s.delta_hidden.iter_mut().enumerate() {
                    *dh = if s.hidden[j] > 0.0 {
                        s.delta_out
                            .iter()
                            .enumerate()
                            .map(|(k, d)| d * out.weights[k * out.inputs + j])
                            .sum()
                    } else {
                        0.0
                    };
                }
                accumulate_dense(hidden, x, &s.delta_hidden, &mut grad[..offset]);
            }
            _ => unreachable!("architectures have one or two layers"),
        }
        loss
    }

    fn weight_penalty(&self, l2: f64) -> f64 {
        l2 * self
            .layers
            .iter()
            .flat_map(|l| &l.weights)
            .map(|w| w * w)
            .sum::<f64>()
    }

    fn add_penalty_gradient(&self, l2: f64, grad: &mut [f64]) {
        let mut offset = 0;
        for layer in &self.layers {
            for (g, w) in grad[offset..offset + layer.weights.len()].iter_mut().zip(&layer.weights) {
                *g += 2.0 * l2 * w;
            }
            offset += layer.param_count();
        }
    }

    /// Training objective on `data`: mean cross-entropy plus the weight penalty.
    pub fn objective(&self, data: &LabeledDataset, l2_penalty: f64) -> Result<f64> {
        self.check_data(data)?;
        let mut s = self.scratch();
        let total: f64 = data
            .rows()
            .zip(data.labels())
            .map(|(x, &y)| {
                self.forward(x, &mut s);
                -s.probs[y].ln()
            })
            .sum();
        Ok(total / data.len() as f64 + self.weight_penalty(l2_penalty))
    }

    /// Objective and its analytic gradient, ordered like [`Self::parameters`].
    pub fn objective_gradient(&self, data: &LabeledDataset, l2_penalty: f64) -> Result<(f64, Vec<f64>)> {
        self.check_data(data)?;
        let mut s = self.scratch();
        let mut grad = vec![0.0; self.param_count()];
        let scale = 1.0 / data.len() as f64;
        let mut loss = 0.0;
        for (x, &y) in data.rows().zip(data.labels()) {
            self.forward(x, &mut s);
            loss += self.backward(x, y, scale, &mut s, &mut grad);
        }
        self.add_penalty_gradient(l2_penalty, &mut grad);
        Ok((loss * scale + self.weight_penalty(l2_penalty), grad))
    }

    fn check_data(&self, data: &LabeledDataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        if data.dim() != self.input_dim {
            return Err(Error::invalid(format!(
                "dataset dimension {} does not match model input {}",
                data.dim(),
                self.input_dim
            )));
        }
        if data.class_count() > self.class_count {
            return Err(Error::invalid(format!(
                "dataset has {} classes, model has {}",
                data.class_count(),
                self.class_count
            )));
        }
        Ok(())
    }

    /// Softmax confidences for each row of `points` (flat, row-major), as a
    /// flat `rows x C` matrix.
    pub fn predict_confidences(&self, points: &[f64]) -> Result<Vec<f64>> {
        if !points.len().is_multiple_of(self.input_dim) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of dimension {}",
                points.len(),
                self.input_dim
            )));
        }
        let mut s = self.scratch();
        let mut out = Vec::with_capacity(points.len() / self.input_dim * self.class_count);
        for x in points.chunks_exact(self.input_dim) {
            self.forward(x, &mut s);
            out.extend_from_slice(&s.probs);
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut input)
    }

    /// JSON header line, then every parameter as little-endian `f32`.
    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let header = ModelHeader {
            architecture: self.spec.architecture.name().to_owned(),
            d: self.input_dim,
            c: self.class_count,
            hidden_width: self.spec.architecture.hidden_width(),
            epochs: self.spec.epochs,
            batch_size: self.spec.batch_size,
            learning_rate: self.spec.learning_rate,
            l2_penalty: self.spec.l2_penalty,
            seed: self.spec.seed,
        };
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
        for p in self.parameters() {
            out.write_all(&(p as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(input: &mut impl BufRead) -> Result<Self> {
        let mut line = String::new();
        input.read_line(&mut line)?;
        let header: ModelHeader =
            serde_json::from_str(line.trim_end()).map_err(|e| Error::Corrupt(format!("model header: {e}")))?;
        let architecture = match (header.architecture.as_str(), header.hidden_width) {
            ("softmax_regression", _) => Architecture::SoftmaxRegression,
            ("mlp", Some(hidden_width)) => Architecture::Mlp { hidden_width },
            (other, _) => return Err(Error::Corrupt(format!("unknown architecture {other:?}"))),
        };
        let spec = ModelSpec {
            architecture,
            epochs: header.epochs,
            batch_size: header.batch_size,
            learning_rate: header.learning_rate,
            l2_penalty: header.l2_penalty,
            seed: header.seed,
        };
        let mut model = Self::zeros(spec, header.d, header.c);
        let mut payload = Vec::new();
        input.read_to_end(&mut payload)?;
        let expected = model.param_count() * 4;
        if payload.len() < expected {
            return Err(Error::Truncated {
                expected,
                actual: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after model weights",
                payload.len() - expected
            )));
        }
        let params: Vec<f64> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        model.set_parameters(&params)?;
        Ok(model)
    }

    fn quantize(&mut self) {
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = *w as f32 as f64;
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    architecture: String,
    d: usize,
    c: usize,
    hidden_width: Option<usize>,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    l2_penalty: f64,
    seed: u64,
}

fn accumulate_dense(layer: &Dense, x: &[f64], delta: &[f64], grad: &mut [f64]) {
    let (gw, gb) = grad.split_at_mut(layer.weights.len());
    for ((row, gb), d) in gw.chunks_exact_mut(layer.inputs).zip(gb.iter_mut()).zip(delta) {
        if *d == 0.0 {
            continue;
        }
        for (g, xi) in row.iter_mut().zip(x) {
            *g += d * xi;
        }
        *gb += d;
    }
}

/// Max-shifted softmax, clamped into the open interval `(0, 1)`.
pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let upper = 1.0 - f64::EPSILON / 2.0;
    for v in z.iter_mut() {
        *v = (*v / sum).clamp(f64::MIN_POSITIVE, upper);
    }
}

/// Trains a classifier by mini-batch Adam.
///
/// Batches follow a per-epoch seeded shuffle; the final short batch is kept.
pub fn train_classifier(spec: &ModelSpec, data: &LabeledDataset) -> Result<Classifier> {
    train(spec, data, false).map(|(model, _)| model)
}

/// Like [`train_classifier`], also returning the full-dataset objective at the
/// start of every epoch and after the last one (`epochs + 1` values).
pub fn train_classifier_traced(spec: &ModelSpec, data: &LabeledDataset) -> Result<(Classifier, Vec<f64>)> {
    train(spec, data, true)
}

fn train(spec: &ModelSpec, data: &LabeledDataset, trace: bool) -> Result<(Classifier, Vec<f64>)> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let mut model = Classifier::initialize(*spec, data.dim(), data.class_count());
    let n_params = model.param_count();
    let mut params = model.parameters();
    let mut grad = vec![0.0; n_params];
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = seed::stream_rng(spec.seed, STREAM_SHUFFLE);
    let mut s = model.scratch();
    let mut history = Vec::new();

    for epoch in 0..spec.epochs {
        if trace {
            history.push(model.objective(data, spec.l2_penalty)?);
        }
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(spec.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = data.point(i);
                model.forward(x, &mut s);
                epoch_loss += model.backward(x, data.labels()[i], scale, &mut s, &mut grad);
            }
            model.add_penalty_gradient(spec.l2_penalty, &mut grad);

            step += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(step);
            let bc2 = 1.0 - ADAM_BETA2.powi(step);
            for (((p, g), m), v) in params.iter_mut().zip(&grad).zip(&mut m).zip(&mut v) {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *p -= spec.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
            }
            model.set_parameters(&params)?;
        }
        if !epoch_loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
    }
    model.quantize();
    if trace {
        history.push(model.objective(data, spec.l2_penalty)?);
    }
    Ok((model, history))
}

/// Fraction of points whose highest-confidence class equals the label.
/// Ties go to the lowest class index.
pub fn task_accuracy(model: &Classifier, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("accuracy of an empty dataset is undefined"));
    }
    if data.dim() != model.input_dim() {
        return Err(Error::invalid(format!(
            "dataset dimension {} does not match model input {}",
            data.dim(),
            model.input_dim()
        )));
    }
    let probs = model.predict_confidences(data.points())?;
    let correct = probs
        .chunks_exact(model.class_count())
        .zip(data.labels())
        .filter(|(row, &label)| argmax(row) == label)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// Index of the largest entry, first one on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LabeledDataset {
        LabeledDataset::new(vec![-2.0, -1.0, -1.5, -2.0, 2.0, 1.0, 1.5, 2.0], vec![0, 0, 1, 1], 2, 2).unwrap()
    }

    fn softmax_spec() -> ModelSpec {
        ModelSpec {
            architecture: Architecture::SoftmaxRegression,
            epochs: 200,
            batch_size: 4,
            learning_rate: 0.05,
            l2_penalty: 0.0,
            seed: 3,
        }
    }

    #[test]
    fn separable_toy_is_fit() {
        let data = toy();
        let model = train_classifier(&softmax_spec(), &data).unwrap();
        assert_eq!(task_accuracy(&model, &data).unwrap(), 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy();
        let spec = ModelSpec {
            architecture: Architecture::Mlp { hidden_width: 5 },
            batch_size: 3,
            ..softmax_spec()
        };
        let a = train_classifier(&spec, &data).unwrap();
        let b = train_classifier(&spec, &data).unwrap();
        let bits = |m: &Classifier| m.parameters().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = train_classifier(&spec.with_seed(4), &data).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let empty = toy().subset(&[]).unwrap();
        assert!(matches!(train_classifier(&softmax_spec(), &empty), Err(Error::InvalidArgument(_))));
        let model = Classifier::zeros(softmax_spec(), 2, 2);
        assert!(task_accuracy(&model, &empty).is_err());
    }

    #[test]
    fn diverging_training_reports_epoch() {
        let data = LabeledDataset::new(vec![f64::INFINITY, -1.0], vec![0, 1], 1, 2).unwrap();
        let err = train_classifier(&softmax_spec(), &data).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 0 }), "{err:?}");
    }

    #[test]
    fn zero_model_predicts_uniform() {
        for arch in [Architecture::SoftmaxRegression, Architecture::Mlp { hidden_width: 3 }] {
            let spec = ModelSpec {
                architecture: arch,
                ..softmax_spec()
            };
            let model = Classifier::zeros(spec, 2, 4);
            let probs = model.predict_confidences(&[0.3, -7.0, 5.0, 1.0]).unwrap();
            assert!(probs.iter().all(|&p| p == 0.25));
        }
    }

    #[test]
    fn zero_model_tie_breaks_to_class_zero() {
        let data = LabeledDataset::new(vec![1.0, 2.0, 3.0], vec![0, 0, 0], 1, 3).unwrap();
        let model = Classifier::zeros(softmax_spec(), 1, 3);
        assert_eq!(task_accuracy(&model, &data).unwrap(), 1.0);
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let model = Classifier::zeros(softmax_spec(), 2, 2);
        assert!(model.predict_confidences(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn softmax_survives_extreme_logits() {
        let mut z = vec![1000.0, -1000.0, 0.0];
        softmax_in_place(&mut z);
        assert!(z.iter().all(|&p| p > 0.0 && p < 1.0));
        assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_matches_recount() {
        let spec = ModelSpec {
            architecture: Architecture::Mlp { hidden_width: 4 },
            ..softmax_spec()
        };
        let model = Classifier::initialize(spec, 3, 3);
        let points: Vec<f64> = (0..30).map(|i| ((i * 7919) % 23) as f64 / 5.0 - 2.0).collect();
        let labels: Vec<usize> = (0..10).map(|i| (i * 5) % 3).collect();
        let data = LabeledDataset::new(points, labels, 3, 3).unwrap();
        let mut hits = 0;
        for i in 0..10 {
            let probs = model.predict_confidences(data.point(i)).unwrap();
            let mut best = 0;
            for c in 1..3 {
                if probs[c] > probs[best] {
                    best = c;
                }
            }
            hits += usize::from(best == data.labels()[i]);
        }
        assert_eq!(task_accuracy(&model, &data).unwrap(), hits as f64 / 10.0);
    }

    #[test]
    fn persistence_is_exact_for_trained_models() {
        let data = toy();
        let spec = ModelSpec {
            architecture: Architecture::Mlp { hidden_width: 3 },
            ..softmax_spec()
        };
        let model = train_classifier(&spec, &data).unwrap();
        let mut bytes = Vec::new();
        model.write_to(&mut bytes).unwrap();
        let back = Classifier::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, model);

        let cut = bytes.len() - 3;
        let err = Classifier::read_from(&mut &bytes[..cut]).unwrap_err();
        assert!(matches!(err, Error::Truncated { .. }), "{err:?}");
    }

    #[test]
    fn l2_training_does_not_increase_loss_on_toy() {
        let data = toy();
        for arch in [Architecture::SoftmaxRegression, Architecture::Mlp { hidden_width: 4 }] {
            let spec = ModelSpec {
                architecture: arch,
                epochs: 100,
                batch_size: 4,
                learning_rate: 0.01,
                l2_penalty: 0.01,
                seed: 11,
            };
            let (_, history) = train_classifier_traced(&spec, &data).unwrap();
            // the last entry is after f32 rounding, so only epoch starts are compared
            for w in history[..spec.epochs].windows(2) {
                assert!(w[1] <= w[0] + 1e-6, "{arch:?}: loss rose {} -> {}", w[0], w[1]);
            }
        }
    }
}
