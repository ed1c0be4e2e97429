//! Trains every model of a plan and collects their confidences over the
//! whole population into an `(N, k, C)` tensor.

use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{AllocationPlan, PlanHeader, PlanKind};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::modelkit::{task_accuracy, train_classifier, Classifier, ModelSpec};
use crate::seed;

/// The `k` models of a plan, in model-index order.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub models: Vec<Classifier>,
    pub plan: AllocationPlan,
    /// Accuracy of each model on its own training split.
    pub train_accuracy: Vec<f64>,
    pub train_seconds: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelSetMeta {
    train_accuracy: Vec<f64>,
    train_seconds: Vec<f64>,
}

impl ModelSet {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn mean_train_accuracy(&self) -> f64 {
        self.train_accuracy.iter().sum::<f64>() / self.train_accuracy.len().max(1) as f64
    }

    /// File name of model `j` inside a model-set directory.
    pub fn model_file_name(j: usize) -> String {
        format!("model_{j:05}.bin")
    }

    /// Writes `plan.bin`, one file per model and `meta.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.plan.save(dir.join("plan.bin"))?;
        for (j, model) in self.models.iter().enumerate() {
            model.save(dir.join(Self::model_file_name(j)))?;
        }
        let meta = ModelSetMeta {
            train_accuracy: self.train_accuracy.clone(),
            train_seconds: self.train_seconds.clone(),
        };
        std::fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let plan = AllocationPlan::load(dir.join("plan.bin"))?;
        let models = (0..plan.n_models())
            .map(|j| {
                Classifier::load(dir.join(Self::model_file_name(j))).map_err(|e| Error::Model {
                    model: j,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let meta: ModelSetMeta = serde_json::from_slice(&std::fs::read(dir.join("meta.json"))?)?;
        if meta.train_accuracy.len() != models.len() || meta.train_seconds.len() != models.len() {
            return Err(Error::Corrupt("model-set metadata length mismatch".into()));
        }
        Ok(Self {
            models,
            plan,
            train_accuracy: meta.train_accuracy,
            train_seconds: meta.train_seconds,
        })
    }
}

/// Seed used for model `j` of a set trained from `spec`.
pub fn model_seed(spec: &ModelSpec, j: usize) -> u64 {
    seed::derive(spec.seed, j as u64)
}

/// Trains model `j` of `plan` on its split with seed `model_seed(spec, j)`.
///
/// At most `parallelism` models train at once; the result does not depend on
/// it.
pub fn train_model_set(
    plan: &AllocationPlan,
    spec: &ModelSpec,
    data: &LabeledDataset,
    parallelism: usize,
) -> Result<ModelSet> {
    let seeds: Vec<u64> = (0..plan.n_models()).map(|j| model_seed(spec, j)).collect();
    train_model_set_with_seeds(plan, spec, data, parallelism, &seeds)
}

/// [`train_model_set`] with explicit per-model seeds.
pub fn train_model_set_with_seeds(
    plan: &AllocationPlan,
    spec: &ModelSpec,
    data: &LabeledDataset,
    parallelism: usize,
    seeds: &[u64],
) -> Result<ModelSet> {
    if parallelism < 1 {
        return Err(Error::invalid("parallelism must be at least 1"));
    }
    if plan.n_points() != data.len() {
        return Err(Error::invalid(format!(
            "plan covers {} points, dataset has {}",
            plan.n_points(),
            data.len()
        )));
    }
    if seeds.len() != plan.n_models() {
        return Err(Error::invalid("one seed per model is required"));
    }
    spec.validate()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let trained: Vec<(Classifier, f64, f64)> = pool.install(|| {
        (0..plan.n_models())
            .into_par_iter()
            .map(|j| {
                let tag = |e: Error| Error::Model {
                    model: j,
                    source: Box::new(e),
                };
                let indices = plan.training_indices(j)?;
                if indices.is_empty() {
                    return Err(tag(Error::invalid("empty training split")));
                }
                let split = data.subset(&indices)?;
                let started = Instant::now();
                let model = train_classifier(&spec.with_seed(seeds[j]), &split).map_err(tag)?;
                let seconds = started.elapsed().as_secs_f64();
                let accuracy = task_accuracy(&model, &split).map_err(tag)?;
                Ok((model, accuracy, seconds))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut set = ModelSet {
        models: Vec::with_capacity(trained.len()),
        plan: plan.clone(),
        train_accuracy: Vec::with_capacity(trained.len()),
        train_seconds: Vec::with_capacity(trained.len()),
    };
    for (model, accuracy, seconds) in trained {
        set.models.push(model);
        set.train_accuracy.push(accuracy);
        set.train_seconds.push(seconds);
    }
    Ok(set)
}

/// Confidences of `k` models over `N` points, laid out `(point, model, class)`,
/// together with the plan that says which cells are "In".
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceTensor {
    n: usize,
    k: usize,
    c: usize,
    values: Vec<f32>,
    plan: AllocationPlan,
}

impl ConfidenceTensor {
    pub fn new(values: Vec<f32>, class_count: usize, plan: AllocationPlan) -> Result<Self> {
        let (n, k) = (plan.n_points(), plan.n_models());
        if class_count == 0 || values.len() != n * k * class_count {
            return Err(Error::invalid(format!(
                "{} values do not form a ({n}, {k}, {class_count}) tensor",
                values.len()
            )));
        }
        Ok(Self {
            n,
            k,
            c: class_count,
            values,
            plan,
        })
    }

    /// `(N, k, C)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.k, self.c)
    }

    pub fn plan(&self) -> &AllocationPlan {
        &self.plan
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Confidence vector of model `model` for point `point`.
    pub fn fiber(&self, point: usize, model: usize) -> &[f32] {
        let start = (point * self.k + model) * self.c;
        &self.values[start..start + self.c]
    }

    /// All `k` fibers of one point, row-major `k x C`.
    pub fn point_block(&self, point: usize) -> &[f32] {
        &self.values[point * self.k * self.c..(point + 1) * self.k * self.c]
    }

    pub fn is_in(&self, point: usize, model: usize) -> bool {
        self.plan.is_member(point, model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Header line, `f32le` values in `(point, model, class)` order, then the
    /// plan bitmap.
    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let plan = self.plan.header();
        let header = TensorHeader {
            n: self.n,
            k: self.k,
            c: self.c,
            dtype: DTYPE.to_owned(),
            plan_seed: plan.seed,
            plan_kind: plan.kind,
            plan_p: plan.p,
        };
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        out.write_all(&self.plan.packed_bits())?;
        Ok(())
    }

    pub fn read_from(input: &mut impl BufRead) -> Result<Self> {
        let mut line = String::new();
        input.read_line(&mut line)?;
        let header: TensorHeader =
            serde_json::from_str(line.trim_end()).map_err(|e| Error::Corrupt(format!("tensor header: {e}")))?;
        if header.dtype != DTYPE {
            return Err(Error::Corrupt(format!("unsupported dtype {:?}", header.dtype)));
        }
        let cells = header
            .n
            .checked_mul(header.k)
            .and_then(|nk| nk.checked_mul(header.c))
            .ok_or_else(|| Error::Corrupt("tensor dimensions overflow".into()))?;
        let value_bytes = cells * 4;
        let expected = value_bytes + (header.n * header.k).div_ceil(8);

        let mut payload = Vec::new();
        input.read_to_end(&mut payload)?;
        if payload.len() < expected {
            return Err(Error::Truncated {
                expected,
                actual: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(Error::Corrupt(format!(
                "payload is {} bytes but header dims ({}, {}, {}) imply {expected}",
                payload.len(),
                header.n,
                header.k,
                header.c
            )));
        }
        let values = payload[..value_bytes]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let plan = AllocationPlan::from_packed(
            PlanHeader {
                n: header.n,
                k: header.k,
                p: header.plan_p,
                kind: header.plan_kind,
                seed: header.plan_seed,
            },
            &payload[value_bytes..],
        )?;
        Self::new(values, header.c, plan)
    }
}

const DTYPE: &str = "f32le";

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    n: usize,
    k: usize,
    c: usize,
    dtype: String,
    plan_seed: u64,
    plan_kind: PlanKind,
    plan_p: usize,
}

/// Rounds a probability to `f32`, keeping it strictly inside `(0, 1)`.
fn to_open_unit_f32(p: f64) -> f32 {
    (p as f32).clamp(f32::MIN_POSITIVE, 1.0 - f32::EPSILON / 2.0)
}

/// `tensor[i][j] = predict_confidences(model j, point i)`, membership from the
/// set's plan.
pub fn extract_confidence_tensor(models: &ModelSet, data: &LabeledDataset) -> Result<ConfidenceTensor> {
    let plan = &models.plan;
    if plan.n_points() != data.len() {
        return Err(Error::invalid(format!(
            "plan covers {} points, dataset has {}",
            plan.n_points(),
            data.len()
        )));
    }
    let first = models
        .models
        .first()
        .ok_or_else(|| Error::invalid("model set is empty"))?;
    let c = first.class_count();
    if let Some(j) = models
        .models
        .iter()
        .position(|m| m.input_dim() != data.dim() || m.class_count() != c)
    {
        return Err(Error::invalid(format!("model {j} does not match the dataset shape")));
    }

    let columns: Vec<Vec<f64>> = models
        .models
        .par_iter()
        .map(|m| m.predict_confidences(data.points()))
        .collect::<Result<_>>()?;

    let (n, k) = (data.len(), models.len());
    let mut values = vec![0f32; n * k * c];
    values.par_chunks_mut(k * c).enumerate().for_each(|(i, block)| {
        for (j, column) in columns.iter().enumerate() {
            for (dst, &src) in block[j * c..(j + 1) * c].iter_mut().zip(&column[i * c..(i + 1) * c]) {
                *dst = to_open_unit_f32(src);
            }
        }
    });
    ConfidenceTensor::new(values, c, plan.clone())
}

/// Saves `tensor` to `path` and reads it back.
pub fn tensor_roundtrip(tensor: &ConfidenceTensor, path: impl AsRef<Path>) -> Result<ConfidenceTensor> {
    tensor.save(&path)?;
    ConfidenceTensor::load(&path)
}
