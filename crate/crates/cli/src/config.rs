//! Experiment configuration: a single JSON document describing the
//! population, the reference and target model sets, and the attack.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use bagged_gmia::attacks::LogRegConfig;
use bagged_gmia::dataset::{load_csv, synth_gaussian_mixture, CsvOptions, LabeledDataset, MixtureParams};
use bagged_gmia::eval::DEFAULT_THRESHOLDS;
use bagged_gmia::modelkit::ModelSpec;
use bagged_gmia::seed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Where the population comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(MixtureParams),
    Csv {
        path: PathBuf,
        label_column: usize,
        #[serde(default)]
        skip_header: bool,
    },
}

impl DatasetSource {
    /// Relative CSV paths resolve against `base`.
    pub fn load(&self, base: &Path) -> bagged_gmia::Result<LabeledDataset> {
        match self {
            DatasetSource::Synthetic(params) => synth_gaussian_mixture(*params),
            DatasetSource::Csv {
                path,
                label_column,
                skip_header,
            } => load_csv(
                base.join(path),
                CsvOptions {
                    label_column: *label_column,
                    skip_header: *skip_header,
                },
            ),
        }
    }
}

/// One bagged reference-model configuration: `k` models, each point in `p` of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    pub name: String,
    pub k: usize,
    pub p: usize,
    #[serde(default)]
    pub model: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetConfig {
    /// Number of complementary half-split pairs; `2 * pair_count` targets.
    pub pair_count: usize,
    #[serde(default)]
    pub model: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub references: Vec<ReferenceConfig>,
    pub target: TargetConfig,
    #[serde(default)]
    pub attack: LogRegConfig,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub master_seed: u64,
    /// Relative paths resolve against the config file's directory.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Reference configuration whose models double as shadow models for the
    /// class-based baseline; the first one when absent.
    #[serde(default)]
    pub class_baseline_reference: Option<String>,
}

fn default_thresholds() -> Vec<f64> {
    DEFAULT_THRESHOLDS.to_vec()
}

/// Reference `(k, p)` presets A to E.
pub const PRESETS: [(&str, usize, usize); 5] = [("A", 100, 90), ("B", 100, 50), ("C", 100, 25), ("D", 100, 10), ("E", 200, 10)];

/// Reference configuration for preset `name` with the given model spec.
pub fn preset(name: &str, model: ModelSpec) -> Option<ReferenceConfig> {
    PRESETS.iter().find(|(n, _, _)| *n == name).map(|&(n, k, p)| ReferenceConfig {
        name: n.to_owned(),
        k,
        p,
        model,
    })
}

/// Names reserved for artifacts that are not reference configurations.
const RESERVED_NAMES: [&str; 4] = ["target", "class-based", "random-guess", "comparison"];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(vec![format!("malformed config: {e}")]))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| CliError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut problems = Vec::new();
        if let DatasetSource::Synthetic(m) = &self.dataset {
            if m.class_count < 2 || m.per_class < 1 || m.dim < 1 || m.separation.is_nan() || m.separation < 0.0 {
                problems.push("dataset: need class_count >= 2, per_class >= 1, dim >= 1, separation >= 0".to_owned());
            }
        }
        if self.references.is_empty() {
            problems.push("references: at least one reference configuration is required".to_owned());
        }
        let mut seen = BTreeSet::new();
        for r in &self.references {
            let label = format!("reference {:?}", r.name);
            if r.name.is_empty() || !r.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                problems.push(format!("{label}: name must be non-empty ASCII letters, digits, '-' or '_'"));
            }
            if RESERVED_NAMES.contains(&r.name.as_str()) {
                problems.push(format!("{label}: name is reserved"));
            }
            if !seen.insert(r.name.as_str()) {
                problems.push(format!("{label}: duplicate name"));
            }
            if r.k < 2 || r.p < 1 || r.p >= r.k {
                problems.push(format!("{label}: need 1 <= p <= k-1, got k={} p={}", r.k, r.p));
            }
            if let Err(e) = r.model.validate() {
                problems.push(format!("{label}: {e}"));
            }
        }
        if self.target.pair_count < 1 {
            problems.push("target: pair_count must be at least 1".to_owned());
        }
        if let Err(e) = self.target.model.validate() {
            problems.push(format!("target: {e}"));
        }
        if let Err(e) = self.attack.validate() {
            problems.push(format!("attack: {e}"));
        }
        if self.thresholds.is_empty() {
            problems.push("thresholds: at least one threshold is required".to_owned());
        }
        for t in &self.thresholds {
            if !(*t > 50.0 && *t <= 100.0) {
                problems.push(format!("thresholds: {t} outside (50, 100]"));
            }
        }
        if let Some(name) = &self.class_baseline_reference {
            if !self.references.iter().any(|r| &r.name == name) {
                problems.push(format!("class_baseline_reference: no reference named {name:?}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems))
        }
    }

    pub fn reference(&self, name: &str) -> Option<&ReferenceConfig> {
        self.references.iter().find(|r| r.name == name)
    }

    /// The reference configuration used for the class-based baseline.
    pub fn baseline_reference(&self) -> &ReferenceConfig {
        self.class_baseline_reference
            .as_deref()
            .and_then(|n| self.reference(n))
            .unwrap_or(&self.references[0])
    }

    /// Seed for the artifact called `role`, a pure function of the master seed.
    pub fn seed_for(&self, role: &str) -> u64 {
        let digest = Sha256::digest(role.as_bytes());
        let tag = u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"));
        seed::derive(self.master_seed, tag)
    }
}
