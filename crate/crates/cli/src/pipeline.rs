//! The staged pipeline: allocate, train, extract, attack, evaluate, baseline,
//! compare. Every stage reads its inputs from the artifact directory, writes
//! its outputs there, and records both in the manifest; a stage whose inputs
//! and outputs are unchanged is skipped.

use std::path::{Path, PathBuf};

use bagged_gmia::allocator::{allocate_reference, allocate_target_halves, AllocationPlan};
use bagged_gmia::attacks::{
    read_attack_models, train_class_attacks, train_point_attacks, write_attack_models, ClassAttackModel, ClassAttacks,
    MembershipScorer, PointAttackModel, PointAttacks,
};
use bagged_gmia::dataset::LabeledDataset;
use bagged_gmia::eval::{random_guess_simulation, validate_on_tensor, write_histogram_csv, EvaluationReport};
use bagged_gmia::farm::{extract_confidence_tensor, train_model_set, ConfidenceTensor, ModelSet};
use bagged_gmia::modelkit::ModelSpec;
use serde::Serialize;
use serde_json::json;

use crate::compare::compare_attacks;
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::manifest::{bytes_sha256, json_sha256, Manifest};

pub const TARGET: &str = "target";
pub const CLASS_BASED: &str = "class-based";
pub const RANDOM_GUESS: &str = "random-guess";
pub const COMPARISON: &str = "comparison";

/// One pipeline stage, as exposed by the subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Allocate,
    TrainRefs,
    TrainTargets,
    Extract,
    Attack,
    Evaluate,
    Baseline,
    Compare,
}

/// Stem of the report for the bagged attack on reference configuration `name`.
pub fn gmia_name(name: &str) -> String {
    format!("gmia-{name}")
}

pub struct Pipeline {
    config: ExperimentConfig,
    root: PathBuf,
    base_dir: PathBuf,
    parallelism: usize,
    manifest: Manifest,
    data: Option<(LabeledDataset, String)>,
    quiet: bool,
}

impl Pipeline {
    /// `base_dir` resolves relative dataset paths, normally the config file's
    /// directory.
    pub fn new(config: ExperimentConfig, root: impl Into<PathBuf>, base_dir: impl Into<PathBuf>, parallelism: usize) -> Result<Self, CliError> {
        config.validate()?;
        if parallelism < 1 {
            return Err(CliError::Config(vec!["parallelism must be at least 1".into()]));
        }
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
        let manifest = Manifest::load(&root)?;
        Ok(Self {
            config,
            root,
            base_dir: base_dir.into(),
            parallelism,
            manifest,
            data: None,
            quiet: false,
        })
    }

    /// Suppresses the per-stage progress lines on stderr.
    pub fn quiet(mut self, quiet: bool) -> Self {
        self.quiet = quiet;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Runs `stage` after everything it depends on.
    pub fn run_stage(&mut self, stage: Stage) -> Result<(), CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallelism)
            .build()
            .map_err(|e| CliError::Core(bagged_gmia::Error::InvalidArgument(format!("thread pool: {e}"))))?;
        pool.install(|| match stage {
            Stage::Allocate => self.allocate(),
            Stage::TrainRefs => self.train_refs(),
            Stage::TrainTargets => self.train_targets(),
            Stage::Extract => self.extract(),
            Stage::Attack => self.attack(),
            Stage::Evaluate => self.evaluate(),
            Stage::Baseline => self.baseline(),
            Stage::Compare => self.compare(),
        })
    }

    /// Every stage, ending with the comparison.
    pub fn run(&mut self) -> Result<(), CliError> {
        self.run_stage(Stage::Compare)
    }

    fn log(&self, msg: std::fmt::Arguments<'_>) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn dataset(&mut self) -> Result<(LabeledDataset, String), CliError> {
        if self.data.is_none() {
            let data = self.config.dataset.load(&self.base_dir)?;
            let hash = dataset_hash(&data);
            self.data = Some((data, hash));
        }
        Ok(self.data.clone().expect("dataset loaded above"))
    }

    /// Runs `build` unless the manifest shows `key` done with the same input;
    /// `build` returns the relative paths it wrote.
    fn stage(
        &mut self,
        key: &str,
        input: serde_json::Value,
        build: impl FnOnce(&mut Self) -> Result<Vec<PathBuf>, CliError>,
    ) -> Result<(), CliError> {
        let input = json_sha256(&input);
        if self.manifest.is_fresh(&self.root, key, &input)? {
            self.log(format_args!("[{key}] up to date"));
            return Ok(());
        }
        self.log(format_args!("[{key}] running"));
        let outputs = build(self)?;
        self.manifest.record(&self.root, key, input, &outputs)?;
        self.manifest.save(&self.root)
    }

    fn digest(&self, key: &str) -> String {
        self.manifest.stage_digest(key).expect("upstream stage recorded before use")
    }

    fn names(&self) -> Vec<String> {
        self.config.references.iter().map(|r| r.name.clone()).collect()
    }

    fn allocate(&mut self) -> Result<(), CliError> {
        let (data, _) = self.dataset()?;
        let n = data.len();
        for name in self.names() {
            let r = self.config.reference(&name).expect("name from config").clone();
            let seed = self.config.seed_for(&format!("plan/{name}"));
            self.stage(
                &format!("allocate/{name}"),
                json!({"kind": "reference", "n": n, "k": r.k, "p": r.p, "seed": seed}),
                |s| {
                    let plan = allocate_reference(n, r.k, r.p, seed)?;
                    s.write_plan(&name, &plan)
                },
            )?;
        }
        let pairs = self.config.target.pair_count;
        let seed = self.config.seed_for("plan/target");
        self.stage(
            "allocate/target",
            json!({"kind": "target", "n": n, "pair_count": pairs, "seed": seed}),
            |s| {
                let plan = allocate_target_halves(n, pairs, seed)?;
                s.write_plan(TARGET, &plan)
            },
        )
    }

    fn write_plan(&self, name: &str, plan: &AllocationPlan) -> Result<Vec<PathBuf>, CliError> {
        let rel = PathBuf::from("plans").join(format!("{name}.bin"));
        std::fs::create_dir_all(self.root.join("plans"))?;
        plan.save(self.root.join(&rel))?;
        Ok(vec![rel])
    }

    fn train_refs(&mut self) -> Result<(), CliError> {
        self.allocate()?;
        for name in self.names() {
            let spec = self.config.reference(&name).expect("name from config").model;
            self.train_set(&name, spec)?;
        }
        Ok(())
    }

    fn train_targets(&mut self) -> Result<(), CliError> {
        self.allocate()?;
        let spec = self.config.target.model;
        self.train_set(TARGET, spec)
    }

    fn train_set(&mut self, name: &str, spec: ModelSpec) -> Result<(), CliError> {
        let (data, data_hash) = self.dataset()?;
        let spec = spec.with_seed(self.config.seed_for(&format!("model/{name}")));
        let input = json!({"plan": self.digest(&format!("allocate/{name}")), "data": data_hash, "spec": spec});
        let parallelism = self.parallelism;
        self.stage(&format!("train/{name}"), input, |s| {
            let plan = AllocationPlan::load(s.root.join("plans").join(format!("{name}.bin")))?;
            let set = train_model_set(&plan, &spec, &data, parallelism)?;
            let dir = PathBuf::from("models").join(name);
            set.save(s.root.join(&dir))?;
            let total: f64 = set.train_seconds.iter().sum();
            s.log(format_args!(
                "[train/{name}] {} models, mean train accuracy {:.4}, {total:.1}s of training",
                set.len(),
                set.mean_train_accuracy()
            ));
            let mut outputs = vec![dir.join("plan.bin"), dir.join("meta.json")];
            outputs.extend((0..set.len()).map(|j| dir.join(ModelSet::model_file_name(j))));
            Ok(outputs)
        })
    }

    fn extract(&mut self) -> Result<(), CliError> {
        self.train_refs()?;
        self.train_targets()?;
        let (data, data_hash) = self.dataset()?;
        let mut names = self.names();
        names.push(TARGET.to_owned());
        for name in names {
            let input = json!({"models": self.digest(&format!("train/{name}")), "data": data_hash});
            self.stage(&format!("extract/{name}"), input, |s| {
                let set = ModelSet::load(s.root.join("models").join(&name))?;
                let tensor = extract_confidence_tensor(&set, &data)?;
                let rel = PathBuf::from("tensors").join(format!("{name}.bin"));
                std::fs::create_dir_all(s.root.join("tensors"))?;
                tensor.save(s.root.join(&rel))?;
                Ok(vec![rel])
            })?;
        }
        Ok(())
    }

    fn attack(&mut self) -> Result<(), CliError> {
        self.extract()?;
        let config = self.config.attack;
        for name in self.names() {
            let input = json!({"tensor": self.digest(&format!("extract/{name}")), "attack": config});
            self.stage(&format!("attack/{name}"), input, |s| {
                let tensor = s.load_tensor(&name)?;
                let models = train_point_attacks(&tensor, &config)?;
                s.write_attacks(&gmia_name(&name), &models)
            })?;
        }
        Ok(())
    }

    fn write_attacks<M: Serialize>(&self, stem: &str, models: &[M]) -> Result<Vec<PathBuf>, CliError> {
        let rel = PathBuf::from("attacks").join(format!("{stem}.jsonl"));
        std::fs::create_dir_all(self.root.join("attacks"))?;
        write_attack_models(self.root.join(&rel), models, &self.config.attack)?;
        Ok(vec![rel])
    }

    fn load_tensor(&self, name: &str) -> Result<ConfidenceTensor, CliError> {
        Ok(ConfidenceTensor::load(self.root.join("tensors").join(format!("{name}.bin")))?)
    }

    /// Inputs every evaluation shares: the target confidences and accuracies.
    fn evaluation_input(&self) -> serde_json::Value {
        json!({
            "targets": self.digest(&format!("extract/{TARGET}")),
            "target_models": self.digest(&format!("train/{TARGET}")),
            "thresholds": self.config.thresholds,
        })
    }

    fn evaluate_scorer(&self, scorer: &dyn MembershipScorer, data: &LabeledDataset) -> Result<Vec<PathBuf>, CliError> {
        let targets = self.load_tensor(TARGET)?;
        let set = ModelSet::load(self.root.join("models").join(TARGET))?;
        let report = validate_on_tensor(scorer, &targets, data, set.mean_train_accuracy(), &self.config.thresholds)?;
        self.log(format_args!(
            "[evaluate] {}: mean AUC {:.4}, threshold counts {:?}",
            report.attack,
            report.mean_auc(),
            report.summary.threshold_counts.iter().map(|t| (t.threshold, t.count)).collect::<Vec<_>>()
        ));
        report.save(self.root.join("reports"), &report.attack)?;
        Ok(report_files(&report.attack))
    }

    fn evaluate(&mut self) -> Result<(), CliError> {
        self.attack()?;
        let (data, data_hash) = self.dataset()?;
        for name in self.names() {
            let stem = gmia_name(&name);
            let input = json!({"attacks": self.digest(&format!("attack/{name}")), "data": data_hash, "eval": self.evaluation_input()});
            self.stage(&format!("evaluate/{stem}"), input, |s| {
                let path = s.root.join("attacks").join(format!("{stem}.jsonl"));
                let (models, _) = read_attack_models::<PointAttackModel>(path)?;
                s.evaluate_scorer(&PointAttacks::new(stem.clone(), models), &data)
            })?;
        }
        Ok(())
    }

    fn baseline(&mut self) -> Result<(), CliError> {
        self.extract()?;
        let (data, data_hash) = self.dataset()?;
        let shadow = self.config.baseline_reference().name.clone();
        let config = self.config.attack;
        let input = json!({"tensor": self.digest(&format!("extract/{shadow}")), "data": data_hash, "attack": config});
        self.stage(&format!("attack/{CLASS_BASED}"), input, |s| {
            let tensor = s.load_tensor(&shadow)?;
            let models = train_class_attacks(&tensor, &data, &config)?;
            s.write_attacks(CLASS_BASED, &models)
        })?;

        let input = json!({"attacks": self.digest(&format!("attack/{CLASS_BASED}")), "data": data_hash, "eval": self.evaluation_input()});
        self.stage(&format!("evaluate/{CLASS_BASED}"), input, |s| {
            let path = s.root.join("attacks").join(format!("{CLASS_BASED}.jsonl"));
            let (models, _) = read_attack_models::<ClassAttackModel>(path)?;
            s.evaluate_scorer(&ClassAttacks::new(CLASS_BASED, models), &data)
        })?;

        let n_points = data.len();
        let n_targets = 2 * self.config.target.pair_count;
        let seed = self.config.seed_for(RANDOM_GUESS);
        let thresholds = self.config.thresholds.clone();
        let input = json!({"n_points": n_points, "n_targets": n_targets, "seed": seed, "thresholds": thresholds});
        self.stage(&format!("evaluate/{RANDOM_GUESS}"), input, |s| {
            let summary = random_guess_simulation(n_points, n_targets, seed, &thresholds)?;
            std::fs::create_dir_all(s.root.join("reports"))?;
            let json_rel = PathBuf::from("reports").join(format!("{RANDOM_GUESS}.json"));
            write_pretty_json(&s.root.join(&json_rel), &summary)?;
            let hist_rel = PathBuf::from("reports").join(format!("{RANDOM_GUESS}.histogram.csv"));
            write_histogram_csv(s.root.join(&hist_rel), &summary.histogram)?;
            s.log(format_args!("[evaluate] {RANDOM_GUESS}: mean {:.3}, sd {:.3}", summary.mean, summary.std_dev));
            Ok(vec![json_rel, hist_rel])
        })
    }

    fn compare(&mut self) -> Result<(), CliError> {
        self.evaluate()?;
        self.baseline()?;
        let mut stems: Vec<String> = self.names().iter().map(|n| gmia_name(n)).collect();
        stems.push(CLASS_BASED.to_owned());
        let reports: Vec<String> = stems.iter().map(|s| self.digest(&format!("evaluate/{s}"))).collect();
        let thresholds = self.config.thresholds.clone();
        let input = json!({"reports": reports, "thresholds": thresholds});
        self.stage(COMPARISON, input, |s| {
            let reports = stems
                .iter()
                .map(|stem| EvaluationReport::load(s.root.join("reports"), stem))
                .collect::<bagged_gmia::Result<Vec<_>>>()?;
            let comparison = compare_attacks(&reports, &thresholds)?;
            let rel = PathBuf::from("reports").join(format!("{COMPARISON}.json"));
            write_pretty_json(&s.root.join(&rel), &comparison)?;
            Ok(vec![rel])
        })
    }
}

fn report_files(stem: &str) -> Vec<PathBuf> {
    ["json", "outcomes.csv", "histogram.csv"]
        .iter()
        .map(|ext| PathBuf::from("reports").join(format!("{stem}.{ext}")))
        .collect()
}

fn write_pretty_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Content hash of a dataset: features, labels, ids and class count.
pub fn dataset_hash(data: &LabeledDataset) -> String {
    let mut bytes = Vec::with_capacity(data.points().len() * 8 + data.len() * 16 + 16);
    bytes.extend_from_slice(&(data.dim() as u64).to_le_bytes());
    bytes.extend_from_slice(&(data.class_count() as u64).to_le_bytes());
    for x in data.points() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    for (&label, &id) in data.labels().iter().zip(data.point_ids()) {
        bytes.extend_from_slice(&(label as u64).to_le_bytes());
        bytes.extend_from_slice(&(id as u64).to_le_bytes());
    }
    bytes_sha256(&bytes)
}
