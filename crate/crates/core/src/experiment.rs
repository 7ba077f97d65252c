//! Run configuration and the session object behind the command line and the C ABI.
//!
//! A run is described by one TOML document:
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/demo"
//! mode = "elabor"
//!
//! [trainer]
//! k = 3
//! learning_rate = 2.0
//!
//! [data]
//! source = "synthetic"
//! n_instances = 500
//!
//! [backend]
//! kind = "toy"
//! predictor = "bilinear"
//!
//! [teacher]
//! client = "mock"
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_dataset, DatasetName, DatasetSpec, Split, SyntheticTask, SyntheticTaskConfig};
use crate::error::{Error, Result};
use crate::inference::{evaluate, predict, EvalConfig, EvalReport, Embedder, HashedBagOfTokens, Prediction};
use crate::models::bilinear::BilinearConfig;
use crate::models::{
    derive_seed, sample_elaborations, BilinearPredictor, GeneratorModel, PredictorModel, ProcessBackend, ToyConditionalLM,
    ToyLmConfig, Vocabulary,
};
use crate::teacher::{
    fetch_teacher_pools, HttpTeacher, HttpTeacherConfig, PromptTemplate, TeacherCache, TeacherClient, TeacherSource,
};
use crate::trainer::{final_checkpoint_path, run_training, Checkpoint, RunOptions, TrainData, TrainOutcome, TrainingMode};
use crate::types::{DecodeConfig, DecodeStrategy, Elaboration, FilterKind, IntegrationKind, QAInstance, TrainerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the data generator, model initialization and training.
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub mode: TrainingMode,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub teacher: TeacherConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    Synthetic(SyntheticTaskConfig),
    Files {
        name: DatasetName,
        train: PathBuf,
        dev: PathBuf,
        #[serde(default)]
        expected_candidates: Option<usize>,
    },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic(SyntheticTaskConfig::default())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Toy,
    Adapter,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    #[default]
    Bilinear,
    /// Knows the planted facts; synthetic data only.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub predictor: PredictorKind,
    pub toy_lm: ToyLmConfig,
    pub bilinear: BilinearConfig,
    /// Backend executable for `kind = "adapter"`.
    pub program: Option<String>,
    pub args: Vec<String>,
    pub optimizer: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Toy,
            predictor: PredictorKind::Bilinear,
            toy_lm: ToyLmConfig::default(),
            bilinear: BilinearConfig::default(),
            program: None,
            args: Vec::new(),
            optimizer: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherKind {
    /// Scripted pools of the synthetic task; empty for file datasets.
    #[default]
    Mock,
    Http,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub client: TeacherKind,
    pub http: HttpTeacherConfig,
    /// Cache file; defaults to `teacher_cache.jsonl` in the output directory.
    pub cache: Option<PathBuf>,
    pub template: Option<PromptTemplate>,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            client: TeacherKind::Mock,
            http: HttpTeacherConfig::default(),
            cache: None,
            template: None,
        }
    }
}

impl RunConfig {
    /// A synthetic-task configuration with every other setting at its default.
    pub fn synthetic(seed: u64, task: SyntheticTaskConfig) -> Self {
        Self {
            seed,
            output_dir: default_output_dir(),
            mode: TrainingMode::default(),
            trainer: TrainerConfig::default(),
            data: DataConfig::Synthetic(task),
            backend: BackendConfig::default(),
            teacher: TeacherConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    /// Copy with the run seed pushed into every seeded component.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.trainer.seed = c.seed;
        c.backend.toy_lm.seed = c.seed;
        c.backend.bilinear.seed = c.seed;
        if let DataConfig::Synthetic(t) = &mut c.data {
            t.seed = c.seed;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        match &self.data {
            DataConfig::Synthetic(t) => {
                t.validate()?;
                if t.pool_size < self.trainer.n_teacher {
                    warn!(
                        "synthetic pool_size {} is below n_teacher {}; pools will be partial",
                        t.pool_size, self.trainer.n_teacher
                    );
                }
            }
            DataConfig::Files { train, dev, .. } => {
                for p in [train, dev] {
                    if !p.exists() {
                        return Err(Error::config(format!("dataset file {} does not exist", p.display())));
                    }
                }
                if self.backend.predictor == PredictorKind::Oracle {
                    return Err(Error::config("the oracle predictor needs synthetic data"));
                }
            }
        }
        if self.backend.kind == BackendKind::Adapter && self.backend.program.is_none() {
            return Err(Error::config("backend.program is required for the adapter backend"));
        }
        if self.teacher.client == TeacherKind::Http && self.teacher.http.endpoint.is_empty() {
            return Err(Error::config("teacher.http.endpoint is required for the http client"));
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> DatasetName {
        match &self.data {
            DataConfig::Synthetic(_) => DatasetName::Synthetic,
            DataConfig::Files { name, .. } => *name,
        }
    }

    pub fn cache_path(&self) -> PathBuf {
        self.teacher
            .cache
            .clone()
            .unwrap_or_else(|| self.output_dir.join("teacher_cache.jsonl"))
    }
}

/// Totals of a teacher caching pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheReport {
    pub instances: usize,
    pub sampled: usize,
    pub deduped: usize,
    pub blank: usize,
    pub partial: usize,
    pub failed: usize,
}

impl std::fmt::Display for CacheReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} sampled, {} deduped ({} instances, {} blank, {} partial, {} failed)",
            self.sampled, self.deduped, self.instances, self.blank, self.partial, self.failed
        )
    }
}

/// Data, teacher and models of one run.
pub struct Session {
    config: RunConfig,
    train: Vec<QAInstance>,
    dev: Vec<QAInstance>,
    synthetic: Option<SyntheticTask>,
    template: PromptTemplate,
    client: Option<Box<dyn TeacherClient>>,
    cache: Option<TeacherCache>,
    generator: Option<Box<dyn GeneratorModel>>,
    predictor: Option<Box<dyn PredictorModel>>,
    trained_mode: Option<TrainingMode>,
}

impl Session {
    /// Opens a session whose teacher cache lives on disk.
    pub fn new(config: RunConfig) -> Result<Self> {
        let config = config.resolved();
        let cache = TeacherCache::open(config.cache_path())?;
        Self::build(config, cache)
    }

    /// Opens a session with a teacher cache that is never persisted.
    pub fn in_memory(config: RunConfig) -> Result<Self> {
        Self::build(config.resolved(), TeacherCache::in_memory())
    }

    fn build(config: RunConfig, cache: TeacherCache) -> Result<Self> {
        config.validate()?;
        let name = config.dataset_name();
        let (train, dev, synthetic) = match &config.data {
            DataConfig::Synthetic(t) => {
                let task = generate_synthetic(t)?;
                (task.train.clone(), task.dev.clone(), Some(task))
            }
            DataConfig::Files {
                name,
                train,
                dev,
                expected_candidates,
            } => {
                let spec = |split, path: &PathBuf| DatasetSpec {
                    expected_candidates: *expected_candidates,
                    ..DatasetSpec::new(*name, split, path)
                };
                (load_dataset(&spec(Split::Train, train))?, load_dataset(&spec(Split::Dev, dev))?, None)
            }
        };
        let template = config.teacher.template.clone().unwrap_or_else(|| PromptTemplate::builtin(name));
        template.validate()?;
        let client: Option<Box<dyn TeacherClient>> = match config.teacher.client {
            TeacherKind::None => None,
            TeacherKind::Http => Some(Box::new(HttpTeacher::new(config.teacher.http.clone())?)),
            TeacherKind::Mock => Some(Box::new(match &synthetic {
                Some(task) => task.mock_teacher(),
                None => crate::teacher::MockTeacher::new(Default::default()),
            })),
        };
        Ok(Self {
            config,
            train,
            dev,
            synthetic,
            template,
            client,
            cache: Some(cache),
            generator: None,
            predictor: None,
            trained_mode: None,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn train_instances(&self) -> &[QAInstance] {
        &self.train
    }

    pub fn dev_instances(&self) -> &[QAInstance] {
        &self.dev
    }

    pub fn synthetic_task(&self) -> Option<&SyntheticTask> {
        self.synthetic.as_ref()
    }

    pub fn teacher_cache(&self) -> &TeacherCache {
        self.cache.as_ref().expect("cache is present outside training")
    }

    /// Cache namespace. Synthetic instance ids repeat across task seeds while
    /// their facts do not, so the seed is part of the key.
    fn dataset_key(&self) -> String {
        match &self.config.data {
            DataConfig::Synthetic(t) => format!("{}-{}", self.config.dataset_name(), t.seed),
            DataConfig::Files { name, .. } => name.to_string(),
        }
    }

    /// Samples teacher pools for every train and dev instance missing some.
    pub fn cache_teacher(&mut self) -> Result<CacheReport> {
        let instances: Vec<QAInstance> = self.train.iter().chain(&self.dev).cloned().collect();
        let dataset = self.dataset_key();
        let cache = self.cache.as_mut().expect("cache is present outside training");
        let outcomes = fetch_teacher_pools(
            self.client.as_deref(),
            cache,
            &dataset,
            &self.template,
            &instances,
            self.config.trainer.n_teacher,
            &self.config.trainer.teacher_decode,
        );
        let mut report = CacheReport {
            instances: instances.len(),
            ..Default::default()
        };
        let mut first_error = None;
        for outcome in outcomes {
            match outcome {
                Ok(o) => {
                    report.sampled += o.sampled;
                    report.deduped += o.duplicates;
                    report.blank += o.blank;
                    report.partial += usize::from(o.partial);
                }
                Err(e @ Error::TeacherUnavailable { .. }) => {
                    report.failed += 1;
                    first_error.get_or_insert(e);
                }
                Err(e) => return Err(e),
            }
        }
        if let Some(e) = first_error {
            if report.sampled == 0 && report.failed == report.instances {
                return Err(e);
            }
            warn!("teacher unavailable for {} instances: {e}", report.failed);
        }
        Ok(report)
    }

    fn vocabulary(&self) -> Vocabulary {
        if let Some(task) = &self.synthetic {
            return task.vocabulary();
        }
        let dataset = self.dataset_key();
        let cache = self.teacher_cache();
        let mut texts: Vec<String> = Vec::new();
        for q in &self.train {
            texts.extend(cache.get(&dataset, q.id()).iter().map(|e| e.text().to_string()));
            texts.push(q.question().to_string());
            texts.extend(q.candidates().iter().cloned());
        }
        Vocabulary::from_texts(texts.iter().map(String::as_str))
    }

    fn spawn_backend(&self) -> Result<ProcessBackend> {
        let program = self.config.backend.program.as_deref().expect("validated");
        let backend = ProcessBackend::spawn(program, &self.config.backend.args)?;
        Ok(match &self.config.backend.optimizer {
            Some(o) => backend.with_optimizer(o.clone()),
            None => backend,
        })
    }

    /// Newly initialized models as configured.
    pub fn fresh_models(&self) -> Result<(Box<dyn GeneratorModel>, Box<dyn PredictorModel>)> {
        let generator: Box<dyn GeneratorModel> = match self.config.backend.kind {
            BackendKind::Toy => Box::new(ToyConditionalLM::new(self.vocabulary(), self.config.backend.toy_lm)),
            BackendKind::Adapter => Box::new(self.spawn_backend()?),
        };
        let predictor: Box<dyn PredictorModel> = match (self.config.backend.predictor, &self.synthetic) {
            (PredictorKind::Oracle, Some(task)) => Box::new(task.oracle()),
            (PredictorKind::Oracle, None) => return Err(Error::config("the oracle predictor needs synthetic data")),
            (PredictorKind::Bilinear, _) if self.config.backend.kind == BackendKind::Adapter => {
                Box::new(self.spawn_backend()?)
            }
            (PredictorKind::Bilinear, _) => Box::new(BilinearPredictor::new(self.config.backend.bilinear)),
        };
        Ok((generator, predictor))
    }

    fn ensure_models(&mut self) -> Result<()> {
        if self.generator.is_none() || self.predictor.is_none() {
            let (g, p) = self.fresh_models()?;
            self.generator = Some(g);
            self.predictor = Some(p);
        }
        Ok(())
    }

    /// Trains from freshly initialized models (or resumes) under the configured mode.
    pub fn train(&mut self, opts: &RunOptions) -> Result<TrainOutcome> {
        if opts.resume_from.is_none() {
            self.generator = None;
            self.predictor = None;
        }
        self.ensure_models()?;
        let mode = self.config.mode;
        let dataset = self.dataset_key();
        let cache = self.cache.take().expect("cache is present outside training");
        let mut source = TeacherSource::new(dataset, self.template.clone(), cache, self.config.trainer.teacher_decode);
        if let Some(c) = self.client.as_deref() {
            source = source.with_client(c);
        }
        let data = TrainData {
            train: &self.train,
            dev: &self.dev,
        };
        let generator = self.generator.as_deref_mut().expect("ensured");
        let predictor = self.predictor.as_deref_mut().expect("ensured");
        let result = run_training(
            &data,
            generator,
            predictor,
            Some(&mut source),
            mode,
            &self.config.trainer,
            opts,
        );
        self.cache = Some(source.cache);
        self.trained_mode = Some(mode);
        result
    }

    /// Replaces the models with the ones stored in a checkpoint.
    pub fn load_checkpoint(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::config(format!("checkpoint {} does not exist", path.display())));
        }
        let ck = Checkpoint::load(path)?;
        self.ensure_models()?;
        self.generator.as_deref_mut().expect("ensured").restore(ck.generator)?;
        self.predictor.as_deref_mut().expect("ensured").restore(ck.predictor)?;
        self.trained_mode = Some(ck.mode);
        Ok(())
    }

    fn eval_config(&self, integration: IntegrationKind) -> EvalConfig {
        EvalConfig {
            decode: self.config.trainer.student_sampling(),
            integration,
            seed: derive_seed(self.config.seed, u64::MAX),
            vanilla: self.trained_mode.unwrap_or(self.config.mode) == TrainingMode::Vanilla,
        }
    }

    /// Dev-set evaluation of the current models.
    pub fn evaluate(&mut self, integration: Option<IntegrationKind>) -> Result<EvalReport> {
        self.ensure_models()?;
        let integration = integration.unwrap_or(self.config.trainer.integration);
        let embedder = HashedBagOfTokens::default();
        let emb = (integration == IntegrationKind::Similarity).then_some(&embedder as &dyn Embedder);
        evaluate(
            &self.dev,
            self.generator.as_deref().expect("ensured"),
            self.predictor.as_deref().expect("ensured"),
            &self.eval_config(integration),
            emb,
        )
    }

    /// Samples elaborations for one question and predicts its answer.
    pub fn predict(&mut self, q: &QAInstance, seed: u64) -> Result<(Prediction, Vec<Elaboration>)> {
        self.ensure_models()?;
        let cfg = self.eval_config(self.config.trainer.integration);
        let elaborations = if cfg.vanilla {
            Vec::new()
        } else {
            sample_elaborations(self.generator.as_deref().expect("ensured"), q.question(), &cfg.decode, seed)?
        };
        let embedder = HashedBagOfTokens::default();
        let emb = (cfg.integration == IntegrationKind::Similarity).then_some(&embedder as &dyn Embedder);
        let p = predict(q, &elaborations, self.predictor.as_deref().expect("ensured"), cfg.integration, emb)?;
        Ok((p, elaborations))
    }

    pub fn generator_digest(&mut self) -> Result<String> {
        self.ensure_models()?;
        Ok(self.generator.as_deref().expect("ensured").digest())
    }

    pub fn predictor_digest(&mut self) -> Result<String> {
        self.ensure_models()?;
        Ok(self.predictor.as_deref().expect("ensured").digest())
    }
}

/// Writes the report and one record per line into `dir`.
pub fn write_eval(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("eval_records.jsonl"))?);
    for r in &report.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn default_checkpoint(config: &RunConfig) -> PathBuf {
    final_checkpoint_path(&config.output_dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    K,
    NStudent,
    Filter,
    Integration,
    Decoding,
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" | "K" => Ok(AblationAxis::K),
            "n_student" | "n-student" => Ok(AblationAxis::NStudent),
            "filter" => Ok(AblationAxis::Filter),
            "integration" => Ok(AblationAxis::Integration),
            "decoding" => Ok(AblationAxis::Decoding),
            other => Err(Error::config(format!("unknown ablation axis {other:?}"))),
        }
    }
}

pub const K_SWEEP: [usize; 6] = [1, 2, 3, 5, 10, 20];
pub const N_STUDENT_SWEEP: [usize; 4] = [2, 5, 10, 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis: AblationAxis,
    pub setting: String,
    /// Mean dev accuracy over seeds.
    pub accuracy: f64,
    pub per_seed: Vec<f64>,
}

/// The configurations an axis sweeps, with their labels.
pub fn ablation_settings(base: &RunConfig, axis: AblationAxis) -> Vec<(String, RunConfig)> {
    let with = |f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    match axis {
        AblationAxis::K => K_SWEEP
            .iter()
            .map(|&k| {
                (
                    k.to_string(),
                    with(&|c| {
                        c.trainer.k = k;
                        c.trainer.n_teacher = c.trainer.n_teacher.max(k);
                    }),
                )
            })
            .collect(),
        AblationAxis::NStudent => N_STUDENT_SWEEP
            .iter()
            .map(|&n| (n.to_string(), with(&|c| c.trainer.n_student = n)))
            .collect(),
        AblationAxis::Filter => FilterKind::ALL
            .iter()
            .map(|&f| (f.to_string(), with(&|c| c.trainer.filter_strategy = f)))
            .collect(),
        AblationAxis::Integration => IntegrationKind::ALL
            .iter()
            .map(|&i| (i.to_string(), with(&|c| c.trainer.integration = i)))
            .collect(),
        AblationAxis::Decoding => [DecodeStrategy::Greedy, DecodeStrategy::Beam, DecodeStrategy::Nucleus]
            .iter()
            .map(|&s| {
                (
                    s.to_string(),
                    with(&|c| {
                        let d = &mut c.trainer.student_decode;
                        *d = match s {
                            DecodeStrategy::Greedy => DecodeConfig { max_tokens: d.max_tokens, ..DecodeConfig::greedy() },
                            DecodeStrategy::Beam => DecodeConfig {
                                max_tokens: d.max_tokens,
                                ..DecodeConfig::beam(c.trainer.n_student)
                            },
                            DecodeStrategy::Nucleus => DecodeConfig { strategy: s, ..*d },
                        };
                    }),
                )
            })
            .collect(),
    }
}

/// Trains and evaluates one configuration from scratch with an in-memory cache.
pub fn train_and_evaluate(config: &RunConfig) -> Result<f64> {
    let mut session = Session::in_memory(config.clone())?;
    let opts = RunOptions {
        output_dir: None,
        check_isolation: false,
        evaluate_dev: false,
        resume_from: None,
    };
    session.train(&opts)?;
    Ok(session.evaluate(None)?.accuracy)
}

/// Mean dev accuracy over `seeds` consecutive seeds starting at `config.seed`.
pub fn seed_averaged_accuracy(config: &RunConfig, seeds: usize) -> Result<Vec<f64>> {
    (0..seeds as u64)
        .into_par_iter()
        .map(|s| {
            let mut c = config.clone();
            c.seed = config.seed + s;
            train_and_evaluate(&c)
        })
        .collect()
}

/// One row per setting of the axis.
pub fn ablate(base: &RunConfig, axis: AblationAxis, seeds: usize) -> Result<Vec<AblationRow>> {
    ablation_settings(base, axis)
        .into_iter()
        .map(|(setting, cfg)| {
            let per_seed = seed_averaged_accuracy(&cfg, seeds.max(1))?;
            Ok(AblationRow {
                axis,
                setting,
                accuracy: per_seed.iter().sum::<f64>() / per_seed.len() as f64,
                per_seed,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        let err = RunConfig::from_toml("mode = \"elabor\"\n").unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("seed")), "{err}");
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::from_toml(
            "seed = 7\nmode = \"pipeline\"\n[trainer]\nk = 5\n[data]\nsource = \"synthetic\"\nn_instances = 10\n",
        )
        .unwrap();
        assert_eq!(cfg.mode, TrainingMode::Pipeline);
        assert_eq!(cfg.trainer.k, 5);
        assert!(matches!(cfg.data, DataConfig::Synthetic(ref t) if t.n_instances == 10));
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn missing_dataset_file_is_config_error() {
        let cfg = RunConfig::from_toml(
            "seed = 1\n[data]\nsource = \"files\"\nname = \"csqa\"\ntrain = \"/nonexistent/t.jsonl\"\ndev = \"/nonexistent/d.jsonl\"\n",
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn axes_have_expected_rows() {
        let base = RunConfig::synthetic(0, SyntheticTaskConfig::default());
        assert_eq!(ablation_settings(&base, AblationAxis::K).len(), 6);
        assert_eq!(ablation_settings(&base, AblationAxis::NStudent).len(), 4);
        assert_eq!(ablation_settings(&base, AblationAxis::Filter).len(), 4);
        assert_eq!(ablation_settings(&base, AblationAxis::Integration).len(), 4);
        assert_eq!(ablation_settings(&base, AblationAxis::Decoding).len(), 3);
        assert!("bogus".parse::<AblationAxis>().is_err());
    }

    #[test]
    fn cache_report_counts() {
        let task = SyntheticTaskConfig {
            n_instances: 10,
            n_dev: 0,
            ..Default::default()
        };
        let mut s = Session::in_memory(RunConfig::synthetic(3, task)).unwrap();
        let r = s.cache_teacher().unwrap();
        assert_eq!((r.instances, r.sampled, r.deduped), (10, 200, 0));
        assert_eq!(s.cache_teacher().unwrap().sampled, 0);
    }
}
