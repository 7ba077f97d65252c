//! Alternating hard-EM training of the generator and the predictor.
//!
//! Training walks the (per-epoch shuffled) instances in blocks of
//! `alternation_block`. For each block the generator phase runs first: the
//! teacher pool of every instance is filtered by the frozen predictor and the
//! generator is fit to the selected elaborations. Then the predictor phase
//! samples student elaborations from the frozen generator and fits the
//! predictor to the gold answer given each of them.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{evaluate, EvalConfig, HashedBagOfTokens};
use crate::models::{
    derive_seed, generator_train_step, predictor_scores, predictor_train_step, sample_elaborations, GeneratorExample,
    GeneratorModel, PredictorModel,
};
use crate::teacher::{naive_distill_corpus, TeacherSource};
use crate::types::{
    argmax, dedup_exact, DecodeConfig, ElaborationPool, FilterKind, IntegrationKind, PoolRole,
    QAInstance, ScoreMatrix, TrainerConfig,
};

/// Training regime.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Teacher pool filtered by the predictor, alternating with predictor updates.
    #[default]
    Elabor,
    /// Like `Elabor` but the generator samples its own pool.
    Scratch,
    /// Generator fit to every teacher elaboration, then predictor-only training.
    Pipeline,
    /// Predictor trained without elaborations.
    Vanilla,
}

impl TrainingMode {
    pub const ALL: [TrainingMode; 4] = [
        TrainingMode::Elabor,
        TrainingMode::Scratch,
        TrainingMode::Pipeline,
        TrainingMode::Vanilla,
    ];

    pub fn needs_teacher(self) -> bool {
        matches!(self, TrainingMode::Elabor | TrainingMode::Pipeline)
    }
}

impl std::fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainingMode::Elabor => "elabor",
            TrainingMode::Scratch => "scratch",
            TrainingMode::Pipeline => "pipeline",
            TrainingMode::Vanilla => "vanilla",
        })
    }
}

impl std::str::FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainingMode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    GeneratorPhase,
    PredictorPhase,
    /// Unfiltered generator fitting (pipeline pretraining).
    Distill,
}

/// Why an instance contributed nothing to a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    EmptyPool,
    NoCorrectElaboration,
    NoStudentSamples,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Selected(ElaborationPool),
    Skip(SkipReason),
}

/// Indices chosen by a filter over the predictor's score rows, ascending.
///
/// `pos` keeps the `k` rows with the highest gold probability,
/// `pos_neg` the `k` rows with the largest gap between the raw gold score and
/// the mean raw non-gold score, `correct` every row whose argmax is gold and
/// `random` a uniform `k`-subset drawn with `rng`. Ranking ties go to the
/// lower index.
pub fn select<R: Rng + ?Sized>(scores: &ScoreMatrix, gold: usize, kind: FilterKind, k: usize, rng: &mut R) -> Vec<usize> {
    let n = scores.num_rows();
    let mut chosen = match kind {
        FilterKind::Pos => top_k(&(0..n).map(|i| scores.row_softmax(i)[gold]).collect::<Vec<_>>(), k),
        FilterKind::PosNeg => {
            let margins: Vec<f64> = scores
                .rows()
                .iter()
                .map(|row| {
                    let others: f64 = row.iter().enumerate().filter(|&(j, _)| j != gold).map(|(_, s)| s).sum();
                    row[gold] - others / (row.len() - 1) as f64
                })
                .collect();
            top_k(&margins, k)
        }
        FilterKind::Correct => (0..n).filter(|&i| argmax(scores.row(i)) == gold).collect(),
        FilterKind::Random => {
            let mut idx: Vec<usize> = (0..n).collect();
            let take = k.min(n);
            for i in 0..take {
                let j = rng.gen_range(i..n);
                idx.swap(i, j);
            }
            idx.truncate(take);
            idx
        }
    };
    chosen.sort_unstable();
    chosen
}

fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Scores the pool with the frozen predictor and keeps the filtered subset.
pub fn e_step<P, R>(
    pool: &ElaborationPool,
    q: &QAInstance,
    gold: usize,
    predictor: &P,
    kind: FilterKind,
    k: usize,
    rng: &mut R,
) -> Result<Selection>
where
    P: PredictorModel + ?Sized,
    R: Rng + ?Sized,
{
    if pool.is_empty() {
        return Ok(Selection::Skip(SkipReason::EmptyPool));
    }
    let rows = pool
        .elaborations()
        .par_iter()
        .map(|e| predictor_scores(predictor, q, Some(e)))
        .collect::<Result<Vec<_>>>()?;
    let matrix = ScoreMatrix::new(rows)?;
    let chosen = select(&matrix, gold, kind, k, rng);
    if chosen.is_empty() {
        return Ok(Selection::Skip(SkipReason::NoCorrectElaboration));
    }
    let kept = chosen.iter().map(|&i| pool.elaborations()[i].clone()).collect();
    Ok(Selection::Selected(ElaborationPool::new(q.id(), kept, PoolRole::Selected)))
}

/// One generator step on `(question, e)` for every selected `e`; returns the mean NLL.
pub fn m_step<G: GeneratorModel + ?Sized>(generator: &mut G, selected: &ElaborationPool, q: &QAInstance, lr: f64) -> Result<f64> {
    if selected.is_empty() {
        return Err(Error::schema("selected set is empty"));
    }
    let batch: Vec<GeneratorExample> = selected
        .elaborations()
        .iter()
        .map(|e| (q.question().to_string(), e.clone()))
        .collect();
    generator_train_step(generator, &batch, lr)
}

/// Samples student elaborations and takes one predictor step per sample.
///
/// Returns the mean loss, or `None` when every sample came back empty.
pub fn predictor_phase_step<P, G>(
    predictor: &mut P,
    generator: &G,
    q: &QAInstance,
    gold: usize,
    sampling: &DecodeConfig,
    lr: f64,
    seed: u64,
) -> Result<Option<f64>>
where
    P: PredictorModel + ?Sized,
    G: GeneratorModel + ?Sized,
{
    let samples = sample_elaborations(generator, q.question(), sampling, seed)?;
    if samples.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for e in &samples {
        total += predictor_train_step(predictor, q, Some(e), gold, lr)?;
    }
    Ok(Some(total / samples.len() as f64))
}

/// One predictor step without any elaboration.
pub fn vanilla_step<P: PredictorModel + ?Sized>(predictor: &mut P, q: &QAInstance, gold: usize, lr: f64) -> Result<f64> {
    predictor_train_step(predictor, q, None, gold, lr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub block: usize,
    pub phase: Phase,
    pub mean_loss: Option<f64>,
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_accuracy: Option<f64>,
}

/// Progress of a run, as stored in checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainState {
    /// 1-based epoch about to run (or running).
    pub epoch: usize,
    /// Next block of `order` to run.
    pub block: usize,
    /// Instance order of the current epoch; empty before it is drawn.
    pub order: Vec<usize>,
    pub rng: ChaCha8Rng,
    pub skipped: usize,
    pub isolation_violations: usize,
    pub metrics: Vec<MetricsRecord>,
}

impl TrainState {
    pub fn new(seed: u64) -> Self {
        Self {
            epoch: 1,
            block: 0,
            order: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            skipped: 0,
            isolation_violations: 0,
            metrics: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub mode: TrainingMode,
    pub config: TrainerConfig,
    pub state: TrainState,
    pub generator: serde_json::Value,
    pub predictor: serde_json::Value,
}

impl Checkpoint {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        serde_json::to_writer(BufWriter::new(File::create(&tmp)?), self)?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

pub fn checkpoint_path(dir: &Path, epoch: usize, block: usize) -> PathBuf {
    dir.join("checkpoints").join(format!("epoch{epoch:03}-block{block:04}.json"))
}

pub fn final_checkpoint_path(dir: &Path) -> PathBuf {
    dir.join("checkpoints").join("final.json")
}

pub fn write_metrics(path: impl AsRef<Path>, metrics: &[MetricsRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for m in metrics {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Receives `metrics.jsonl` and per-block checkpoints.
    pub output_dir: Option<PathBuf>,
    /// Compare parameter digests around each phase.
    pub check_isolation: bool,
    pub evaluate_dev: bool,
    pub resume_from: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            output_dir: None,
            check_isolation: true,
            evaluate_dev: true,
            resume_from: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub metrics: Vec<MetricsRecord>,
    pub skipped: usize,
    pub isolation_violations: usize,
    pub dev_accuracy: Option<f64>,
}

pub struct TrainData<'a> {
    pub train: &'a [QAInstance],
    pub dev: &'a [QAInstance],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GeneratorStage {
    Filtered,
    SelfSampled,
    Distill,
}

fn plan(mode: TrainingMode, epoch: usize, epochs: usize) -> (Option<GeneratorStage>, bool) {
    match mode {
        TrainingMode::Elabor => (Some(GeneratorStage::Filtered), true),
        TrainingMode::Scratch => (Some(GeneratorStage::SelfSampled), true),
        TrainingMode::Pipeline if epoch <= epochs => (Some(GeneratorStage::Distill), false),
        TrainingMode::Pipeline | TrainingMode::Vanilla => (None, true),
    }
}

/// Epochs the mode runs for `config.epochs`; pipeline pretrains for as many again.
pub fn total_epochs(mode: TrainingMode, epochs: usize) -> usize {
    match mode {
        TrainingMode::Pipeline => 2 * epochs,
        _ => epochs,
    }
}

fn mean(losses: &[f64]) -> Option<f64> {
    (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64)
}

struct Ctx<'a, 'b> {
    mode: TrainingMode,
    cfg: &'a TrainerConfig,
    teacher: Option<&'a mut TeacherSource<'b>>,
}

impl Ctx<'_, '_> {
    fn teacher_pool(&mut self, q: &QAInstance) -> Result<ElaborationPool> {
        let n = self.cfg.n_teacher;
        let src = self
            .teacher
            .as_deref_mut()
            .ok_or_else(|| Error::config(format!("mode {} needs a teacher source", self.mode)))?;
        Ok(src.fetch(q, n)?.pool)
    }

    fn generator_phase(
        &mut self,
        stage: GeneratorStage,
        block: &[&QAInstance],
        generator: &mut dyn GeneratorModel,
        predictor: &dyn PredictorModel,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, usize)> {
        let mut losses = Vec::new();
        let mut skipped = 0;
        for q in block {
            let gold = q.gold_index().expect("training instances are labelled");
            match stage {
                GeneratorStage::Distill => {
                    self.teacher_pool(q)?;
                    let src = self.teacher.as_deref().expect("checked by teacher_pool");
                    let batch = naive_distill_corpus(&src.cache, &src.dataset, std::slice::from_ref(*q));
                    if batch.is_empty() {
                        skipped += 1;
                        continue;
                    }
                    losses.push(generator_train_step(generator, &batch, self.cfg.learning_rate)?);
                }
                GeneratorStage::Filtered | GeneratorStage::SelfSampled => {
                    let pool = if stage == GeneratorStage::Filtered {
                        self.teacher_pool(q)?
                    } else {
                        let mut decode = self.cfg.teacher_decode;
                        decode.n_samples = self.cfg.n_teacher;
                        let seed = rng.gen();
                        let samples = sample_elaborations(&*generator, q.question(), &decode, seed)?;
                        ElaborationPool::new(q.id(), dedup_exact(samples), PoolRole::TeacherPool)
                    };
                    match e_step(&pool, q, gold, predictor, self.cfg.filter_strategy, self.cfg.k, rng)? {
                        Selection::Skip(_) => skipped += 1,
                        Selection::Selected(sel) => losses.push(m_step(generator, &sel, q, self.cfg.learning_rate)?),
                    }
                }
            }
        }
        Ok((losses, skipped))
    }

    fn predictor_phase(
        &self,
        block: &[&QAInstance],
        generator: &dyn GeneratorModel,
        predictor: &mut dyn PredictorModel,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, usize)> {
        let sampling = self.cfg.student_sampling();
        let lr = self.cfg.predictor_lr();
        let mut losses = Vec::new();
        let mut skipped = 0;
        for q in block {
            let gold = q.gold_index().expect("training instances are labelled");
            if self.mode == TrainingMode::Vanilla {
                losses.push(vanilla_step(predictor, q, gold, lr)?);
                continue;
            }
            let seed = rng.gen();
            match predictor_phase_step(predictor, generator, q, gold, &sampling, lr, seed)? {
                Some(loss) => losses.push(loss),
                None => skipped += 1,
            }
        }
        Ok((losses, skipped))
    }
}

fn eval_config(mode: TrainingMode, cfg: &TrainerConfig, epoch: usize) -> EvalConfig {
    EvalConfig {
        decode: cfg.student_sampling(),
        integration: cfg.integration,
        seed: derive_seed(cfg.seed, epoch as u64),
        vanilla: mode == TrainingMode::Vanilla,
    }
}

/// Dev accuracy of the models under the run's evaluation settings.
pub fn dev_accuracy(
    mode: TrainingMode,
    cfg: &TrainerConfig,
    dev: &[QAInstance],
    generator: &dyn GeneratorModel,
    predictor: &dyn PredictorModel,
    epoch: usize,
) -> Result<f64> {
    let embedder = HashedBagOfTokens::default();
    let emb = (cfg.integration == IntegrationKind::Similarity).then_some(&embedder as &dyn crate::inference::Embedder);
    Ok(evaluate(dev, generator, predictor, &eval_config(mode, cfg, epoch), emb)?.accuracy)
}

/// Runs the training loop, optionally resuming from a checkpoint.
///
/// With an output directory, a checkpoint is written before every block and
/// the metrics log is rewritten after it. A teacher failure on an uncached
/// instance then aborts with [`Error::Resumable`] naming the checkpoint of the
/// failing block.
pub fn run_training(
    data: &TrainData<'_>,
    generator: &mut dyn GeneratorModel,
    predictor: &mut dyn PredictorModel,
    teacher: Option<&mut TeacherSource<'_>>,
    mode: TrainingMode,
    cfg: &TrainerConfig,
    opts: &RunOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let Some(q) = data.train.iter().find(|q| q.gold_index().is_none()) {
        return Err(Error::schema(format!("training instance {} has no gold label", q.id())));
    }
    if mode.needs_teacher() && teacher.is_none() && cfg.epochs > 0 && !data.train.is_empty() {
        return Err(Error::config(format!("mode {mode} needs a teacher cache or client")));
    }
    let mut state = match &opts.resume_from {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.mode != mode || ck.config != *cfg {
                warn!("resuming {} with a different mode or config", path.display());
            }
            generator.restore(ck.generator)?;
            predictor.restore(ck.predictor)?;
            ck.state
        }
        None => TrainState::new(cfg.seed),
    };
    if let Some(dir) = &opts.output_dir {
        fs::create_dir_all(dir)?;
    }
    let mut ctx = Ctx { mode, cfg, teacher };
    let epochs = total_epochs(mode, cfg.epochs);
    while state.epoch <= epochs {
        let epoch = state.epoch;
        if state.order.is_empty() {
            state.order = (0..data.train.len()).collect();
            state.order.shuffle(&mut state.rng);
        }
        let blocks: Vec<Vec<usize>> = state.order.chunks(cfg.alternation_block).map(<[usize]>::to_vec).collect();
        let (gen_stage, predictor_phase) = plan(mode, epoch, cfg.epochs);
        while state.block < blocks.len() {
            let b = state.block;
            let ck_path = match &opts.output_dir {
                Some(dir) => {
                    let path = checkpoint_path(dir, epoch, b);
                    Checkpoint {
                        mode,
                        config: cfg.clone(),
                        state: state.clone(),
                        generator: generator.snapshot()?,
                        predictor: predictor.snapshot()?,
                    }
                    .save(&path)?;
                    Some(path)
                }
                None => None,
            };
            let block: Vec<&QAInstance> = blocks[b].iter().map(|&i| &data.train[i]).collect();

            if let Some(stage) = gen_stage {
                let before = opts.check_isolation.then(|| predictor.digest());
                let result = ctx.generator_phase(stage, &block, generator, &*predictor, &mut state.rng);
                let (losses, skipped) = match (result, ck_path) {
                    (Err(e @ Error::TeacherUnavailable { .. }), Some(checkpoint)) => {
                        return Err(Error::Resumable {
                            source: Box::new(e),
                            checkpoint,
                        })
                    }
                    (r, _) => r?,
                };
                if before.is_some_and(|d| d != predictor.digest()) {
                    warn!("predictor changed during the generator phase (epoch {epoch}, block {b})");
                    state.isolation_violations += 1;
                }
                state.skipped += skipped;
                state.metrics.push(MetricsRecord {
                    epoch,
                    block: b,
                    phase: if stage == GeneratorStage::Distill { Phase::Distill } else { Phase::GeneratorPhase },
                    mean_loss: mean(&losses),
                    skipped,
                    dev_accuracy: None,
                });
            }

            if predictor_phase {
                let before = opts.check_isolation.then(|| generator.digest());
                let (losses, skipped) = ctx.predictor_phase(&block, &*generator, predictor, &mut state.rng)?;
                if before.is_some_and(|d| d != generator.digest()) {
                    warn!("generator changed during the predictor phase (epoch {epoch}, block {b})");
                    state.isolation_violations += 1;
                }
                state.skipped += skipped;
                state.metrics.push(MetricsRecord {
                    epoch,
                    block: b,
                    phase: Phase::PredictorPhase,
                    mean_loss: mean(&losses),
                    skipped,
                    dev_accuracy: None,
                });
            }
            state.block += 1;
            if let Some(dir) = &opts.output_dir {
                write_metrics(dir.join("metrics.jsonl"), &state.metrics)?;
            }
        }
        if opts.evaluate_dev && !data.dev.is_empty() {
            let acc = dev_accuracy(mode, cfg, data.dev, &*generator, &*predictor, epoch)?;
            info!("epoch {epoch}: dev accuracy {acc:.4}");
            match state.metrics.last_mut() {
                Some(last) if last.epoch == epoch => last.dev_accuracy = Some(acc),
                _ => state.metrics.push(MetricsRecord {
                    epoch,
                    block: 0,
                    phase: Phase::PredictorPhase,
                    mean_loss: None,
                    skipped: 0,
                    dev_accuracy: Some(acc),
                }),
            }
        }
        state.epoch += 1;
        state.block = 0;
        state.order.clear();
    }
    if let Some(dir) = &opts.output_dir {
        write_metrics(dir.join("metrics.jsonl"), &state.metrics)?;
        Checkpoint {
            mode,
            config: cfg.clone(),
            state: state.clone(),
            generator: generator.snapshot()?,
            predictor: predictor.snapshot()?,
        }
        .save(final_checkpoint_path(dir))?;
    }
    let dev_accuracy = state.metrics.iter().rev().find_map(|m| m.dev_accuracy);
    Ok(TrainOutcome {
        metrics: state.metrics,
        skipped: state.skipped,
        isolation_violations: state.isolation_violations,
        dev_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{generator_log_prob, ToyConditionalLM, ToyLmConfig, Vocabulary};
    use crate::types::{softmax, Elaboration, Source};
    use proptest::prelude::*;

    fn matrix(rows: Vec<Vec<f64>>) -> ScoreMatrix {
        ScoreMatrix::new(rows).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn pos_example() {
        // gold scores expressed as 2-candidate rows with the gold probability given
        let rows = [0.9f64, 0.1, 0.5].iter().map(|p| vec![p.ln(), (1.0 - p).ln()]).collect();
        assert_eq!(select(&matrix(rows), 0, FilterKind::Pos, 2, &mut rng()), vec![0, 2]);
    }

    #[test]
    fn pos_saturates() {
        let m = matrix(vec![vec![0.0, 1.0]; 3]);
        assert_eq!(select(&m, 0, FilterKind::Pos, 10, &mut rng()), vec![0, 1, 2]);
    }

    #[test]
    fn pos_neg_example() {
        let m = matrix(vec![vec![2.0, 0.0], vec![1.0, 0.9]]);
        assert_eq!(select(&m, 0, FilterKind::PosNeg, 1, &mut rng()), vec![0]);
    }

    #[test]
    fn correct_may_be_empty() {
        let m = matrix(vec![vec![0.0, 1.0], vec![0.0, 2.0]]);
        assert!(select(&m, 0, FilterKind::Correct, 3, &mut rng()).is_empty());
        assert_eq!(select(&m, 1, FilterKind::Correct, 1, &mut rng()), vec![0, 1]);
    }

    #[test]
    fn random_returns_k_distinct() {
        let m = matrix(vec![vec![0.0, 0.0]; 20]);
        let got = select(&m, 0, FilterKind::Random, 3, &mut rng());
        assert_eq!(got.len(), 3);
        assert!(got.windows(2).all(|w| w[0] < w[1]));
    }

    struct Const;

    impl PredictorModel for Const {
        fn score(&self, q: &QAInstance, _: Option<&str>) -> Result<Vec<f64>> {
            Ok(vec![0.0; q.num_candidates()])
        }
        fn train_step(&mut self, _: &QAInstance, _: Option<&str>, _: usize, _: f64) -> Result<f64> {
            Ok(0.0)
        }
        fn digest(&self) -> String {
            "const".into()
        }
        fn snapshot(&self) -> Result<serde_json::Value> {
            Ok(serde_json::Value::Null)
        }
        fn restore(&mut self, _: serde_json::Value) -> Result<()> {
            Ok(())
        }
    }

    fn q() -> QAInstance {
        QAInstance::new("1", "where ?", vec!["a".into(), "b".into()], Some(0)).unwrap()
    }

    #[test]
    fn empty_pool_skips() {
        let pool = ElaborationPool::new("1", Vec::new(), PoolRole::TeacherPool);
        let s = e_step(&pool, &q(), 0, &Const, FilterKind::Pos, 3, &mut rng()).unwrap();
        assert_eq!(s, Selection::Skip(SkipReason::EmptyPool));
    }

    #[test]
    fn m_step_raises_likelihood() {
        let texts = ["red fish swim", "blue fish sleep", "fish swim fast"];
        let vocab = Vocabulary::from_texts(texts);
        let mut g = ToyConditionalLM::new(vocab, ToyLmConfig::default());
        let elabs: Vec<Elaboration> = texts.iter().map(|t| Elaboration::from_text(t, Source::Teacher).unwrap()).collect();
        let sel = ElaborationPool::new("1", elabs.clone(), PoolRole::Selected);
        let before: Vec<f64> = elabs.iter().map(|e| generator_log_prob(&g, "where ?", e).unwrap()).collect();
        for _ in 0..50 {
            m_step(&mut g, &sel, &q(), 0.5).unwrap();
        }
        for (e, b) in elabs.iter().zip(before) {
            assert!(generator_log_prob(&g, "where ?", e).unwrap() > b);
        }
    }

    #[test]
    fn zero_epochs_leave_models_alone() {
        let vocab = Vocabulary::from_texts(["a b"]);
        let mut g = ToyConditionalLM::new(vocab, ToyLmConfig::default());
        let mut p = crate::models::BilinearPredictor::new(Default::default());
        let (dg, dp) = (g.digest(), p.digest());
        let cfg = TrainerConfig {
            epochs: 0,
            ..Default::default()
        };
        let train = [q()];
        let data = TrainData { train: &train, dev: &[] };
        let out = run_training(&data, &mut g, &mut p, None, TrainingMode::Elabor, &cfg, &RunOptions::default()).unwrap();
        assert!(out.metrics.is_empty());
        assert_eq!((g.digest(), p.digest()), (dg, dp));
    }

    #[test]
    fn mode_names_round_trip() {
        for m in TrainingMode::ALL {
            assert_eq!(m.to_string().parse::<TrainingMode>().unwrap(), m);
        }
    }

    fn arb_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..20, 2usize..8).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 0.5, 1.0, 2.0]), c), r)
        })
    }

    proptest! {
        #[test]
        fn pos_selection_dominates(rows in arb_rows(), k in 1usize..6, g in any::<prop::sample::Index>()) {
            let m = ScoreMatrix::new(rows).unwrap();
            let gold = g.index(m.num_cols());
            let sel = select(&m, gold, FilterKind::Pos, k, &mut rng());
            prop_assert_eq!(sel.len(), k.min(m.num_rows()));
            let p: Vec<f64> = (0..m.num_rows()).map(|i| softmax(m.row(i))[gold]).collect();
            let min_in = sel.iter().map(|&i| p[i]).fold(f64::INFINITY, f64::min);
            let max_out = (0..m.num_rows()).filter(|i| !sel.contains(i)).map(|i| p[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(min_in >= max_out);
        }

        #[test]
        fn sized_filters_return_min_k_pool(rows in arb_rows(), k in 1usize..25) {
            let m = ScoreMatrix::new(rows).unwrap();
            for kind in [FilterKind::Pos, FilterKind::PosNeg, FilterKind::Random] {
                prop_assert_eq!(select(&m, 0, kind, k, &mut rng()).len(), k.min(m.num_rows()));
            }
        }
    }
}
