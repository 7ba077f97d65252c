//! End-to-end training behaviour on the synthetic task.

use elab_core::data::{generate_synthetic, DatasetName, SyntheticTaskConfig};
use elab_core::experiment::{seed_averaged_accuracy, train_and_evaluate, PredictorKind, RunConfig, Session, TeacherKind};
use elab_core::models::{BilinearPredictor, ToyConditionalLM};
use elab_core::teacher::{fetch_teacher_pools, PromptTemplate, TeacherCache, TeacherSource};
use elab_core::trainer::{e_step, run_training, Phase, RunOptions, Selection, TrainData, TrainingMode};
use elab_core::types::{Elaboration, ElaborationPool, FilterKind, PoolRole, Source};
use elab_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tuned(seed: u64, task: SyntheticTaskConfig) -> RunConfig {
    let mut c = RunConfig::synthetic(seed, task);
    c.trainer.learning_rate = 10.0;
    c.trainer.predictor_learning_rate = Some(1.0);
    c
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn oracle_predictor_with_toy_generator_reaches_high_accuracy() {
    let mut c = tuned(0, SyntheticTaskConfig::default());
    c.trainer.epochs = 3;
    c.backend.predictor = PredictorKind::Oracle;
    for acc in seed_averaged_accuracy(&c, 3).unwrap() {
        assert!(acc >= 0.9, "{acc}");
    }
}

#[test]
fn all_noise_teacher_with_oracle_is_chance() {
    let mut c = tuned(
        0,
        SyntheticTaskConfig {
            teacher_noise_rate: 1.0,
            ..Default::default()
        },
    );
    c.trainer.epochs = 3;
    c.backend.predictor = PredictorKind::Oracle;
    let acc = mean(&seed_averaged_accuracy(&c, 5).unwrap());
    assert!((acc - 0.25).abs() <= 0.05, "{acc}");
}

#[test]
fn noiseless_pool_passes_correct_filter_whole() {
    let task = generate_synthetic(&SyntheticTaskConfig {
        teacher_noise_rate: 0.0,
        n_instances: 20,
        ..Default::default()
    })
    .unwrap();
    let oracle = task.oracle();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for q in &task.train {
        let pool: Vec<Elaboration> = task.scripts[q.question()]
            .iter()
            .map(|t| Elaboration::from_text(t, Source::Teacher).unwrap())
            .collect();
        let pool = ElaborationPool::new(q.id(), pool, PoolRole::TeacherPool);
        match e_step(&pool, q, q.gold_index().unwrap(), &oracle, FilterKind::Correct, 3, &mut rng).unwrap() {
            Selection::Selected(sel) => assert_eq!(sel.len(), 20),
            Selection::Skip(r) => panic!("skipped: {r:?}"),
        }
    }
}

#[test]
fn vanilla_and_scratch_train_without_teacher() {
    let task = SyntheticTaskConfig {
        n_instances: 100,
        n_dev: 50,
        ..Default::default()
    };
    for mode in [TrainingMode::Vanilla, TrainingMode::Scratch] {
        let mut c = tuned(3, task.clone());
        c.mode = mode;
        c.teacher.client = TeacherKind::None;
        let acc = train_and_evaluate(&c).unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
    let mut c = tuned(3, task);
    c.teacher.client = TeacherKind::None;
    assert!(train_and_evaluate(&c).is_err(), "elabor needs teacher pools");
}

#[test]
fn pipeline_distills_before_predictor_epochs() {
    let mut c = tuned(
        1,
        SyntheticTaskConfig {
            n_instances: 60,
            n_dev: 20,
            ..Default::default()
        },
    );
    c.mode = TrainingMode::Pipeline;
    c.trainer.epochs = 2;
    c.trainer.alternation_block = 30;
    let mut session = Session::in_memory(c).unwrap();
    let out = session.train(&RunOptions::default()).unwrap();
    let phases: Vec<(usize, Phase)> = out.metrics.iter().map(|m| (m.epoch, m.phase)).collect();
    assert!(phases.iter().filter(|(e, _)| *e <= 2).all(|(_, p)| *p == Phase::Distill));
    assert!(phases.iter().filter(|(e, _)| *e > 2).all(|(_, p)| *p == Phase::PredictorPhase));
    assert_eq!(phases.last().unwrap().0, 4);
    assert_eq!(out.isolation_violations, 0);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = tuned(
        11,
        SyntheticTaskConfig {
            n_instances: 120,
            n_dev: 30,
            ..Default::default()
        },
    )
    .resolved();
    let mut cfg = c.trainer.clone();
    cfg.epochs = 2;
    cfg.alternation_block = 25;
    let task = match &c.data {
        elab_core::experiment::DataConfig::Synthetic(t) => generate_synthetic(t).unwrap(),
        _ => unreachable!(),
    };
    let data = TrainData {
        train: &task.train,
        dev: &task.dev,
    };
    let template = PromptTemplate::builtin(DatasetName::Synthetic);
    let teacher = task.mock_teacher();
    let fresh = || {
        (
            ToyConditionalLM::new(task.vocabulary(), c.backend.toy_lm),
            BilinearPredictor::new(c.backend.bilinear),
        )
    };

    let (mut g, mut p) = fresh();
    let mut source = TeacherSource::new("synthetic", template.clone(), TeacherCache::in_memory(), cfg.teacher_decode)
        .with_client(&teacher);
    let clean_dir = dir.path().join("clean");
    let opts = RunOptions {
        output_dir: Some(clean_dir.clone()),
        ..RunOptions::default()
    };
    let clean = run_training(&data, &mut g, &mut p, Some(&mut source), TrainingMode::Elabor, &cfg, &opts).unwrap();

    // Cache every pool but the last instance's, then take the teacher down.
    let mut cache = TeacherCache::in_memory();
    let (last, rest) = task.train.split_last().unwrap();
    fetch_teacher_pools(Some(&teacher), &mut cache, "synthetic", &template, rest, cfg.n_teacher, &cfg.teacher_decode);
    teacher.set_available(false);
    let (mut g2, mut p2) = fresh();
    let mut source = TeacherSource::new("synthetic", template, cache, cfg.teacher_decode).with_client(&teacher);
    let run_dir = dir.path().join("interrupted");
    let opts = RunOptions {
        output_dir: Some(run_dir.clone()),
        ..RunOptions::default()
    };
    let err = run_training(&data, &mut g2, &mut p2, Some(&mut source), TrainingMode::Elabor, &cfg, &opts).unwrap_err();
    let checkpoint = match err {
        Error::Resumable { source, checkpoint } => {
            assert!(matches!(*source, Error::TeacherUnavailable { ref instance_id, .. } if instance_id == last.id()));
            checkpoint
        }
        other => panic!("unexpected error {other}"),
    };

    teacher.set_available(true);
    let opts = RunOptions {
        output_dir: Some(run_dir.clone()),
        resume_from: Some(checkpoint),
        ..RunOptions::default()
    };
    let resumed = run_training(&data, &mut g2, &mut p2, Some(&mut source), TrainingMode::Elabor, &cfg, &opts).unwrap();
    assert_eq!(clean.metrics, resumed.metrics);
    assert_eq!(
        std::fs::read(clean_dir.join("metrics.jsonl")).unwrap(),
        std::fs::read(run_dir.join("metrics.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read(clean_dir.join("checkpoints/final.json")).unwrap(),
        std::fs::read(run_dir.join("checkpoints/final.json")).unwrap()
    );
}

#[test]
fn bundled_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        RunConfig::from_toml(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 2);
}
