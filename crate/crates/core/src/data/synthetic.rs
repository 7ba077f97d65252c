//! A synthetic key-value lookup task with planted facts.
//!
//! Keys `k0..k{F-1}` map bijectively onto values `v0..v{F-1}`. The question
//! "what does kX map to ?" carries no hint of the answer; only the fact
//! "kX maps to vY" identifies the gold candidate among random distractor
//! values. The scripted teacher returns, per question, a pool in which an
//! exact `1 - noise_rate` share of texts states the planted fact and the rest
//! state facts about other keys. Each text ends in a distinct filler token so
//! pools survive exact deduplication.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::toy_lm::Vocabulary;
use crate::models::{OraclePredictor, PlantedFact};
use crate::teacher::MockTeacher;
use crate::types::QAInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTaskConfig {
    /// Training instances.
    pub n_instances: usize,
    pub n_dev: usize,
    pub n_candidates: usize,
    /// Number of keys (and values).
    pub fact_vocabulary: usize,
    pub teacher_noise_rate: f64,
    /// Texts scripted per question.
    pub pool_size: usize,
    pub seed: u64,
}

impl Default for SyntheticTaskConfig {
    fn default() -> Self {
        Self {
            n_instances: 500,
            n_dev: 200,
            n_candidates: 4,
            fact_vocabulary: 50,
            teacher_noise_rate: 0.5,
            pool_size: 20,
            seed: 0,
        }
    }
}

impl SyntheticTaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_candidates < 2 {
            return Err(Error::config("n_candidates must be at least 2"));
        }
        if self.fact_vocabulary < self.n_candidates.max(2) {
            return Err(Error::config("fact_vocabulary must be at least n_candidates and 2"));
        }
        if !(0.0..=1.0).contains(&self.teacher_noise_rate) {
            return Err(Error::config("teacher_noise_rate must lie in [0, 1]"));
        }
        if self.pool_size == 0 {
            return Err(Error::config("pool_size must be at least 1"));
        }
        Ok(())
    }

    /// Helpful texts per scripted pool.
    pub fn helpful_per_pool(&self) -> usize {
        ((1.0 - self.teacher_noise_rate) * self.pool_size as f64).round() as usize
    }
}

pub struct SyntheticTask {
    pub config: SyntheticTaskConfig,
    pub train: Vec<QAInstance>,
    pub dev: Vec<QAInstance>,
    /// Planted fact per question text.
    pub facts: BTreeMap<String, PlantedFact>,
    /// Scripted teacher pool per question text.
    pub scripts: HashMap<String, Vec<String>>,
}

impl SyntheticTask {
    pub fn oracle(&self) -> OraclePredictor {
        OraclePredictor::new(self.facts.clone())
    }

    pub fn mock_teacher(&self) -> MockTeacher {
        MockTeacher::new(self.scripts.clone())
    }

    /// Every token a teacher text can contain.
    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_texts(self.scripts.values().flatten().map(String::as_str))
    }
}

pub fn question_for(key: usize) -> String {
    format!("what does k{key} map to ?")
}

fn fact_text(key: usize, value: usize) -> String {
    format!("k{key} maps to v{value}")
}

/// Builds the task; equal configs give identical tasks.
pub fn generate_synthetic(cfg: &SyntheticTaskConfig) -> Result<SyntheticTask> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let f = cfg.fact_vocabulary;
    let mut mapping: Vec<usize> = (0..f).collect();
    mapping.shuffle(&mut rng);

    let mut facts = BTreeMap::new();
    let mut scripts = HashMap::new();
    let helpful = cfg.helpful_per_pool();
    for key in 0..f {
        let q = question_for(key);
        facts.insert(
            q.clone(),
            PlantedFact {
                fact: fact_text(key, mapping[key]),
                answer: format!("v{}", mapping[key]),
            },
        );
        let mut fillers: Vec<usize> = (0..cfg.pool_size).collect();
        fillers.shuffle(&mut rng);
        let mut pool = Vec::with_capacity(cfg.pool_size);
        for (i, &filler) in fillers.iter().enumerate() {
            let k = if i < helpful {
                key
            } else {
                let other = rng.gen_range(0..f - 1);
                if other >= key {
                    other + 1
                } else {
                    other
                }
            };
            pool.push(format!("{} f{filler}", fact_text(k, mapping[k])));
        }
        pool.shuffle(&mut rng);
        scripts.insert(q, pool);
    }

    let make = |prefix: &str, n: usize, rng: &mut ChaCha8Rng| -> Result<Vec<QAInstance>> {
        (0..n)
            .map(|i| {
                let key = rng.gen_range(0..f);
                let gold_value = mapping[key];
                let mut values: Vec<usize> = (0..f).filter(|&v| v != gold_value).collect();
                let (distractors, _) = values.partial_shuffle(rng, cfg.n_candidates - 1);
                let mut cands: Vec<usize> = distractors.to_vec();
                cands.push(gold_value);
                cands.shuffle(rng);
                let gold = cands.iter().position(|&v| v == gold_value);
                QAInstance::new(
                    format!("{prefix}-{i}"),
                    question_for(key),
                    cands.iter().map(|v| format!("v{v}")).collect(),
                    gold,
                )
            })
            .collect()
    };
    let train = make("train", cfg.n_instances, &mut rng)?;
    let dev = make("dev", cfg.n_dev, &mut rng)?;
    Ok(SyntheticTask {
        config: cfg.clone(),
        train,
        dev,
        facts,
        scripts,
    })
}
