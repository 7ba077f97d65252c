//! Domain types shared across the crate.
//!
//! Everything here is immutable once constructed; constructors validate.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hard cap on elaboration length, in tokens.
pub const MAX_ELABORATION_TOKENS: usize = 64;

/// One multiple-choice question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRecord", into = "InstanceRecord")]
pub struct QAInstance {
    id: String,
    question: String,
    candidates: Vec<String>,
    gold_index: Option<usize>,
}

/// Canonical on-disk shape of a [`QAInstance`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub question: String,
    pub candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_index: Option<usize>,
}

impl QAInstance {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        candidates: Vec<String>,
        gold_index: Option<usize>,
    ) -> Result<Self> {
        let id = id.into().trim().to_string();
        let question = question.into().trim().to_string();
        if question.is_empty() {
            return Err(Error::schema("question is empty"));
        }
        if candidates.len() < 2 {
            return Err(Error::schema(format!(
                "candidates: need at least 2, got {}",
                candidates.len()
            )));
        }
        let candidates: Vec<String> = candidates.into_iter().map(|c| c.trim().to_string()).collect();
        if let Some(i) = candidates.iter().position(|c| c.is_empty()) {
            return Err(Error::schema(format!("candidates[{i}] is empty")));
        }
        if let Some(g) = gold_index {
            if g >= candidates.len() {
                return Err(Error::Bounds {
                    what: "candidates",
                    index: g,
                    len: candidates.len(),
                });
            }
        }
        Ok(Self {
            id,
            question,
            candidates,
            gold_index,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn question(&self) -> &str {
        &self.question
    }

    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    pub fn gold_index(&self) -> Option<usize> {
        self.gold_index
    }

    pub fn num_candidates(&self) -> usize {
        self.candidates.len()
    }

    /// Same instance with the label removed.
    pub fn unlabeled(&self) -> Self {
        Self {
            gold_index: None,
            ..self.clone()
        }
    }
}

impl TryFrom<InstanceRecord> for QAInstance {
    type Error = Error;

    fn try_from(r: InstanceRecord) -> Result<Self> {
        QAInstance::new(r.id, r.question, r.candidates, r.gold_index)
    }
}

impl From<QAInstance> for InstanceRecord {
    fn from(q: QAInstance) -> Self {
        InstanceRecord {
            id: q.id,
            question: q.question,
            candidates: q.candidates,
            gold_index: q.gold_index,
        }
    }
}

fn field<'a>(obj: &'a serde_json::Map<String, serde_json::Value>, names: &[&str]) -> Option<&'a serde_json::Value> {
    names.iter().find_map(|n| obj.get(*n))
}

/// Validates a loosely shaped record into a [`QAInstance`].
///
/// Accepts `question`/`q`, `candidates`/`cands`/`choices` and
/// `gold_index`/`gold`. A missing id is derived from the question text.
pub fn validate_instance(raw: &serde_json::Value) -> Result<QAInstance> {
    let obj = raw
        .as_object()
        .ok_or_else(|| Error::schema("record is not an object"))?;
    let question = field(obj, &["question", "q"])
        .ok_or_else(|| Error::schema("missing field `question`"))?
        .as_str()
        .ok_or_else(|| Error::schema("field `question` is not a string"))?;
    let cands = field(obj, &["candidates", "cands", "choices"])
        .ok_or_else(|| Error::schema("missing field `candidates`"))?
        .as_array()
        .ok_or_else(|| Error::schema("field `candidates` is not a list"))?;
    let candidates = cands
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.as_str()
                .map(str::to_string)
                .ok_or_else(|| Error::schema(format!("candidates[{i}] is not a string")))
        })
        .collect::<Result<Vec<_>>>()?;
    let gold = match field(obj, &["gold_index", "gold"]) {
        None | Some(serde_json::Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| Error::schema("field `gold_index` is not a non-negative integer"))?
                as usize,
        ),
    };
    let id = match obj.get("id") {
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(serde_json::Value::Number(n)) => n.to_string(),
        Some(_) => return Err(Error::schema("field `id` is not a string")),
        None => {
            let digest = Sha256::digest(question.trim().as_bytes());
            format!("q-{}", &hex::encode(digest)[..12])
        }
    };
    QAInstance::new(id, question, candidates, gold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Teacher,
    Student,
}

/// A non-empty piece of generated background text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Elaboration {
    text: String,
    source: Source,
    token_count: usize,
}

impl Elaboration {
    /// `token_count` comes from whichever tokenizer the producing model uses.
    pub fn new(text: impl AsRef<str>, source: Source, token_count: usize) -> Result<Self> {
        let text = text.as_ref().trim();
        if text.is_empty() {
            return Err(Error::EmptyElaboration);
        }
        if token_count == 0 {
            return Err(Error::schema("token_count must be at least 1"));
        }
        Ok(Self {
            text: text.to_string(),
            source,
            token_count,
        })
    }

    /// Builds an elaboration counted with the whitespace tokenizer.
    pub fn from_text(text: impl AsRef<str>, source: Source) -> Result<Self> {
        let count = whitespace_tokens(text.as_ref()).count();
        Self::new(text, source, count.max(1))
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }
}

impl fmt::Display for Elaboration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

pub fn whitespace_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolRole {
    /// Samples from the teacher.
    TeacherPool,
    /// Output of the E-step filter.
    Selected,
    /// Samples from the student generator.
    StudentSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElaborationPool {
    instance_id: String,
    elaborations: Vec<Elaboration>,
    role: PoolRole,
}

impl ElaborationPool {
    /// Teacher pools are exact-string deduplicated, keeping first occurrences.
    pub fn new(instance_id: impl Into<String>, elaborations: Vec<Elaboration>, role: PoolRole) -> Self {
        let elaborations = if role == PoolRole::TeacherPool {
            dedup_exact(elaborations)
        } else {
            elaborations
        };
        Self {
            instance_id: instance_id.into(),
            elaborations,
            role,
        }
    }

    pub fn instance_id(&self) -> &str {
        &self.instance_id
    }

    pub fn elaborations(&self) -> &[Elaboration] {
        &self.elaborations
    }

    pub fn role(&self) -> PoolRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.elaborations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elaborations.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.elaborations.iter().map(Elaboration::text)
    }
}

pub fn dedup_exact(items: Vec<Elaboration>) -> Vec<Elaboration> {
    let mut seen = HashSet::new();
    items
        .into_iter()
        .filter(|e| seen.insert(e.text().to_string()))
        .collect()
}

/// Numerically stable softmax.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log(sum(exp(xs)))`, stable.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Predictor scores, one row per elaboration and one column per candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    rows: Vec<Vec<f64>>,
    cols: usize,
}

impl ScoreMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(r.len(), cols));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::schema(format!("score row {i} has a non-finite entry")));
            }
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    pub fn row_softmax(&self, i: usize) -> Vec<f64> {
        softmax(&self.rows[i])
    }

    pub fn softmax_rows(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| softmax(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeStrategy {
    Greedy,
    Beam,
    Nucleus,
}

impl fmt::Display for DecodeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecodeStrategy::Greedy => "greedy",
            DecodeStrategy::Beam => "beam",
            DecodeStrategy::Nucleus => "nucleus",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub strategy: DecodeStrategy,
    /// Nucleus mass; only read by nucleus sampling.
    pub p: f64,
    pub temperature: f64,
    /// Only read by beam search.
    pub beam_width: usize,
    pub max_tokens: usize,
    pub n_samples: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self::student()
    }
}

impl DecodeConfig {
    /// Teacher sampling: nucleus p = 0.5, 20 samples.
    pub fn teacher() -> Self {
        Self {
            strategy: DecodeStrategy::Nucleus,
            p: 0.5,
            temperature: 1.0,
            beam_width: 10,
            max_tokens: MAX_ELABORATION_TOKENS,
            n_samples: 20,
        }
    }

    /// Student sampling: nucleus p = 0.95 at temperature 0.7, 10 samples.
    pub fn student() -> Self {
        Self {
            strategy: DecodeStrategy::Nucleus,
            p: 0.95,
            temperature: 0.7,
            beam_width: 10,
            max_tokens: MAX_ELABORATION_TOKENS,
            n_samples: 10,
        }
    }

    pub fn greedy() -> Self {
        Self {
            strategy: DecodeStrategy::Greedy,
            n_samples: 1,
            ..Self::student()
        }
    }

    pub fn beam(width: usize) -> Self {
        Self {
            strategy: DecodeStrategy::Beam,
            beam_width: width,
            n_samples: width,
            ..Self::student()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::config(format!("nucleus p must be in (0, 1], got {}", self.p)));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::config(format!("temperature must be > 0, got {}", self.temperature)));
        }
        if self.beam_width == 0 {
            return Err(Error::config("beam_width must be at least 1"));
        }
        if self.n_samples == 0 {
            return Err(Error::config("n_samples must be at least 1"));
        }
        if self.max_tokens == 0 {
            return Err(Error::config("max_tokens must be at least 1"));
        }
        Ok(())
    }
}

/// E-step filtering rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Random,
    Correct,
    PosNeg,
    Pos,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [FilterKind::Random, FilterKind::Correct, FilterKind::PosNeg, FilterKind::Pos];
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Random => "random",
            FilterKind::Correct => "correct",
            FilterKind::PosNeg => "pos_neg",
            FilterKind::Pos => "pos",
        })
    }
}

/// How per-elaboration predictions are combined at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationKind {
    Maximum,
    Concatenate,
    Probability,
    Similarity,
}

impl IntegrationKind {
    pub const ALL: [IntegrationKind; 4] = [
        IntegrationKind::Maximum,
        IntegrationKind::Concatenate,
        IntegrationKind::Probability,
        IntegrationKind::Similarity,
    ];
}

impl fmt::Display for IntegrationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IntegrationKind::Maximum => "maximum",
            IntegrationKind::Concatenate => "concatenate",
            IntegrationKind::Probability => "probability",
            IntegrationKind::Similarity => "similarity",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    /// Size of the selected set.
    pub k: usize,
    pub n_teacher: usize,
    pub n_student: usize,
    pub teacher_decode: DecodeConfig,
    pub student_decode: DecodeConfig,
    pub learning_rate: f64,
    /// Predictor step size; falls back to `learning_rate`.
    pub predictor_learning_rate: Option<f64>,
    /// Instances per phase before switching between generator and predictor.
    pub alternation_block: usize,
    pub epochs: usize,
    pub filter_strategy: FilterKind,
    pub integration: IntegrationKind,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            k: 3,
            n_teacher: 20,
            n_student: 10,
            teacher_decode: DecodeConfig::teacher(),
            student_decode: DecodeConfig::student(),
            learning_rate: 1e-5,
            predictor_learning_rate: None,
            alternation_block: 100,
            epochs: 3,
            filter_strategy: FilterKind::Pos,
            integration: IntegrationKind::Maximum,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if self.k > self.n_teacher {
            return Err(Error::config(format!(
                "k ({}) must not exceed n_teacher ({})",
                self.k, self.n_teacher
            )));
        }
        if self.n_student == 0 {
            return Err(Error::config("n_student must be at least 1"));
        }
        if self.alternation_block == 0 {
            return Err(Error::config("alternation_block must be at least 1"));
        }
        for lr in [Some(self.learning_rate), self.predictor_learning_rate].into_iter().flatten() {
            if !lr.is_finite() || lr < 0.0 {
                return Err(Error::config("learning rates must be finite and non-negative"));
            }
        }
        self.teacher_decode.validate()?;
        self.student_decode.validate()
    }

    pub fn predictor_lr(&self) -> f64 {
        self.predictor_learning_rate.unwrap_or(self.learning_rate)
    }

    /// Student decode settings with the sample count forced to `n_student`.
    pub fn student_sampling(&self) -> DecodeConfig {
        let mut cfg = self.student_decode;
        cfg.n_samples = self.n_student;
        if cfg.strategy == DecodeStrategy::Beam {
            cfg.beam_width = cfg.beam_width.max(1);
        }
        cfg
    }
}
