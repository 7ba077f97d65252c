//! Generator and predictor contracts plus reference implementations.
//!
//! [`GeneratorModel`] produces elaborations from a question prompt and can be
//! fit to target elaborations. [`PredictorModel`] scores every candidate answer
//! given a question and an optional elaboration. The toy implementations are
//! small enough to check against brute force; [`adapter`] attaches an external
//! backend process speaking a line-delimited JSON protocol.

pub mod adapter;
pub mod bilinear;
pub mod oracle;
pub mod toy_lm;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{softmax, whitespace_tokens, DecodeConfig, Elaboration, QAInstance, Source};

pub use adapter::{ProcessBackend, Request, Response};
pub use bilinear::BilinearPredictor;
pub use oracle::{OraclePredictor, PlantedFact};
pub use toy_lm::{ToyConditionalLM, ToyLmConfig, Vocabulary};

/// A (prompt, target) pair for generator training.
pub type GeneratorExample = (String, Elaboration);

pub trait GeneratorModel: Send + Sync {
    /// Decodes raw texts for `prompt`; a text is empty when the model stopped at once.
    fn generate(&self, prompt: &str, cfg: &DecodeConfig, seed: u64) -> Result<Vec<String>>;

    /// `log p(token_t | prompt, tokens_<t)` for every token of `text`.
    fn step_log_probs(&self, prompt: &str, text: &str) -> Result<Vec<f64>>;

    fn log_prob(&self, prompt: &str, text: &str) -> Result<f64> {
        Ok(self.step_log_probs(prompt, text)?.iter().sum())
    }

    fn token_count(&self, text: &str) -> usize {
        whitespace_tokens(text).count()
    }

    /// One first-order update on the batch; returns the mean NLL measured before the update.
    fn train_step(&mut self, batch: &[GeneratorExample], lr: f64) -> Result<f64>;

    /// Hash of the current parameters.
    fn digest(&self) -> String;

    fn snapshot(&self) -> Result<serde_json::Value>;

    fn restore(&mut self, state: serde_json::Value) -> Result<()>;
}

pub trait PredictorModel: Send + Sync {
    /// Log-domain score per candidate. `None` means no elaboration.
    fn score(&self, q: &QAInstance, elaboration: Option<&str>) -> Result<Vec<f64>>;

    /// One update on the cross-entropy of `gold`; returns the loss before the update.
    fn train_step(&mut self, q: &QAInstance, elaboration: Option<&str>, gold: usize, lr: f64) -> Result<f64>;

    fn is_trainable(&self) -> bool {
        true
    }

    fn digest(&self) -> String;

    fn snapshot(&self) -> Result<serde_json::Value>;

    fn restore(&mut self, state: serde_json::Value) -> Result<()>;
}

/// Samples `cfg.n_samples` elaborations; a sample the model left empty comes back as an error.
pub fn generator_sample<G: GeneratorModel + ?Sized>(
    model: &G,
    prompt: &str,
    cfg: &DecodeConfig,
    seed: u64,
) -> Result<Vec<Result<Elaboration>>> {
    cfg.validate()?;
    let texts = model.generate(prompt, cfg, seed)?;
    Ok(texts
        .into_iter()
        .map(|text| {
            let tokens: Vec<&str> = whitespace_tokens(&text).take(cfg.max_tokens).collect();
            if tokens.is_empty() {
                return Err(Error::EmptyElaboration);
            }
            let text = tokens.join(" ");
            let count = model.token_count(&text).max(1);
            Elaboration::new(text, Source::Student, count)
        })
        .collect())
}

/// Non-empty student samples only.
pub fn sample_elaborations<G: GeneratorModel + ?Sized>(
    model: &G,
    prompt: &str,
    cfg: &DecodeConfig,
    seed: u64,
) -> Result<Vec<Elaboration>> {
    Ok(generator_sample(model, prompt, cfg, seed)?
        .into_iter()
        .filter_map(Result::ok)
        .collect())
}

pub fn generator_log_prob<G: GeneratorModel + ?Sized>(model: &G, prompt: &str, e: &Elaboration) -> Result<f64> {
    model.log_prob(prompt, e.text())
}

pub fn generator_train_step<G: GeneratorModel + ?Sized>(model: &mut G, batch: &[GeneratorExample], lr: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::schema("generator batch is empty"));
    }
    model.train_step(batch, lr)
}

pub fn predictor_scores<P: PredictorModel + ?Sized>(model: &P, q: &QAInstance, e: Option<&Elaboration>) -> Result<Vec<f64>> {
    let row = model.score(q, e.map(Elaboration::text))?;
    if row.len() != q.num_candidates() {
        return Err(Error::Dimension(row.len(), q.num_candidates()));
    }
    if row.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("predictor scores"));
    }
    Ok(row)
}

pub fn predictor_train_step<P: PredictorModel + ?Sized>(
    model: &mut P,
    q: &QAInstance,
    e: Option<&Elaboration>,
    gold: usize,
    lr: f64,
) -> Result<f64> {
    if gold >= q.num_candidates() {
        return Err(Error::Bounds {
            what: "candidates",
            index: gold,
            len: q.num_candidates(),
        });
    }
    model.train_step(q, e.map(Elaboration::text), gold, lr)
}

/// `-log softmax(scores)[gold]`.
pub fn cross_entropy(scores: &[f64], gold: usize) -> f64 {
    -softmax(scores)[gold].ln()
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Stable 64-bit hash of a string.
pub(crate) fn hash_str(s: &str) -> u64 {
    use std::hash::Hasher;
    let mut h = fnv::FnvHasher::default();
    h.write(s.as_bytes());
    h.finish()
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent seed for stream `stream` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// Deterministic value in [-1, 1) keyed by the inputs.
pub(crate) fn keyed_uniform(seed: u64, a: u64, b: u64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(a ^ splitmix64(b.wrapping_add(0x632B_E59B_D9B4_E019))));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}
