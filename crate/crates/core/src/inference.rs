//! Answer prediction from sampled elaborations and dev-set evaluation.
//!
//! Four ways of combining per-elaboration candidate scores are supported:
//! max-pooling of softmax rows, a single pass over the concatenated
//! elaborations, a softmax-weighted mixture of rows, and picking the
//! elaboration closest to the question in an embedding space. With no
//! elaborations the predictor scores the question alone.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{derive_seed, hash_str, predictor_scores, sample_elaborations, GeneratorModel, PredictorModel};
use crate::types::{argmax, softmax, DecodeConfig, Elaboration, IntegrationKind, QAInstance, ScoreMatrix, Source};

/// Maps text to a fixed-size real vector.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Signed feature hashing of lowercased tokens into `dim` buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBagOfTokens {
    pub dim: usize,
}

impl Default for HashedBagOfTokens {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

impl Embedder for HashedBagOfTokens {
    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim.max(1)];
        for tok in text.split_whitespace() {
            let tok = tok.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
            if tok.is_empty() {
                continue;
            }
            let h = hash_str(&tok);
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            let dim = v.len() as u64;
            v[(h % dim) as usize] += sign;
        }
        v
    }
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub index: usize,
    /// Final per-candidate scores (probabilities).
    pub scores: Vec<f64>,
    /// Elaboration the prediction rests on, as an index into the input.
    pub chosen: Option<usize>,
}

/// Max-pooled softmax rows: `score_i = max_r softmax(row_r)_i`.
///
/// `chosen` is the first row attaining the pooled score of the predicted candidate.
pub fn max_pool(m: &ScoreMatrix) -> Prediction {
    let probs = m.softmax_rows();
    let mut scores = vec![f64::NEG_INFINITY; m.num_cols()];
    for row in &probs {
        for (s, &p) in scores.iter_mut().zip(row) {
            if p > *s {
                *s = p;
            }
        }
    }
    let index = argmax(&scores);
    let chosen = probs.iter().position(|row| row[index] == scores[index]);
    Prediction { index, scores, chosen }
}

/// Mixture of softmax rows weighted by the softmax of each row's top logit.
pub fn probability_mix(m: &ScoreMatrix) -> (Prediction, Vec<f64>) {
    let tops: Vec<f64> = m
        .rows()
        .iter()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let weights = softmax(&tops);
    let mut scores = vec![0.0; m.num_cols()];
    for (w, row) in weights.iter().zip(m.softmax_rows()) {
        for (s, p) in scores.iter_mut().zip(row) {
            *s += w * p;
        }
    }
    let index = argmax(&scores);
    let chosen = Some(argmax(&weights));
    (Prediction { index, scores, chosen }, weights)
}

fn single_pass<P: PredictorModel + ?Sized>(
    q: &QAInstance,
    e: Option<&Elaboration>,
    predictor: &P,
    chosen: Option<usize>,
) -> Result<Prediction> {
    let scores = softmax(&predictor_scores(predictor, q, e)?);
    Ok(Prediction {
        index: argmax(&scores),
        scores,
        chosen,
    })
}

/// Predicts an answer for `q` from `elaborations`.
///
/// An empty slice selects the elaboration-free mode. `embedder` is required
/// for [`IntegrationKind::Similarity`] and ignored otherwise.
pub fn predict<P: PredictorModel + ?Sized>(
    q: &QAInstance,
    elaborations: &[Elaboration],
    predictor: &P,
    strategy: IntegrationKind,
    embedder: Option<&dyn Embedder>,
) -> Result<Prediction> {
    if strategy == IntegrationKind::Similarity && embedder.is_none() {
        return Err(Error::config("similarity integration needs an embedding provider"));
    }
    if elaborations.is_empty() {
        return single_pass(q, None, predictor, None);
    }
    let matrix = || -> Result<ScoreMatrix> {
        ScoreMatrix::new(
            elaborations
                .iter()
                .map(|e| predictor_scores(predictor, q, Some(e)))
                .collect::<Result<_>>()?,
        )
    };
    match strategy {
        IntegrationKind::Maximum => Ok(max_pool(&matrix()?)),
        IntegrationKind::Probability => Ok(probability_mix(&matrix()?).0),
        IntegrationKind::Concatenate => {
            let joined = elaborations.iter().map(Elaboration::text).collect::<Vec<_>>().join(" ");
            let e = Elaboration::from_text(joined, Source::Student)?;
            single_pass(q, Some(&e), predictor, None)
        }
        IntegrationKind::Similarity => {
            let embedder = embedder.expect("checked above");
            let qv = embedder.embed(q.question());
            let mut best = (0, f64::NEG_INFINITY);
            for (i, e) in elaborations.iter().enumerate() {
                let s = cosine_similarity(&qv, &embedder.embed(e.text()))?;
                if s > best.1 {
                    best = (i, s);
                }
            }
            single_pass(q, Some(&elaborations[best.0]), predictor, Some(best.0))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub decode: DecodeConfig,
    pub integration: IntegrationKind,
    pub seed: u64,
    /// Skip elaborations entirely.
    pub vanilla: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub prediction: usize,
    pub gold: usize,
    pub correct: bool,
    pub chosen_elaboration: Option<String>,
    pub integration: IntegrationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub records: Vec<EvalRecord>,
}

/// Samples elaborations for every labelled instance, predicts and scores.
///
/// Instance `i` samples with a seed derived from `cfg.seed` and `i`, so the
/// result does not depend on evaluation order. An instance whose samples all
/// come back empty is scored without elaborations.
pub fn evaluate<G, P>(
    instances: &[QAInstance],
    generator: &G,
    predictor: &P,
    cfg: &EvalConfig,
    embedder: Option<&dyn Embedder>,
) -> Result<EvalReport>
where
    G: GeneratorModel + ?Sized,
    P: PredictorModel + ?Sized,
{
    let records = instances
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let gold = q
                .gold_index()
                .ok_or_else(|| Error::schema(format!("instance {} has no gold label", q.id())))?;
            let elaborations = if cfg.vanilla {
                Vec::new()
            } else {
                sample_elaborations(generator, q.question(), &cfg.decode, derive_seed(cfg.seed, i as u64))?
            };
            let p = predict(q, &elaborations, predictor, cfg.integration, embedder)?;
            Ok(EvalRecord {
                id: q.id().to_string(),
                prediction: p.index,
                gold,
                correct: p.index == gold,
                chosen_elaboration: p.chosen.map(|c| elaborations[c].text().to_string()),
                integration: cfg.integration,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let accuracy = if records.is_empty() {
        0.0
    } else {
        records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64
    };
    Ok(EvalReport { accuracy, records })
}
