//! Bilinear scorer between elaboration tokens and candidate tokens.
//!
//! `score(c) = mean_{l in L, r in c} W[l, r] + mean_{r in c} b[r]`, where `L`
//! holds the elaboration tokens (plus the question tokens when
//! `include_question` is set). Tokens are lowercased, stripped of surrounding
//! punctuation and hashed to 64-bit feature ids. Untrained weights come from
//! the seed, as in the toy LM.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{cross_entropy, hash_str, keyed_uniform, sha256_hex, PredictorModel};
use crate::error::{Error, Result};
use crate::types::{softmax, QAInstance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BilinearConfig {
    pub init_scale: f64,
    pub seed: u64,
    /// Feed question tokens into the elaboration side.
    pub include_question: bool,
}

impl Default for BilinearConfig {
    fn default() -> Self {
        Self {
            init_scale: 0.01,
            seed: 0,
            include_question: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearPredictor {
    config: BilinearConfig,
    #[serde(with = "pair_map")]
    weights: BTreeMap<(u64, u64), f64>,
    bias: BTreeMap<u64, f64>,
}

/// Sparse gradient over weights and biases.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BilinearGradient {
    pub weights: BTreeMap<(u64, u64), f64>,
    pub bias: BTreeMap<u64, f64>,
}

/// Addresses a single parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BilinearParam {
    Weight(u64, u64),
    Bias(u64),
}

pub fn features(text: &str) -> Vec<u64> {
    text.split_whitespace()
        .filter_map(|t| {
            let t = t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
            (!t.is_empty()).then(|| hash_str(&t))
        })
        .collect()
}

fn candidate_features(c: &str) -> Vec<u64> {
    let f = features(c);
    if f.is_empty() {
        vec![hash_str(&c.to_lowercase())]
    } else {
        f
    }
}

impl BilinearPredictor {
    pub fn new(config: BilinearConfig) -> Self {
        Self {
            config,
            weights: BTreeMap::new(),
            bias: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &BilinearConfig {
        &self.config
    }

    fn weight(&self, l: u64, r: u64) -> f64 {
        self.weights
            .get(&(l, r))
            .copied()
            .unwrap_or_else(|| self.config.init_scale * keyed_uniform(self.config.seed, l, r))
    }

    fn bias_of(&self, r: u64) -> f64 {
        self.bias.get(&r).copied().unwrap_or(0.0)
    }

    pub fn parameter(&self, p: BilinearParam) -> f64 {
        match p {
            BilinearParam::Weight(l, r) => self.weight(l, r),
            BilinearParam::Bias(r) => self.bias_of(r),
        }
    }

    pub fn set_parameter(&mut self, p: BilinearParam, value: f64) {
        match p {
            BilinearParam::Weight(l, r) => {
                self.weights.insert((l, r), value);
            }
            BilinearParam::Bias(r) => {
                self.bias.insert(r, value);
            }
        }
    }

    fn left_features(&self, q: &QAInstance, elaboration: Option<&str>) -> Vec<u64> {
        let mut left = elaboration.map(features).unwrap_or_default();
        if self.config.include_question {
            left.extend(features(q.question()));
        }
        left
    }

    fn score_with(&self, left: &[u64], right: &[u64]) -> f64 {
        let mut s = right.iter().map(|&r| self.bias_of(r)).sum::<f64>() / right.len() as f64;
        if !left.is_empty() {
            let mut acc = 0.0;
            for &l in left {
                for &r in right {
                    acc += self.weight(l, r);
                }
            }
            s += acc / (left.len() * right.len()) as f64;
        }
        s
    }

    /// Cross-entropy of `gold` and its gradient.
    pub fn gradient(&self, q: &QAInstance, elaboration: Option<&str>, gold: usize) -> Result<(f64, BilinearGradient)> {
        if gold >= q.num_candidates() {
            return Err(Error::Bounds {
                what: "candidates",
                index: gold,
                len: q.num_candidates(),
            });
        }
        let left = self.left_features(q, elaboration);
        let rights: Vec<Vec<u64>> = q.candidates().iter().map(|c| candidate_features(c)).collect();
        let scores: Vec<f64> = rights.iter().map(|r| self.score_with(&left, r)).collect();
        let probs = softmax(&scores);
        let mut grad = BilinearGradient::default();
        for (i, right) in rights.iter().enumerate() {
            let ds = probs[i] - if i == gold { 1.0 } else { 0.0 };
            for &r in right {
                *grad.bias.entry(r).or_default() += ds / right.len() as f64;
            }
            if !left.is_empty() {
                let w = ds / (left.len() * right.len()) as f64;
                for &l in &left {
                    for &r in right {
                        *grad.weights.entry((l, r)).or_default() += w;
                    }
                }
            }
        }
        Ok((cross_entropy(&scores, gold), grad))
    }

    fn apply(&mut self, grad: &BilinearGradient, lr: f64) {
        for (&(l, r), g) in &grad.weights {
            let w = self.weight(l, r);
            self.weights.insert((l, r), w - lr * g);
        }
        for (&r, g) in &grad.bias {
            let b = self.bias_of(r);
            self.bias.insert(r, b - lr * g);
        }
    }
}

impl PredictorModel for BilinearPredictor {
    fn score(&self, q: &QAInstance, elaboration: Option<&str>) -> Result<Vec<f64>> {
        let left = self.left_features(q, elaboration);
        Ok(q.candidates()
            .iter()
            .map(|c| self.score_with(&left, &candidate_features(c)))
            .collect())
    }

    fn train_step(&mut self, q: &QAInstance, elaboration: Option<&str>, gold: usize, lr: f64) -> Result<f64> {
        let (loss, grad) = self.gradient(q, elaboration, gold)?;
        let finite = loss.is_finite()
            && grad.weights.values().all(|g| g.is_finite())
            && grad.bias.values().all(|g| g.is_finite());
        if !finite {
            return Err(Error::Numeric("predictor gradient"));
        }
        if lr != 0.0 {
            self.apply(&grad, lr);
        }
        Ok(loss)
    }

    fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("bilinear model serializes"))
    }

    fn snapshot(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }

    fn restore(&mut self, state: serde_json::Value) -> Result<()> {
        *self = serde_json::from_value(state)?;
        Ok(())
    }
}

// JSON maps need string keys; tuple keys are stored as a list of triples.
mod pair_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<(u64, u64), f64>, s: S) -> Result<S::Ok, S::Error> {
        m.iter().map(|(&(l, r), &w)| (l, r, w)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(u64, u64), f64>, D::Error> {
        let v: Vec<(u64, u64, f64)> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|(l, r, w)| ((l, r), w)).collect())
    }
}
