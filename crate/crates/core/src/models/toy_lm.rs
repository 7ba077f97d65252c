//! Per-context logit table language model.
//!
//! The context of a step is the prompt together with the last `order`
//! generated tokens. Each context owns a row of next-token logits. Rows that
//! were never trained are not stored; their logits are derived from the seed,
//! so reading never changes the parameters.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hasher;

use serde::{Deserialize, Serialize};

use super::{hash_str, keyed_uniform, sha256_hex, GeneratorExample, GeneratorModel};
use crate::decoding::{self, log_softmax, StepModel, TokenId};
use crate::error::{Error, Result};
use crate::types::{softmax, whitespace_tokens, DecodeConfig};

pub const EOS: &str = "</s>";

/// Ordered token set; id 0 is always end-of-sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Collects the whitespace tokens of `texts`, sorted, after end-of-sequence.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = texts
            .into_iter()
            .flat_map(whitespace_tokens)
            .filter(|t| *t != EOS)
            .collect();
        let tokens = std::iter::once(EOS.to_string())
            .chain(set.into_iter().map(str::to_string))
            .collect::<Vec<_>>();
        tokens.into()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        whitespace_tokens(text)
            .map(|t| self.id(t).ok_or_else(|| Error::UnknownToken(t.to_string())))
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter().map(|&i| self.token(i)).collect::<Vec<_>>().join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyLmConfig {
    /// Generated tokens visible to each step.
    pub order: usize,
    /// Half-width of the uniform initial logits.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for ToyLmConfig {
    fn default() -> Self {
        Self {
            order: 2,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConditionalLM {
    vocab: Vocabulary,
    config: ToyLmConfig,
    table: BTreeMap<u64, Vec<f64>>,
}

/// Per-context gradient of the batch loss.
pub type TableGradient = BTreeMap<u64, Vec<f64>>;

impl ToyConditionalLM {
    pub fn new(vocab: Vocabulary, config: ToyLmConfig) -> Self {
        Self {
            vocab,
            config,
            table: BTreeMap::new(),
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn config(&self) -> &ToyLmConfig {
        &self.config
    }

    /// Contexts that have been updated at least once.
    pub fn trained_contexts(&self) -> usize {
        self.table.len()
    }

    pub fn context_key(&self, prompt: &str, prefix: &[TokenId]) -> u64 {
        let start = prefix.len().saturating_sub(self.config.order);
        let mut h = fnv::FnvHasher::default();
        h.write_u64(hash_str(prompt));
        h.write_usize(prefix.len() - start);
        for &t in &prefix[start..] {
            h.write_usize(t);
        }
        h.finish()
    }

    fn initial_logits(&self, ctx: u64) -> Vec<f64> {
        (0..self.vocab.len())
            .map(|j| self.config.init_scale * keyed_uniform(self.config.seed, ctx, j as u64))
            .collect()
    }

    pub fn logits(&self, ctx: u64) -> Vec<f64> {
        self.table.get(&ctx).cloned().unwrap_or_else(|| self.initial_logits(ctx))
    }

    pub fn parameter(&self, ctx: u64, token: TokenId) -> f64 {
        self.logits(ctx)[token]
    }

    pub fn set_parameter(&mut self, ctx: u64, token: TokenId, value: f64) {
        let init = self.initial_logits(ctx);
        self.table.entry(ctx).or_insert(init)[token] = value;
    }

    /// Target token ids of `text` followed by end-of-sequence.
    fn targets(&self, text: &str) -> Result<Vec<TokenId>> {
        let mut ids = self.vocab.encode(text)?;
        ids.push(self.vocab_eos());
        Ok(ids)
    }

    fn vocab_eos(&self) -> TokenId {
        0
    }

    /// Negative log-likelihood of `text` including its end-of-sequence step.
    pub fn sequence_nll(&self, prompt: &str, text: &str) -> Result<f64> {
        let targets = self.targets(text)?;
        let mut nll = 0.0;
        for (t, &y) in targets.iter().enumerate() {
            let lp = log_softmax(&self.logits(self.context_key(prompt, &targets[..t])));
            nll -= lp[y];
        }
        Ok(nll)
    }

    /// Mean sequence NLL over the batch.
    pub fn batch_nll(&self, batch: &[GeneratorExample]) -> Result<f64> {
        let mut total = 0.0;
        for (prompt, e) in batch {
            total += self.sequence_nll(prompt, e.text())?;
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean NLL and its gradient with respect to every touched logit.
    pub fn gradient(&self, batch: &[GeneratorExample]) -> Result<(f64, TableGradient)> {
        let scale = 1.0 / batch.len() as f64;
        let mut grad: TableGradient = BTreeMap::new();
        let mut total = 0.0;
        for (prompt, e) in batch {
            let targets = self.targets(e.text())?;
            for (t, &y) in targets.iter().enumerate() {
                let ctx = self.context_key(prompt, &targets[..t]);
                let logits = self.logits(ctx);
                let probs = softmax(&logits);
                total -= probs[y].ln();
                let g = grad.entry(ctx).or_insert_with(|| vec![0.0; logits.len()]);
                for (j, p) in probs.iter().enumerate() {
                    g[j] += scale * (p - if j == y { 1.0 } else { 0.0 });
                }
            }
        }
        Ok((total * scale, grad))
    }

    fn apply(&mut self, grad: &TableGradient, lr: f64) {
        for (&ctx, g) in grad {
            let init = self.initial_logits(ctx);
            let row = self.table.entry(ctx).or_insert(init);
            for (w, d) in row.iter_mut().zip(g) {
                *w -= lr * d;
            }
        }
    }
}

impl StepModel for ToyConditionalLM {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn eos(&self) -> TokenId {
        self.vocab_eos()
    }

    fn step_logits(&self, prompt: &str, prefix: &[TokenId]) -> Vec<f64> {
        self.logits(self.context_key(prompt, prefix))
    }
}

impl GeneratorModel for ToyConditionalLM {
    fn generate(&self, prompt: &str, cfg: &DecodeConfig, seed: u64) -> Result<Vec<String>> {
        Ok(decoding::decode(self, prompt, cfg, seed)
            .into_iter()
            .map(|d| self.vocab.decode(&d.tokens))
            .collect())
    }

    fn step_log_probs(&self, prompt: &str, text: &str) -> Result<Vec<f64>> {
        let ids = self.vocab.encode(text)?;
        Ok(ids
            .iter()
            .enumerate()
            .map(|(t, &y)| self.step_log_probs_at(prompt, &ids[..t])[y])
            .collect())
    }

    fn train_step(&mut self, batch: &[GeneratorExample], lr: f64) -> Result<f64> {
        let (loss, grad) = self.gradient(batch)?;
        if !loss.is_finite() || grad.values().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("generator gradient"));
        }
        if lr != 0.0 {
            self.apply(&grad, lr);
        }
        Ok(loss)
    }

    fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("toy model serializes"))
    }

    fn snapshot(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }

    fn restore(&mut self, state: serde_json::Value) -> Result<()> {
        *self = serde_json::from_value(state)?;
        Ok(())
    }
}

impl ToyConditionalLM {
    fn step_log_probs_at(&self, prompt: &str, prefix: &[TokenId]) -> Vec<f64> {
        StepModel::step_log_probs(self, prompt, prefix)
    }
}
