//! Greedy, beam and nucleus decoding over any step-wise language model.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::{argmax, log_sum_exp, softmax, DecodeConfig, DecodeStrategy};

pub type TokenId = usize;

/// A conditional language model exposed one step at a time.
pub trait StepModel {
    fn vocab_size(&self) -> usize;

    /// The end-of-sequence token.
    fn eos(&self) -> TokenId;

    /// Unnormalized next-token scores given the prompt and the tokens emitted so far.
    fn step_logits(&self, prompt: &str, prefix: &[TokenId]) -> Vec<f64>;

    fn step_log_probs(&self, prompt: &str, prefix: &[TokenId]) -> Vec<f64> {
        log_softmax(&self.step_logits(prompt, prefix))
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|l| l - lse).collect()
}

/// Next-token distribution after temperature scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl StepDistribution {
    pub fn new(logits: Vec<f64>, temperature: f64) -> Self {
        let scaled: Vec<f64> = if temperature == 1.0 {
            logits.clone()
        } else {
            logits.iter().map(|l| l / temperature).collect()
        };
        let probs = softmax(&scaled);
        Self { logits, probs }
    }

    /// Wraps an already normalized distribution.
    pub fn from_probs(probs: Vec<f64>) -> Self {
        let logits = probs.iter().map(|p| p.ln()).collect();
        Self { logits, probs }
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// A distribution restricted to its nucleus.
#[derive(Debug, Clone, PartialEq)]
pub struct Nucleus {
    /// Token ids by descending probability, ties by ascending id.
    pub support: Vec<TokenId>,
    /// Renormalized probabilities aligned with `support`.
    pub probs: Vec<f64>,
}

impl Nucleus {
    /// The filtered distribution as a dense vector over `vocab_size` tokens.
    pub fn dense(&self, vocab_size: usize) -> Vec<f64> {
        let mut out = vec![0.0; vocab_size];
        for (&t, &p) in self.support.iter().zip(&self.probs) {
            out[t] = p;
        }
        out
    }

    /// Draws one token from the renormalized nucleus.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> TokenId {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (&t, &p) in self.support.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return t;
            }
        }
        *self.support.last().expect("nucleus support is never empty")
    }
}

// Absorbs rounding in cumulative sums so that a prefix whose mass is exactly p qualifies.
const MASS_EPS: f64 = 1e-12;

/// Keeps the smallest probability-sorted prefix whose mass reaches `p`, renormalized.
pub fn nucleus_filter(dist: &StepDistribution, p: f64) -> Nucleus {
    let probs = dist.probs();
    let mut order: Vec<TokenId> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut cum = 0.0;
    let mut cut = order.len();
    for (i, &t) in order.iter().enumerate() {
        cum += probs[t];
        if cum + MASS_EPS >= p {
            cut = i + 1;
            break;
        }
    }
    order.truncate(cut.max(1));
    let mass: f64 = order.iter().map(|&t| probs[t]).sum();
    let renorm = order.iter().map(|&t| probs[t] / mass).collect();
    Nucleus {
        support: order,
        probs: renorm,
    }
}

/// One decoded sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Emitted tokens, end-of-sequence excluded.
    pub tokens: Vec<TokenId>,
    /// Model log-probability (temperature 1) of the emitted tokens, including
    /// the end-of-sequence step when `finished`.
    pub log_prob: f64,
    /// False when the sequence was cut at `max_tokens`.
    pub finished: bool,
}

pub fn decode<M: StepModel + ?Sized>(model: &M, prompt: &str, cfg: &DecodeConfig, seed: u64) -> Vec<Decoded> {
    match cfg.strategy {
        DecodeStrategy::Greedy => vec![greedy(model, prompt, cfg.max_tokens)],
        DecodeStrategy::Beam => beam_search(model, prompt, cfg.beam_width, cfg.max_tokens),
        DecodeStrategy::Nucleus => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..cfg.n_samples)
                .map(|_| sample_nucleus(model, prompt, cfg.p, cfg.temperature, cfg.max_tokens, &mut rng))
                .collect()
        }
    }
}

pub fn greedy<M: StepModel + ?Sized>(model: &M, prompt: &str, max_tokens: usize) -> Decoded {
    let eos = model.eos();
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    while tokens.len() < max_tokens {
        let lp = model.step_log_probs(prompt, &tokens);
        let t = argmax(&lp);
        log_prob += lp[t];
        if t == eos {
            return Decoded {
                tokens,
                log_prob,
                finished: true,
            };
        }
        tokens.push(t);
    }
    Decoded {
        tokens,
        log_prob,
        finished: false,
    }
}

pub fn sample_nucleus<M: StepModel + ?Sized, R: Rng>(
    model: &M,
    prompt: &str,
    p: f64,
    temperature: f64,
    max_tokens: usize,
    rng: &mut R,
) -> Decoded {
    let eos = model.eos();
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    while tokens.len() < max_tokens {
        let logits = model.step_logits(prompt, &tokens);
        let lp = log_softmax(&logits);
        let nucleus = nucleus_filter(&StepDistribution::new(logits, temperature), p);
        let t = nucleus.sample(rng);
        log_prob += lp[t];
        if t == eos {
            return Decoded {
                tokens,
                log_prob,
                finished: true,
            };
        }
        tokens.push(t);
    }
    Decoded {
        tokens,
        log_prob,
        finished: false,
    }
}

/// Beam search by total log-probability.
///
/// Hypotheses that emit end-of-sequence are frozen and compete unnormalized
/// with the rest; hypotheses alive at `max_tokens` are cut there. Returns up
/// to `width` sequences, best first.
pub fn beam_search<M: StepModel + ?Sized>(model: &M, prompt: &str, width: usize, max_tokens: usize) -> Vec<Decoded> {
    let eos = model.eos();
    let by_score = |a: &Decoded, b: &Decoded| b.log_prob.partial_cmp(&a.log_prob).unwrap_or(Ordering::Equal);

    let mut live = vec![Decoded {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    }];
    let mut done: Vec<Decoded> = Vec::new();

    for _ in 0..max_tokens {
        let mut expansions = Vec::with_capacity(live.len() * model.vocab_size());
        for hyp in &live {
            let lp = model.step_log_probs(prompt, &hyp.tokens);
            for (t, l) in lp.into_iter().enumerate() {
                let mut tokens = hyp.tokens.clone();
                let finished = t == eos;
                if !finished {
                    tokens.push(t);
                }
                expansions.push(Decoded {
                    tokens,
                    log_prob: hyp.log_prob + l,
                    finished,
                });
            }
        }
        // Stable: equal scores keep parent-then-token order.
        expansions.sort_by(by_score);
        expansions.truncate(width);
        live.clear();
        for e in expansions {
            if e.finished {
                done.push(e);
            } else {
                live.push(e);
            }
        }
        done.sort_by(by_score);
        done.truncate(width);
        let best_live = live.first().map(|h| h.log_prob);
        match best_live {
            None => break,
            // Log-probs only decrease, so a full completed set that beats every live beam is final.
            Some(b) if done.len() == width && done[width - 1].log_prob >= b => {
                live.clear();
                break;
            }
            _ => {}
        }
    }
    done.extend(live);
    done.sort_by(by_score);
    done.truncate(width);
    done
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Table-driven toy model: the logits depend only on the prefix length.
    pub(crate) struct TableModel {
        pub rows: Vec<Vec<f64>>,
    }

    impl StepModel for TableModel {
        fn vocab_size(&self) -> usize {
            self.rows[0].len()
        }
        fn eos(&self) -> TokenId {
            0
        }
        fn step_logits(&self, _prompt: &str, prefix: &[TokenId]) -> Vec<f64> {
            self.rows[prefix.len().min(self.rows.len() - 1)].clone()
        }
    }

    fn probs(p: &[f64]) -> StepDistribution {
        StepDistribution::from_probs(p.to_vec())
    }

    #[test]
    fn nucleus_half_keeps_top_token() {
        let n = nucleus_filter(&probs(&[0.5, 0.3, 0.2]), 0.5);
        assert_eq!(n.support, vec![0]);
        assert_eq!(n.probs, vec![1.0]);
    }

    #[test]
    fn nucleus_point_six_renormalizes_two() {
        let n = nucleus_filter(&probs(&[0.5, 0.3, 0.2]), 0.6);
        assert_eq!(n.support, vec![0, 1]);
        assert!((n.probs[0] - 0.625).abs() < 1e-12);
        assert!((n.probs[1] - 0.375).abs() < 1e-12);
    }

    #[test]
    fn nucleus_full_mass_is_identity() {
        let d = StepDistribution::new(vec![0.3, -1.0, 2.0, 0.0], 1.0);
        let n = nucleus_filter(&d, 1.0);
        assert_eq!(n.support.len(), 4);
        let dense = n.dense(4);
        for (a, b) in dense.iter().zip(d.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nucleus_ties_break_by_index() {
        let n = nucleus_filter(&probs(&[0.25, 0.25, 0.25, 0.25]), 0.5);
        assert_eq!(n.support, vec![0, 1]);
    }

    #[test]
    fn unit_temperature_is_plain_softmax() {
        let logits = vec![0.1, 2.5, -3.0, 0.7];
        let d = StepDistribution::new(logits.clone(), 1.0);
        assert_eq!(d.probs(), softmax(&logits).as_slice());
    }

    #[test]
    fn greedy_equals_beam_one() {
        let m = TableModel {
            rows: vec![vec![-1.0, 0.5, 0.2], vec![0.1, 0.3, 0.9], vec![2.0, 0.0, 0.1]],
        };
        let g = greedy(&m, "", 8);
        let b = beam_search(&m, "", 1, 8);
        assert_eq!(b.len(), 1);
        assert_eq!(g, b[0]);
    }

    #[test]
    fn nucleus_decode_is_seeded() {
        let m = TableModel {
            rows: vec![vec![0.0, 0.5, 0.2, 0.1], vec![0.4, 0.3, 0.9, 0.0]],
        };
        let cfg = DecodeConfig::student();
        assert_eq!(decode(&m, "x", &cfg, 11), decode(&m, "x", &cfg, 11));
        assert_eq!(decode(&m, "x", &cfg, 11).len(), cfg.n_samples);
    }

    #[test]
    fn beam_returns_width_sorted() {
        let m = TableModel {
            rows: vec![vec![-2.0, 0.5, 0.2, 0.4], vec![0.0, 0.3, 0.9, 0.1], vec![1.0, 0.0, 0.1, 0.2]],
        };
        let out = beam_search(&m, "", 10, 6);
        assert_eq!(out.len(), 10);
        assert!(out.windows(2).all(|w| w[0].log_prob >= w[1].log_prob));
    }

    #[test]
    fn max_tokens_truncates() {
        let m = TableModel {
            rows: vec![vec![-50.0, 1.0, 0.0]],
        };
        let g = greedy(&m, "", 3);
        assert_eq!(g.tokens, vec![1, 1, 1]);
        assert!(!g.finished);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn nucleus_support_is_minimal(
                logits in prop::collection::vec(-6.0f64..6.0, 1..12),
                p in 0.01f64..=1.0,
                temp in 0.2f64..3.0,
            ) {
                let d = StepDistribution::new(logits, temp);
                let n = nucleus_filter(&d, p);
                let mass: f64 = n.support.iter().map(|&t| d.probs()[t]).sum();
                prop_assert!(mass + 1e-9 >= p);
                let without_last = mass - d.probs()[*n.support.last().unwrap()];
                prop_assert!(without_last < p);
                prop_assert!((n.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
