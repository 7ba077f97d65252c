use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{cross_entropy, sha256_hex, PredictorModel};
use crate::error::Result;
use crate::types::QAInstance;

/// The fact that answers one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedFact {
    pub fact: String,
    pub answer: String,
}

/// Fixed predictor that knows the planted fact of every question.
///
/// The candidate matching the answer scores `margin` when the elaboration
/// contains the fact (on token boundaries); otherwise every candidate scores 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePredictor {
    facts: BTreeMap<String, PlantedFact>,
    margin: f64,
}

pub const DEFAULT_ORACLE_MARGIN: f64 = 4.0;

impl OraclePredictor {
    /// `facts` is keyed by question text.
    pub fn new(facts: BTreeMap<String, PlantedFact>) -> Self {
        Self {
            facts,
            margin: DEFAULT_ORACLE_MARGIN,
        }
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn fact_for(&self, question: &str) -> Option<&PlantedFact> {
        self.facts.get(question)
    }

    pub fn contains_fact(&self, question: &str, elaboration: &str) -> bool {
        self.facts
            .get(question)
            .is_some_and(|f| contains_phrase(elaboration, &f.fact))
    }
}

/// Token-boundary containment on whitespace-normalized text.
pub fn contains_phrase(haystack: &str, needle: &str) -> bool {
    let norm = |s: &str| format!(" {} ", s.split_whitespace().collect::<Vec<_>>().join(" "));
    norm(haystack).contains(&norm(needle))
}

impl PredictorModel for OraclePredictor {
    fn score(&self, q: &QAInstance, elaboration: Option<&str>) -> Result<Vec<f64>> {
        let hit = elaboration
            .and_then(|e| self.facts.get(q.question()).filter(|f| contains_phrase(e, &f.fact)));
        Ok(q.candidates()
            .iter()
            .map(|c| match hit {
                Some(f) if *c == f.answer => self.margin,
                _ => 0.0,
            })
            .collect())
    }

    fn train_step(&mut self, q: &QAInstance, elaboration: Option<&str>, gold: usize, _lr: f64) -> Result<f64> {
        Ok(cross_entropy(&self.score(q, elaboration)?, gold))
    }

    fn is_trainable(&self) -> bool {
        false
    }

    fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("oracle serializes"))
    }

    fn snapshot(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }

    fn restore(&mut self, state: serde_json::Value) -> Result<()> {
        *self = serde_json::from_value(state)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{argmax, softmax};

    fn setup() -> (OraclePredictor, QAInstance) {
        let mut facts = BTreeMap::new();
        facts.insert(
            "what does k3 map to ?".to_string(),
            PlantedFact {
                fact: "k3 maps to v7".into(),
                answer: "v7".into(),
            },
        );
        let q = QAInstance::new("a", "what does k3 map to ?", vec!["v1".into(), "v7".into(), "v2".into()], Some(1)).unwrap();
        (OraclePredictor::new(facts), q)
    }

    #[test]
    fn fact_makes_gold_strictly_highest() {
        let (o, q) = setup();
        let row = o.score(&q, Some("f2 k3 maps to v7 f9")).unwrap();
        assert_eq!(argmax(&row), 1);
        assert!(row[1] > row[0] && row[1] > row[2]);
    }

    #[test]
    fn irrelevant_elaboration_is_uniform() {
        let (o, q) = setup();
        for e in [Some("k4 maps to v1"), Some("k3 maps to v77"), None] {
            let row = o.score(&q, e).unwrap();
            assert!(row.iter().all(|&s| s == row[0]), "{e:?}");
            let p = softmax(&row);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn training_changes_nothing() {
        let (mut o, q) = setup();
        let before = o.digest();
        let loss = o.train_step(&q, Some("k3 maps to v7"), 1, 1.0).unwrap();
        assert!(loss > 0.0);
        assert_eq!(before, o.digest());
    }
}
