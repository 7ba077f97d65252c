//! Few-shot prompts for teacher sampling.

use serde::{Deserialize, Serialize};

use crate::data::DatasetName;
use crate::error::{Error, Result};
use crate::types::QAInstance;

pub const PLACEHOLDER: &str = "{question}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub input: String,
    pub knowledge: String,
}

/// Instruction, demonstrations, then the question line and a trailing cue.
///
/// Rendered layout, blocks separated by a blank line:
///
/// ```text
/// {instruction}
///
/// {demo_label}: {input}
/// Knowledge: {knowledge}
///
/// Input: {question}
/// Knowledge:
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub instruction: String,
    #[serde(default)]
    pub demonstrations: Vec<Demonstration>,
    #[serde(default = "default_demo_label")]
    pub demo_label: String,
    /// Line holding the placeholder.
    #[serde(default = "default_query")]
    pub query: String,
    #[serde(default = "default_suffix")]
    pub suffix: String,
}

fn default_demo_label() -> String {
    "Input".into()
}

fn default_query() -> String {
    format!("Input: {PLACEHOLDER}")
}

fn default_suffix() -> String {
    "Knowledge:".into()
}

impl PromptTemplate {
    pub fn new(instruction: impl Into<String>, demonstrations: Vec<Demonstration>) -> Self {
        Self {
            instruction: instruction.into(),
            demonstrations,
            demo_label: default_demo_label(),
            query: default_query(),
            suffix: default_suffix(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut count = self.query.matches(PLACEHOLDER).count();
        count += self.instruction.matches(PLACEHOLDER).count();
        count += self.suffix.matches(PLACEHOLDER).count();
        for d in &self.demonstrations {
            count += d.input.matches(PLACEHOLDER).count() + d.knowledge.matches(PLACEHOLDER).count();
        }
        match count {
            1 if self.query.contains(PLACEHOLDER) => Ok(()),
            0 => Err(Error::Template(format!("missing placeholder {PLACEHOLDER}"))),
            1 => Err(Error::Template("placeholder must sit on the query line".into())),
            n => Err(Error::Template(format!("expected one placeholder, found {n}"))),
        }
    }

    /// The full-text prompt for `q`.
    pub fn render(&self, q: &QAInstance) -> Result<String> {
        self.validate()?;
        let mut blocks = Vec::with_capacity(self.demonstrations.len() + 2);
        if !self.instruction.is_empty() {
            blocks.push(self.instruction.clone());
        }
        for d in &self.demonstrations {
            blocks.push(format!("{}: {}\nKnowledge: {}", self.demo_label, d.input, d.knowledge));
        }
        blocks.push(format!("{}\n{}", self.query.replace(PLACEHOLDER, q.question()), self.suffix));
        Ok(blocks.join("\n\n"))
    }

    pub fn builtin(name: DatasetName) -> Self {
        let demos = |pairs: &[(&str, &str)]| {
            pairs
                .iter()
                .map(|(i, k)| Demonstration {
                    input: i.to_string(),
                    knowledge: k.to_string(),
                })
                .collect()
        };
        match name {
            DatasetName::Csqa => Self::new(
                "Generate some knowledge about the concepts in the input. Examples:",
                demos(&[
                    (
                        "Google Maps and other highway and street GPS services have replaced what?",
                        "Electronic maps are the modern version of paper atlas.",
                    ),
                    (
                        "The fox walked from the city into the forest, what was it looking for?",
                        "Natural habitats are usually away from cities.",
                    ),
                    (
                        "You can share files with someone if you have a connection to a what?",
                        "Files can be shared over the Internet.",
                    ),
                    (
                        "Too many people want exotic snakes. The demand is driving what to carry them?",
                        "Some people raise snakes as pets.",
                    ),
                    (
                        "The body guard was good at his duties, he made the person who hired him what?",
                        "The job of body guards is to ensure the safety and security of the employer",
                    ),
                ]),
            ),
            DatasetName::Csqa2 => Self::new(
                "Generate some knowledge about the input. Examples:",
                demos(&[
                    (
                        "Greece is larger than mexico.",
                        "Greece is approximately 131,957 sq km, while Mexico is approximately 1,964,375 sq km, making Mexico 1,389% larger than Greece.",
                    ),
                    (
                        "Glasses always fog up.",
                        "Condensation occurs on eyeglass lenses when water vapor from your sweat, breath, and ambient humidity lands on a cold surface, cools, and then changes into tiny drops of liquid, forming a film that you see as fog. Your lenses will be relatively cool compared to your breath, especially when the outside air is cold.",
                    ),
                    (
                        "A fish is capable of thinking.",
                        "Fish are more intelligent than they appear. In many areas, such as memory, their cognitive powers match or exceed those of 'higher' vertebrates including non-human primates. Fish's long-term memories help them keep track of complex social relationships.",
                    ),
                    (
                        "A common effect of smoking lots of cigarettes in one's lifetime is a higher than normal chance of getting lung cancer.",
                        "Those who consistently averaged less than one cigarette per day over their lifetime had nine times the risk of dying from lung cancer than never smokers. Among people who smoked between one and 10 cigarettes per day, the risk of dying from lung cancer was nearly 12 times higher than that of never smokers.",
                    ),
                    (
                        "A rock is the same size as a pebble.",
                        "A pebble is a clast of rock with a particle size of 4 to 64 millimetres based on the Udden-Wentworth scale of sedimentology. Pebbles are generally considered larger than granules (2 to 4 millimetres diameter) and smaller than cobbles (64 to 256 millimetres diameter).",
                    ),
                ]),
            ),
            DatasetName::Qasc => Self::new(
                "Generate some knowledge about the input. Examples:",
                demos(&[
                    ("What type of water formation is formed by clouds?", "Clouds are made of water vapor."),
                    ("What can prevent food spoilage?", "Dehydrating food is used for preserving food"),
                    ("The process by which genes are passed is", "Genes are passed from parent to offspring."),
                    ("The stomach does what in the body?", "The stomach is part of the digestive system"),
                    (
                        "What can cause rocks to break down?",
                        "Mechanical weathering is when rocks are broken down by mechanical means.",
                    ),
                ]),
            ),
            DatasetName::Obqa => Self {
                demo_label: "Question".into(),
                ..Self::new(
                    "Generate some knowledge given the question. Examples:",
                    demos(&[
                        (
                            "Which would likely transfer special heat via waves?",
                            "Radiation is when heat is transferred through waves. Radiation is made by certain bombs.",
                        ),
                        (
                            "When standing miles away from Mount Rushmore",
                            "As distance to an object increases, that object will appear smaller.",
                        ),
                        (
                            "Ducks might their webbed appendages to",
                            "Webbed feet are used for moving faster through water by aquatic animals.",
                        ),
                        (
                            "Which would a strawberry most rely on to ensure it gets planted?",
                            "Birds are a vehicle for spreading the seeds of a plant.",
                        ),
                        (
                            "A typhoon can potentially cause",
                            "A typhoon can bring a lot of rainfall. Heavy rains cause flooding.",
                        ),
                    ]),
                )
            },
            DatasetName::Synthetic => Self::new("Generate some knowledge about the input. Examples:", Vec::new()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fish() -> QAInstance {
        QAInstance::new(
            "f",
            "Where do fish live?",
            vec!["sea".into(), "tree".into(), "sky".into(), "desk".into(), "car".into()],
            Some(0),
        )
        .unwrap()
    }

    #[test]
    fn csqa_prompt_ends_with_question_and_cue() {
        let p = PromptTemplate::builtin(DatasetName::Csqa).render(&fish()).unwrap();
        assert!(p.ends_with("Input: Where do fish live?\nKnowledge:"), "{p}");
        assert!(p.starts_with("Generate some knowledge about the concepts in the input. Examples:\n\nInput: Google Maps"));
        assert_eq!(p.matches("\nKnowledge: ").count(), 5);
    }

    #[test]
    fn every_builtin_has_five_demos_except_synthetic() {
        for name in [DatasetName::Csqa, DatasetName::Csqa2, DatasetName::Qasc, DatasetName::Obqa] {
            let t = PromptTemplate::builtin(name);
            assert_eq!(t.demonstrations.len(), 5);
            t.validate().unwrap();
        }
        let obqa = PromptTemplate::builtin(DatasetName::Obqa).render(&fish()).unwrap();
        assert!(obqa.contains("Question: A typhoon can potentially cause\nKnowledge:"));
        assert!(obqa.ends_with("Input: Where do fish live?\nKnowledge:"));
    }

    #[test]
    fn zero_demonstrations() {
        let t = PromptTemplate::new("Say something.", Vec::new());
        assert_eq!(t.render(&fish()).unwrap(), "Say something.\n\nInput: Where do fish live?\nKnowledge:");
    }

    #[test]
    fn placeholder_count_is_enforced() {
        let mut t = PromptTemplate::new("x", Vec::new());
        t.query = "Input: {question} {question}".into();
        assert!(matches!(t.render(&fish()), Err(Error::Template(_))));
        t.query = "Input:".into();
        assert!(matches!(t.validate(), Err(Error::Template(_))));
        t.query = "Input:".into();
        t.instruction = "about {question}".into();
        assert!(t.validate().is_err());
    }

    #[test]
    fn rendering_is_pure() {
        let t = PromptTemplate::builtin(DatasetName::Qasc);
        assert_eq!(t.render(&fish()).unwrap(), t.render(&fish()).unwrap());
    }
}
