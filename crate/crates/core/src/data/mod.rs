//! Dataset ingestion: the canonical JSONL format, import shims for the four
//! benchmark release layouts, and the synthetic verification task.
//!
//! Canonical records are `{"id", "question", "candidates": [...], "gold_index"}`,
//! one per line.

pub mod synthetic;

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::types::{validate_instance, InstanceRecord, QAInstance};

pub use synthetic::{generate_synthetic, SyntheticTask, SyntheticTaskConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Csqa,
    Csqa2,
    Qasc,
    Obqa,
    Synthetic,
}

impl DatasetName {
    pub const BENCHMARKS: [DatasetName; 4] = [DatasetName::Csqa, DatasetName::Csqa2, DatasetName::Qasc, DatasetName::Obqa];

    /// Candidates per question, when fixed by the benchmark.
    pub fn expected_candidates(self) -> Option<usize> {
        match self {
            DatasetName::Csqa => Some(5),
            DatasetName::Csqa2 => Some(2),
            DatasetName::Qasc => Some(8),
            DatasetName::Obqa => Some(4),
            DatasetName::Synthetic => None,
        }
    }

    /// Size of the official release split.
    pub fn official_size(self, split: Split) -> Option<usize> {
        let sizes = match self {
            DatasetName::Csqa => [9741, 1221, 1140],
            DatasetName::Csqa2 => [9282, 2544, 2517],
            DatasetName::Qasc => [8134, 926, 920],
            DatasetName::Obqa => [4957, 500, 500],
            DatasetName::Synthetic => return None,
        };
        Some(match split {
            Split::Train => sizes[0],
            Split::Dev => sizes[1],
            Split::Test => sizes[2],
        })
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetName::Csqa => "csqa",
            DatasetName::Csqa2 => "csqa2",
            DatasetName::Qasc => "qasc",
            DatasetName::Obqa => "obqa",
            DatasetName::Synthetic => "synthetic",
        })
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csqa" => Ok(DatasetName::Csqa),
            "csqa2" => Ok(DatasetName::Csqa2),
            "qasc" => Ok(DatasetName::Qasc),
            "obqa" => Ok(DatasetName::Obqa),
            "synthetic" => Ok(DatasetName::Synthetic),
            other => Err(Error::config(format!("unknown dataset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: DatasetName,
    pub split: Split,
    pub path: PathBuf,
    /// Overrides the benchmark's candidate count.
    #[serde(default)]
    pub expected_candidates: Option<usize>,
}

impl DatasetSpec {
    pub fn new(name: DatasetName, split: Split, path: impl Into<PathBuf>) -> Self {
        Self {
            name,
            split,
            path: path.into(),
            expected_candidates: None,
        }
    }

    pub fn candidate_count(&self) -> Option<usize> {
        self.expected_candidates.or(self.name.expected_candidates())
    }
}

/// Converts one raw record into a canonical instance.
///
/// Accepts the canonical layout and the benchmark release layouts:
/// `{"id", "question": {"stem", "choices": [{"label", "text"}]}, "answerKey"}`
/// (any `fact1`/`fact2`/`fact`/`combinedfact` annotations are dropped) and the
/// binary `{"id", "question": "...", "answer": "yes"|"no"}` layout.
pub fn import_record(raw: &Value) -> Result<QAInstance> {
    let obj = raw.as_object().ok_or_else(|| Error::schema("record is not an object"))?;
    if let Some(q) = obj.get("question").and_then(Value::as_object) {
        return import_stem_choices(obj, q);
    }
    if obj.contains_key("answer") && !obj.contains_key("candidates") {
        return import_yes_no(obj);
    }
    validate_instance(raw)
}

fn import_stem_choices(obj: &serde_json::Map<String, Value>, q: &serde_json::Map<String, Value>) -> Result<QAInstance> {
    let stem = q
        .get("stem")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::schema("question.stem missing"))?;
    let choices = q
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::schema("question.choices missing"))?;
    let mut labels = Vec::with_capacity(choices.len());
    let mut candidates = Vec::with_capacity(choices.len());
    for c in choices {
        let text = c
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::schema("choice without text"))?;
        labels.push(c.get("label").and_then(Value::as_str).unwrap_or_default().to_string());
        candidates.push(text.to_string());
    }
    let gold = match obj.get("answerKey").and_then(Value::as_str) {
        Some(key) => Some(
            labels
                .iter()
                .position(|l| l == key)
                .ok_or_else(|| Error::schema(format!("answerKey {key:?} matches no choice label")))?,
        ),
        None => None,
    };
    let id = obj.get("id").and_then(Value::as_str).unwrap_or_default();
    let mut canonical = serde_json::json!({ "question": stem, "candidates": candidates, "gold_index": gold });
    if !id.is_empty() {
        canonical["id"] = Value::String(id.to_string());
    }
    validate_instance(&canonical)
}

fn import_yes_no(obj: &serde_json::Map<String, Value>) -> Result<QAInstance> {
    let question = obj
        .get("question")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::schema("question missing"))?;
    let gold = match obj.get("answer").and_then(Value::as_str).map(str::to_ascii_lowercase).as_deref() {
        Some("yes") => Some(0),
        Some("no") => Some(1),
        None => None,
        Some(other) => return Err(Error::schema(format!("answer must be yes or no, got {other:?}"))),
    };
    let mut canonical = serde_json::json!({ "question": question, "candidates": ["yes", "no"], "gold_index": gold });
    if let Some(id) = obj.get("id").and_then(Value::as_str) {
        canonical["id"] = Value::String(id.to_string());
    }
    validate_instance(&canonical)
}

/// Parses JSONL from a reader, checking candidate counts when `expected` is set.
pub fn read_instances<R: BufRead>(reader: R, expected: Option<usize>) -> Result<Vec<QAInstance>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: Value = serde_json::from_str(&line).map_err(|e| Error::at_line(i + 1, e))?;
        let inst = import_record(&raw).map_err(|e| Error::at_line(i + 1, e))?;
        if let Some(n) = expected {
            if inst.num_candidates() != n {
                return Err(Error::schema(format!(
                    "line {}: expected {n} candidates, found {}",
                    i + 1,
                    inst.num_candidates()
                )));
            }
        }
        out.push(inst);
    }
    Ok(out)
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<Vec<QAInstance>> {
    let file = File::open(&spec.path)?;
    let instances = read_instances(BufReader::new(file), spec.candidate_count())?;
    if instances.is_empty() {
        warn!("{} is empty", spec.path.display());
    }
    if let Some(n) = spec.name.official_size(spec.split) {
        if instances.len() != n {
            warn!(
                "{} {:?} has {} instances; the official split has {n}",
                spec.name,
                spec.split,
                instances.len()
            );
        }
    }
    Ok(instances)
}

pub fn write_instances<W: Write>(mut w: W, instances: &[QAInstance]) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut w, &InstanceRecord::from(inst.clone()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(path: impl AsRef<Path>, instances: &[QAInstance]) -> Result<()> {
    if let Some(dir) = path.as_ref().parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_instances(BufWriter::new(File::create(path)?), instances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn csqa_layout_imports() {
        let raw = json!({
            "answerKey": "B",
            "id": "abc",
            "question": {
                "question_concept": "x",
                "choices": [
                    {"label": "A", "text": "bank"}, {"label": "B", "text": "library"},
                    {"label": "C", "text": "department store"}, {"label": "D", "text": "mall"},
                    {"label": "E", "text": "new york"}
                ],
                "stem": "Where would you borrow a book?"
            }
        });
        let q = import_record(&raw).unwrap();
        assert_eq!(q.id(), "abc");
        assert_eq!(q.num_candidates(), 5);
        assert_eq!(q.gold_index(), Some(1));
        assert_eq!(q.question(), "Where would you borrow a book?");
    }

    #[test]
    fn qasc_facts_are_dropped() {
        let choices: Vec<Value> = "ABCDEFGH"
            .chars()
            .map(|l| json!({"label": l.to_string(), "text": format!("opt {l}")}))
            .collect();
        let raw = json!({
            "id": "q1", "answerKey": "H", "fact1": "secret one", "fact2": "secret two",
            "combinedfact": "secret both", "question": {"stem": "What?", "choices": choices}
        });
        let q = import_record(&raw).unwrap();
        assert_eq!(q.gold_index(), Some(7));
        let back = serde_json::to_string(&InstanceRecord::from(q)).unwrap();
        assert!(!back.contains("secret"));
    }

    #[test]
    fn csqa2_is_yes_no() {
        let q = import_record(&json!({"id": "z", "question": "Glass is a liquid.", "answer": "no"})).unwrap();
        assert_eq!(q.candidates(), ["yes", "no"]);
        assert_eq!(q.gold_index(), Some(1));
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = "{\"question\":\"a?\",\"candidates\":[\"x\",\"y\"],\"gold_index\":0}\n{oops\n";
        let err = read_instances(text.as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Line { line: 2, .. }), "{err}");
    }

    #[test]
    fn candidate_count_mismatch_is_schema_error() {
        let text = "{\"question\":\"a?\",\"candidates\":[\"x\",\"y\"],\"gold_index\":0}\n";
        assert!(matches!(read_instances(text.as_bytes(), Some(5)), Err(Error::Schema(_))));
    }

    #[test]
    fn empty_file_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        std::fs::write(&path, "").unwrap();
        let spec = DatasetSpec::new(DatasetName::Csqa, Split::Dev, &path);
        assert!(load_dataset(&spec).unwrap().is_empty());
    }

    #[test]
    fn name_round_trips() {
        for n in DatasetName::BENCHMARKS.into_iter().chain([DatasetName::Synthetic]) {
            assert_eq!(n.to_string().parse::<DatasetName>().unwrap(), n);
        }
    }

    fn arb_instance() -> impl Strategy<Value = QAInstance> {
        ("[a-z]{1,6}", "[A-Za-z ?]{1,30}", prop::collection::vec("[a-z]{1,8}", 2..6), any::<prop::sample::Index>())
            .prop_filter_map("non-blank", |(id, q, cands, gold)| {
                let g = gold.index(cands.len());
                QAInstance::new(id, q, cands, Some(g)).ok()
            })
    }

    proptest! {
        #[test]
        fn loader_round_trip(instances in prop::collection::vec(arb_instance(), 0..20)) {
            let mut buf = Vec::new();
            write_instances(&mut buf, &instances).unwrap();
            let back = read_instances(buf.as_slice(), None).unwrap();
            prop_assert_eq!(back, instances);
        }
    }
}
