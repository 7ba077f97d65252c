//! Line-delimited JSON protocol for external generator/predictor backends.
//!
//! Every request is one JSON object on one line, tagged by `op`; the backend
//! answers each with one JSON object on one line. A response with
//! `"ok": false` carries an `error` message. Real backends should apply an
//! Adam-style update at the requested learning rate for the `train_*` ops;
//! the `optimizer` field names the update the caller expects.
//!
//! ```text
//! {"op":"generate","prompt":"...","decode":{...},"seed":7}        -> {"ok":true,"texts":["..."]}
//! {"op":"log_prob","prompt":"...","text":"..."}                   -> {"ok":true,"step_log_probs":[-0.1,...]}
//! {"op":"train_generator","batch":[{"prompt":"..","target":".."}],"lr":1e-5,"optimizer":"adam"}
//!                                                                 -> {"ok":true,"loss":2.3}
//! {"op":"score","question":"...","candidates":["a","b"],"elaboration":null}
//!                                                                 -> {"ok":true,"scores":[0.1,0.4]}
//! {"op":"train_predictor","question":"..","candidates":[..],"elaboration":"..","gold":1,"lr":1e-5,"optimizer":"adam"}
//!                                                                 -> {"ok":true,"loss":0.7}
//! {"op":"digest","model":"generator"}                             -> {"ok":true,"digest":"..."}
//! {"op":"snapshot","model":"predictor"}                           -> {"ok":true,"state":{...}}
//! {"op":"restore","model":"predictor","state":{...}}              -> {"ok":true}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{GeneratorExample, GeneratorModel, PredictorModel};
use crate::error::{Error, Result};
use crate::types::{DecodeConfig, Elaboration, QAInstance, Source};

pub const DEFAULT_OPTIMIZER: &str = "adam";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Generator,
    Predictor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPair {
    pub prompt: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Generate {
        prompt: String,
        decode: DecodeConfig,
        seed: u64,
    },
    LogProb {
        prompt: String,
        text: String,
    },
    TrainGenerator {
        batch: Vec<TrainPair>,
        lr: f64,
        optimizer: String,
    },
    Score {
        question: String,
        candidates: Vec<String>,
        elaboration: Option<String>,
    },
    TrainPredictor {
        question: String,
        candidates: Vec<String>,
        elaboration: Option<String>,
        gold: usize,
        lr: f64,
        optimizer: String,
    },
    Digest {
        model: ModelRole,
    },
    Snapshot {
        model: ModelRole,
    },
    Restore {
        model: ModelRole,
        state: serde_json::Value,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texts: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_log_probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<serde_json::Value>,
}

impl Response {
    fn ok() -> Self {
        Self {
            ok: true,
            ..Default::default()
        }
    }

    fn failure(msg: impl ToString) -> Self {
        Self {
            ok: false,
            error: Some(msg.to_string()),
            ..Default::default()
        }
    }
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// A backend process driven over stdin/stdout.
///
/// One process can serve both roles; requests are serialized through a lock.
pub struct ProcessBackend {
    pipe: Mutex<Pipe>,
    optimizer: String,
}

impl ProcessBackend {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Backend(format!("failed to start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(Self {
            pipe: Mutex::new(Pipe {
                child,
                stdin,
                stdout,
            }),
            optimizer: DEFAULT_OPTIMIZER.to_string(),
        })
    }

    pub fn with_optimizer(mut self, optimizer: impl Into<String>) -> Self {
        self.optimizer = optimizer.into();
        self
    }

    pub fn call(&self, request: &Request) -> Result<Response> {
        let mut pipe = self.pipe.lock().map_err(|_| Error::Backend("backend lock poisoned".into()))?;
        let mut line = serde_json::to_string(request)?;
        line.push('\n');
        pipe.stdin
            .write_all(line.as_bytes())
            .and_then(|_| pipe.stdin.flush())
            .map_err(|e| Error::Backend(format!("write failed: {e}")))?;
        let mut reply = String::new();
        let n = pipe
            .stdout
            .read_line(&mut reply)
            .map_err(|e| Error::Backend(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(Error::Backend("backend closed its output".into()));
        }
        let resp: Response = serde_json::from_str(&reply)?;
        if !resp.ok {
            return Err(Error::Backend(resp.error.unwrap_or_else(|| "unspecified failure".into())));
        }
        Ok(resp)
    }

    fn missing(field: &str) -> Error {
        Error::Backend(format!("response lacks `{field}`"))
    }
}

impl Drop for Pipe {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl GeneratorModel for ProcessBackend {
    fn generate(&self, prompt: &str, cfg: &DecodeConfig, seed: u64) -> Result<Vec<String>> {
        self.call(&Request::Generate {
            prompt: prompt.to_string(),
            decode: *cfg,
            seed,
        })?
        .texts
        .ok_or_else(|| Self::missing("texts"))
    }

    fn step_log_probs(&self, prompt: &str, text: &str) -> Result<Vec<f64>> {
        self.call(&Request::LogProb {
            prompt: prompt.to_string(),
            text: text.to_string(),
        })?
        .step_log_probs
        .ok_or_else(|| Self::missing("step_log_probs"))
    }

    fn train_step(&mut self, batch: &[GeneratorExample], lr: f64) -> Result<f64> {
        let batch = batch
            .iter()
            .map(|(p, e)| TrainPair {
                prompt: p.clone(),
                target: e.text().to_string(),
            })
            .collect();
        self.call(&Request::TrainGenerator {
            batch,
            lr,
            optimizer: self.optimizer.clone(),
        })?
        .loss
        .ok_or_else(|| Self::missing("loss"))
    }

    fn digest(&self) -> String {
        self.call(&Request::Digest {
            model: ModelRole::Generator,
        })
        .ok()
        .and_then(|r| r.digest)
        .unwrap_or_default()
    }

    fn snapshot(&self) -> Result<serde_json::Value> {
        self.call(&Request::Snapshot {
            model: ModelRole::Generator,
        })?
        .state
        .ok_or_else(|| Self::missing("state"))
    }

    fn restore(&mut self, state: serde_json::Value) -> Result<()> {
        self.call(&Request::Restore {
            model: ModelRole::Generator,
            state,
        })
        .map(|_| ())
    }
}

impl PredictorModel for ProcessBackend {
    fn score(&self, q: &QAInstance, elaboration: Option<&str>) -> Result<Vec<f64>> {
        self.call(&Request::Score {
            question: q.question().to_string(),
            candidates: q.candidates().to_vec(),
            elaboration: elaboration.map(str::to_string),
        })?
        .scores
        .ok_or_else(|| Self::missing("scores"))
    }

    fn train_step(&mut self, q: &QAInstance, elaboration: Option<&str>, gold: usize, lr: f64) -> Result<f64> {
        self.call(&Request::TrainPredictor {
            question: q.question().to_string(),
            candidates: q.candidates().to_vec(),
            elaboration: elaboration.map(str::to_string),
            gold,
            lr,
            optimizer: self.optimizer.clone(),
        })?
        .loss
        .ok_or_else(|| Self::missing("loss"))
    }

    fn digest(&self) -> String {
        self.call(&Request::Digest {
            model: ModelRole::Predictor,
        })
        .ok()
        .and_then(|r| r.digest)
        .unwrap_or_default()
    }

    fn snapshot(&self) -> Result<serde_json::Value> {
        self.call(&Request::Snapshot {
            model: ModelRole::Predictor,
        })?
        .state
        .ok_or_else(|| Self::missing("state"))
    }

    fn restore(&mut self, state: serde_json::Value) -> Result<()> {
        self.call(&Request::Restore {
            model: ModelRole::Predictor,
            state,
        })
        .map(|_| ())
    }
}

/// Answers one request with in-process models.
pub fn handle(request: Request, generator: &mut dyn GeneratorModel, predictor: &mut dyn PredictorModel) -> Response {
    let out: Result<Response> = (|| {
        let mut r = Response::ok();
        match request {
            Request::Generate { prompt, decode, seed } => {
                decode.validate()?;
                r.texts = Some(generator.generate(&prompt, &decode, seed)?);
            }
            Request::LogProb { prompt, text } => {
                r.step_log_probs = Some(generator.step_log_probs(&prompt, &text)?);
            }
            Request::TrainGenerator { batch, lr, .. } => {
                let batch = batch
                    .into_iter()
                    .map(|p| Ok((p.prompt, Elaboration::from_text(p.target, Source::Teacher)?)))
                    .collect::<Result<Vec<_>>>()?;
                r.loss = Some(super::generator_train_step(generator, &batch, lr)?);
            }
            Request::Score {
                question,
                candidates,
                elaboration,
            } => {
                let q = QAInstance::new("adapter", question, candidates, None)?;
                r.scores = Some(predictor.score(&q, elaboration.as_deref())?);
            }
            Request::TrainPredictor {
                question,
                candidates,
                elaboration,
                gold,
                lr,
                ..
            } => {
                let q = QAInstance::new("adapter", question, candidates, Some(gold))?;
                r.loss = Some(predictor.train_step(&q, elaboration.as_deref(), gold, lr)?);
            }
            Request::Digest { model } => {
                r.digest = Some(match model {
                    ModelRole::Generator => generator.digest(),
                    ModelRole::Predictor => predictor.digest(),
                });
            }
            Request::Snapshot { model } => {
                r.state = Some(match model {
                    ModelRole::Generator => generator.snapshot()?,
                    ModelRole::Predictor => predictor.snapshot()?,
                });
            }
            Request::Restore { model, state } => match model {
                ModelRole::Generator => generator.restore(state)?,
                ModelRole::Predictor => predictor.restore(state)?,
            },
        }
        Ok(r)
    })();
    out.unwrap_or_else(Response::failure)
}

/// Serves requests from `input` until end of stream.
pub fn serve<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    generator: &mut dyn GeneratorModel,
    predictor: &mut dyn PredictorModel,
) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Request>(&line) {
            Ok(req) => handle(req, generator, predictor),
            Err(e) => Response::failure(format!("bad request: {e}")),
        };
        serde_json::to_writer(&mut output, &resp)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::bilinear::{BilinearConfig, BilinearPredictor};
    use crate::models::toy_lm::{ToyConditionalLM, ToyLmConfig, Vocabulary};

    #[test]
    fn request_wire_format() {
        let r = Request::Score {
            question: "q?".into(),
            candidates: vec!["a".into(), "b".into()],
            elaboration: None,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"op":"score","question":"q?","candidates":["a","b"],"elaboration":null}"#);
        assert_eq!(serde_json::from_str::<Request>(&s).unwrap(), r);
    }

    #[test]
    fn serve_answers_line_per_line() {
        let mut g = ToyConditionalLM::new(Vocabulary::from_texts(["a b"]), ToyLmConfig::default());
        let mut p = BilinearPredictor::new(BilinearConfig::default());
        let input = concat!(
            r#"{"op":"log_prob","prompt":"q","text":"a b"}"#,
            "\n",
            r#"{"op":"log_prob","prompt":"q","text":"zzz"}"#,
            "\n",
            "not json\n",
            r#"{"op":"score","question":"q?","candidates":["a","b"],"elaboration":"a"}"#,
            "\n"
        );
        let mut out = Vec::new();
        serve(input.as_bytes(), &mut out, &mut g, &mut p).unwrap();
        let lines: Vec<Response> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0].step_log_probs.as_ref().unwrap().len(), 2);
        assert!(!lines[1].ok && lines[1].error.as_ref().unwrap().contains("zzz"));
        assert!(!lines[2].ok);
        assert_eq!(lines[3].scores.as_ref().unwrap().len(), 2);
    }
}
