use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DecodeConfig, QAInstance};

pub struct TeacherRequest<'a> {
    pub instance: &'a QAInstance,
    pub prompt: &'a str,
    pub n: usize,
    pub decode: &'a DecodeConfig,
}

/// Source of teacher elaborations.
pub trait TeacherClient: Send + Sync {
    /// Up to `request.n` continuations of the prompt. Texts may be blank or repeated.
    fn sample(&self, request: &TeacherRequest<'_>) -> Result<Vec<String>>;
}

/// Scripted teacher: returns the first `n` scripted texts for a question.
#[derive(Debug, Default)]
pub struct MockTeacher {
    scripts: HashMap<String, Vec<String>>,
    available: AtomicBool,
    calls: AtomicUsize,
}

impl MockTeacher {
    /// `scripts` maps question text to its scripted continuations.
    pub fn new(scripts: HashMap<String, Vec<String>>) -> Self {
        Self {
            scripts,
            available: AtomicBool::new(true),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn script(&self, question: &str) -> &[String] {
        self.scripts.get(question).map_or(&[], Vec::as_slice)
    }

    pub fn set_available(&self, up: bool) {
        self.available.store(up, Ordering::SeqCst);
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl TeacherClient for MockTeacher {
    fn sample(&self, request: &TeacherRequest<'_>) -> Result<Vec<String>> {
        if !self.available.load(Ordering::SeqCst) {
            return Err(Error::TeacherUnavailable {
                instance_id: request.instance.id().to_string(),
                reason: "mock teacher switched off".into(),
            });
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self
            .script(request.instance.question())
            .iter()
            .take(request.n)
            .cloned()
            .collect())
    }
}

/// Token bucket refilled continuously at `per_minute / 60` tokens per second.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    pub fn per_minute(per_minute: f64, now: Instant) -> Self {
        let capacity = per_minute.max(1.0);
        Self {
            capacity,
            per_second: per_minute / 60.0,
            tokens: capacity,
            last: now,
        }
    }

    /// Takes one token at `now`, or returns how long to wait before one is available.
    pub fn try_take(&mut self, now: Instant) -> std::result::Result<(), Duration> {
        let elapsed = now.saturating_duration_since(self.last).as_secs_f64();
        self.tokens = (self.tokens + elapsed * self.per_second).min(self.capacity);
        self.last = now;
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - self.tokens) / self.per_second))
        }
    }

    pub fn take_blocking(&mut self) {
        while let Err(wait) = self.try_take(Instant::now()) {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpTeacherConfig {
    /// Completions endpoint, e.g. `https://host/v1/completions`.
    pub endpoint: String,
    pub model: Option<String>,
    /// Environment variable holding the bearer token.
    pub credential_env: String,
    pub requests_per_minute: f64,
    pub timeout_secs: u64,
}

impl Default for HttpTeacherConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: None,
            credential_env: "ELAB_TEACHER_API_KEY".into(),
            requests_per_minute: 60.0,
            timeout_secs: 60,
        }
    }
}

/// Client for an OpenAI-style completions endpoint.
///
/// Sends `{model, prompt, n, top_p, temperature, max_tokens, stop}` and reads
/// `choices[].text`.
pub struct HttpTeacher {
    config: HttpTeacherConfig,
    agent: ureq::Agent,
    credential: Option<String>,
    bucket: Mutex<TokenBucket>,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

impl HttpTeacher {
    pub fn new(config: HttpTeacherConfig) -> Result<Self> {
        if config.endpoint.is_empty() {
            return Err(Error::config("teacher endpoint is empty"));
        }
        if config.requests_per_minute.is_nan() || config.requests_per_minute <= 0.0 {
            return Err(Error::config("requests_per_minute must be positive"));
        }
        let credential = std::env::var(&config.credential_env).ok();
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        let bucket = Mutex::new(TokenBucket::per_minute(config.requests_per_minute, Instant::now()));
        Ok(Self {
            config,
            agent,
            credential,
            bucket,
        })
    }
}

impl TeacherClient for HttpTeacher {
    fn sample(&self, request: &TeacherRequest<'_>) -> Result<Vec<String>> {
        self.bucket
            .lock()
            .map_err(|_| Error::Backend("rate limiter poisoned".into()))?
            .take_blocking();
        let mut body = serde_json::json!({
            "prompt": request.prompt,
            "n": request.n,
            "top_p": request.decode.p,
            "temperature": request.decode.temperature,
            "max_tokens": request.decode.max_tokens,
            "stop": ["\n"],
        });
        if let Some(m) = &self.config.model {
            body["model"] = serde_json::Value::String(m.clone());
        }
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.credential {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let unavailable = |reason: String| Error::TeacherUnavailable {
            instance_id: request.instance.id().to_string(),
            reason,
        };
        let resp = req.send_json(body).map_err(|e| unavailable(e.to_string()))?;
        let parsed: Completion = resp.into_json().map_err(|e| unavailable(format!("bad response: {e}")))?;
        Ok(parsed.choices.into_iter().map(|c| c.text).collect())
    }
}
