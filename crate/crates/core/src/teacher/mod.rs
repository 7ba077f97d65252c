//! Teacher sampling: prompt construction, clients and the persistent cache.

pub mod cache;
pub mod client;
pub mod prompt;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::GeneratorExample;
use crate::types::{DecodeConfig, ElaborationPool, PoolRole, QAInstance};

pub use cache::{AppendOutcome, CacheRecord, TeacherCache};
pub use client::{HttpTeacher, HttpTeacherConfig, MockTeacher, TeacherClient, TeacherRequest, TokenBucket};
pub use prompt::{Demonstration, PromptTemplate, PLACEHOLDER};

/// Result of fetching one teacher pool.
#[derive(Debug, Clone, PartialEq)]
pub struct FetchOutcome {
    pub pool: ElaborationPool,
    /// Texts returned by the client on this call.
    pub sampled: usize,
    pub duplicates: usize,
    pub blank: usize,
    /// Set when the pool holds fewer than the requested number of elaborations.
    pub partial: bool,
}

/// Where teacher pools come from: a cache, optionally backed by a live client.
pub struct TeacherSource<'a> {
    pub dataset: String,
    pub template: PromptTemplate,
    pub cache: TeacherCache,
    pub client: Option<&'a dyn TeacherClient>,
    pub decode: DecodeConfig,
}

impl<'a> TeacherSource<'a> {
    pub fn new(dataset: impl Into<String>, template: PromptTemplate, cache: TeacherCache, decode: DecodeConfig) -> Self {
        Self {
            dataset: dataset.into(),
            template,
            cache,
            client: None,
            decode,
        }
    }

    pub fn with_client(mut self, client: &'a dyn TeacherClient) -> Self {
        self.client = Some(client);
        self
    }

    pub fn fetch(&mut self, q: &QAInstance, n_teacher: usize) -> Result<FetchOutcome> {
        fetch_teacher_pool(
            self.client,
            &mut self.cache,
            &self.dataset,
            &self.template,
            q,
            n_teacher,
            &self.decode,
        )
    }

    pub fn fetch_all(&mut self, instances: &[QAInstance], n_teacher: usize) -> Vec<Result<FetchOutcome>> {
        fetch_teacher_pools(
            self.client,
            &mut self.cache,
            &self.dataset,
            &self.template,
            instances,
            n_teacher,
            &self.decode,
        )
    }
}

fn pool_from_cache(cache: &TeacherCache, dataset: &str, q: &QAInstance, n_teacher: usize) -> ElaborationPool {
    let cached = cache.get(dataset, q.id());
    let take = cached.len().min(n_teacher);
    ElaborationPool::new(q.id(), cached[..take].to_vec(), PoolRole::TeacherPool)
}

fn shortfall(cache: &TeacherCache, dataset: &str, q: &QAInstance, n_teacher: usize) -> usize {
    n_teacher.saturating_sub(cache.get(dataset, q.id()).len())
}

fn request_texts(
    client: Option<&dyn TeacherClient>,
    template: &PromptTemplate,
    q: &QAInstance,
    n: usize,
    decode: &DecodeConfig,
) -> Result<Vec<String>> {
    let client = client.ok_or_else(|| Error::TeacherUnavailable {
        instance_id: q.id().to_string(),
        reason: "no teacher client configured".into(),
    })?;
    let prompt = template.render(q)?;
    let mut decode = *decode;
    decode.n_samples = n;
    client.sample(&TeacherRequest {
        instance: q,
        prompt: &prompt,
        n,
        decode: &decode,
    })
}

fn settle(
    cache: &mut TeacherCache,
    dataset: &str,
    q: &QAInstance,
    n_teacher: usize,
    decode: &DecodeConfig,
    texts: Result<Vec<String>>,
) -> Result<FetchOutcome> {
    let (sampled, appended) = match texts {
        Ok(texts) => (texts.len(), cache.append(dataset, q.id(), &texts, decode)?),
        Err(err @ (Error::TeacherUnavailable { .. } | Error::Backend(_))) => {
            if cache.get(dataset, q.id()).is_empty() {
                return Err(match err {
                    Error::TeacherUnavailable { .. } => err,
                    other => Error::TeacherUnavailable {
                        instance_id: q.id().to_string(),
                        reason: other.to_string(),
                    },
                });
            }
            warn!("teacher unavailable for {}; using partial cached pool", q.id());
            (0, AppendOutcome::default())
        }
        Err(other) => return Err(other),
    };
    let pool = pool_from_cache(cache, dataset, q, n_teacher);
    let partial = pool.len() < n_teacher;
    if partial {
        warn!("teacher pool for {} has {} of {} elaborations", q.id(), pool.len(), n_teacher);
    }
    Ok(FetchOutcome {
        pool,
        sampled,
        duplicates: appended.duplicates,
        blank: appended.blank,
        partial,
    })
}

/// The teacher pool for `q`, sampling only the shortfall beyond what is cached.
pub fn fetch_teacher_pool(
    client: Option<&dyn TeacherClient>,
    cache: &mut TeacherCache,
    dataset: &str,
    template: &PromptTemplate,
    q: &QAInstance,
    n_teacher: usize,
    decode: &DecodeConfig,
) -> Result<FetchOutcome> {
    if n_teacher == 0 {
        return Err(Error::config("n_teacher must be at least 1"));
    }
    let need = shortfall(cache, dataset, q, n_teacher);
    if need == 0 {
        return Ok(FetchOutcome {
            pool: pool_from_cache(cache, dataset, q, n_teacher),
            sampled: 0,
            duplicates: 0,
            blank: 0,
            partial: false,
        });
    }
    let texts = request_texts(client, template, q, need, decode);
    settle(cache, dataset, q, n_teacher, decode, texts)
}

/// Like [`fetch_teacher_pool`] for many instances. Client requests run
/// concurrently; cache appends happen afterwards, in instance order.
pub fn fetch_teacher_pools(
    client: Option<&dyn TeacherClient>,
    cache: &mut TeacherCache,
    dataset: &str,
    template: &PromptTemplate,
    instances: &[QAInstance],
    n_teacher: usize,
    decode: &DecodeConfig,
) -> Vec<Result<FetchOutcome>> {
    if n_teacher == 0 {
        return instances
            .iter()
            .map(|_| Err(Error::config("n_teacher must be at least 1")))
            .collect();
    }
    let needs: Vec<usize> = instances.iter().map(|q| shortfall(cache, dataset, q, n_teacher)).collect();
    let responses: Vec<Option<Result<Vec<String>>>> = instances
        .par_iter()
        .zip(needs.par_iter())
        .map(|(q, &need)| (need > 0).then(|| request_texts(client, template, q, need, decode)))
        .collect();
    instances
        .iter()
        .zip(responses)
        .map(|(q, resp)| match resp {
            None => Ok(FetchOutcome {
                pool: pool_from_cache(cache, dataset, q, n_teacher),
                sampled: 0,
                duplicates: 0,
                blank: 0,
                partial: false,
            }),
            Some(texts) => settle(cache, dataset, q, n_teacher, decode, texts),
        })
        .collect()
}

/// Every cached elaboration of `instances` as a (question, elaboration) pair, unfiltered.
pub fn naive_distill_corpus(cache: &TeacherCache, dataset: &str, instances: &[QAInstance]) -> Vec<GeneratorExample> {
    instances
        .iter()
        .flat_map(|q| {
            cache
                .get(dataset, q.id())
                .iter()
                .map(move |e| (q.question().to_string(), e.clone()))
        })
        .collect()
}
