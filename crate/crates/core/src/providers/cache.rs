//! Content-addressed response cache and the retrying/caching client wrapper.
//!
//! Cache values are keyed by a hash of everything that can change the
//! response, so identical requests replay byte-identically without network.
//! Writes go through a temp file + rename; concurrent writers of the same
//! key race harmlessly because they write identical content.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::providers::{
    cache_key, embed_cache_key, ChatProvider, ChatRequest, ChatResponse, EmbeddingProvider,
    ProviderError, RateLimiter, RetryPolicy,
};
use crate::similarity::EmbeddingVector;

/// Content-addressed file store for chat responses and embedding vectors.
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, ProviderError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)
            .map_err(|e| ProviderError::Cache(format!("create {}: {e}", dir.display())))?;
        Ok(ResponseCache { dir })
    }

    fn entry_path(&self, kind: &str, key: &str) -> PathBuf {
        let shard = &key[..2.min(key.len())];
        self.dir.join(kind).join(shard).join(format!("{key}.json"))
    }

    fn read<T: serde::de::DeserializeOwned>(
        &self,
        path: &Path,
    ) -> Result<Option<T>, ProviderError> {
        match std::fs::read_to_string(path) {
            Ok(raw) => serde_json::from_str(&raw)
                .map(Some)
                .map_err(|e| ProviderError::Cache(format!("corrupt {}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(ProviderError::Cache(format!(
                "read {}: {e}",
                path.display()
            ))),
        }
    }

    fn write<T: serde::Serialize>(&self, path: &Path, value: &T) -> Result<(), ProviderError> {
        let parent = path.parent().expect("entry paths have parents");
        std::fs::create_dir_all(parent)
            .map_err(|e| ProviderError::Cache(format!("create {}: {e}", parent.display())))?;
        let payload = serde_json::to_vec(value)
            .map_err(|e| ProviderError::Cache(format!("serialize: {e}")))?;
        let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
        std::fs::write(&tmp, payload)
            .map_err(|e| ProviderError::Cache(format!("write {}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, path)
            .map_err(|e| ProviderError::Cache(format!("rename {}: {e}", path.display())))?;
        Ok(())
    }

    pub fn get_chat(&self, key: &str) -> Result<Option<ChatResponse>, ProviderError> {
        self.read(&self.entry_path("chat", key))
    }

    pub fn put_chat(&self, key: &str, response: &ChatResponse) -> Result<(), ProviderError> {
        self.write(&self.entry_path("chat", key), response)
    }

    pub fn get_embedding(&self, key: &str) -> Result<Option<Vec<f64>>, ProviderError> {
        self.read(&self.entry_path("embed", key))
    }

    pub fn put_embedding(&self, key: &str, values: &[f64]) -> Result<(), ProviderError> {
        self.write(&self.entry_path("embed", key), &values)
    }
}

/// Runs a fallible provider call with exponential backoff on transient
/// errors; at most `1 + max_retries` attempts.
fn with_retry<T>(
    policy: &RetryPolicy,
    mut call: impl FnMut() -> Result<T, ProviderError>,
) -> Result<T, ProviderError> {
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        match call() {
            Ok(value) => return Ok(value),
            Err(e) if e.is_transient() => {
                if attempts > policy.max_retries {
                    return Err(ProviderError::RetriesExhausted {
                        attempts,
                        last: e.to_string(),
                    });
                }
                let delay = policy.delay_for(attempts);
                if !delay.is_zero() {
                    tracing::warn!(attempt = attempts, ?delay, error = %e, "transient provider failure, backing off");
                    std::thread::sleep(delay);
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// The standard client stack: optional disk cache, retry policy, optional
/// rate limiter, any inner [`ChatProvider`].
pub struct CachedClient {
    inner: Arc<dyn ChatProvider>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    limiter: Option<Arc<RateLimiter>>,
    name: String,
}

impl CachedClient {
    pub fn new(inner: Arc<dyn ChatProvider>) -> Self {
        let name = format!("cached({})", inner.name());
        CachedClient {
            inner,
            cache: None,
            retry: RetryPolicy::default(),
            limiter: None,
            name,
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = Some(limiter);
        self
    }
}

impl ChatProvider for CachedClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        let key = cache_key(request);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get_chat(&key)? {
                return Ok(hit);
            }
        }
        let response = with_retry(&self.retry, || {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            self.inner.complete(request)
        })?;
        if let Some(cache) = &self.cache {
            cache.put_chat(&key, &response)?;
        }
        Ok(response)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Embedding counterpart of [`CachedClient`]: per-text cache, retry on
/// transient failure, batch fan-out to the inner provider for misses only.
pub struct CachedEmbeddingProvider {
    inner: Arc<dyn EmbeddingProvider>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    name: String,
}

impl CachedEmbeddingProvider {
    pub fn new(inner: Arc<dyn EmbeddingProvider>) -> Self {
        let name = format!("cached({})", inner.name());
        CachedEmbeddingProvider {
            inner,
            cache: None,
            retry: RetryPolicy::default(),
            name,
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

impl EmbeddingProvider for CachedEmbeddingProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::InvalidRequest(
                "embed called with no texts".into(),
            ));
        }
        let mut results: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];
        let mut miss_indices = Vec::new();
        if let Some(cache) = &self.cache {
            for (i, text) in texts.iter().enumerate() {
                let key = embed_cache_key(self.inner.name(), text);
                match cache.get_embedding(&key)? {
                    Some(values) => {
                        results[i] = Some(EmbeddingVector::new(values).map_err(|e| {
                            ProviderError::Cache(format!("cached vector for {key}: {e}"))
                        })?);
                    }
                    None => miss_indices.push(i),
                }
            }
        } else {
            miss_indices = (0..texts.len()).collect();
        }

        if !miss_indices.is_empty() {
            let miss_texts: Vec<String> =
                miss_indices.iter().map(|&i| texts[i].clone()).collect();
            let fresh = with_retry(&self.retry, || self.inner.embed(&miss_texts))?;
            if fresh.len() != miss_texts.len() {
                return Err(ProviderError::Protocol(format!(
                    "provider returned {} vectors for {} texts",
                    fresh.len(),
                    miss_texts.len()
                )));
            }
            for (&i, vector) in miss_indices.iter().zip(fresh) {
                if let Some(cache) = &self.cache {
                    let key = embed_cache_key(self.inner.name(), &texts[i]);
                    cache.put_embedding(&key, &vector.values)?;
                }
                results[i] = Some(vector);
            }
        }

        let vectors: Vec<EmbeddingVector> =
            results.into_iter().map(|v| v.expect("all slots filled")).collect();
        let dim = vectors[0].dim;
        if let Some(bad) = vectors.iter().position(|v| v.dim != dim) {
            return Err(ProviderError::Protocol(format!(
                "ragged embedding dimensions: vector {bad} has dim {} instead of {dim}",
                vectors[bad].dim
            )));
        }
        Ok(vectors)
    }

    fn name(&self) -> &str {
        &self.name
    }
}
