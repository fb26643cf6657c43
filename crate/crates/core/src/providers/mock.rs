//! Scripted providers for deterministic offline tests.
//!
//! A chat script is a list of (fingerprint, response) entries. A fingerprint
//! may contain several `&&`-separated parts; an entry matches a request when
//! every part occurs as a substring of the request's concatenated message
//! contents (or the whole fingerprint equals the last user message). The
//! best match is the one with the most parts, then the longest fingerprint,
//! then the lexicographically smallest — so scripts can key on cumulative
//! prompt state (e.g. which failed revisions are present) without ambiguity.

use std::collections::{HashMap, VecDeque};
use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::providers::{
    ChatProvider, ChatRequest, ChatResponse, EmbeddingProvider, FinishReason, ProviderError,
    Usage,
};
use crate::similarity::EmbeddingVector;

fn default_finish_reason() -> FinishReason {
    FinishReason::Stop
}

/// One scripted response. `faults` injects that many transient failures
/// before the entry starts answering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub fingerprint: String,
    pub response: String,
    #[serde(default)]
    pub faults: u32,
    #[serde(default = "default_finish_reason")]
    pub finish_reason: FinishReason,
}

impl ScriptEntry {
    pub fn new(fingerprint: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptEntry {
            fingerprint: fingerprint.into(),
            response: response.into(),
            faults: 0,
            finish_reason: FinishReason::Stop,
        }
    }
}

struct MockEntry {
    entry: ScriptEntry,
    parts: Vec<String>,
    remaining_faults: AtomicU32,
    hits: AtomicU32,
}

/// Deterministic scripted chat backend; never touches the network.
pub struct MockChatProvider {
    name: String,
    entries: Vec<MockEntry>,
    fallback: Mutex<VecDeque<String>>,
    calls: AtomicU32,
}

impl MockChatProvider {
    pub fn new(name: impl Into<String>) -> Self {
        MockChatProvider {
            name: name.into(),
            entries: Vec::new(),
            fallback: Mutex::new(VecDeque::new()),
            calls: AtomicU32::new(0),
        }
    }

    pub fn script(self, fingerprint: impl Into<String>, response: impl Into<String>) -> Self {
        self.script_entry(ScriptEntry::new(fingerprint, response))
    }

    pub fn script_with_faults(
        self,
        fingerprint: impl Into<String>,
        response: impl Into<String>,
        faults: u32,
    ) -> Self {
        let mut entry = ScriptEntry::new(fingerprint, response);
        entry.faults = faults;
        self.script_entry(entry)
    }

    pub fn script_entry(mut self, entry: ScriptEntry) -> Self {
        let parts = entry
            .fingerprint
            .split("&&")
            .map(str::to_string)
            .collect();
        self.entries.push(MockEntry {
            remaining_faults: AtomicU32::new(entry.faults),
            hits: AtomicU32::new(0),
            parts,
            entry,
        });
        self
    }

    /// Queue a response served (once, in order) to requests no entry matches.
    pub fn push_fallback(self, response: impl Into<String>) -> Self {
        self.fallback
            .lock()
            .expect("fallback poisoned")
            .push_back(response.into());
        self
    }

    /// Load a script from JSONL lines of
    /// `{"fingerprint": …, "response": …, "faults": …, "finish_reason": …}`.
    pub fn from_jsonl(name: impl Into<String>, path: &Path) -> Result<Self, ProviderError> {
        let file = std::fs::File::open(path)
            .map_err(|e| ProviderError::Protocol(format!("open {}: {e}", path.display())))?;
        let mut provider = MockChatProvider::new(name);
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line =
                line.map_err(|e| ProviderError::Protocol(format!("read {}: {e}", path.display())))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(&line).map_err(|e| {
                ProviderError::Protocol(format!("script line {} of {}: {e}", i + 1, path.display()))
            })?;
            provider = provider.script_entry(entry);
        }
        Ok(provider)
    }

    pub fn total_calls(&self) -> u32 {
        self.calls.load(Ordering::SeqCst)
    }

    /// How many times the entry with this exact fingerprint answered
    /// (faulted attempts not counted).
    pub fn hits(&self, fingerprint: &str) -> u32 {
        self.entries
            .iter()
            .filter(|e| e.entry.fingerprint == fingerprint)
            .map(|e| e.hits.load(Ordering::SeqCst))
            .sum()
    }

    fn best_match(&self, request: &ChatRequest) -> Option<&MockEntry> {
        let last_user = request.last_user_message().unwrap_or("");
        let concatenated: String = request
            .messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        self.entries
            .iter()
            .filter(|e| {
                e.entry.fingerprint == last_user.trim()
                    || e.parts.iter().all(|p| concatenated.contains(p.as_str()))
            })
            .max_by(|a, b| {
                a.parts
                    .len()
                    .cmp(&b.parts.len())
                    .then(a.entry.fingerprint.len().cmp(&b.entry.fingerprint.len()))
                    // lexicographically smallest wins, so compare reversed
                    .then_with(|| b.entry.fingerprint.cmp(&a.entry.fingerprint))
            })
    }
}

impl ChatProvider for MockChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(entry) = self.best_match(request) {
            if entry
                .remaining_faults
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |f| f.checked_sub(1))
                .is_ok()
            {
                return Err(ProviderError::Transient(format!(
                    "scripted fault for {:?}",
                    entry.entry.fingerprint
                )));
            }
            entry.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(ChatResponse {
                text: entry.entry.response.clone(),
                finish_reason: entry.entry.finish_reason,
                usage: Usage::default(),
            });
        }
        if let Some(response) = self.fallback.lock().expect("fallback poisoned").pop_front() {
            return Ok(ChatResponse::stop(response));
        }
        let last = request.last_user_message().unwrap_or("").to_string();
        let truncated: String = last.chars().take(120).collect();
        Err(ProviderError::NoScriptedResponse(truncated))
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Scripted embedding backend: exact text → vector.
pub struct MockEmbeddingProvider {
    name: String,
    vectors: HashMap<String, Vec<f64>>,
    calls: AtomicU32,
}

impl MockEmbeddingProvider {
    pub fn new(name: impl Into<String>) -> Self {
        MockEmbeddingProvider {
            name: name.into(),
            vectors: HashMap::new(),
            calls: AtomicU32::new(0),
        }
    }

    pub fn with_vector(mut self, text: impl Into<String>, vector: Vec<f64>) -> Self {
        self.vectors.insert(text.into(), vector);
        self
    }

    /// Load vectors from JSONL lines of `{"text": …, "vector": [...]}`.
    pub fn from_jsonl(name: impl Into<String>, path: &Path) -> Result<Self, ProviderError> {
        #[derive(Deserialize)]
        struct Line {
            text: String,
            vector: Vec<f64>,
        }
        let file = std::fs::File::open(path)
            .map_err(|e| ProviderError::Protocol(format!("open {}: {e}", path.display())))?;
        let mut provider = MockEmbeddingProvider::new(name);
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line =
                line.map_err(|e| ProviderError::Protocol(format!("read {}: {e}", path.display())))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| {
                ProviderError::Protocol(format!("vector line {} of {}: {e}", i + 1, path.display()))
            })?;
            provider.vectors.insert(parsed.text, parsed.vector);
        }
        Ok(provider)
    }

    pub fn total_calls(&self) -> u32 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl EmbeddingProvider for MockEmbeddingProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::InvalidRequest(
                "embed called with no texts".into(),
            ));
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        texts
            .iter()
            .map(|t| {
                let raw = self
                    .vectors
                    .get(t)
                    .cloned()
                    .ok_or_else(|| ProviderError::NoScriptedResponse(t.clone()))?;
                EmbeddingVector::new(raw)
                    .map_err(|e| ProviderError::Protocol(format!("scripted vector: {e}")))
            })
            .collect()
    }

    fn name(&self) -> &str {
        &self.name
    }
}
