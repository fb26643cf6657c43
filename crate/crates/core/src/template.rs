//! Prompt templates: UTF-8 text with named `{placeholder}` slots.
//!
//! A template is validated against the placeholder set its call site
//! documents — unknown names are rejected up front, and a template missing a
//! required slot never reaches a provider. Substitution is a single pass, so
//! braces inside substituted values are never re-interpreted.

use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template uses unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("template is missing required placeholder {{{0}}}")]
    MissingPlaceholder(String),
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    text: String,
    placeholders: BTreeSet<String>,
}

/// Scan for `{name}` tokens where name is one or more of [a-z_]. Anything
/// else brace-like is literal text.
fn scan_placeholders(text: &str) -> Vec<(usize, usize, String)> {
    let bytes = text.as_bytes();
    let mut found = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_lowercase() || bytes[j] == b'_') {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'}' {
                found.push((i, j + 1, text[i + 1..j].to_string()));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    found
}

impl PromptTemplate {
    /// Validate `text` against the documented slots: every placeholder in the
    /// text must be allowed, every required placeholder must appear.
    pub fn new(
        text: impl Into<String>,
        allowed: &[&str],
        required: &[&str],
    ) -> Result<Self, TemplateError> {
        let text = text.into();
        let placeholders: BTreeSet<String> = scan_placeholders(&text)
            .into_iter()
            .map(|(_, _, name)| name)
            .collect();
        for name in &placeholders {
            if !allowed.contains(&name.as_str()) {
                return Err(TemplateError::UnknownPlaceholder(name.clone()));
            }
        }
        for name in required {
            if !placeholders.contains(*name) {
                return Err(TemplateError::MissingPlaceholder((*name).to_string()));
            }
        }
        Ok(PromptTemplate { text, placeholders })
    }

    pub fn has_placeholder(&self, name: &str) -> bool {
        self.placeholders.contains(name)
    }

    /// Substitute every placeholder occurrence. Values for placeholders the
    /// template does not contain are ignored.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut cursor = 0;
        for (start, end, name) in scan_placeholders(&self.text) {
            out.push_str(&self.text[cursor..start]);
            match values.iter().find(|(k, _)| *k == name) {
                Some((_, value)) => out.push_str(value),
                None => out.push_str(&self.text[start..end]),
            }
            cursor = end;
        }
        out.push_str(&self.text[cursor..]);
        out
    }
}
