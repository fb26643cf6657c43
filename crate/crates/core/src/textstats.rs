//! N-gram frequency analysis over a corpus, with token filtering and
//! triggering-cue tagging against an operator-supplied lexicon.
//!
//! Filtering removes stopwords and instruction words BEFORE n-grams are
//! formed, so a filtered token never appears inside a higher-order n-gram.
//! N-gram windows never cross document boundaries.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, Corpus};

/// Default English stopword list (does not contain "without", which can be
/// part of a contextual cue phrase).
pub const DEFAULT_STOPWORDS: &str = include_str!("../assets/stopwords_en.txt");
/// The eight imperative words filtered from request datasets before counting.
pub const DEFAULT_INSTRUCTION_WORDS: &str = include_str!("../assets/instruction_words.txt");

#[derive(Debug, thiserror::Error)]
pub enum TextStatsError {
    #[error("n-gram order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad lexicon line {line} in {path}: {reason}")]
    BadLexiconLine {
        path: String,
        line: usize,
        reason: String,
    },
}

/// Token-filtering policy applied before n-gram formation.
#[derive(Debug, Clone, Default)]
pub struct FilterConfig {
    pub stopwords: HashSet<String>,
    pub instruction_words: HashSet<String>,
    pub strip_punctuation: bool,
}

impl FilterConfig {
    /// No filtering at all; punctuation retained.
    pub fn empty() -> Self {
        Self::default()
    }

    /// The shipped defaults: the embedded English stopword list, the eight
    /// instruction words, punctuation stripped.
    pub fn standard() -> Self {
        FilterConfig {
            stopwords: parse_token_set(DEFAULT_STOPWORDS),
            instruction_words: parse_token_set(DEFAULT_INSTRUCTION_WORDS),
            strip_punctuation: true,
        }
    }

    fn is_filtered(&self, token: &str) -> bool {
        self.stopwords.contains(token) || self.instruction_words.contains(token)
    }
}

fn parse_token_set(raw: &str) -> HashSet<String> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Load a one-token-per-line UTF-8 asset into a lowercase token set.
pub fn load_token_set(path: &Path) -> Result<HashSet<String>, TextStatsError> {
    let raw = std::fs::read_to_string(path).map_err(|source| TextStatsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_token_set(&raw))
}

/// N-gram counts over a corpus. Keys are exactly `n` space-separated tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NGramTable {
    pub n: usize,
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

/// Cue class per the two-tier reading of triggering language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CueCategory {
    /// Overtly negative in any context ("commit suicide").
    Inherent,
    /// Signals harm only in context ("without getting caught").
    Contextual,
}

impl std::str::FromStr for CueCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inherent" => Ok(Self::Inherent),
            "contextual" => Ok(Self::Contextual),
            other => Err(format!("unknown cue category {other:?}")),
        }
    }
}

impl std::fmt::Display for CueCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Inherent => write!(f, "inherent"),
            Self::Contextual => write!(f, "contextual"),
        }
    }
}

/// Operator-supplied phrase → category map; phrases stored normalized.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueLexicon {
    pub entries: BTreeMap<String, CueCategory>,
}

impl CueLexicon {
    pub fn lookup(&self, phrase: &str) -> Option<CueCategory> {
        self.entries.get(phrase).copied()
    }
}

/// Parse a lexicon from `phrase<TAB>category` lines. Blank lines and lines
/// starting with `#` are skipped.
pub fn load_cue_lexicon(path: &Path) -> Result<CueLexicon, TextStatsError> {
    let path_str = path.display().to_string();
    let raw = std::fs::read_to_string(path).map_err(|source| TextStatsError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut entries = BTreeMap::new();
    for (i, line) in raw.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (phrase, category) =
            trimmed
                .split_once('\t')
                .ok_or_else(|| TextStatsError::BadLexiconLine {
                    path: path_str.clone(),
                    line: i + 1,
                    reason: "expected `phrase<TAB>category`".to_string(),
                })?;
        let category: CueCategory =
            category
                .parse()
                .map_err(|reason| TextStatsError::BadLexiconLine {
                    path: path_str.clone(),
                    line: i + 1,
                    reason,
                })?;
        entries.insert(normalize(phrase), category);
    }
    Ok(CueLexicon { entries })
}

/// Replace punctuation with spaces, keeping hyphens and apostrophes that sit
/// strictly inside a word ("step-by-step", "don't").
fn strip_punctuation(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            out.push(c);
        } else if (c == '-' || c == '\'')
            && i > 0
            && chars[i - 1].is_alphanumeric()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            out.push(c);
        } else {
            out.push(' ');
        }
    }
    out
}

/// Split one document into the token stream n-grams are formed over.
pub fn tokenize(text: &str, filter: &FilterConfig) -> Vec<String> {
    let lowered = text.to_lowercase();
    let stripped = if filter.strip_punctuation {
        strip_punctuation(&lowered)
    } else {
        lowered
    };
    stripped
        .split_whitespace()
        .filter(|t| !filter.is_filtered(t))
        .map(str::to_string)
        .collect()
}

/// Count n-grams across the corpus; windows stay within each data point.
pub fn extract_ngrams(
    corpus: &Corpus,
    n: usize,
    filter: &FilterConfig,
) -> Result<NGramTable, TextStatsError> {
    if n < 1 {
        return Err(TextStatsError::InvalidOrder(n));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0u64;
    for item in &corpus.items {
        let tokens = tokenize(&item.text, filter);
        if tokens.len() < n {
            continue;
        }
        for window in tokens.windows(n) {
            *counts.entry(window.join(" ")).or_insert(0) += 1;
            total += 1;
        }
    }
    Ok(NGramTable { n, counts, total })
}

/// Rank phrases by count descending, ties broken lexicographically ascending.
pub fn top_k(table: &NGramTable, k: usize) -> Vec<(String, u64)> {
    let mut ranked: Vec<(String, u64)> = table
        .counts
        .iter()
        .map(|(p, c)| (p.clone(), *c))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// Annotate ranked phrases with their lexicon category, preserving order.
pub fn tag_cues(
    ranked: &[(String, u64)],
    lexicon: &CueLexicon,
) -> Vec<(String, u64, Option<CueCategory>)> {
    ranked
        .iter()
        .map(|(phrase, count)| (phrase.clone(), *count, lexicon.lookup(phrase)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filter(stop: &[&str], instr: &[&str]) -> FilterConfig {
        FilterConfig {
            stopwords: stop.iter().map(|s| s.to_string()).collect(),
            instruction_words: instr.iter().map(|s| s.to_string()).collect(),
            strip_punctuation: true,
        }
    }

    #[test]
    fn filtering_happens_before_window_formation() {
        let corpus = Corpus::from_texts(
            "c",
            &["write a tutorial on bombs", "write a tutorial on bombs"],
        );
        let f = filter(&["a", "on"], &["write"]);
        let table = extract_ngrams(&corpus, 2, &f).unwrap();
        let expected: BTreeMap<String, u64> =
            [("tutorial bombs".to_string(), 2)].into_iter().collect();
        assert_eq!(table.counts, expected);
        assert_eq!(table.total, 2);
    }

    #[test]
    fn empty_corpus_gives_empty_table() {
        let corpus = Corpus {
            name: "c".into(),
            items: vec![],
        };
        for n in 1..=3 {
            let table = extract_ngrams(&corpus, n, &FilterConfig::empty()).unwrap();
            assert!(table.counts.is_empty());
            assert_eq!(table.total, 0);
        }
    }

    #[test]
    fn order_zero_rejected() {
        let corpus = Corpus::from_texts("c", &["a b"]);
        assert!(matches!(
            extract_ngrams(&corpus, 0, &FilterConfig::empty()),
            Err(TextStatsError::InvalidOrder(0))
        ));
    }

    #[test]
    fn windows_do_not_cross_documents() {
        let corpus = Corpus::from_texts("c", &["alpha beta", "gamma delta"]);
        let table = extract_ngrams(&corpus, 2, &FilterConfig::empty()).unwrap();
        assert_eq!(table.counts.get("beta gamma"), None);
        assert_eq!(table.counts.get("alpha beta"), Some(&1));
        assert_eq!(table.counts.get("gamma delta"), Some(&1));
    }

    #[test]
    fn count_sum_identity() {
        let corpus = Corpus::from_texts(
            "c",
            &["one two three four", "five six", "seven"],
        );
        for n in 1..=3usize {
            let table = extract_ngrams(&corpus, n, &FilterConfig::empty()).unwrap();
            let expected: u64 = [4usize, 2, 1]
                .iter()
                .map(|&len| len.saturating_sub(n - 1) as u64)
                .sum();
            assert_eq!(table.total, expected, "n={n}");
            assert_eq!(table.counts.values().sum::<u64>(), table.total);
        }
    }

    #[test]
    fn keys_have_exactly_n_tokens() {
        let corpus = Corpus::from_texts("c", &["a b c d e", "f g h"]);
        for n in 1..=3usize {
            let table = extract_ngrams(&corpus, n, &FilterConfig::empty()).unwrap();
            for key in table.counts.keys() {
                assert_eq!(key.split(' ').count(), n);
            }
        }
    }

    #[test]
    fn punctuation_stripping_keeps_intra_word_marks() {
        let f = FilterConfig {
            strip_punctuation: true,
            ..Default::default()
        };
        assert_eq!(tokenize("step-by-step guide.", &f), vec!["step-by-step", "guide"]);
        assert_eq!(tokenize("don't панic!", &f), vec!["don't", "панic"]);
        assert_eq!(tokenize("- leading, trailing- 'quoted'", &f), vec!["leading", "trailing", "quoted"]);
        assert_eq!(tokenize("a+b", &f), vec!["a", "b"]);
    }

    #[test]
    fn punctuation_kept_when_flag_off() {
        let f = FilterConfig::empty();
        assert_eq!(tokenize("guide.", &f), vec!["guide."]);
    }

    #[test]
    fn top_k_orders_and_breaks_ties() {
        let table = NGramTable {
            n: 1,
            counts: [
                ("c".to_string(), 1u64),
                ("b".to_string(), 2),
                ("a".to_string(), 2),
            ]
            .into_iter()
            .collect(),
            total: 5,
        };
        assert_eq!(
            top_k(&table, 2),
            vec![("a".to_string(), 2), ("b".to_string(), 2)]
        );
        assert_eq!(top_k(&table, 0), vec![]);
        assert_eq!(top_k(&table, 10).len(), 3);
    }

    #[test]
    fn tag_cues_annotates_known_phrases() {
        let lexicon = CueLexicon {
            entries: [
                ("commit suicide".to_string(), CueCategory::Inherent),
                ("without getting caught".to_string(), CueCategory::Contextual),
            ]
            .into_iter()
            .collect(),
        };
        let ranked = vec![
            ("commit suicide".to_string(), 9u64),
            ("without getting caught".to_string(), 4),
            ("tutorial".to_string(), 3),
        ];
        let tagged = tag_cues(&ranked, &lexicon);
        assert_eq!(tagged[0].2, Some(CueCategory::Inherent));
        assert_eq!(tagged[1].2, Some(CueCategory::Contextual));
        assert_eq!(tagged[2].2, None);
        let empty = tag_cues(&ranked, &CueLexicon::default());
        assert!(empty.iter().all(|(_, _, c)| c.is_none()));
    }

    #[test]
    fn lexicon_parses_tab_separated_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cues.tsv");
        std::fs::write(
            &path,
            "# comment\nCommit  Suicide\tinherent\nwithout getting caught\tContextual\n\n",
        )
        .unwrap();
        let lexicon = load_cue_lexicon(&path).unwrap();
        assert_eq!(
            lexicon.lookup("commit suicide"),
            Some(CueCategory::Inherent)
        );
        assert_eq!(
            lexicon.lookup("without getting caught"),
            Some(CueCategory::Contextual)
        );
        std::fs::write(&path, "no tab here\n").unwrap();
        assert!(matches!(
            load_cue_lexicon(&path),
            Err(TextStatsError::BadLexiconLine { line: 1, .. })
        ));
        std::fs::write(&path, "phrase\tweird\n").unwrap();
        assert!(load_cue_lexicon(&path).is_err());
    }

    #[test]
    fn standard_filter_contents() {
        let f = FilterConfig::standard();
        for word in ["write", "generate", "create", "develop", "use", "give", "provide", "people"] {
            assert!(f.instruction_words.contains(word), "missing {word}");
        }
        assert_eq!(f.instruction_words.len(), 8);
        assert!(f.stopwords.contains("the"));
        assert!(f.stopwords.contains("how"));
        assert!(
            !f.stopwords.contains("without"),
            "\"without\" must survive filtering: it heads contextual cue phrases"
        );
        assert!(f.strip_punctuation);
    }

    #[test]
    fn brute_force_oracle_single_document() {
        // Unfiltered extract_ngrams on one document must equal the naive
        // sliding-window enumeration.
        let text = "the quick brown fox jumps over the lazy dog the quick fox";
        let corpus = Corpus::from_texts("c", &[text]);
        for n in 1..=3usize {
            let table = extract_ngrams(&corpus, n, &FilterConfig::empty()).unwrap();
            let tokens: Vec<&str> = text.split(' ').collect();
            let mut expected: BTreeMap<String, u64> = BTreeMap::new();
            for i in 0..=tokens.len().saturating_sub(n) {
                *expected.entry(tokens[i..i + n].join(" ")).or_insert(0) += 1;
            }
            assert_eq!(table.counts, expected, "n={n}");
        }
    }
}
