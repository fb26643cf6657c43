//! Dataset ingestion: loading, text normalization, and seeded subsampling.
//!
//! A [`Corpus`] is an ordered list of [`DataPoint`]s read from CSV, JSONL, or
//! plain-line files. Normalized text is used for frequency and similarity
//! analysis; the original text is retained for prompt construction.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

/// Errors raised while loading or sampling corpora.
#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("invalid json on line {line} of {path}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("field {field:?} missing in row {row} of {path}")]
    MissingField {
        path: String,
        field: String,
        row: usize,
    },
    #[error("field {field:?} in row {row} of {path} is not a string")]
    NonStringField {
        path: String,
        field: String,
        row: usize,
    },
    #[error("row {row} of {path} is empty after normalization")]
    EmptyText { path: String, row: usize },
    #[error("corpus {name:?} loaded from {path} contains no data points")]
    EmptyCorpus { path: String, name: String },
    #[error("requested sample of {requested} from corpus of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("duplicate id {id:?} in corpus")]
    DuplicateId { id: String },
}

/// Input file layout for [`load_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// RFC-4180 CSV with a header row; `field` selects the column.
    Csv,
    /// One JSON object per line; `field` selects the key.
    Jsonl,
    /// One data point per line; `field` is ignored.
    Lines,
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            "lines" => Ok(Self::Lines),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

/// One harmful request or baseline question.
///
/// `text` is the normalized form used for analysis; `raw_text` is the
/// original wording used when building attack prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPoint {
    pub id: String,
    pub text: String,
    pub raw_text: String,
    pub source: String,
}

/// An ordered collection of data points; order is load order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub items: Vec<DataPoint>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Build a corpus directly from raw strings, normalizing each one.
    /// Intended for tests and programmatic use; ids are positional.
    pub fn from_texts(name: &str, texts: &[&str]) -> Self {
        let items = texts
            .iter()
            .enumerate()
            .map(|(i, t)| DataPoint {
                id: format!("{name}:{i}"),
                text: normalize(t),
                raw_text: (*t).to_string(),
                source: name.to_string(),
            })
            .collect();
        Corpus {
            name: name.to_string(),
            items,
        }
    }

    /// Check id uniqueness and non-empty normalized text.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = HashSet::new();
        for item in &self.items {
            if !seen.insert(item.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    id: item.id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Lowercase the input and collapse every whitespace run to a single space.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Load a corpus from disk. Ids are assigned positionally as `<name>:<index>`
/// and every data point's text is normalized; rows that normalize to the
/// empty string are rejected.
pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    field: &str,
    name: &str,
) -> Result<Corpus, CorpusError> {
    let path_str = path.display().to_string();
    let raw_rows: Vec<String> = match format {
        CorpusFormat::Csv => read_csv_rows(path, field)?,
        CorpusFormat::Jsonl => read_jsonl_rows(path, field)?,
        CorpusFormat::Lines => read_line_rows(path)?,
    };

    let mut items = Vec::with_capacity(raw_rows.len());
    for (i, raw) in raw_rows.into_iter().enumerate() {
        let text = normalize(&raw);
        if text.is_empty() {
            return Err(CorpusError::EmptyText {
                path: path_str.clone(),
                row: i,
            });
        }
        items.push(DataPoint {
            id: format!("{name}:{i}"),
            text,
            raw_text: raw,
            source: name.to_string(),
        });
    }

    if items.is_empty() {
        return Err(CorpusError::EmptyCorpus {
            path: path_str,
            name: name.to_string(),
        });
    }

    Ok(Corpus {
        name: name.to_string(),
        items,
    })
}

fn read_csv_rows(path: &Path, field: &str) -> Result<Vec<String>, CorpusError> {
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|source| CorpusError::Csv {
            path: path_str.clone(),
            source,
        })?;
    let headers = reader
        .headers()
        .map_err(|source| CorpusError::Csv {
            path: path_str.clone(),
            source,
        })?
        .clone();
    let col = headers
        .iter()
        .position(|h| h == field)
        .ok_or_else(|| CorpusError::MissingField {
            path: path_str.clone(),
            field: field.to_string(),
            row: 0,
        })?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| CorpusError::Csv {
            path: path_str.clone(),
            source,
        })?;
        let value = record.get(col).ok_or_else(|| CorpusError::MissingField {
            path: path_str.clone(),
            field: field.to_string(),
            row: i + 1,
        })?;
        rows.push(value.to_string());
    }
    Ok(rows)
}

fn read_jsonl_rows(path: &Path, field: &str) -> Result<Vec<String>, CorpusError> {
    let path_str = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path_str.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|source| CorpusError::Json {
                path: path_str.clone(),
                line: i + 1,
                source,
            })?;
        let field_value = value.get(field).ok_or_else(|| CorpusError::MissingField {
            path: path_str.clone(),
            field: field.to_string(),
            row: i,
        })?;
        let text = field_value
            .as_str()
            .ok_or_else(|| CorpusError::NonStringField {
                path: path_str.clone(),
                field: field.to_string(),
                row: i,
            })?;
        rows.push(text.to_string());
    }
    Ok(rows)
}

fn read_line_rows(path: &Path) -> Result<Vec<String>, CorpusError> {
    let path_str = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path_str.clone(),
            source,
        })?;
        if !line.trim().is_empty() {
            rows.push(line);
        }
    }
    Ok(rows)
}

/// Draw `n` items uniformly without replacement, preserving original order.
/// Deterministic for a given `(corpus, n, seed)`.
pub fn subsample(corpus: &Corpus, n: usize, seed: u64) -> Result<Corpus, CorpusError> {
    if n > corpus.len() {
        return Err(CorpusError::SampleTooLarge {
            requested: n,
            available: corpus.len(),
        });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, corpus.len(), n).into_vec();
    indices.sort_unstable();
    let items = indices
        .into_iter()
        .map(|i| corpus.items[i].clone())
        .collect();
    Ok(Corpus {
        name: corpus.name.clone(),
        items,
    })
}

/// Serialize a corpus as JSONL, one `{id, text, raw_text, source}` object per line.
pub fn write_corpus_jsonl(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let path_str = path.display().to_string();
    let mut file = std::fs::File::create(path).map_err(|source| CorpusError::Io {
        path: path_str.clone(),
        source,
    })?;
    for item in &corpus.items {
        let line = serde_json::to_string(item).expect("data point serializes");
        writeln!(file, "{line}").map_err(|source| CorpusError::Io {
            path: path_str.clone(),
            source,
        })?;
    }
    Ok(())
}

/// Read a corpus previously written by [`write_corpus_jsonl`]. The corpus
/// name defaults to the file stem unless `name` is given.
pub fn read_corpus_jsonl(path: &Path, name: Option<&str>) -> Result<Corpus, CorpusError> {
    let path_str = path.display().to_string();
    let derived = name
        .map(str::to_string)
        .or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| "corpus".to_string());
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path_str.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item: DataPoint =
            serde_json::from_str(&line).map_err(|source| CorpusError::Json {
                path: path_str.clone(),
                line: i + 1,
                source,
            })?;
        items.push(item);
    }
    if items.is_empty() {
        return Err(CorpusError::EmptyCorpus {
            path: path_str,
            name: derived,
        });
    }
    let corpus = Corpus {
        name: derived,
        items,
    };
    corpus.validate()?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_whitespace() {
        assert_eq!(normalize("A\t\tB "), "a b");
        assert_eq!(normalize("x"), "x");
        assert_eq!(normalize("Write a\nTutorial"), "write a tutorial");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("  \n\t "), "");
    }

    #[test]
    fn load_csv_selects_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("goals.csv");
        std::fs::write(
            &path,
            "goal,target\n\"Write a, thing\",t1\nSecond GOAL  here,t2\n",
        )
        .unwrap();
        let corpus = load_corpus(&path, CorpusFormat::Csv, "goal", "adv").unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.items[0].id, "adv:0");
        assert_eq!(corpus.items[0].text, "write a, thing");
        assert_eq!(corpus.items[0].raw_text, "Write a, thing");
        assert_eq!(corpus.items[1].text, "second goal here");
        assert_eq!(corpus.items[1].source, "adv");
    }

    #[test]
    fn load_csv_missing_field_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("goals.csv");
        std::fs::write(&path, "goal,target\na,b\n").unwrap();
        let err = load_corpus(&path, CorpusFormat::Csv, "behavior", "adv").unwrap_err();
        assert!(matches!(err, CorpusError::MissingField { .. }));
    }

    #[test]
    fn load_jsonl_selects_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.jsonl");
        std::fs::write(
            &path,
            "{\"question\": \"What is 2+2?\", \"answer\": \"4\"}\n{\"question\": \"Next ONE\"}\n",
        )
        .unwrap();
        let corpus = load_corpus(&path, CorpusFormat::Jsonl, "question", "gsm8k").unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.items[0].text, "what is 2+2?");
        assert_eq!(corpus.items[1].id, "gsm8k:1");
    }

    #[test]
    fn load_jsonl_missing_key_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.jsonl");
        std::fs::write(&path, "{\"question\": \"ok\"}\n{\"other\": 1}\n").unwrap();
        let err = load_corpus(&path, CorpusFormat::Jsonl, "question", "g").unwrap_err();
        assert!(matches!(err, CorpusError::MissingField { row: 1, .. }));
    }

    #[test]
    fn load_lines_one_per_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reqs.txt");
        std::fs::write(&path, "First line\n\nThird Line\n").unwrap();
        let corpus = load_corpus(&path, CorpusFormat::Lines, "", "custom").unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.items[1].text, "third line");
    }

    #[test]
    fn empty_file_is_empty_corpus_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "goal\n").unwrap();
        let err = load_corpus(&path, CorpusFormat::Csv, "goal", "adv").unwrap_err();
        assert!(matches!(err, CorpusError::EmptyCorpus { .. }));
    }

    #[test]
    fn missing_file_errors() {
        let err = load_corpus(
            Path::new("/nonexistent/file.csv"),
            CorpusFormat::Lines,
            "",
            "x",
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::Io { .. }));
    }

    #[test]
    fn whitespace_only_row_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reqs.csv");
        std::fs::write(&path, "goal\n\"  \"\n").unwrap();
        let err = load_corpus(&path, CorpusFormat::Csv, "goal", "x").unwrap_err();
        assert!(matches!(err, CorpusError::EmptyText { row: 0, .. }));
    }

    #[test]
    fn subsample_full_is_identity() {
        let corpus = Corpus::from_texts("c", &["one", "two", "three"]);
        let sampled = subsample(&corpus, 3, 7).unwrap();
        assert_eq!(sampled, corpus);
    }

    #[test]
    fn subsample_zero_is_empty() {
        let corpus = Corpus::from_texts("c", &["one", "two"]);
        let sampled = subsample(&corpus, 0, 7).unwrap();
        assert!(sampled.is_empty());
    }

    #[test]
    fn subsample_deterministic_per_seed() {
        let texts: Vec<String> = (0..50).map(|i| format!("item number {i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let corpus = Corpus::from_texts("c", &refs);
        let a = subsample(&corpus, 10, 42).unwrap();
        let b = subsample(&corpus, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = subsample(&corpus, 10, 43).unwrap();
        assert_ne!(a, c, "different seeds should give a different sample");
    }

    #[test]
    fn subsample_preserves_order() {
        let texts: Vec<String> = (0..30).map(|i| format!("t {i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let corpus = Corpus::from_texts("c", &refs);
        let sampled = subsample(&corpus, 12, 3).unwrap();
        let positions: Vec<usize> = sampled
            .items
            .iter()
            .map(|dp| corpus.items.iter().position(|x| x.id == dp.id).unwrap())
            .collect();
        let mut sorted = positions.clone();
        sorted.sort_unstable();
        assert_eq!(positions, sorted);
    }

    #[test]
    fn subsample_too_large_errors() {
        let corpus = Corpus::from_texts("c", &["one"]);
        let err = subsample(&corpus, 2, 0).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::SampleTooLarge {
                requested: 2,
                available: 1
            }
        ));
    }

    #[test]
    fn jsonl_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("raw.csv");
        std::fs::write(&src, "goal\nWrite  THE thing\nother goal\n").unwrap();
        let corpus = load_corpus(&src, CorpusFormat::Csv, "goal", "demo").unwrap();
        let out = dir.path().join("demo.jsonl");
        write_corpus_jsonl(&corpus, &out).unwrap();
        let reloaded = read_corpus_jsonl(&out, None).unwrap();
        assert_eq!(reloaded, corpus);
    }
}
