//! Rendering of campaign tables, sweep curves, and n-gram rankings into
//! markdown / CSV / JSON, plus the run manifest that stamps every rendered
//! file.
//!
//! Rendering is pure: the same inputs produce byte-identical output, so
//! re-running a report over a finished run directory is a no-op diff. All
//! percentages are printed with two decimals, and the mean row is computed
//! from the unrounded values, not from the printed ones.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::laundering::CampaignResult;
use crate::similarity::SweepResult;
use crate::textstats::CueCategory;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("report has no rows")]
    EmptyReport,
    #[error("row {label} has {found} iterations, expected {expected}")]
    RowShapeMismatch {
        label: String,
        expected: usize,
        found: usize,
    },
    #[error("row {0} has no iterations")]
    MissingIterations(String),
    #[error("sweep and baseline have different lengths ({0} vs {1})")]
    SweepLengthMismatch(usize, usize),
    #[error("sweep and baseline disagree at index {index}: {ours} vs {baseline}")]
    SweepMisaligned {
        index: usize,
        ours: f64,
        baseline: f64,
    },
}

/// Identity of one run: what was configured, with which seeds, against
/// which models. Its digest stamps every rendered file, so outputs can
/// always be traced to their provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_digest: String,
    pub seeds: BTreeMap<String, u64>,
    pub model_ids: BTreeMap<String, String>,
    /// Unix seconds at run creation. Excluded from the identity digest so a
    /// rerun of the same configuration lands in the same run directory and
    /// reuses the manifest persisted there.
    pub created_unix: u64,
}

impl RunManifest {
    /// Digest over the full manifest, embedded in every rendered file.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("manifest serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Digest over everything except `created_unix`.
    pub fn identity_digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut identity = self.clone();
        identity.created_unix = 0;
        let bytes = serde_json::to_vec(&identity).expect("manifest serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Run directory name: short prefix of the identity digest.
    pub fn run_dir_name(&self) -> String {
        self.identity_digest()[..16].to_string()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

fn manifest_comment(manifest_hash: &str) -> String {
    format!("# manifest_hash: {manifest_hash}\n")
}

fn fmt2(value: f64) -> String {
    format!("{value:.2}")
}

/// Markdown and CSV views of the same campaign table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CampaignTable {
    pub markdown: String,
    pub csv: String,
}

/// Render labeled campaign results as one table. Every row must have the
/// same iteration count. Each row's peak ASR is bolded in the markdown
/// (ties resolve to the LAST occurrence, matching "kept improving" reading);
/// the CSV carries identical 2-decimal values without styling.
pub fn render_campaign(
    rows: &[(String, CampaignResult)],
    manifest_hash: &str,
) -> Result<CampaignTable, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::EmptyReport);
    }
    let iteration_count = rows[0].1.iterations.len();
    if iteration_count == 0 {
        return Err(ReportError::MissingIterations(rows[0].0.clone()));
    }
    for (label, result) in rows {
        if result.iterations.is_empty() {
            return Err(ReportError::MissingIterations(label.clone()));
        }
        if result.iterations.len() != iteration_count {
            return Err(ReportError::RowShapeMismatch {
                label: label.clone(),
                expected: iteration_count,
                found: result.iterations.len(),
            });
        }
    }

    // (label, baseline, [(se, pe, asr); iterations]) with the mean appended.
    let mut table_rows: Vec<(String, Option<f64>, Vec<(f64, f64, f64)>)> = rows
        .iter()
        .map(|(label, result)| {
            let triples = result
                .iterations
                .iter()
                .map(|m| (m.se_percent, m.pe_percent, m.asr_percent))
                .collect();
            (label.clone(), result.baseline_asr_percent, triples)
        })
        .collect();

    let n = rows.len() as f64;
    let mean_baseline = if table_rows.iter().all(|(_, b, _)| b.is_some()) {
        Some(table_rows.iter().map(|(_, b, _)| b.unwrap()).sum::<f64>() / n)
    } else {
        None
    };
    let mean_triples: Vec<(f64, f64, f64)> = (0..iteration_count)
        .map(|i| {
            let (mut se, mut pe, mut asr) = (0.0, 0.0, 0.0);
            for (_, _, triples) in &table_rows {
                se += triples[i].0;
                pe += triples[i].1;
                asr += triples[i].2;
            }
            (se / n, pe / n, asr / n)
        })
        .collect();
    table_rows.push(("Mean".to_string(), mean_baseline, mean_triples));

    let mut header = String::from("| Model | Baseline ASR |");
    let mut rule = String::from("| --- | --- |");
    let mut csv_header = String::from("model,baseline_asr");
    for i in 1..=iteration_count {
        header.push_str(&format!(" SE {i} | PE {i} | ASR {i} |"));
        rule.push_str(" --- | --- | --- |");
        csv_header.push_str(&format!(",se_{i},pe_{i},asr_{i}"));
    }

    let mut markdown = format!("{header}\n{rule}\n");
    let mut csv = manifest_comment(manifest_hash);
    csv.push_str(&csv_header);
    csv.push('\n');

    for (label, baseline, triples) in &table_rows {
        // Peak ASR cell; on ties the last occurrence wins.
        let mut peak = 0usize;
        for (i, t) in triples.iter().enumerate() {
            if t.2 >= triples[peak].2 {
                peak = i;
            }
        }
        let baseline_md = baseline.map(fmt2).unwrap_or_else(|| "—".to_string());
        let baseline_csv = baseline.map(fmt2).unwrap_or_default();
        let mut md_row = format!("| {label} | {baseline_md} |");
        let mut csv_row = format!("{label},{baseline_csv}");
        for (i, (se, pe, asr)) in triples.iter().enumerate() {
            let asr_text = fmt2(*asr);
            let asr_md = if i == peak {
                format!("**{asr_text}**")
            } else {
                asr_text.clone()
            };
            md_row.push_str(&format!(" {} | {} | {} |", fmt2(*se), fmt2(*pe), asr_md));
            csv_row.push_str(&format!(",{},{},{}", fmt2(*se), fmt2(*pe), asr_text));
        }
        markdown.push_str(&md_row);
        markdown.push('\n');
        csv.push_str(&csv_row);
        csv.push('\n');
    }

    Ok(CampaignTable { markdown, csv })
}

/// Render a threshold sweep as CSV, optionally side by side with a second
/// corpus's sweep over the exact same threshold sequence.
pub fn render_sweep(
    sweep: &SweepResult,
    baseline: Option<&SweepResult>,
    manifest_hash: &str,
) -> Result<String, ReportError> {
    if let Some(other) = baseline {
        if other.records.len() != sweep.records.len() {
            return Err(ReportError::SweepLengthMismatch(
                sweep.records.len(),
                other.records.len(),
            ));
        }
        for (index, (a, b)) in sweep.records.iter().zip(&other.records).enumerate() {
            if a.threshold != b.threshold {
                return Err(ReportError::SweepMisaligned {
                    index,
                    ours: a.threshold,
                    baseline: b.threshold,
                });
            }
        }
    }

    let mut csv = manifest_comment(manifest_hash);
    csv.push_str("threshold,unique_fraction,duplicate_fraction,group_count");
    if baseline.is_some() {
        csv.push_str(",baseline_unique_fraction,baseline_duplicate_fraction,baseline_group_count");
    }
    csv.push('\n');
    for (index, record) in sweep.records.iter().enumerate() {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{}",
            record.threshold,
            record.unique_fraction(),
            record.duplicate_fraction(),
            record.group_count
        ));
        if let Some(other) = baseline {
            let b = &other.records[index];
            csv.push_str(&format!(
                ",{:.6},{:.6},{}",
                b.unique_fraction(),
                b.duplicate_fraction(),
                b.group_count
            ));
        }
        csv.push('\n');
    }
    Ok(csv)
}

/// CSV and JSON views of ranked, cue-tagged n-gram tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramReport {
    pub csv: String,
    pub json: String,
}

#[derive(Serialize)]
struct NGramRow {
    rank: usize,
    phrase: String,
    count: u64,
    category: Option<CueCategory>,
}

#[derive(Serialize)]
struct NGramSection {
    n: usize,
    rows: Vec<NGramRow>,
}

/// Top-k rows of each table (one section per n, in input order) with cue
/// categories attached. Tables shorter than k emit what they have.
pub fn render_ngrams(
    tables: &[crate::textstats::NGramTable],
    lexicon: &crate::textstats::CueLexicon,
    k: usize,
    manifest_hash: &str,
) -> Result<NGramReport, ReportError> {
    if k == 0 {
        return Err(ReportError::EmptyReport);
    }
    let mut csv = manifest_comment(manifest_hash);
    csv.push_str("n,rank,phrase,count,category\n");
    let mut sections = Vec::with_capacity(tables.len());
    for table in tables {
        let tagged = crate::textstats::tag_cues(&crate::textstats::top_k(table, k), lexicon);
        let mut rows = Vec::with_capacity(tagged.len());
        for (i, (phrase, count, category)) in tagged.into_iter().enumerate() {
            let category_text = match category {
                Some(CueCategory::Inherent) => "inherent",
                Some(CueCategory::Contextual) => "contextual",
                None => "",
            };
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                table.n,
                i + 1,
                phrase,
                count,
                category_text
            ));
            rows.push(NGramRow {
                rank: i + 1,
                phrase,
                count,
                category,
            });
        }
        sections.push(NGramSection { n: table.n, rows });
    }
    let json = serde_json::to_string_pretty(&sections).expect("sections serialize");
    Ok(NGramReport { csv, json })
}
