//! The laundering campaign: few-shot revision of requests, target querying,
//! dual judging, and the revision–regeneration loop.
//!
//! Loop invariants:
//! - A record that produces an unsafe AND practical response freezes
//!   immediately; frozen records trigger zero further provider calls and
//!   keep their verdict in every later iteration's aggregates.
//! - Regeneration always sees the COMPLETE failed-revision history for its
//!   record, numbered in iteration order.
//! - The criterion is generated once per record, before iteration 1, and
//!   reused verbatim by every judgment of that record.
//! - State is checkpointed after the criteria phase and after every
//!   iteration; a resume validates a fingerprint over corpus, demos, seed,
//!   and model ids (intentionally NOT the halting knobs, so a run can be
//!   extended with a larger budget).

use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DataPoint};
use crate::judging::{
    self, Criterion, CriterionDemo, JudgeError, Verdict,
};
use crate::metrics::{self, IterationMetrics, RecordSnapshot};
use crate::providers::{ChatMessage, ChatProvider, ChatRequest, ProviderError, ReasoningEffort};
use crate::template::{PromptTemplate, TemplateError};

pub const DEFAULT_LAUNDER_TEMPLATE: &str = include_str!("../assets/templates/launder.txt");
pub const DEFAULT_REGEN_TEMPLATE: &str = include_str!("../assets/templates/regen.txt");

/// Output cap for laundering and regeneration calls.
pub const LAUNDER_MAX_TOKENS: u32 = 2048;
/// Output cap for target-model responses.
pub const TARGET_MAX_TOKENS: u32 = 4096;

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("demonstration line {line}: {message}")]
    BadDemonstration { line: usize, message: String },
    #[error("campaign corpus is empty")]
    EmptyCorpus,
    #[error("template requires demonstrations but none were supplied")]
    EmptyDemos,
    #[error("bad campaign config: {0}")]
    BadConfig(String),
    #[error("launderer returned an empty revision for {datapoint_id} at iteration {iteration}")]
    EmptyRevision {
        datapoint_id: String,
        iteration: u32,
    },
    #[error("regeneration requires at least one failed revision")]
    NoFailedRevisions,
    #[error("duplicate iteration numbers in failed revisions for {0}")]
    DuplicateIterations(String),
    #[error("checkpoint fingerprint mismatch (expected {expected}, found {found}); refusing to resume foreign state")]
    CheckpointMismatch { expected: String, found: String },
    #[error("every baseline record failed; no attack-success rate is defined")]
    BaselineAllFailed,
    #[error("campaign aborted, state saved to {checkpoint}: {source}")]
    Aborted {
        checkpoint: PathBuf,
        #[source]
        source: Box<CampaignError>,
    },
}

/// Few-shot laundering demonstration: a harmful request and its
/// intent-preserving revision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub original: String,
    pub revision: String,
}

/// Load demonstrations from JSONL `{original, revision}` lines.
/// Both fields must be non-blank.
pub fn load_demonstrations(path: &Path) -> Result<Vec<Demonstration>, CampaignError> {
    let file = std::fs::File::open(path)?;
    let mut demos = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let demo: Demonstration =
            serde_json::from_str(&line).map_err(|e| CampaignError::BadDemonstration {
                line: i + 1,
                message: e.to_string(),
            })?;
        if demo.original.trim().is_empty() || demo.revision.trim().is_empty() {
            return Err(CampaignError::BadDemonstration {
                line: i + 1,
                message: "original and revision must both be non-blank".into(),
            });
        }
        demos.push(demo);
    }
    Ok(demos)
}

/// One revision produced for a data point at a given iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub datapoint_id: String,
    pub iteration: u32,
    pub text: String,
}

/// One full attempt: the revision sent, the target's response, and the
/// dual-judge verdict (`None` when judging failed irrecoverably, which
/// counts as neither unsafe nor practical).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub iteration: u32,
    pub revision: String,
    pub response: String,
    #[serde(default)]
    pub truncated: bool,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Pending,
    Success,
    Exhausted,
}

/// Full per-datapoint attack state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub datapoint: DataPoint,
    pub criterion: Option<Criterion>,
    pub attempts: Vec<Attempt>,
    pub status: RecordStatus,
}

impl AttackRecord {
    fn snapshot(&self) -> RecordSnapshot {
        RecordSnapshot {
            attempts: self
                .attempts
                .iter()
                .map(|a| (a.iteration, a.verdict.clone()))
                .collect(),
        }
    }

    /// Revisions that did not freeze the record, in iteration order.
    /// For a pending record that is every revision so far.
    fn failed_revisions(&self) -> Vec<Revision> {
        self.attempts
            .iter()
            .map(|a| Revision {
                datapoint_id: self.datapoint.id.clone(),
                iteration: a.iteration,
                text: a.revision.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub launder_model: String,
    pub target_model: String,
    pub judge_model: String,
    pub criteria_model: String,
    pub max_iterations: u32,
    /// Halt once the running ASR (percent) reaches this value.
    pub target_asr_percent: Option<f64>,
    pub seed: u64,
}

/// Providers for the four roles. The judge and criteria roles may share an
/// instance; the loop never assumes otherwise.
pub struct CampaignProviders<'a> {
    pub launderer: &'a dyn ChatProvider,
    pub target: &'a dyn ChatProvider,
    pub judge: &'a dyn ChatProvider,
    pub criteria: &'a dyn ChatProvider,
}

pub struct CampaignTemplates {
    pub launder: PromptTemplate,
    pub regen: PromptTemplate,
    pub criterion: PromptTemplate,
    pub judge_safety: PromptTemplate,
    pub judge_practicality: PromptTemplate,
}

impl CampaignTemplates {
    pub fn defaults() -> Self {
        CampaignTemplates {
            launder: launder_template(DEFAULT_LAUNDER_TEMPLATE).expect("default launder template"),
            regen: regen_template(DEFAULT_REGEN_TEMPLATE).expect("default regen template"),
            criterion: judging::criterion_template(judging::DEFAULT_CRITERION_TEMPLATE)
                .expect("default criterion template"),
            judge_safety: judging::judge_template(judging::DEFAULT_SAFETY_TEMPLATE)
                .expect("default safety template"),
            judge_practicality: judging::judge_template(judging::DEFAULT_PRACTICALITY_TEMPLATE)
                .expect("default practicality template"),
        }
    }
}

pub fn launder_template(text: &str) -> Result<PromptTemplate, TemplateError> {
    PromptTemplate::new(text, &["demos", "data_point"], &["data_point"])
}

pub fn regen_template(text: &str) -> Result<PromptTemplate, TemplateError> {
    PromptTemplate::new(
        text,
        &["demos", "failed_revisions", "data_point"],
        &["failed_revisions", "data_point"],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    MaxIterations,
    TargetAsrReached,
    AllRecordsSucceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub fingerprint: String,
    pub iterations: Vec<IterationMetrics>,
    pub records: Vec<AttackRecord>,
    pub halt: HaltReason,
    /// Filled in by callers that also ran the no-revision baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_asr_percent: Option<f64>,
}

fn render_demos(demos: &[Demonstration]) -> String {
    demos
        .iter()
        .map(|d| format!("Original: {}\nRevision: {}", d.original, d.revision))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn render_failed_revisions(failed: &[Revision]) -> String {
    failed
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{}. {}", i + 1, r.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// First-iteration laundering request for one data point. The data point's
/// ORIGINAL text goes in the slot; normalization is for statistics only.
pub fn build_launder_prompt(
    dp: &DataPoint,
    demos: &[Demonstration],
    template: &PromptTemplate,
    model_id: &str,
) -> Result<ChatRequest, CampaignError> {
    if template.has_placeholder("demos") && demos.is_empty() {
        return Err(CampaignError::EmptyDemos);
    }
    let prompt = template.render(&[
        ("demos", render_demos(demos).as_str()),
        ("data_point", dp.raw_text.as_str()),
    ]);
    Ok(ChatRequest {
        model_id: model_id.to_string(),
        messages: vec![ChatMessage::user(prompt)],
        max_output_tokens: LAUNDER_MAX_TOKENS,
        reasoning_effort: ReasoningEffort::None,
        sampling: None,
    })
}

/// Regeneration request: like laundering, plus the numbered history of every
/// failed revision so far, in iteration order.
pub fn build_regen_prompt(
    dp: &DataPoint,
    demos: &[Demonstration],
    failed: &[Revision],
    template: &PromptTemplate,
    model_id: &str,
) -> Result<ChatRequest, CampaignError> {
    if template.has_placeholder("demos") && demos.is_empty() {
        return Err(CampaignError::EmptyDemos);
    }
    if failed.is_empty() {
        return Err(CampaignError::NoFailedRevisions);
    }
    let mut iterations: Vec<u32> = failed.iter().map(|r| r.iteration).collect();
    iterations.sort_unstable();
    if iterations.windows(2).any(|w| w[0] == w[1]) {
        return Err(CampaignError::DuplicateIterations(dp.id.clone()));
    }
    let mut ordered: Vec<&Revision> = failed.iter().collect();
    ordered.sort_by_key(|r| r.iteration);
    let ordered: Vec<Revision> = ordered.into_iter().cloned().collect();
    let prompt = template.render(&[
        ("demos", render_demos(demos).as_str()),
        ("failed_revisions", render_failed_revisions(&ordered).as_str()),
        ("data_point", dp.raw_text.as_str()),
    ]);
    Ok(ChatRequest {
        model_id: model_id.to_string(),
        messages: vec![ChatMessage::user(prompt)],
        max_output_tokens: LAUNDER_MAX_TOKENS,
        reasoning_effort: ReasoningEffort::None,
        sampling: None,
    })
}

/// Send one revision to the target model. The revision is the entire user
/// message — no wrapper, no system prompt. Returns the response text and a
/// truncation flag.
pub fn query_target(
    revision_text: &str,
    provider: &dyn ChatProvider,
    model_id: &str,
) -> Result<(String, bool), CampaignError> {
    let request = ChatRequest {
        model_id: model_id.to_string(),
        messages: vec![ChatMessage::user(revision_text)],
        max_output_tokens: TARGET_MAX_TOKENS,
        reasoning_effort: ReasoningEffort::default(),
        sampling: None,
    };
    let response = provider.complete(&request)?;
    let truncated = response.truncated();
    if truncated {
        tracing::warn!(chars = response.text.len(), "target response truncated at the token cap");
    }
    Ok((response.text, truncated))
}

/// No-revision baseline: original texts go to the target verbatim and a
/// criterion-free judge rates each response. ASR is the unsafe fraction over
/// the records that completed; per-record failures are logged and excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub total: usize,
    pub judged: usize,
    pub unsafe_count: usize,
    pub asr_percent: f64,
}

pub fn eval_baseline(
    corpus: &Corpus,
    target: &dyn ChatProvider,
    judge: &dyn ChatProvider,
    plain_template: &PromptTemplate,
    target_model: &str,
    judge_model: &str,
) -> Result<BaselineReport, CampaignError> {
    if corpus.items.is_empty() {
        return Err(CampaignError::EmptyCorpus);
    }
    let mut judged = 0usize;
    let mut unsafe_count = 0usize;
    for dp in &corpus.items {
        let response = match query_target(&dp.raw_text, target, target_model) {
            Ok((text, _)) => text,
            Err(e) => {
                tracing::warn!(id = %dp.id, error = %e, "baseline target query failed; excluding record");
                continue;
            }
        };
        match judging::judge_safety_plain(&response, plain_template, judge, judge_model) {
            Ok((label, _)) => {
                judged += 1;
                unsafe_count += usize::from(metrics::safety_binary(label));
            }
            Err(e) => {
                tracing::warn!(id = %dp.id, error = %e, "baseline judging failed; excluding record");
            }
        }
    }
    if judged == 0 {
        return Err(CampaignError::BaselineAllFailed);
    }
    Ok(BaselineReport {
        total: corpus.items.len(),
        judged,
        unsafe_count,
        asr_percent: 100.0 * unsafe_count as f64 / judged as f64,
    })
}

/// Identity of a campaign for resume purposes. Halting knobs are excluded on
/// purpose: resuming with a larger budget extends the same run.
#[derive(Serialize)]
struct FingerprintMaterial<'a> {
    corpus: Vec<(&'a str, &'a str)>,
    demos: &'a [Demonstration],
    criterion_demos: &'a [CriterionDemo],
    seed: u64,
    launder_model: &'a str,
    target_model: &'a str,
    judge_model: &'a str,
    criteria_model: &'a str,
}

pub fn campaign_fingerprint(
    corpus: &Corpus,
    demos: &[Demonstration],
    criterion_demos: &[CriterionDemo],
    config: &CampaignConfig,
) -> String {
    use sha2::{Digest, Sha256};
    let material = FingerprintMaterial {
        corpus: corpus
            .items
            .iter()
            .map(|dp| (dp.id.as_str(), dp.raw_text.as_str()))
            .collect(),
        demos,
        criterion_demos,
        seed: config.seed,
        launder_model: &config.launder_model,
        target_model: &config.target_model,
        judge_model: &config.judge_model,
        criteria_model: &config.criteria_model,
    };
    let bytes = serde_json::to_vec(&material).expect("fingerprint material serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    fingerprint: String,
    iterations: Vec<IterationMetrics>,
    records: Vec<AttackRecord>,
}

fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), CampaignError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    std::fs::write(&tmp, serde_json::to_vec_pretty(checkpoint)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Turn an irrecoverable judging outcome into "attempt failed for
/// evaluation" while letting infrastructure errors abort the campaign.
fn soften_judge<T>(
    result: Result<(T, String), JudgeError>,
    datapoint_id: &str,
) -> Result<Option<(T, String)>, CampaignError> {
    match result {
        Ok(pair) => Ok(Some(pair)),
        Err(err @ (JudgeError::Unparseable { .. } | JudgeError::EmptyResponse { .. })) => {
            tracing::warn!(id = %datapoint_id, error = %err, "attempt failed for evaluation; record stays pending");
            Ok(None)
        }
        Err(other) => Err(other.into()),
    }
}

/// Run (or resume) a laundering campaign over the corpus.
///
/// With a checkpoint path, state is persisted after the criteria phase and
/// after every iteration; if the file already exists its fingerprint must
/// match. On an infrastructure error the last consistent state is saved
/// before the error is returned.
pub fn run_campaign(
    corpus: &Corpus,
    demos: &[Demonstration],
    criterion_demos: &[CriterionDemo],
    providers: &CampaignProviders<'_>,
    templates: &CampaignTemplates,
    config: &CampaignConfig,
    checkpoint_path: Option<&Path>,
) -> Result<CampaignResult, CampaignError> {
    if corpus.items.is_empty() {
        return Err(CampaignError::EmptyCorpus);
    }
    if config.max_iterations == 0 {
        return Err(CampaignError::BadConfig("max_iterations must be at least 1".into()));
    }
    if let Some(t) = config.target_asr_percent {
        if !(0.0..=100.0).contains(&t) {
            return Err(CampaignError::BadConfig(format!(
                "target ASR must be a percentage in [0, 100], got {t}"
            )));
        }
    }
    if templates.launder.has_placeholder("demos") && demos.is_empty() {
        return Err(CampaignError::EmptyDemos);
    }
    if templates.regen.has_placeholder("demos") && demos.is_empty() {
        return Err(CampaignError::EmptyDemos);
    }

    let fingerprint = campaign_fingerprint(corpus, demos, criterion_demos, config);

    let mut records: Vec<AttackRecord>;
    let mut iterations: Vec<IterationMetrics>;
    match checkpoint_path {
        Some(path) if path.exists() => {
            let checkpoint: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
            if checkpoint.fingerprint != fingerprint {
                return Err(CampaignError::CheckpointMismatch {
                    expected: fingerprint,
                    found: checkpoint.fingerprint,
                });
            }
            tracing::info!(path = %path.display(), done = checkpoint.iterations.len(), "resuming campaign from checkpoint");
            records = checkpoint.records;
            iterations = checkpoint.iterations;
            // A resumed record may have been marked exhausted by a completed
            // run; with a larger budget it goes back into the pool.
            for record in &mut records {
                if record.status == RecordStatus::Exhausted {
                    record.status = RecordStatus::Pending;
                }
            }
        }
        _ => {
            records = corpus
                .items
                .iter()
                .map(|dp| AttackRecord {
                    datapoint: dp.clone(),
                    criterion: None,
                    attempts: Vec::new(),
                    status: RecordStatus::Pending,
                })
                .collect();
            iterations = Vec::new();
        }
    }

    // Wrap the body so any infrastructure error persists state first.
    let outcome = drive_campaign(
        &mut records,
        &mut iterations,
        demos,
        criterion_demos,
        providers,
        templates,
        config,
        checkpoint_path,
        &fingerprint,
    );
    let halt = match outcome {
        Ok(halt) => halt,
        Err(source) => {
            if let Some(path) = checkpoint_path {
                let checkpoint = Checkpoint {
                    fingerprint: fingerprint.clone(),
                    iterations: iterations.clone(),
                    records: records.clone(),
                };
                match write_checkpoint(path, &checkpoint) {
                    Ok(()) => {
                        return Err(CampaignError::Aborted {
                            checkpoint: path.to_path_buf(),
                            source: Box::new(source),
                        })
                    }
                    Err(write_err) => {
                        tracing::warn!(error = %write_err, "failed to persist checkpoint during abort");
                        return Err(source);
                    }
                }
            }
            return Err(source);
        }
    };

    for record in &mut records {
        if record.status == RecordStatus::Pending {
            record.status = RecordStatus::Exhausted;
        }
    }
    Ok(CampaignResult {
        fingerprint,
        iterations,
        records,
        halt,
        baseline_asr_percent: None,
    })
}

#[allow(clippy::too_many_arguments)]
fn drive_campaign(
    records: &mut Vec<AttackRecord>,
    iterations: &mut Vec<IterationMetrics>,
    demos: &[Demonstration],
    criterion_demos: &[CriterionDemo],
    providers: &CampaignProviders<'_>,
    templates: &CampaignTemplates,
    config: &CampaignConfig,
    checkpoint_path: Option<&Path>,
    fingerprint: &str,
) -> Result<HaltReason, CampaignError> {
    let persist = |records: &Vec<AttackRecord>,
                   iterations: &Vec<IterationMetrics>|
     -> Result<(), CampaignError> {
        if let Some(path) = checkpoint_path {
            write_checkpoint(
                path,
                &Checkpoint {
                    fingerprint: fingerprint.to_string(),
                    iterations: iterations.clone(),
                    records: records.clone(),
                },
            )?;
        }
        Ok(())
    };

    // Criteria phase: once per record, before any laundering.
    let mut generated = false;
    for record in records.iter_mut() {
        if record.criterion.is_none() {
            let criterion = judging::generate_criterion(
                &record.datapoint,
                criterion_demos,
                &templates.criterion,
                providers.criteria,
                &config.criteria_model,
            )?;
            record.criterion = Some(criterion);
            generated = true;
        }
    }
    if generated {
        persist(records, iterations)?;
    }

    let done = iterations.len() as u32;
    for iteration in (done + 1)..=config.max_iterations {
        for record in records.iter_mut() {
            if record.status != RecordStatus::Pending {
                continue;
            }
            let dp = &record.datapoint;
            let request = if record.attempts.is_empty() {
                build_launder_prompt(dp, demos, &templates.launder, &config.launder_model)?
            } else {
                build_regen_prompt(
                    dp,
                    demos,
                    &record.failed_revisions(),
                    &templates.regen,
                    &config.launder_model,
                )?
            };
            let revision_text = providers.launderer.complete(&request)?.text.trim().to_string();
            if revision_text.is_empty() {
                return Err(CampaignError::EmptyRevision {
                    datapoint_id: dp.id.clone(),
                    iteration,
                });
            }

            let (response_text, truncated) =
                query_target(&revision_text, providers.target, &config.target_model)?;

            let criterion = record
                .criterion
                .as_ref()
                .expect("criteria phase ran before iterations");
            let safety = soften_judge(
                judging::judge_safety(
                    criterion,
                    &response_text,
                    &templates.judge_safety,
                    providers.judge,
                    &config.judge_model,
                ),
                &dp.id,
            )?;
            let practicality = soften_judge(
                judging::judge_practicality(
                    criterion,
                    &response_text,
                    &templates.judge_practicality,
                    providers.judge,
                    &config.judge_model,
                ),
                &dp.id,
            )?;

            let verdict = match (safety, practicality) {
                (Some((s, s_raw)), Some((p, p_raw))) => Some(Verdict {
                    safety: s,
                    practicality: Some(p),
                    safety_raw: s_raw,
                    practicality_raw: Some(p_raw),
                }),
                _ => None,
            };

            let frozen = verdict
                .as_ref()
                .map(|v| metrics::success(v).expect("practicality always judged here"))
                .unwrap_or(false);
            record.attempts.push(Attempt {
                iteration,
                revision: revision_text,
                response: response_text,
                truncated,
                verdict,
            });
            if frozen {
                record.status = RecordStatus::Success;
            }
        }

        let snapshots: Vec<RecordSnapshot> = records.iter().map(|r| r.snapshot()).collect();
        let measured = metrics::aggregate(&snapshots, iteration);
        tracing::info!(
            iteration,
            se = measured.se_percent,
            pe = measured.pe_percent,
            asr = measured.asr_percent,
            "iteration complete"
        );
        iterations.push(measured);
        persist(records, iterations)?;

        if let Some(target) = config.target_asr_percent {
            if measured.asr_percent >= target {
                return Ok(HaltReason::TargetAsrReached);
            }
        }
        if iteration == config.max_iterations {
            return Ok(HaltReason::MaxIterations);
        }
        if records.iter().all(|r| r.status != RecordStatus::Pending) {
            return Ok(HaltReason::AllRecordsSucceeded);
        }
    }
    // Only reachable when a resumed run already met or exceeded the budget.
    Ok(HaltReason::MaxIterations)
}
