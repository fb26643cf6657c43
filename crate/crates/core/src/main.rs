//! Command-line front end. Every subcommand writes its artifacts into a run
//! directory named by the manifest identity (config digest + seeds + model
//! ids), so reruns of the same configuration land in the same place and
//! rendered files always carry the manifest hash that produced them.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use launderkit::config::{AppConfig, ChatKind, ChatRoleConfig, EmbeddingKind};
use launderkit::corpus::{self, Corpus};
use launderkit::judging;
use launderkit::laundering::{
    self, CampaignConfig, CampaignProviders, CampaignTemplates,
};
use launderkit::metrics;
use launderkit::providers::{
    CachedClient, CachedEmbeddingProvider, ChatProvider, EmbeddingProvider, HttpChatProvider,
    HttpEmbeddingProvider, LocalHashEmbedding, MockChatProvider, MockEmbeddingProvider,
    ResponseCache, RetryPolicy,
};
use launderkit::report::{self, RunManifest};
use launderkit::similarity::{self, SimilarityMatrix};
use launderkit::textstats::{self, CueLexicon, FilterConfig};

#[derive(Parser)]
#[command(name = "launderkit", version, about = "Intent-laundering red-team evaluation toolkit")]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured response-cache directory.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Refuse every live provider call; only mock and local backends run.
    #[arg(long, global = true)]
    offline: bool,
    /// Parent directory for run artifacts.
    #[arg(long, global = true, default_value = "runs")]
    runs_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset, normalize it, and persist it as corpus JSONL.
    Ingest {
        #[arg(long)]
        dataset: String,
        /// Seeded subsample size; the whole corpus when omitted or larger.
        #[arg(long)]
        limit: Option<usize>,
        /// Output path (defaults to corpus_<dataset>.jsonl in the run dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank the most frequent filtered n-grams with cue categories.
    Ngrams {
        #[arg(long)]
        dataset: String,
        /// Comma-separated n-gram orders.
        #[arg(long, default_value = "1,2,3")]
        orders: String,
        /// Top-k cutoff per order (configured top_k when omitted).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Embed, build the similarity matrix, and partition at one threshold.
    Dedup {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Unique/duplicate census across the configured threshold grid.
    Sweep {
        #[arg(long)]
        dataset: String,
        /// Second dataset rendered side by side on the same grid.
        #[arg(long)]
        baseline_dataset: Option<String>,
    },
    /// Keep uniques plus one seeded pick per duplicate group.
    Representatives {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// No-revision attack baseline against the target model.
    Baseline {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Full laundering campaign with checkpointing.
    Campaign {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        max_iterations: Option<u32>,
        /// Early-stop ASR in percent.
        #[arg(long)]
        target_asr: Option<f64>,
    },
    /// Percent agreement with bootstrap CI from a judgments CSV.
    Agree {
        /// CSV with columns item_id,llm_binary,human1,human2,human3.
        #[arg(long)]
        input: PathBuf,
    },
    /// Re-render campaign tables from saved result JSON files.
    Report {
        /// campaign_<dataset>.json files, one table row each.
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Comma-separated row labels (file stems when omitted).
        #[arg(long)]
        labels: Option<String>,
    },
}

struct RunContext {
    config: AppConfig,
    offline: bool,
    run_dir: PathBuf,
    /// Full manifest digest, stamped on every rendered artifact.
    stamp: String,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let ctx = open_run(&cli)?;
    match cli.command {
        Command::Ingest { dataset, limit, out } => cmd_ingest(&ctx, &dataset, limit, out),
        Command::Ngrams { dataset, orders, k } => cmd_ngrams(&ctx, &dataset, &orders, k),
        Command::Dedup { dataset, threshold } => cmd_dedup(&ctx, &dataset, threshold),
        Command::Sweep {
            dataset,
            baseline_dataset,
        } => cmd_sweep(&ctx, &dataset, baseline_dataset.as_deref()),
        Command::Representatives { dataset, threshold } => {
            cmd_representatives(&ctx, &dataset, threshold)
        }
        Command::Baseline { dataset, limit } => cmd_baseline(&ctx, &dataset, limit),
        Command::Campaign {
            dataset,
            limit,
            max_iterations,
            target_asr,
        } => cmd_campaign(&ctx, &dataset, limit, max_iterations, target_asr),
        Command::Agree { input } => cmd_agree(&ctx, &input),
        Command::Report { results, labels } => cmd_report(&ctx, &results, labels.as_deref()),
    }
}

/// Resolve configuration, then open (or join) the run directory for it.
fn open_run(cli: &Cli) -> Result<RunContext> {
    let mut config = AppConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = &cli.cache_dir {
        config.cache_dir = Some(dir.clone());
    }

    let roles = &config.roles;
    let model_ids = std::collections::BTreeMap::from([
        ("launderer".to_string(), roles.launderer.model.clone()),
        ("target".to_string(), roles.target.model.clone()),
        ("judge".to_string(), roles.judge.model.clone()),
        ("criteria".to_string(), roles.criteria.model.clone()),
        (
            "embedding".to_string(),
            match roles.embedding.kind {
                EmbeddingKind::Http => roles.embedding.model.clone(),
                EmbeddingKind::Local => format!("local-hash-{}", roles.embedding.dim),
                EmbeddingKind::Mock => "mock".to_string(),
            },
        ),
    ]);
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: config.digest(),
        seeds: std::collections::BTreeMap::from([("seed".to_string(), config.seed)]),
        model_ids,
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };

    let run_dir = cli.runs_dir.join(manifest.run_dir_name());
    let manifest_path = run_dir.join("manifest.json");
    let manifest = if manifest_path.exists() {
        // Same identity: reuse the persisted manifest so re-renders stamp
        // identically.
        serde_json::from_slice(&std::fs::read(&manifest_path)?)
            .with_context(|| format!("parse {}", manifest_path.display()))?
    } else {
        std::fs::create_dir_all(&run_dir)
            .with_context(|| format!("create {}", run_dir.display()))?;
        std::fs::write(&manifest_path, manifest.to_json())?;
        manifest
    };
    let stamp = manifest.digest();
    Ok(RunContext {
        config,
        offline: cli.offline,
        run_dir,
        stamp,
    })
}

fn load_dataset(ctx: &RunContext, name: &str) -> Result<Corpus> {
    let dataset = ctx.config.dataset(name)?;
    let corpus = corpus::load_corpus(&dataset.path, dataset.format, &dataset.field, name)
        .with_context(|| format!("load dataset {name} from {}", dataset.path.display()))?;
    tracing::info!(dataset = name, rows = corpus.len(), "loaded corpus");
    Ok(corpus)
}

fn maybe_subsample(ctx: &RunContext, corpus: Corpus, limit: Option<usize>) -> Result<Corpus> {
    match limit {
        Some(n) if n < corpus.len() => Ok(corpus::subsample(&corpus, n, ctx.config.seed)?),
        _ => Ok(corpus),
    }
}

/// Build one chat role. Live endpoints are refused outright under
/// `--offline` — the flag means zero network calls, not best effort.
fn chat_provider(ctx: &RunContext, role: &ChatRoleConfig, role_name: &str) -> Result<CachedClient> {
    role.validate(role_name)?;
    let inner: Arc<dyn ChatProvider> = match role.kind {
        ChatKind::Http => {
            if ctx.offline {
                bail!("--offline forbids the live endpoint configured for role {role_name}");
            }
            Arc::new(HttpChatProvider::new(
                role_name.to_string(),
                role.endpoint.clone(),
                role.api_key_env.clone(),
            )?)
        }
        ChatKind::Mock => {
            let script = role.script.as_ref().expect("validated mock script");
            Arc::new(MockChatProvider::from_jsonl(role_name.to_string(), script)?)
        }
    };
    let mut client = CachedClient::new(inner).with_retry(RetryPolicy::default());
    if let Some(dir) = &ctx.config.cache_dir {
        client = client.with_cache(ResponseCache::new(dir)?);
    }
    Ok(client)
}

fn embedding_provider(ctx: &RunContext) -> Result<Box<dyn EmbeddingProvider>> {
    let embedding = &ctx.config.roles.embedding;
    embedding.validate()?;
    match embedding.kind {
        EmbeddingKind::Local => Ok(Box::new(LocalHashEmbedding::new(embedding.dim))),
        EmbeddingKind::Mock => {
            let vectors = embedding.vectors.as_ref().expect("validated vectors path");
            Ok(Box::new(MockEmbeddingProvider::from_jsonl(
                "embedding", vectors,
            )?))
        }
        EmbeddingKind::Http => {
            if ctx.offline {
                bail!("--offline forbids the live embedding endpoint");
            }
            let inner = Arc::new(HttpEmbeddingProvider::new(
                format!("http-{}", embedding.model),
                embedding.endpoint.clone(),
                embedding.api_key_env.clone(),
                embedding.model.clone(),
            )?);
            let mut client =
                CachedEmbeddingProvider::new(inner).with_retry(RetryPolicy::default());
            if let Some(dir) = &ctx.config.cache_dir {
                client = client.with_cache(ResponseCache::new(dir)?);
            }
            Ok(Box::new(client))
        }
    }
}

/// Load or compute the pairwise-cosine matrix for a corpus, persisting it
/// (plus the id list it belongs to) in the run directory.
fn similarity_matrix(ctx: &RunContext, name: &str, corpus: &Corpus) -> Result<SimilarityMatrix> {
    let matrix_path = ctx.run_dir.join(format!("matrix_{name}.csv"));
    let ids_path = ctx.run_dir.join(format!("matrix_{name}.ids.json"));
    let ids: Vec<String> = corpus.items.iter().map(|dp| dp.id.clone()).collect();
    if matrix_path.exists() && ids_path.exists() {
        let saved: Vec<String> = serde_json::from_slice(&std::fs::read(&ids_path)?)?;
        if saved == ids {
            tracing::info!(path = %matrix_path.display(), "reusing persisted similarity matrix");
            return Ok(similarity::read_matrix_csv(&matrix_path)?);
        }
        tracing::warn!("persisted matrix belongs to a different corpus; recomputing");
    }
    let provider = embedding_provider(ctx)?;
    let vectors = similarity::embed_corpus(corpus, provider.as_ref())?;
    let matrix = similarity::pairwise_cosine(&vectors)?;
    similarity::write_matrix_csv(&matrix, &matrix_path)?;
    std::fs::write(&ids_path, serde_json::to_vec(&ids)?)?;
    Ok(matrix)
}

fn corpus_ids(corpus: &Corpus) -> Vec<String> {
    corpus.items.iter().map(|dp| dp.id.clone()).collect()
}

fn write_artifact(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_ingest(
    ctx: &RunContext,
    dataset: &str,
    limit: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let corpus = maybe_subsample(ctx, load_dataset(ctx, dataset)?, limit)?;
    let out = out.unwrap_or_else(|| ctx.run_dir.join(format!("corpus_{dataset}.jsonl")));
    corpus::write_corpus_jsonl(&corpus, &out)?;
    println!("wrote {} ({} data points)", out.display(), corpus.len());
    Ok(())
}

fn cmd_ngrams(ctx: &RunContext, dataset: &str, orders: &str, k: Option<usize>) -> Result<()> {
    let corpus = load_dataset(ctx, dataset)?;
    let orders: Vec<usize> = orders
        .split(',')
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad n-gram order {s:?}")))
        .collect::<Result<_>>()?;
    if orders.is_empty() {
        bail!("no n-gram orders given");
    }
    let k = k.unwrap_or(ctx.config.top_k);
    let filter = FilterConfig::standard();
    let lexicon = match &ctx.config.cue_lexicon_path {
        Some(path) => textstats::load_cue_lexicon(path)?,
        None => CueLexicon::default(),
    };
    let tables = orders
        .iter()
        .map(|&n| textstats::extract_ngrams(&corpus, n, &filter))
        .collect::<Result<Vec<_>, _>>()?;
    for table in &tables {
        println!(
            "n={}: {} distinct phrases, {} windows",
            table.n,
            table.counts.len(),
            table.total
        );
    }
    let rendered = report::render_ngrams(&tables, &lexicon, k, &ctx.stamp)?;
    write_artifact(&ctx.run_dir.join(format!("ngrams_{dataset}.csv")), &rendered.csv)?;
    write_artifact(&ctx.run_dir.join(format!("ngrams_{dataset}.json")), &rendered.json)?;
    Ok(())
}

fn cmd_dedup(ctx: &RunContext, dataset: &str, threshold: Option<f64>) -> Result<()> {
    let corpus = load_dataset(ctx, dataset)?;
    let threshold = threshold.unwrap_or(ctx.config.dedup_threshold);
    let matrix = similarity_matrix(ctx, dataset, &corpus)?;
    let partition = similarity::partition_at(&matrix, &corpus_ids(&corpus), threshold)?;
    let out = ctx.run_dir.join(format!("partition_{dataset}.json"));
    std::fs::write(&out, serde_json::to_string_pretty(&partition)?)?;
    println!(
        "threshold {}: {} unique, {} duplicate groups covering {} points -> {} representatives",
        threshold,
        partition.uniques.len(),
        partition.groups.len(),
        partition.groups.iter().map(Vec::len).sum::<usize>(),
        partition.uniques.len() + partition.groups.len()
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_sweep(ctx: &RunContext, dataset: &str, baseline_dataset: Option<&str>) -> Result<()> {
    let thresholds = ctx.config.sweep_thresholds();
    let corpus = load_dataset(ctx, dataset)?;
    let matrix = similarity_matrix(ctx, dataset, &corpus)?;
    let sweep = similarity::threshold_sweep(&matrix, &thresholds)?;
    let (baseline, suffix) = match baseline_dataset {
        Some(name) => {
            let baseline_corpus = load_dataset(ctx, name)?;
            let baseline_matrix = similarity_matrix(ctx, name, &baseline_corpus)?;
            (
                Some(similarity::threshold_sweep(&baseline_matrix, &thresholds)?),
                format!("_vs_{name}"),
            )
        }
        None => (None, String::new()),
    };
    let csv = report::render_sweep(&sweep, baseline.as_ref(), &ctx.stamp)?;
    write_artifact(&ctx.run_dir.join(format!("sweep_{dataset}{suffix}.csv")), &csv)?;
    Ok(())
}

fn cmd_representatives(ctx: &RunContext, dataset: &str, threshold: Option<f64>) -> Result<()> {
    let corpus = load_dataset(ctx, dataset)?;
    let threshold = threshold.unwrap_or(ctx.config.dedup_threshold);
    let matrix = similarity_matrix(ctx, dataset, &corpus)?;
    let partition = similarity::partition_at(&matrix, &corpus_ids(&corpus), threshold)?;
    let representatives =
        similarity::select_representatives(&partition, &corpus, ctx.config.seed)?;
    let out = ctx.run_dir.join(format!("representatives_{dataset}.jsonl"));
    corpus::write_corpus_jsonl(&representatives, &out)?;
    println!(
        "threshold {}: {} of {} points kept as representatives",
        threshold,
        representatives.len(),
        corpus.len()
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_baseline(ctx: &RunContext, dataset: &str, limit: Option<usize>) -> Result<()> {
    let corpus = maybe_subsample(ctx, load_dataset(ctx, dataset)?, limit)?;
    let roles = &ctx.config.roles;
    let target = chat_provider(ctx, &roles.target, "target")?;
    let judge = chat_provider(ctx, &roles.judge, "judge")?;
    let template = judging::judge_plain_template(judging::DEFAULT_SAFETY_PLAIN_TEMPLATE)?;
    let baseline = laundering::eval_baseline(
        &corpus,
        &target,
        &judge,
        &template,
        &roles.target.model,
        &roles.judge.model,
    )?;
    let out = ctx.run_dir.join(format!("baseline_{dataset}.json"));
    std::fs::write(&out, serde_json::to_string_pretty(&baseline)?)?;
    println!(
        "baseline ASR {:.2}% ({} unsafe of {} judged, {} total)",
        baseline.asr_percent, baseline.unsafe_count, baseline.judged, baseline.total
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_campaign(
    ctx: &RunContext,
    dataset: &str,
    limit: Option<usize>,
    max_iterations: Option<u32>,
    target_asr: Option<f64>,
) -> Result<()> {
    let corpus = maybe_subsample(ctx, load_dataset(ctx, dataset)?, limit)?;
    let Some(demos_path) = &ctx.config.demos_path else {
        bail!("campaign needs demos_path in the config (JSONL of {{original, revision}})");
    };
    let Some(criterion_demos_path) = &ctx.config.criterion_demos_path else {
        bail!("campaign needs criterion_demos_path in the config (JSONL of {{original, criterion}})");
    };
    let demos = laundering::load_demonstrations(demos_path)?;
    let criterion_demos = judging::load_criterion_demos(criterion_demos_path)?;

    let roles = &ctx.config.roles;
    let launderer = chat_provider(ctx, &roles.launderer, "launderer")?;
    let target = chat_provider(ctx, &roles.target, "target")?;
    let judge = chat_provider(ctx, &roles.judge, "judge")?;
    let criteria = chat_provider(ctx, &roles.criteria, "criteria")?;
    let providers = CampaignProviders {
        launderer: &launderer,
        target: &target,
        judge: &judge,
        criteria: &criteria,
    };
    let campaign_config = CampaignConfig {
        launder_model: roles.launderer.model.clone(),
        target_model: roles.target.model.clone(),
        judge_model: roles.judge.model.clone(),
        criteria_model: roles.criteria.model.clone(),
        max_iterations: max_iterations.unwrap_or(ctx.config.max_iterations),
        target_asr_percent: target_asr.or(ctx.config.target_asr_percent),
        seed: ctx.config.seed,
    };
    let checkpoint = ctx.run_dir.join(format!("campaign_{dataset}.checkpoint.json"));
    let mut result = laundering::run_campaign(
        &corpus,
        &demos,
        &criterion_demos,
        &providers,
        &CampaignTemplates::defaults(),
        &campaign_config,
        Some(&checkpoint),
    )?;

    // Adopt a previously computed no-revision baseline for the same dataset.
    let baseline_path = ctx.run_dir.join(format!("baseline_{dataset}.json"));
    if baseline_path.exists() {
        let baseline: laundering::BaselineReport =
            serde_json::from_slice(&std::fs::read(&baseline_path)?)?;
        result.baseline_asr_percent = Some(baseline.asr_percent);
    }

    let result_path = ctx.run_dir.join(format!("campaign_{dataset}.json"));
    std::fs::write(&result_path, serde_json::to_string_pretty(&result)?)?;
    for metrics in &result.iterations {
        println!(
            "iteration {}: SE {:.2}% PE {:.2}% ASR {:.2}%",
            metrics.iteration, metrics.se_percent, metrics.pe_percent, metrics.asr_percent
        );
    }
    println!("halt: {:?} ({} records)", result.halt, result.records.len());
    println!("wrote {}", result_path.display());

    let label = format!("{} / {dataset}", campaign_config.target_model);
    let table = report::render_campaign(&[(label, result)], &ctx.stamp)?;
    write_artifact(&ctx.run_dir.join(format!("campaign_{dataset}.md")), &table.markdown)?;
    write_artifact(&ctx.run_dir.join(format!("campaign_{dataset}.csv")), &table.csv)?;
    Ok(())
}

fn cmd_agree(ctx: &RunContext, input: &Path) -> Result<()> {
    let rows = metrics::load_agreement_csv(input)?;
    let report = metrics::agreement_report(
        &rows,
        ctx.config.bootstrap_resamples,
        ctx.config.confidence_level,
        ctx.config.seed,
    )?;
    let out = ctx.run_dir.join("agreement.json");
    std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
    println!(
        "agreement {:.2}% [{:.2}, {:.2}] over {} items ({} resamples, level {})",
        report.point_estimate_percent,
        report.ci_low_percent,
        report.ci_high_percent,
        report.items,
        report.resamples,
        report.level
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_report(ctx: &RunContext, results: &[PathBuf], labels: Option<&str>) -> Result<()> {
    let labels: Vec<String> = match labels {
        Some(raw) => {
            let parsed: Vec<String> = raw.split(',').map(|s| s.trim().to_string()).collect();
            if parsed.len() != results.len() {
                bail!("{} labels for {} result files", parsed.len(), results.len());
            }
            parsed
        }
        None => results
            .iter()
            .map(|p| {
                p.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string())
            })
            .collect(),
    };
    let mut rows = Vec::with_capacity(results.len());
    for (path, label) in results.iter().zip(labels) {
        let result: laundering::CampaignResult = serde_json::from_slice(
            &std::fs::read(path).with_context(|| format!("read {}", path.display()))?,
        )
        .with_context(|| format!("parse {}", path.display()))?;
        rows.push((label, result));
    }
    let table = report::render_campaign(&rows, &ctx.stamp)?;
    print!("{}", table.markdown);
    write_artifact(&ctx.run_dir.join("report.md"), &table.markdown)?;
    write_artifact(&ctx.run_dir.join("report.csv"), &table.csv)?;
    Ok(())
}
