//! Red-team evaluation toolkit for intent-laundering attacks on chat models.
//!
//! The crate is organized as a pipeline:
//!
//! - [`corpus`] loads and normalizes benchmark datasets into stable-id
//!   corpora, with seeded subsampling.
//! - [`textstats`] counts filtered n-grams and tags triggering cues, the
//!   lexical signals safety filters key on.
//! - [`similarity`] embeds a corpus, builds the pairwise-cosine matrix, and
//!   partitions it into unique points and duplicate groups by threshold.
//! - [`providers`] abstracts chat and embedding backends (HTTP, scripted
//!   mock, local hash) behind blocking traits with retry, rate limiting,
//!   and content-addressed response caching.
//! - [`template`] renders the few-shot prompt scaffolds.
//! - [`judging`] generates per-request evaluation criteria and runs the two
//!   independent Likert judges (safety, practicality).
//! - [`laundering`] drives the campaign: launder, query, judge, freeze on
//!   success, regenerate from the full failed history, checkpoint, halt.
//! - [`metrics`] turns verdicts into SE/PE/ASR percentages and provides the
//!   seeded percentile bootstrap and agreement statistics.
//! - [`report`] renders campaign tables, sweep curves, and n-gram rankings
//!   with a manifest hash stamped on every artifact.
//! - [`config`] is the TOML surface binding it all together.
//!
//! Everything that consumes randomness takes an explicit `u64` seed, and
//! every provider call goes through [`providers::ChatProvider`] /
//! [`providers::EmbeddingProvider`], so the whole pipeline can run
//! deterministically offline against scripted mocks.

pub mod config;
pub mod corpus;
pub mod judging;
pub mod laundering;
pub mod metrics;
pub mod providers;
pub mod report;
pub mod similarity;
pub mod template;
pub mod textstats;
