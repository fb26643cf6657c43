//! Pairwise cosine similarity, threshold-based duplicate partitioning, and
//! representative selection.
//!
//! Duplicate groups are the connected components of the graph with an edge
//! wherever similarity ≥ θ. All similarity arithmetic is f64; stored values
//! may carry ≤1e-9 of drift and are clamped to [−1, 1] on read so θ = 0.99
//! classification never flips on floating-point noise.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::providers::{EmbeddingProvider, ProviderError};

const SLACK: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum SimilarityError {
    #[error("need at least 2 vectors, got {0}")]
    TooFewVectors(usize),
    #[error("vector {index} has dimension {got}, expected {expected}")]
    DimMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("vector {index} has zero norm")]
    ZeroNorm { index: usize },
    #[error("vector {index} contains a non-finite value")]
    NonFinite { index: usize },
    #[error("empty embedding vector at index {index}")]
    EmptyVector { index: usize },
    #[error("threshold {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error("threshold list is empty")]
    EmptyThresholds,
    #[error("similarity value {value} at pair ({i},{j}) outside [-1,1] slack")]
    ValueOutOfRange { i: usize, j: usize, value: f64 },
    #[error("{got} ids supplied for a matrix over {expected} items")]
    IdCountMismatch { expected: usize, got: usize },
    #[error("partition id {0:?} not present in corpus")]
    UnknownId(String),
    #[error("matrix needs {expected} upper-triangular values for n={n}, got {got}")]
    BadValueCount {
        n: usize,
        expected: usize,
        got: usize,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("embedding provider: {0}")]
    Provider(#[from] ProviderError),
    #[error("matrix io at {path}: {reason}")]
    MatrixIo { path: String, reason: String },
}

/// One mean-pooled contextual embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, SimilarityError> {
        if values.is_empty() {
            return Err(SimilarityError::EmptyVector { index: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SimilarityError::NonFinite { index: 0 });
        }
        Ok(EmbeddingVector {
            dim: values.len(),
            values,
        })
    }
}

/// Upper-triangular pairwise cosine matrix over `n` items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Build from raw upper-triangular values in row-major (i<j) order.
    /// Values may exceed [−1,1] by at most 1e-9 of numerical slack.
    pub fn from_upper(n: usize, values: Vec<f64>) -> Result<Self, SimilarityError> {
        let expected = n * n.saturating_sub(1) / 2;
        if values.len() != expected {
            return Err(SimilarityError::BadValueCount {
                n,
                expected,
                got: values.len(),
            });
        }
        for (idx, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < -1.0 - SLACK || v > 1.0 + SLACK {
                let (i, j) = unflatten(n, idx);
                return Err(SimilarityError::ValueOutOfRange { i, j, value: v });
            }
        }
        Ok(SimilarityMatrix { n, values })
    }

    /// Similarity s(i,j), clamped to [−1, 1]. s(i,i) = 1 by definition.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "index out of range");
        if i == j {
            return 1.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.values[flatten(self.n, a, b)].clamp(-1.0, 1.0)
    }

    /// Raw stored values in (i<j) row-major order, unclamped.
    pub fn upper_values(&self) -> &[f64] {
        &self.values
    }
}

fn flatten(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

fn unflatten(n: usize, mut idx: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - i - 1;
        if idx < row {
            return (i, i + 1 + idx);
        }
        idx -= row;
    }
    unreachable!("index beyond upper triangle")
}

/// The threshold-induced unique/duplicate split. Groups and uniques are in
/// corpus order (groups keyed by their earliest member).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicatePartition {
    pub threshold: f64,
    pub groups: Vec<Vec<String>>,
    pub uniques: Vec<String>,
}

impl DuplicatePartition {
    pub fn total_ids(&self) -> usize {
        self.uniques.len() + self.groups.iter().map(Vec::len).sum::<usize>()
    }
}

/// Counts for one threshold of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub threshold: f64,
    pub total: usize,
    pub unique_count: usize,
    pub duplicate_count: usize,
    pub group_count: usize,
}

impl SweepRecord {
    pub fn unique_fraction(&self) -> f64 {
        self.unique_count as f64 / self.total as f64
    }

    pub fn duplicate_fraction(&self) -> f64 {
        self.duplicate_count as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            self.parent[x] = self.find(self.parent[x]);
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

fn validate_threshold(threshold: f64) -> Result<(), SimilarityError> {
    if threshold.is_finite() && threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(SimilarityError::BadThreshold(threshold))
    }
}

/// Connected components of the ≥θ graph, each sorted ascending, components
/// ordered by their smallest member.
fn components_at(matrix: &SimilarityMatrix, threshold: f64) -> Vec<Vec<usize>> {
    let n = matrix.n;
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if matrix.get(i, j) >= threshold {
                uf.union(i, j);
            }
        }
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in 0..n {
        let root = uf.find(v);
        by_root.entry(root).or_default().push(v);
    }
    let mut components: Vec<Vec<usize>> = by_root.into_values().collect();
    components.sort_by_key(|c| c[0]);
    components
}

/// Embed every data point (normalized text) in corpus order.
pub fn embed_corpus(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<EmbeddingVector>, SimilarityError> {
    if corpus.is_empty() {
        return Err(SimilarityError::EmptyCorpus);
    }
    let texts: Vec<String> = corpus.items.iter().map(|dp| dp.text.clone()).collect();
    let vectors = provider.embed(&texts)?;
    if vectors.len() != corpus.len() {
        return Err(SimilarityError::Provider(ProviderError::Protocol(format!(
            "provider returned {} vectors for {} texts",
            vectors.len(),
            corpus.len()
        ))));
    }
    let dim = vectors[0].dim;
    for (index, v) in vectors.iter().enumerate() {
        if v.dim != dim {
            return Err(SimilarityError::DimMismatch {
                index,
                expected: dim,
                got: v.dim,
            });
        }
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(SimilarityError::NonFinite { index });
        }
    }
    Ok(vectors)
}

/// s(i,j) = ⟨vᵢ,vⱼ⟩ / (‖vᵢ‖‖vⱼ‖) over all i<j.
pub fn pairwise_cosine(vectors: &[EmbeddingVector]) -> Result<SimilarityMatrix, SimilarityError> {
    if vectors.len() < 2 {
        return Err(SimilarityError::TooFewVectors(vectors.len()));
    }
    let dim = vectors[0].dim;
    let mut norms = Vec::with_capacity(vectors.len());
    for (index, v) in vectors.iter().enumerate() {
        if v.dim != dim || v.values.len() != dim {
            return Err(SimilarityError::DimMismatch {
                index,
                expected: dim,
                got: v.values.len(),
            });
        }
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(SimilarityError::NonFinite { index });
        }
        let norm = v.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(SimilarityError::ZeroNorm { index });
        }
        norms.push(norm);
    }
    let n = vectors.len();
    let mut values = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            // Identical vectors score exactly 1.0 by definition; the float
            // dot/norm route can land an ulp under and miss a θ=1.0 cut.
            if vectors[i].values == vectors[j].values {
                values.push(1.0);
                continue;
            }
            let dot: f64 = vectors[i]
                .values
                .iter()
                .zip(&vectors[j].values)
                .map(|(a, b)| a * b)
                .sum();
            values.push(dot / (norms[i] * norms[j]));
        }
    }
    SimilarityMatrix::from_upper(n, values)
}

/// Partition items into uniques (no neighbor at ≥θ) and duplicate groups
/// (connected components of size ≥ 2). `ids` are in matrix/corpus order.
pub fn partition_at(
    matrix: &SimilarityMatrix,
    ids: &[String],
    threshold: f64,
) -> Result<DuplicatePartition, SimilarityError> {
    validate_threshold(threshold)?;
    if ids.len() != matrix.n {
        return Err(SimilarityError::IdCountMismatch {
            expected: matrix.n,
            got: ids.len(),
        });
    }
    let mut groups = Vec::new();
    let mut uniques = Vec::new();
    for component in components_at(matrix, threshold) {
        if component.len() >= 2 {
            groups.push(component.into_iter().map(|i| ids[i].clone()).collect());
        } else {
            uniques.push(ids[component[0]].clone());
        }
    }
    Ok(DuplicatePartition {
        threshold,
        groups,
        uniques,
    })
}

/// One unique/duplicate census per threshold, records sorted by threshold
/// ascending.
pub fn threshold_sweep(
    matrix: &SimilarityMatrix,
    thresholds: &[f64],
) -> Result<SweepResult, SimilarityError> {
    if thresholds.is_empty() {
        return Err(SimilarityError::EmptyThresholds);
    }
    let mut sorted = thresholds.to_vec();
    for &t in &sorted {
        validate_threshold(t)?;
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    let total = matrix.n;
    let records = sorted
        .into_iter()
        .map(|threshold| {
            let components = components_at(matrix, threshold);
            let unique_count = components.iter().filter(|c| c.len() == 1).count();
            let group_count = components.len() - unique_count;
            SweepRecord {
                threshold,
                total,
                unique_count,
                duplicate_count: total - unique_count,
                group_count,
            }
        })
        .collect();
    Ok(SweepResult { records })
}

/// All uniques plus one uniformly-drawn member of each duplicate group,
/// in original corpus order. Deterministic per seed.
pub fn select_representatives(
    partition: &DuplicatePartition,
    corpus: &Corpus,
    seed: u64,
) -> Result<Corpus, SimilarityError> {
    let positions: BTreeMap<&str, usize> = corpus
        .items
        .iter()
        .enumerate()
        .map(|(i, dp)| (dp.id.as_str(), i))
        .collect();
    let lookup = |id: &String| -> Result<usize, SimilarityError> {
        positions
            .get(id.as_str())
            .copied()
            .ok_or_else(|| SimilarityError::UnknownId(id.clone()))
    };

    let mut keep: Vec<usize> = Vec::with_capacity(partition.uniques.len() + partition.groups.len());
    for id in &partition.uniques {
        keep.push(lookup(id)?);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for group in &partition.groups {
        let member_positions = group.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
        let pick = rng.gen_range(0..member_positions.len());
        keep.push(member_positions[pick]);
    }
    keep.sort_unstable();
    let items = keep.into_iter().map(|i| corpus.items[i].clone()).collect();
    Ok(Corpus {
        name: corpus.name.clone(),
        items,
    })
}

/// Persist a matrix as CSV triples `i,j,s` (header row included).
pub fn write_matrix_csv(matrix: &SimilarityMatrix, path: &Path) -> Result<(), SimilarityError> {
    let io_err = |reason: String| SimilarityError::MatrixIo {
        path: path.display().to_string(),
        reason,
    };
    let mut file = std::fs::File::create(path).map_err(|e| io_err(e.to_string()))?;
    writeln!(file, "i,j,s").map_err(|e| io_err(e.to_string()))?;
    for i in 0..matrix.n {
        for j in (i + 1)..matrix.n {
            let s = matrix.values[flatten(matrix.n, i, j)];
            writeln!(file, "{i},{j},{s}").map_err(|e| io_err(e.to_string()))?;
        }
    }
    Ok(())
}

/// Read a matrix written by [`write_matrix_csv`]; every (i,j) pair with
/// i<j must appear exactly once.
pub fn read_matrix_csv(path: &Path) -> Result<SimilarityMatrix, SimilarityError> {
    let io_err = |reason: String| SimilarityError::MatrixIo {
        path: path.display().to_string(),
        reason,
    };
    let file = std::fs::File::open(path).map_err(|e| io_err(e.to_string()))?;
    let mut triples: Vec<(usize, usize, f64)> = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(e.to_string()))?;
        if lineno == 0 && line.trim() == "i,j,s" {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(io_err(format!("line {}: expected i,j,s", lineno + 1)));
        }
        let i: usize = fields[0]
            .trim()
            .parse()
            .map_err(|e| io_err(format!("line {}: {e}", lineno + 1)))?;
        let j: usize = fields[1]
            .trim()
            .parse()
            .map_err(|e| io_err(format!("line {}: {e}", lineno + 1)))?;
        let s: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|e| io_err(format!("line {}: {e}", lineno + 1)))?;
        if i >= j {
            return Err(io_err(format!("line {}: need i < j", lineno + 1)));
        }
        max_index = max_index.max(j);
        triples.push((i, j, s));
    }
    let n = max_index + 1;
    let expected = n * (n - 1) / 2;
    if triples.len() != expected {
        return Err(io_err(format!(
            "expected {expected} triples for n={n}, got {}",
            triples.len()
        )));
    }
    let mut values = vec![f64::NAN; expected];
    for (i, j, s) in triples {
        let slot = &mut values[flatten(n, i, j)];
        if !slot.is_nan() {
            return Err(io_err(format!("pair ({i},{j}) appears twice")));
        }
        *slot = s;
    }
    SimilarityMatrix::from_upper(n, values)
}
