//! Compactness scoring of embeddings against outlier-detection groups.
//!
//! For a set `W` and `w ∈ W`, the compactness `c(w)` is the mean pairwise
//! similarity of `W \ {w}`. The outlier of a test case should be the element
//! whose removal leaves the most compact set. Its position `OP` is the number
//! of cluster items with strictly smaller compactness, and the case counts as
//! detected when `OP = |C|`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{DatasetRecord, Embedding, Tier};
use crate::graph::EntityId;

/// Compactness differences below this are treated as ties.
pub const TIE_EPSILON: f64 = 1e-10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("compactness needs at least 3 vectors, got {0}")]
    TooFewVectors(usize),
    #[error("vectors have mismatched dimensions")]
    DimensionMismatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("vocabulary intersection needs at least 2 embeddings, got {0}")]
    TooFewEmbeddings(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhraseMode {
    /// Greedy when the embedding carries phrases, token average otherwise.
    #[default]
    Auto,
    Greedy,
    TokenAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tokenizer {
    #[default]
    Whitespace,
    /// The whole surface is one token.
    AsIs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LookupPolicy {
    pub phrase_mode: PhraseMode,
    pub tokenizer: Tokenizer,
    /// Retry unmatched tokens case-insensitively.
    pub case_fold: bool,
}

impl LookupPolicy {
    /// Default policy for a language: as-is tokens for Chinese and Japanese.
    pub fn for_language(code: &str) -> Self {
        let tokenizer = match code {
            "zh" | "ja" => Tokenizer::AsIs,
            _ => Tokenizer::Whitespace,
        };
        Self {
            tokenizer,
            ..Self::default()
        }
    }
}

/// Joins phrase tokens in embedding vocabularies.
pub const PHRASE_JOINER: &str = "_";

fn lookup<'e>(e: &'e Embedding, token: &str, policy: &LookupPolicy) -> Option<&'e [f32]> {
    if policy.case_fold {
        e.get_folded(token)
    } else {
        e.get(token)
    }
}

/// Vector for a surface string, or `None` when nothing in it is in vocabulary.
///
/// Out-of-vocabulary tokens are ignored; the matched pieces are averaged.
pub fn phrase_vector(e: &Embedding, surface: &str, policy: &LookupPolicy) -> Option<Vec<f32>> {
    let tokens: Vec<&str> = match policy.tokenizer {
        Tokenizer::Whitespace => surface.split_whitespace().collect(),
        Tokenizer::AsIs => vec![surface],
    };
    let greedy = match policy.phrase_mode {
        PhraseMode::Auto => e.supports_phrases(),
        PhraseMode::Greedy => true,
        PhraseMode::TokenAverage => false,
    };

    let mut matched: Vec<&[f32]> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let longest = if greedy { tokens.len() - i } else { 1 };
        let hit = (1..=longest).rev().find_map(|len| {
            let key = tokens[i..i + len].join(PHRASE_JOINER);
            lookup(e, &key, policy).map(|v| (len, v))
        });
        match hit {
            Some((len, v)) => {
                matched.push(v);
                i += len;
            }
            None => i += 1,
        }
    }
    if matched.is_empty() {
        return None;
    }
    let mut mean = vec![0f64; e.dimension()];
    for v in &matched {
        for (m, x) in mean.iter_mut().zip(v.iter()) {
            *m += f64::from(*x);
        }
    }
    let k = matched.len() as f64;
    Some(mean.into_iter().map(|m| (m / k) as f32).collect())
}

pub trait Similarity: Sync {
    fn sim(&self, a: &[f32], b: &[f32]) -> f64;
}

/// Cosine similarity, 0 when either side is the zero vector.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cosine;

impl Similarity for Cosine {
    fn sim(&self, a: &[f32], b: &[f32]) -> f64 {
        let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
        for (x, y) in a.iter().zip(b) {
            let (x, y) = (f64::from(*x), f64::from(*y));
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        dot / (na.sqrt() * nb.sqrt())
    }
}

fn check_input<V: AsRef<[f32]>>(vectors: &[V]) -> Result<usize, EvalError> {
    let n = vectors.len();
    if n < 3 {
        return Err(EvalError::TooFewVectors(n));
    }
    let d = vectors[0].as_ref().len();
    if vectors.iter().any(|v| v.as_ref().len() != d) {
        return Err(EvalError::DimensionMismatch);
    }
    Ok(n)
}

/// Direct triple-loop evaluation of `c(w)` for every element.
pub fn compactness_naive<V: AsRef<[f32]>>(vectors: &[V], sim: &dyn Similarity) -> Result<Vec<f64>, EvalError> {
    let n = check_input(vectors)?;
    let denom = ((n - 1) * (n - 2)) as f64;
    Ok((0..n)
        .map(|w| {
            let mut total = 0.0;
            for i in (0..n).filter(|&i| i != w) {
                for j in (0..n).filter(|&j| j != w && j != i) {
                    total += sim.sim(vectors[i].as_ref(), vectors[j].as_ref());
                }
            }
            total / denom
        })
        .collect())
}

/// `c(w) = (S − 2·s_w) / ((n−1)(n−2))` from one pass over the similarity matrix.
/// Assumes `sim` is symmetric.
pub fn compactness_fast<V: AsRef<[f32]>>(vectors: &[V], sim: &dyn Similarity) -> Result<Vec<f64>, EvalError> {
    let n = check_input(vectors)?;
    let mut row = vec![0f64; n];
    for i in 0..n {
        for j in i + 1..n {
            let s = sim.sim(vectors[i].as_ref(), vectors[j].as_ref());
            row[i] += s;
            row[j] += s;
        }
    }
    let total: f64 = row.iter().sum();
    let denom = ((n - 1) * (n - 2)) as f64;
    Ok(row.into_iter().map(|s_w| (total - 2.0 * s_w) / denom).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactnessResult {
    /// `c(w)` for the cluster items in order, then the outlier last.
    pub scores: Vec<f64>,
    /// Cluster items with strictly smaller compactness than the outlier.
    pub op: usize,
    pub detected: bool,
}

/// Score one test case `C ∪ {o}`. Ties within [`TIE_EPSILON`] count against
/// detection.
pub fn rank_outlier<V: AsRef<[f32]>>(
    cluster: &[V],
    outlier: &[f32],
    sim: &dyn Similarity,
) -> Result<CompactnessResult, EvalError> {
    if cluster.len() < 2 {
        return Err(EvalError::TooFewVectors(cluster.len() + 1));
    }
    let mut w: Vec<&[f32]> = cluster.iter().map(AsRef::as_ref).collect();
    w.push(outlier);
    let scores = compactness_fast(&w, sim)?;
    let (c_o, rest) = scores.split_last().expect("non-empty");
    let op = rest.iter().filter(|&&c| c < c_o - TIE_EPSILON).count();
    Ok(CompactnessResult {
        detected: op == cluster.len(),
        op,
        scores,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipReason {
    AllOutliersOov,
    TooFewClusterItems,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub tier: Tier,
    pub surface: String,
    pub op: usize,
    pub cluster_size: usize,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub class_id: EntityId,
    pub cluster_total: usize,
    pub cluster_oov: usize,
    pub outliers_total: usize,
    pub outliers_oov: usize,
    pub skipped: Option<SkipReason>,
    pub cases: Vec<CaseOutcome>,
}

/// Aggregate scores for one embedding over one dataset. `opp` and `accuracy`
/// are absent when no test case survived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub opp: Option<f64>,
    pub accuracy: Option<f64>,
    pub groups_skipped: usize,
    pub pct_cluster_oov: f64,
    pub pct_outlier_oov: f64,
    pub cases_evaluated: usize,
}

fn pct2(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.2}"))
}

impl EvalReport {
    /// `key=value` lines, two decimals for percentages.
    pub fn to_kv(&self) -> String {
        format!(
            "opp={}\naccuracy={}\ngroups_skipped={}\npct_cluster_oov={:.2}\npct_outlier_oov={:.2}\ncases_evaluated={}\n",
            pct2(self.opp),
            pct2(self.accuracy),
            self.groups_skipped,
            self.pct_cluster_oov,
            self.pct_outlier_oov,
            self.cases_evaluated
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "OPP {} Acc. {} skipped {} cluster OOV {:.2}% outlier OOV {:.2}%",
            pct2(self.opp),
            pct2(self.accuracy),
            self.groups_skipped,
            self.pct_cluster_oov,
            self.pct_outlier_oov
        )
    }
}

/// Score one record. OOV entities are dropped before any test case is formed.
pub fn evaluate_group(e: &Embedding, record: &DatasetRecord, policy: &LookupPolicy) -> GroupOutcome {
    let cluster: Vec<Vec<f32>> = record
        .cluster
        .iter()
        .filter_map(|s| phrase_vector(e, s, policy))
        .collect();
    let outliers: Vec<(&crate::formats::Outlier, Vec<f32>)> = record
        .outliers
        .iter()
        .filter_map(|o| phrase_vector(e, &o.surface, policy).map(|v| (o, v)))
        .collect();
    let mut out = GroupOutcome {
        class_id: record.class_id.clone(),
        cluster_total: record.cluster.len(),
        cluster_oov: record.cluster.len() - cluster.len(),
        outliers_total: record.outliers.len(),
        outliers_oov: record.outliers.len() - outliers.len(),
        skipped: None,
        cases: Vec::new(),
    };
    if outliers.is_empty() {
        out.skipped = Some(SkipReason::AllOutliersOov);
    } else if cluster.len() < 2 {
        out.skipped = Some(SkipReason::TooFewClusterItems);
    } else {
        out.cases = outliers
            .iter()
            .map(|(o, v)| {
                let r = rank_outlier(&cluster, v, &Cosine).expect("cluster has at least 2 items");
                CaseOutcome {
                    tier: o.tier,
                    surface: o.surface.clone(),
                    op: r.op,
                    cluster_size: cluster.len(),
                    detected: r.detected,
                }
            })
            .collect();
    }
    out
}

/// Fold group outcomes into a report. Sums run over sorted keys, so the
/// result does not depend on group order.
pub fn aggregate(groups: &[GroupOutcome]) -> EvalReport {
    let mut ratios: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut detected = 0usize;
    let mut cases = 0usize;
    let mut cluster_oov: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut outlier_oov: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for g in groups {
        for c in &g.cases {
            *ratios.entry((c.op, c.cluster_size)).or_default() += 1;
            detected += usize::from(c.detected);
            cases += 1;
        }
        *cluster_oov.entry((g.cluster_oov, g.cluster_total)).or_default() += 1;
        *outlier_oov.entry((g.outliers_oov, g.outliers_total)).or_default() += 1;
    }
    let mean_pct = |m: &BTreeMap<(usize, usize), usize>| {
        if groups.is_empty() {
            return 0.0;
        }
        let sum: f64 = m
            .iter()
            .filter(|((_, total), _)| *total > 0)
            .map(|(&(oov, total), &k)| k as f64 * oov as f64 / total as f64)
            .sum();
        100.0 * sum / groups.len() as f64
    };
    let (opp, accuracy) = if cases == 0 {
        (None, None)
    } else {
        let sum: f64 = ratios
            .iter()
            .map(|(&(op, c), &k)| k as f64 * op as f64 / c as f64)
            .sum();
        (
            Some(100.0 * sum / cases as f64),
            Some(100.0 * detected as f64 / cases as f64),
        )
    };
    EvalReport {
        opp,
        accuracy,
        groups_skipped: groups.iter().filter(|g| g.skipped.is_some()).count(),
        pct_cluster_oov: mean_pct(&cluster_oov),
        pct_outlier_oov: mean_pct(&outlier_oov),
        cases_evaluated: cases,
    }
}

/// Per-group outcomes plus the aggregate report.
pub fn evaluate_detailed(
    e: &Embedding,
    records: &[DatasetRecord],
    policy: &LookupPolicy,
) -> Result<(EvalReport, Vec<GroupOutcome>), EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let groups: Vec<GroupOutcome> = records.par_iter().map(|r| evaluate_group(e, r, policy)).collect();
    Ok((aggregate(&groups), groups))
}

pub fn evaluate_dataset(
    e: &Embedding,
    records: &[DatasetRecord],
    policy: &LookupPolicy,
) -> Result<EvalReport, EvalError> {
    evaluate_detailed(e, records, policy).map(|(r, _)| r)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntersectionStats {
    pub groups_in: usize,
    pub groups_dropped: usize,
    pub cluster_entities: usize,
    pub cluster_removed: usize,
    pub outliers: usize,
    pub outliers_removed: usize,
    pub pct_cluster_removed: f64,
    pub pct_outliers_removed: f64,
}

/// Keep only entities every embedding can represent, then drop groups that
/// fail the skip rule. The reduced records may be smaller than a regular
/// dataset allows.
pub fn intersect_vocabulary(
    embeddings: &[&Embedding],
    records: &[DatasetRecord],
    policy: &LookupPolicy,
) -> Result<(Vec<DatasetRecord>, IntersectionStats), EvalError> {
    if embeddings.len() < 2 {
        return Err(EvalError::TooFewEmbeddings(embeddings.len()));
    }
    let mut surfaces: Vec<&str> = records
        .iter()
        .flat_map(|r| r.cluster.iter().chain(r.outliers.iter().map(|o| &o.surface)))
        .map(String::as_str)
        .collect();
    surfaces.sort_unstable();
    surfaces.dedup();
    let known: HashSet<&str> = surfaces
        .par_iter()
        .copied()
        .filter(|s| embeddings.iter().all(|e| phrase_vector(e, s, policy).is_some()))
        .collect();

    let mut stats = IntersectionStats {
        groups_in: records.len(),
        ..Default::default()
    };
    let mut kept = Vec::new();
    for r in records {
        let mut reduced = r.clone();
        reduced.cluster.retain(|s| known.contains(s.as_str()));
        reduced.outliers.retain(|o| known.contains(o.surface.as_str()));
        stats.cluster_entities += r.cluster.len();
        stats.cluster_removed += r.cluster.len() - reduced.cluster.len();
        stats.outliers += r.outliers.len();
        stats.outliers_removed += r.outliers.len() - reduced.outliers.len();
        if reduced.outliers.is_empty() || reduced.cluster.len() < 2 {
            stats.groups_dropped += 1;
        } else {
            kept.push(reduced);
        }
    }
    let pct = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
    stats.pct_cluster_removed = pct(stats.cluster_removed, stats.cluster_entities);
    stats.pct_outliers_removed = pct(stats.outliers_removed, stats.outliers);
    Ok((kept, stats))
}
