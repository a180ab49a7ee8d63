//! Retrieval metrics (P@k, Hits@k) and the two evaluation tasks: attribute
//! prediction for entities (APE) and for single class-paths (APC).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::kb::{ClassPath, PathSet};
use crate::model::{rank_attributes_for_entity, rank_attributes_for_path, ModelError, TransAtt};
use crate::train::Executor;

/// Cutoffs reported by default.
pub const DEFAULT_KS: [usize; 5] = [1, 5, 10, 15, 20];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("no queries to evaluate")]
    NoQueries,
    #[error("{rankings} rankings but {relevant} relevance sets")]
    LengthMismatch { rankings: usize, relevant: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `|top-k ∩ relevant| / k`; the denominator stays `k` even when fewer than
/// `k` results exist.
pub fn precision_at_k<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    let hits = ranked.iter().take(k).filter(|a| relevant.contains(a)).count();
    Ok(hits as f64 / k as f64)
}

/// Mean of per-query P@k values.
pub fn mean_precision_at_k(per_query: &[f64]) -> Result<f64, EvalError> {
    if per_query.is_empty() {
        return Err(EvalError::NoQueries);
    }
    Ok(per_query.iter().sum::<f64>() / per_query.len() as f64)
}

/// Whether the top `k` contain at least one relevant item.
pub fn hit_at_k<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> bool {
    ranked.iter().take(k).any(|a| relevant.contains(a))
}

/// Fraction of queries whose top `k` contain at least one relevant item.
pub fn hits_at_k<T: Ord>(ranked: &[Vec<T>], relevant: &[BTreeSet<T>], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    if ranked.len() != relevant.len() {
        return Err(EvalError::LengthMismatch { rankings: ranked.len(), relevant: relevant.len() });
    }
    if ranked.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let hits = ranked.iter().zip(relevant).filter(|(r, rel)| hit_at_k(r, rel, k)).count();
    Ok(hits as f64 / ranked.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoredAttribute {
    pub name: String,
    pub score: f64,
}

/// Something that ranks attributes, lower score first.
pub trait AttributeRanker: Sync {
    fn rank_entity(
        &self,
        paths: &PathSet,
        k: usize,
        filter: &BTreeSet<String>,
    ) -> Result<Vec<ScoredAttribute>, EvalError>;

    fn rank_path(&self, path: &ClassPath, k: usize) -> Result<Vec<ScoredAttribute>, EvalError>;

    /// Whether no class word of `path` is known to the ranker.
    fn is_all_oov(&self, _path: &ClassPath) -> bool {
        false
    }
}

impl AttributeRanker for TransAtt {
    fn rank_entity(
        &self,
        paths: &PathSet,
        k: usize,
        filter: &BTreeSet<String>,
    ) -> Result<Vec<ScoredAttribute>, EvalError> {
        let r = rank_attributes_for_entity(paths, self, k, filter)?;
        Ok(r.ranking
            .iter()
            .map(|x| ScoredAttribute { name: self.attributes.name(x.attribute).into(), score: x.score })
            .collect())
    }

    fn rank_path(&self, path: &ClassPath, k: usize) -> Result<Vec<ScoredAttribute>, EvalError> {
        Ok(rank_attributes_for_path(path, self, k)
            .iter()
            .map(|x| ScoredAttribute { name: self.attributes.name(x.attribute).into(), score: x.score })
            .collect())
    }

    fn is_all_oov(&self, path: &ClassPath) -> bool {
        self.encoder.is_all_oov(path)
    }
}

/// Ranks straight from the planted class-path → attribute ground truth:
/// score 0 for planted attributes and 1 otherwise, ties by name order.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRanker {
    pub attributes: Vec<String>,
    pub truth: BTreeMap<ClassPath, BTreeSet<String>>,
}

impl OracleRanker {
    fn path_score(&self, path: &ClassPath, attr: &str) -> f64 {
        match self.truth.get(path) {
            Some(set) if set.contains(attr) => 0.0,
            _ => 1.0,
        }
    }

    fn rank_by(&self, k: usize, filter: &BTreeSet<String>, score: impl Fn(&str) -> f64) -> Vec<ScoredAttribute> {
        let mut all: Vec<ScoredAttribute> = self
            .attributes
            .iter()
            .filter(|a| !filter.contains(*a))
            .map(|a| ScoredAttribute { name: a.clone(), score: score(a) })
            .collect();
        all.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.name.cmp(&b.name)));
        all.truncate(k);
        all
    }
}

impl AttributeRanker for OracleRanker {
    fn rank_entity(
        &self,
        paths: &PathSet,
        k: usize,
        filter: &BTreeSet<String>,
    ) -> Result<Vec<ScoredAttribute>, EvalError> {
        if paths.is_empty() {
            return Err(ModelError::NoPaths.into());
        }
        let out = self.rank_by(k, filter, |a| {
            paths.paths.iter().map(|p| self.path_score(p, a)).fold(f64::INFINITY, f64::min)
        });
        if out.is_empty() {
            return Err(ModelError::EmptyCandidates.into());
        }
        Ok(out)
    }

    fn rank_path(&self, path: &ClassPath, k: usize) -> Result<Vec<ScoredAttribute>, EvalError> {
        Ok(self.rank_by(k, &BTreeSet::new(), |a| self.path_score(path, a)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "UPPERCASE"))]
pub enum Task {
    Ape,
    Apc,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Ape => "APE",
            Task::Apc => "APC",
        })
    }
}

/// Metrics over one set of queries.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Metrics {
    /// Number of queries.
    pub q: usize,
    pub hits: BTreeMap<usize, f64>,
    pub precision: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub task: Task,
    /// Where relevance judgements come from, e.g. "planted" or "observed".
    pub truth_source: String,
    pub ks: Vec<usize>,
    pub overall: Metrics,
    /// Keyed by the root class of the (first) query path.
    pub categories: BTreeMap<String, Metrics>,
    /// Queries that could not be evaluated (no class-path or no truth).
    pub skipped: usize,
    /// APC queries none of whose class words were known.
    pub all_oov: usize,
}

/// One evaluated query.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankedResult {
    pub query: String,
    pub category: String,
    pub ranking: Vec<ScoredAttribute>,
    pub relevant: BTreeSet<String>,
}

fn check_ks(ks: &[usize]) -> Result<usize, EvalError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(EvalError::InvalidK);
    }
    Ok(ks.iter().copied().max().unwrap_or(1))
}

fn metrics_of(results: &[&RankedResult], ks: &[usize]) -> Result<Metrics, EvalError> {
    let names: Vec<Vec<&str>> = results.iter().map(|r| r.ranking.iter().map(|s| s.name.as_str()).collect()).collect();
    let relevant: Vec<BTreeSet<&str>> =
        results.iter().map(|r| r.relevant.iter().map(String::as_str).collect()).collect();
    let mut m = Metrics { q: results.len(), ..Default::default() };
    for &k in ks {
        m.hits.insert(k, hits_at_k(&names, &relevant, k)?);
        let p = names
            .iter()
            .zip(&relevant)
            .map(|(n, r)| precision_at_k(n, r, k))
            .collect::<Result<Vec<_>, _>>()?;
        m.precision.insert(k, mean_precision_at_k(&p)?);
    }
    Ok(m)
}

/// Aggregate already-ranked queries into a report.
pub fn summarize(
    task: Task,
    truth_source: &str,
    ks: &[usize],
    results: &[RankedResult],
    skipped: usize,
    all_oov: usize,
) -> Result<EvalReport, EvalError> {
    check_ks(ks)?;
    let all: Vec<&RankedResult> = results.iter().collect();
    let overall = metrics_of(&all, ks)?;
    let mut by_cat: BTreeMap<&str, Vec<&RankedResult>> = BTreeMap::new();
    for r in results {
        by_cat.entry(r.category.as_str()).or_default().push(r);
    }
    let categories = by_cat
        .into_iter()
        .map(|(c, rs)| Ok((String::from(c), metrics_of(&rs, ks)?)))
        .collect::<Result<_, EvalError>>()?;
    Ok(EvalReport {
        task,
        truth_source: truth_source.into(),
        ks: ks.to_vec(),
        overall,
        categories,
        skipped,
        all_oov,
    })
}

/// An entity query: its class-paths and the attributes counted as relevant.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityQuery {
    pub paths: PathSet,
    pub relevant: BTreeSet<String>,
}

/// Rank attributes for every entity. Entities without class-paths are skipped
/// and counted.
pub fn rank_entities<R: AttributeRanker, E: Executor>(
    ranker: &R,
    entities: &[EntityQuery],
    k: usize,
    filter: &BTreeSet<String>,
    exec: &E,
) -> Result<(Vec<RankedResult>, usize), EvalError> {
    let ranked = exec.map(entities, |q| -> Result<Option<RankedResult>, EvalError> {
        if q.paths.is_empty() {
            return Ok(None);
        }
        let ranking = ranker.rank_entity(&q.paths, k, filter)?;
        Ok(Some(RankedResult {
            query: q.paths.entity.clone(),
            category: q.paths.category().unwrap_or_default().into(),
            ranking,
            relevant: q.relevant.clone(),
        }))
    });
    let mut results = Vec::new();
    let mut skipped = 0;
    for r in ranked {
        match r? {
            Some(r) => results.push(r),
            None => skipped += 1,
        }
    }
    Ok((results, skipped))
}

pub fn run_ape<R: AttributeRanker, E: Executor>(
    ranker: &R,
    entities: &[EntityQuery],
    ks: &[usize],
    filter: &BTreeSet<String>,
    truth_source: &str,
    exec: &E,
) -> Result<EvalReport, EvalError> {
    let max_k = check_ks(ks)?;
    let (results, skipped) = rank_entities(ranker, entities, max_k, filter, exec)?;
    summarize(Task::Ape, truth_source, ks, &results, skipped, 0)
}

/// Rank attributes for every path. Paths absent from `truth` are skipped and
/// counted; all-OOV paths are still scored and counted.
pub fn rank_paths<R: AttributeRanker, E: Executor>(
    ranker: &R,
    paths: &[ClassPath],
    truth: &BTreeMap<ClassPath, BTreeSet<String>>,
    k: usize,
    exec: &E,
) -> Result<(Vec<RankedResult>, usize, usize), EvalError> {
    let ranked = exec.map(paths, |p| -> Result<Option<(RankedResult, bool)>, EvalError> {
        let Some(relevant) = truth.get(p) else {
            return Ok(None);
        };
        let ranking = ranker.rank_path(p, k)?;
        Ok(Some((
            RankedResult { query: p.to_string(), category: p.root().into(), ranking, relevant: relevant.clone() },
            ranker.is_all_oov(p),
        )))
    });
    let mut results = Vec::new();
    let (mut skipped, mut all_oov) = (0, 0);
    for r in ranked {
        match r? {
            Some((r, oov)) => {
                all_oov += usize::from(oov);
                results.push(r);
            }
            None => skipped += 1,
        }
    }
    Ok((results, skipped, all_oov))
}

pub fn run_apc<R: AttributeRanker, E: Executor>(
    ranker: &R,
    paths: &[ClassPath],
    truth: &BTreeMap<ClassPath, BTreeSet<String>>,
    ks: &[usize],
    truth_source: &str,
    exec: &E,
) -> Result<EvalReport, EvalError> {
    let max_k = check_ks(ks)?;
    let (results, skipped, all_oov) = rank_paths(ranker, paths, truth, max_k, exec)?;
    summarize(Task::Apc, truth_source, ks, &results, skipped, all_oov)
}
