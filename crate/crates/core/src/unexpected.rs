//! Unexpectedness of generated test data.
//!
//! For a tested channel in layer `L` and a class, the reference point is the
//! top-k most correlated channel pairs of `L` on the training rows of that
//! class. The raw score is the L1 distance between training and test
//! correlations over those pairs; the normalized score divides by the number
//! of pairs so that layers of different widths compare.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::corr::{
    check_fraction, corr_distance, layer_correlations, topk_pairs, CorrError, CorrMode,
    PairCorrelations, TopKPairs, MIN_SAMPLES,
};
use crate::trace::{slice_by_class, ActivationTrace, ChannelRef, RowSubset, TraceError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("train and test traces have different layer schemas")]
    SchemaMismatch,
    #[error("class {class} has {rows} {side} rows, need at least {min}", min = MIN_SAMPLES)]
    ClassTooSmall {
        class: u32,
        side: &'static str,
        rows: usize,
    },
    #[error("no test traces given")]
    EmptyInput,
    #[error("grouping has {got} entries for {expected} rows")]
    GroupingLength { expected: usize, got: usize },
    #[error("subgroup {group} has {rows} rows, need at least {min}", min = MIN_SAMPLES)]
    SubgroupTooSmall { group: u32, rows: usize },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Corr(#[from] CorrError),
}

/// Which score orders a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Basis {
    #[default]
    Raw,
    Normalized,
}

impl Basis {
    pub fn as_str(self) -> &'static str {
        match self {
            Basis::Raw => "raw",
            Basis::Normalized => "normalized",
        }
    }
}

/// How per-class scores fold into one score per tested channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregate {
    #[default]
    Max,
    Mean,
}

impl Aggregate {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregate::Max => "max",
            Aggregate::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub raw: f64,
    pub normalized: f64,
    pub topk_size: usize,
}

impl Score {
    pub fn get(&self, basis: Basis) -> f64 {
        match basis {
            Basis::Raw => self.raw,
            Basis::Normalized => self.normalized,
        }
    }
}

/// Training-side reference for one (layer, class).
struct Reference {
    correlations: PairCorrelations,
    topk: TopKPairs,
}

fn reference(
    train: &ActivationTrace,
    layer: usize,
    class_id: u32,
    k_fraction: f64,
) -> Result<Reference, ScoreError> {
    let slice = slice_by_class(train, class_id)?;
    if slice.len() < MIN_SAMPLES {
        return Err(ScoreError::ClassTooSmall {
            class: class_id,
            side: "train",
            rows: slice.len(),
        });
    }
    let correlations = layer_correlations(&slice, layer, CorrMode::Signed)?;
    let topk = topk_pairs(&correlations, k_fraction)?;
    Ok(Reference { correlations, topk })
}

fn score_against(
    reference: &Reference,
    test: &ActivationTrace,
    layer: usize,
    class_id: u32,
) -> Result<Score, ScoreError> {
    let slice = slice_by_class(test, class_id)?;
    if slice.len() < MIN_SAMPLES {
        return Err(ScoreError::ClassTooSmall {
            class: class_id,
            side: "test",
            rows: slice.len(),
        });
    }
    let test_corr = layer_correlations(&slice, layer, CorrMode::Signed)?;
    let raw = corr_distance(&reference.correlations, &test_corr, &reference.topk)?;
    let topk_size = reference.topk.len();
    Ok(Score {
        raw,
        normalized: raw / topk_size as f64,
        topk_size,
    })
}

/// Unexpectedness of `test` against `train` for one layer and class.
///
/// The top-k pairs are chosen by descending signed coefficient on the
/// training rows of the class.
pub fn unexpectedness_score(
    train: &ActivationTrace,
    test: &ActivationTrace,
    layer: usize,
    class_id: u32,
    k_fraction: f64,
) -> Result<Score, ScoreError> {
    if !train.same_schema(test) {
        return Err(ScoreError::SchemaMismatch);
    }
    check_fraction(k_fraction)?;
    let reference = reference(train, layer, class_id, k_fraction)?;
    score_against(&reference, test, layer, class_id)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub channel: ChannelRef,
    pub class_id: u32,
    pub score: Score,
    /// 1-based position in the report.
    pub rank: usize,
}

/// Per-channel fold of its class entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelScore {
    pub channel: ChannelRef,
    pub score: f64,
    pub classes: usize,
    pub rank: usize,
}

/// A (channel, class) combination left out of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedClass {
    pub channel: ChannelRef,
    pub class_id: u32,
    pub train_rows: usize,
    pub test_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnexpectednessReport {
    pub basis: Basis,
    pub aggregate: Aggregate,
    pub k_fraction: f64,
    /// Sorted by descending score on `basis`; ties by channel, then class.
    pub entries: Vec<ReportEntry>,
    pub channels: Vec<ChannelScore>,
    pub skipped: Vec<SkippedClass>,
}

fn by_score_then_key<K: Ord>(a: (f64, &K), b: (f64, &K)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Scores every (tested channel, class) combination and ranks them.
///
/// Each test trace holds the samples generated while sweeping its key
/// channel. Classes with fewer than three rows on either side are listed in
/// `skipped` instead of failing the report.
pub fn rank_channels(
    tests: &BTreeMap<ChannelRef, ActivationTrace>,
    train: &ActivationTrace,
    k_fraction: f64,
    basis: Basis,
    aggregate: Aggregate,
) -> Result<UnexpectednessReport, ScoreError> {
    if tests.is_empty() {
        return Err(ScoreError::EmptyInput);
    }
    check_fraction(k_fraction)?;
    if train.labels().is_none() {
        return Err(TraceError::Unlabeled.into());
    }
    let classes = train.num_classes() as u32;

    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    let mut layers_used = Vec::new();
    for (channel, test) in tests {
        if !train.same_schema(test) {
            return Err(ScoreError::SchemaMismatch);
        }
        train.column_of(channel)?;
        let test_labels = test.labels().ok_or(TraceError::Unlabeled)?;
        for class_id in 0..classes {
            let train_rows = train.labels().unwrap().iter().filter(|&&l| l == class_id).count();
            let test_rows = test_labels.iter().filter(|&&l| l == class_id).count();
            if train_rows < MIN_SAMPLES || test_rows < MIN_SAMPLES {
                if test_rows > 0 {
                    skipped.push(SkippedClass {
                        channel: channel.clone(),
                        class_id,
                        train_rows,
                        test_rows,
                    });
                }
                continue;
            }
            jobs.push((channel, test, class_id));
            layers_used.push((channel.layer_index, class_id));
        }
    }
    layers_used.sort_unstable();
    layers_used.dedup();

    let mut references = BTreeMap::new();
    for &(layer, class_id) in &layers_used {
        references.insert((layer, class_id), reference(train, layer, class_id, k_fraction)?);
    }

    let run = |&(channel, test, class_id): &(&ChannelRef, &ActivationTrace, u32)| {
        let reference = &references[&(channel.layer_index, class_id)];
        score_against(reference, test, channel.layer_index, class_id).map(|score| ReportEntry {
            channel: channel.clone(),
            class_id,
            score,
            rank: 0,
        })
    };
    #[cfg(feature = "parallel")]
    let scored: Result<Vec<ReportEntry>, ScoreError> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let scored: Result<Vec<ReportEntry>, ScoreError> = jobs.iter().map(run).collect();
    let mut entries = scored?;

    entries.sort_by(|a, b| {
        by_score_then_key(
            (a.score.get(basis), &(&a.channel, a.class_id)),
            (b.score.get(basis), &(&b.channel, b.class_id)),
        )
    });
    for (pos, e) in entries.iter_mut().enumerate() {
        e.rank = pos + 1;
    }

    let mut grouped: BTreeMap<&ChannelRef, Vec<f64>> = BTreeMap::new();
    for e in &entries {
        grouped.entry(&e.channel).or_default().push(e.score.get(basis));
    }
    let mut channels: Vec<ChannelScore> = grouped
        .into_iter()
        .map(|(channel, scores)| {
            let score = match aggregate {
                Aggregate::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Aggregate::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
            };
            ChannelScore {
                channel: channel.clone(),
                score,
                classes: scores.len(),
                rank: 0,
            }
        })
        .collect();
    channels.sort_by(|a, b| by_score_then_key((a.score, &a.channel), (b.score, &b.channel)));
    for (pos, c) in channels.iter_mut().enumerate() {
        c.rank = pos + 1;
    }

    Ok(UnexpectednessReport {
        basis,
        aggregate,
        k_fraction,
        entries,
        channels,
        skipped,
    })
}

/// Symmetric matrix of correlation distances between row groups.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupDistances {
    /// Group ids in ascending order; matrix rows and columns follow it.
    pub groups: Vec<u32>,
    /// Row-major `groups.len()²` matrix.
    pub matrix: Vec<f64>,
}

impl SubgroupDistances {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.matrix[a * self.groups.len() + b]
    }
}

/// Pairwise L1 distances between the top-k correlations of row groups.
///
/// The directed distance `g → h` sums over `g`'s own top-k pairs; the matrix
/// holds the mean of both directions.
pub fn subgroup_distance_study(
    trace: &ActivationTrace,
    grouping: &[u32],
    layer: usize,
    k_fraction: f64,
) -> Result<SubgroupDistances, ScoreError> {
    if grouping.len() != trace.num_samples() {
        return Err(ScoreError::GroupingLength {
            expected: trace.num_samples(),
            got: grouping.len(),
        });
    }
    check_fraction(k_fraction)?;
    let mut rows: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (row, &g) in grouping.iter().enumerate() {
        rows.entry(g).or_default().push(row);
    }
    let mut refs = Vec::with_capacity(rows.len());
    for (&group, members) in &rows {
        if members.len() < MIN_SAMPLES {
            return Err(ScoreError::SubgroupTooSmall {
                group,
                rows: members.len(),
            });
        }
        let subset = RowSubset::new(trace, members.clone());
        let correlations = layer_correlations(&subset, layer, CorrMode::Signed)?;
        let topk = topk_pairs(&correlations, k_fraction)?;
        refs.push(Reference { correlations, topk });
    }

    let n = refs.len();
    let mut matrix = alloc::vec![0.0; n * n];
    for a in 0..n {
        for b in a + 1..n {
            let forward = corr_distance(&refs[a].correlations, &refs[b].correlations, &refs[a].topk)?;
            let backward =
                corr_distance(&refs[b].correlations, &refs[a].correlations, &refs[b].topk)?;
            let d = (forward + backward) / 2.0;
            matrix[a * n + b] = d;
            matrix[b * n + a] = d;
        }
    }
    Ok(SubgroupDistances {
        groups: rows.into_keys().collect(),
        matrix,
    })
}
