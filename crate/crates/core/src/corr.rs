//! Pearson correlations between channel intensities.
//!
//! All sums use a fixed four-lane accumulation order (see [`lane_dot`]), so a
//! coefficient computed by [`layer_correlations`] is bit-identical to
//! [`pearson`] applied to the same two columns, regardless of how pairs are
//! scheduled across workers.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::trace::IntensitySource;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorrError {
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("unknown layer index {0}")]
    UnknownLayer(usize),
    #[error("fraction {0} is outside (0, 1]")]
    InvalidFraction(f64),
    #[error("pair list is empty")]
    EmptyPairs,
    #[error("no pair has two non-degenerate channels")]
    NoEligiblePairs,
    #[error("correlations refer to different layers")]
    LayerMismatch,
}

/// Minimum number of rows a source needs before its layer correlations mean
/// anything for ranking.
pub const MIN_SAMPLES: usize = 3;

/// Whether coefficients are kept signed or replaced by their magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrMode {
    Signed,
    #[default]
    Absolute,
}

impl CorrMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrMode::Signed => "signed",
            CorrMode::Absolute => "absolute",
        }
    }
}

#[inline]
fn lane_sum(xs: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = xs.chunks_exact(4);
    let tail = chunks.remainder();
    for c in chunks {
        acc[0] += c[0];
        acc[1] += c[1];
        acc[2] += c[2];
        acc[3] += c[3];
    }
    let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for &v in tail {
        total += v;
    }
    total
}

#[inline]
fn lane_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ta.iter().zip(tb) {
        total += x * y;
    }
    total
}

/// A column after the first pass: deviations from the mean and their
/// squared sum. `degenerate` marks zero variance.
struct Centered {
    deviations: Vec<f64>,
    sum_sq: f64,
    degenerate: bool,
}

fn center(xs: &[f64]) -> Centered {
    let mean = lane_sum(xs) / xs.len() as f64;
    let deviations: Vec<f64> = xs.iter().map(|v| v - mean).collect();
    let sum_sq = lane_dot(&deviations, &deviations);
    let constant = xs.iter().all(|&v| v == xs[0]);
    Centered {
        deviations,
        sum_sq,
        degenerate: constant || sum_sq == 0.0,
    }
}

fn coefficient(a: &Centered, b: &Centered) -> f64 {
    if a.degenerate || b.degenerate {
        return 0.0;
    }
    let r = lane_dot(&a.deviations, &b.deviations) / libm::sqrt(a.sum_sq * b.sum_sq);
    r.clamp(-1.0, 1.0)
}

/// Pearson correlation coefficient of two equally long vectors.
///
/// Zero-variance input yields `0.0`. The result is clamped to `[-1, 1]`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, CorrError> {
    if x.len() != y.len() {
        return Err(CorrError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(CorrError::TooFewSamples {
            needed: 2,
            got: x.len(),
        });
    }
    Ok(coefficient(&center(x), &center(y)))
}

/// Identifies a layer inside correlation results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRef {
    pub index: usize,
    pub name: alloc::string::String,
    pub channels: usize,
}

/// One unordered channel pair `(i, j)`, `i < j`, with its coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCorrelation {
    pub i: usize,
    pub j: usize,
    pub coef: f64,
}

/// All within-layer pair coefficients, in `(0,1), (0,2), …, (n-2,n-1)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCorrelations {
    layer: LayerRef,
    mode: CorrMode,
    class_filter: Option<u32>,
    pairs: Vec<PairCorrelation>,
    degenerate: Vec<bool>,
}

/// Position of pair `(i, j)`, `i < j < n`, in the canonical pair order.
#[inline]
pub fn pair_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

impl PairCorrelations {
    /// Assembles correlations from precomputed parts. `pairs` must list all
    /// `C(n, 2)` pairs in canonical order.
    pub fn from_parts(
        layer: LayerRef,
        mode: CorrMode,
        class_filter: Option<u32>,
        pairs: Vec<PairCorrelation>,
        degenerate: Vec<bool>,
    ) -> Self {
        let n = layer.channels;
        assert_eq!(degenerate.len(), n, "one degenerate flag per channel");
        assert_eq!(pairs.len(), n * n.saturating_sub(1) / 2, "pair count");
        Self {
            layer,
            mode,
            class_filter,
            pairs,
            degenerate,
        }
    }

    pub fn layer(&self) -> &LayerRef {
        &self.layer
    }

    pub fn mode(&self) -> CorrMode {
        self.mode
    }

    pub fn class_filter(&self) -> Option<u32> {
        self.class_filter
    }

    pub fn pairs(&self) -> &[PairCorrelation] {
        &self.pairs
    }

    /// Channels with zero variance in the source rows.
    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    /// Coefficient of an unordered pair; `i == j` gives `1.0` for a live
    /// channel and `0.0` for a degenerate one.
    pub fn coef(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            Ordering::Less => self.pairs[pair_index(i, j, self.layer.channels)].coef,
            Ordering::Greater => self.pairs[pair_index(j, i, self.layer.channels)].coef,
            Ordering::Equal if self.degenerate[i] => 0.0,
            Ordering::Equal => 1.0,
        }
    }

    fn eligible(&self, p: &PairCorrelation) -> bool {
        !self.degenerate[p.i] && !self.degenerate[p.j]
    }
}

/// Correlations of every channel pair within one layer.
///
/// Requires at least [`MIN_SAMPLES`] rows. With the `parallel` feature the
/// pairs are computed on the current rayon pool; the output does not depend
/// on its size.
pub fn layer_correlations<S: IntensitySource + ?Sized>(
    source: &S,
    layer: usize,
    mode: CorrMode,
) -> Result<PairCorrelations, CorrError> {
    let trace = source.trace();
    let columns = trace
        .layer_columns(layer)
        .ok_or(CorrError::UnknownLayer(layer))?;
    if source.row_count() < MIN_SAMPLES {
        return Err(CorrError::TooFewSamples {
            needed: MIN_SAMPLES,
            got: source.row_count(),
        });
    }
    let n = columns.len();
    let centered: Vec<Centered> = columns.map(|c| center(&source.column(c))).collect();

    let row_pairs = |i: usize| {
        let centered = &centered;
        (i + 1..n).map(move |j| {
            let r = coefficient(&centered[i], &centered[j]);
            PairCorrelation {
                i,
                j,
                coef: match mode {
                    CorrMode::Signed => r,
                    CorrMode::Absolute => r.abs(),
                },
            }
        })
    };

    #[cfg(feature = "parallel")]
    let pairs: Vec<PairCorrelation> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().flat_map_iter(row_pairs).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let pairs: Vec<PairCorrelation> = (0..n).flat_map(row_pairs).collect();

    let info = &trace.layers()[layer];
    Ok(PairCorrelations {
        layer: LayerRef {
            index: layer,
            name: info.name.clone(),
            channels: n,
        },
        mode,
        class_filter: source.class_filter(),
        pairs,
        degenerate: centered.iter().map(|c| c.degenerate).collect(),
    })
}

/// The highest-coefficient pairs of a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TopKPairs {
    layer: LayerRef,
    k_fraction: f64,
    pairs: Vec<PairCorrelation>,
}

impl TopKPairs {
    pub fn layer(&self) -> &LayerRef {
        &self.layer
    }

    pub fn k_fraction(&self) -> f64 {
        self.k_fraction
    }

    pub fn pairs(&self) -> &[PairCorrelation] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// `ceil(fraction · total)`, ignoring float noise below 1e-9 so that e.g.
/// `0.05 · 20` counts as exactly one pair.
pub fn topk_count(fraction: f64, total: usize) -> usize {
    let raw = fraction * total as f64;
    let mut count = libm::ceil(raw);
    if count - raw > 1.0 - 1e-9 {
        count -= 1.0;
    }
    (count as usize).clamp(1, total.max(1))
}

pub(crate) fn check_fraction(k_fraction: f64) -> Result<(), CorrError> {
    if k_fraction > 0.0 && k_fraction <= 1.0 {
        Ok(())
    } else {
        Err(CorrError::InvalidFraction(k_fraction))
    }
}

/// Top `ceil(k_fraction · |pairs|)` pairs by descending coefficient, ties by
/// ascending pair index.
///
/// Pairs touching a zero-variance channel are never selected; if fewer live
/// pairs exist than requested, all of them are returned.
pub fn topk_pairs(pc: &PairCorrelations, k_fraction: f64) -> Result<TopKPairs, CorrError> {
    check_fraction(k_fraction)?;
    if pc.pairs.is_empty() {
        return Err(CorrError::EmptyPairs);
    }
    let mut eligible: Vec<&PairCorrelation> = pc.pairs.iter().filter(|p| pc.eligible(p)).collect();
    if eligible.is_empty() {
        return Err(CorrError::NoEligiblePairs);
    }
    // Stable sort: equal coefficients keep canonical pair order.
    eligible.sort_by(|a, b| b.coef.total_cmp(&a.coef));
    let count = topk_count(k_fraction, pc.pairs.len()).min(eligible.len());
    Ok(TopKPairs {
        layer: pc.layer.clone(),
        k_fraction,
        pairs: eligible[..count].iter().map(|&&p| p).collect(),
    })
}

/// L1 distance between two correlation sets over the pairs in `over`.
pub fn corr_distance(
    a: &PairCorrelations,
    b: &PairCorrelations,
    over: &TopKPairs,
) -> Result<f64, CorrError> {
    if a.layer != b.layer || a.layer != over.layer {
        return Err(CorrError::LayerMismatch);
    }
    Ok(over
        .pairs
        .iter()
        .map(|p| (a.coef(p.i, p.j) - b.coef(p.i, p.j)).abs())
        .sum())
}
