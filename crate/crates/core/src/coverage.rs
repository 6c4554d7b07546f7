//! Channel boundary coverage.
//!
//! A channel's boundary is its maximum intensity over the training set. A
//! test suite covers the boundary when some test sample strictly exceeds it.

use alloc::vec::Vec;

use crate::trace::{ActivationTrace, ChannelRef, TraceError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoverageError {
    #[error("training trace has no rows")]
    EmptyTrain,
    #[error("channel set is empty")]
    EmptyUniverse,
    #[error("train and test traces have different layer schemas")]
    SchemaMismatch,
    #[error(transparent)]
    Trace(#[from] TraceError),
}

fn column_max(trace: &ActivationTrace, column: usize) -> Option<f64> {
    (0..trace.num_samples())
        .map(|row| f64::from(trace.value(row, column)))
        .reduce(f64::max)
}

fn resolve(trace: &ActivationTrace, channels: &[ChannelRef]) -> Result<Vec<usize>, TraceError> {
    channels.iter().map(|c| trace.column_of(c)).collect()
}

/// Per-channel maximum training intensity, aligned with `channels`.
pub fn upper_bounds(
    train: &ActivationTrace,
    channels: &[ChannelRef],
) -> Result<Vec<f64>, CoverageError> {
    if train.num_samples() == 0 {
        return Err(CoverageError::EmptyTrain);
    }
    let columns = resolve(train, channels)?;
    Ok(columns
        .into_iter()
        .map(|c| column_max(train, c).expect("trace has rows"))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    channels: Vec<ChannelRef>,
    upper: Vec<f64>,
    test_max: Vec<Option<f64>>,
    covered: Vec<bool>,
}

impl CoverageReport {
    pub fn channels(&self) -> &[ChannelRef] {
        &self.channels
    }

    pub fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    /// Largest test intensity per channel; `None` for an empty test suite.
    pub fn test_max(&self) -> &[Option<f64>] {
        &self.test_max
    }

    pub fn covered(&self) -> &[bool] {
        &self.covered
    }

    pub fn covered_count(&self) -> usize {
        self.covered.iter().filter(|&&c| c).count()
    }

    pub fn fraction(&self) -> f64 {
        self.covered_count() as f64 / self.channels.len() as f64
    }

    /// The same report restricted to a subset of its channels. Channels not
    /// in the report are ignored; `None` if nothing remains.
    pub fn restrict(&self, subset: &[ChannelRef]) -> Option<CoverageReport> {
        let keep: Vec<usize> = (0..self.channels.len())
            .filter(|&i| subset.contains(&self.channels[i]))
            .collect();
        if keep.is_empty() {
            return None;
        }
        Some(CoverageReport {
            channels: keep.iter().map(|&i| self.channels[i].clone()).collect(),
            upper: keep.iter().map(|&i| self.upper[i]).collect(),
            test_max: keep.iter().map(|&i| self.test_max[i]).collect(),
            covered: keep.iter().map(|&i| self.covered[i]).collect(),
        })
    }
}

/// Boundary coverage of `test` over the channels in `universe`.
pub fn boundary_coverage(
    train: &ActivationTrace,
    test: &ActivationTrace,
    universe: &[ChannelRef],
) -> Result<CoverageReport, CoverageError> {
    if universe.is_empty() {
        return Err(CoverageError::EmptyUniverse);
    }
    if !train.same_schema(test) {
        return Err(CoverageError::SchemaMismatch);
    }
    let upper = upper_bounds(train, universe)?;
    let columns = resolve(test, universe)?;

    let scan = |c: &usize| column_max(test, *c);
    #[cfg(feature = "parallel")]
    let test_max: Vec<Option<f64>> = {
        use rayon::prelude::*;
        columns.par_iter().map(scan).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let test_max: Vec<Option<f64>> = columns.iter().map(scan).collect();

    let covered = test_max
        .iter()
        .zip(&upper)
        .map(|(m, &u)| m.is_some_and(|m| m > u))
        .collect();
    Ok(CoverageReport {
        channels: universe.to_vec(),
        upper,
        test_max,
        covered,
    })
}
