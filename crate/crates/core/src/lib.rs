//! Channel-level analytics for testing convolutional networks.
//!
//! The crate works on *activation-intensity traces*: for every input sample,
//! the intensity of a channel is the sum of that channel's neuron values. On
//! top of that data model it provides
//!
//! * [`corr`]: within-layer Pearson correlations and top-k pair extraction,
//! * [`select`]: representative channel selection as a greedy hitting set,
//!   plus an exhaustive solver used as a reference,
//! * [`unexpected`]: unexpectedness scores of generated test data against
//!   training data, per tested channel and class,
//! * [`coverage`]: channel boundary coverage of a test suite.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. The `parallel` feature spreads pair computations over a rayon
//! pool; results are bit-identical for any worker count.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod corr;
pub mod coverage;
pub mod select;
pub mod trace;
pub mod unexpected;

pub use corr::{
    corr_distance, layer_correlations, pearson, topk_pairs, CorrError, CorrMode, PairCorrelation,
    PairCorrelations, TopKPairs,
};
pub use coverage::{boundary_coverage, upper_bounds, CoverageError, CoverageReport};
pub use select::{
    brute_force_select, build_delta, greedy_select, Policy, SelectError, SelectionProblem,
    SelectionResult,
};
pub use trace::{
    slice_by_class, ActivationTrace, ChannelRef, ClassSlice, IntensitySource, LayerInfo, RowSubset,
    TraceError,
};
pub use unexpected::{
    rank_channels, subgroup_distance_study, unexpectedness_score, Aggregate, Basis, ReportEntry,
    Score, ScoreError, SubgroupDistances, UnexpectednessReport,
};
