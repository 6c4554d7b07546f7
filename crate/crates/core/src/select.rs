//! Representative channel selection.
//!
//! Every channel `c` has a δ-set: the channels correlated with it at least
//! `θ`. A selection `S` is feasible when it intersects every δ-set, which
//! makes the problem a minimum hitting set. [`greedy_select`] approximates it;
//! [`brute_force_select`] solves small instances exactly.

use alloc::vec::Vec;
use fixedbitset::FixedBitSet;

use crate::corr::{layer_correlations, CorrError, CorrMode};
use crate::trace::{ActivationTrace, ChannelRef};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectError {
    #[error("threshold {0} is outside (0, 1]")]
    InvalidTheta(f64),
    #[error(transparent)]
    Corr(#[from] CorrError),
    #[error("universe must be sorted by (layer, channel) without duplicates")]
    UnsortedUniverse,
    #[error("delta list has {got} sets for {expected} channels")]
    DeltaCount { expected: usize, got: usize },
    #[error("delta of channel {0} refers to index {1} outside the universe")]
    DeltaOutOfRange(usize, usize),
    #[error("delta sets are not symmetric ({0} -> {1})")]
    Asymmetric(usize, usize),
    #[error("universe of {0} channels exceeds the exhaustive-search limit of {max}", max = BRUTE_FORCE_LIMIT)]
    UniverseTooLarge(usize),
    #[error("no selection can hit every delta set")]
    Infeasible,
}

/// Largest universe [`brute_force_select`] accepts.
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// Greedy pick rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Policy {
    /// Pick the channel covering the most uncovered channels.
    #[default]
    GreedyMax,
    /// Pick the uncovered channel covering the fewest uncovered channels.
    GreedyMin,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::GreedyMax => "greedy-max",
            Policy::GreedyMin => "greedy-min",
        }
    }
}

/// Channels under test with their δ-sets, indexed by universe position.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionProblem {
    universe: Vec<ChannelRef>,
    theta: f64,
    mode: CorrMode,
    delta: Vec<FixedBitSet>,
}

impl SelectionProblem {
    /// Builds a problem from explicit δ-sets (`delta[i]` lists universe
    /// positions). The universe must be strictly increasing and the sets
    /// symmetric.
    pub fn new(
        universe: Vec<ChannelRef>,
        theta: f64,
        mode: CorrMode,
        delta: Vec<Vec<usize>>,
    ) -> Result<Self, SelectError> {
        check_theta(theta)?;
        if universe.windows(2).any(|w| {
            (w[0].layer_index, w[0].channel_index) >= (w[1].layer_index, w[1].channel_index)
        }) {
            return Err(SelectError::UnsortedUniverse);
        }
        let n = universe.len();
        if delta.len() != n {
            return Err(SelectError::DeltaCount {
                expected: n,
                got: delta.len(),
            });
        }
        let mut sets = Vec::with_capacity(n);
        for (i, members) in delta.iter().enumerate() {
            let mut set = FixedBitSet::with_capacity(n);
            for &j in members {
                if j >= n {
                    return Err(SelectError::DeltaOutOfRange(i, j));
                }
                set.insert(j);
            }
            sets.push(set);
        }
        for (i, set) in sets.iter().enumerate() {
            if let Some(j) = set.ones().find(|&j| !sets[j].contains(i)) {
                return Err(SelectError::Asymmetric(i, j));
            }
        }
        Ok(Self {
            universe,
            theta,
            mode,
            delta: sets,
        })
    }

    pub fn universe(&self) -> &[ChannelRef] {
        &self.universe
    }

    pub fn len(&self) -> usize {
        self.universe.len()
    }

    pub fn is_empty(&self) -> bool {
        self.universe.is_empty()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn mode(&self) -> CorrMode {
        self.mode
    }

    /// Members of δ(universe\[i\]) as universe positions, ascending.
    pub fn delta(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.delta[i].ones()
    }

    pub fn delta_len(&self, i: usize) -> usize {
        self.delta[i].count_ones(..)
    }

    pub fn in_delta(&self, i: usize, j: usize) -> bool {
        self.delta[i].contains(j)
    }
}

fn check_theta(theta: f64) -> Result<(), SelectError> {
    if theta > 0.0 && theta <= 1.0 {
        Ok(())
    } else {
        Err(SelectError::InvalidTheta(theta))
    }
}

/// Builds δ-sets from the correlations of the whole trace.
///
/// δ-sets stay within a layer. Each channel is in its own set, including
/// zero-variance channels, which therefore end up selecting themselves.
pub fn build_delta(
    trace: &ActivationTrace,
    layers: &[usize],
    theta: f64,
    mode: CorrMode,
) -> Result<SelectionProblem, SelectError> {
    check_theta(theta)?;
    let mut layers = layers.to_vec();
    layers.sort_unstable();
    layers.dedup();

    let mut universe = Vec::new();
    let mut delta: Vec<Vec<usize>> = Vec::new();
    for &layer in &layers {
        let pc = layer_correlations(trace, layer, mode)?;
        let base = universe.len();
        let n = pc.layer().channels;
        for c in 0..n {
            universe.push(ChannelRef::new(layer, c, pc.layer().name.clone()));
            delta.push(alloc::vec![base + c]);
        }
        let degenerate = pc.degenerate();
        for p in pc.pairs() {
            if p.coef >= theta && !degenerate[p.i] && !degenerate[p.j] {
                delta[base + p.i].push(base + p.j);
                delta[base + p.j].push(base + p.i);
            }
        }
    }
    SelectionProblem::new(universe, theta, mode, delta)
}

/// Output of a selection run. Positions refer to the problem's universe.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    selected: Vec<usize>,
    covered: FixedBitSet,
    policy: Policy,
    feasible: bool,
}

impl SelectionResult {
    /// Selected universe positions, in pick order.
    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn selected_channels<'p>(
        &'p self,
        problem: &'p SelectionProblem,
    ) -> impl Iterator<Item = &'p ChannelRef> + 'p {
        self.selected.iter().map(move |&i| &problem.universe[i])
    }

    pub fn is_covered(&self, i: usize) -> bool {
        self.covered.contains(i)
    }

    pub fn covered_count(&self) -> usize {
        self.covered.count_ones(..)
    }

    /// Covered share of the universe; an empty universe counts as fully
    /// covered.
    pub fn covered_fraction(&self) -> f64 {
        let n = self.covered.len();
        if n == 0 {
            1.0
        } else {
            self.covered_count() as f64 / n as f64
        }
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn feasible(&self) -> bool {
        self.feasible
    }
}

/// Greedy hitting set over the problem's δ-sets.
///
/// Each round picks a channel by `policy`, breaking ties toward the lowest
/// `(layer, channel)`, and marks its δ-set covered. Stops early with
/// `feasible == false` when no candidate covers anything new.
pub fn greedy_select(problem: &SelectionProblem, policy: Policy) -> SelectionResult {
    let n = problem.len();
    let mut covered = FixedBitSet::with_capacity(n);
    let mut in_selection = FixedBitSet::with_capacity(n);
    let mut selected = Vec::new();
    let mut feasible = true;

    while covered.count_ones(..) < n {
        let mut best: Option<(usize, usize)> = None;
        for c in 0..n {
            let candidate = match policy {
                Policy::GreedyMax => !in_selection.contains(c),
                Policy::GreedyMin => !covered.contains(c),
            };
            if !candidate {
                continue;
            }
            let gain = problem.delta[c].difference_count(&covered);
            if gain == 0 {
                continue;
            }
            let better = match (best, policy) {
                (None, _) => true,
                (Some((_, g)), Policy::GreedyMax) => gain > g,
                (Some((_, g)), Policy::GreedyMin) => gain < g,
            };
            if better {
                best = Some((c, gain));
            }
        }
        let Some((pick, _)) = best else {
            feasible = false;
            break;
        };
        covered.union_with(&problem.delta[pick]);
        in_selection.insert(pick);
        selected.push(pick);
    }

    SelectionResult {
        selected,
        covered,
        policy,
        feasible,
    }
}

/// Exact minimum hitting set by exhaustive search in increasing size.
///
/// Candidates of each size are visited in lexicographic order of universe
/// positions, so the first hit is the lexicographically smallest minimum.
pub fn brute_force_select(problem: &SelectionProblem) -> Result<Vec<usize>, SelectError> {
    let n = problem.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(SelectError::UniverseTooLarge(n));
    }
    let masks: Vec<u32> = problem
        .delta
        .iter()
        .map(|set| set.ones().fold(0u32, |m, j| m | (1 << j)))
        .collect();
    if masks.contains(&0) {
        return Err(SelectError::Infeasible);
    }
    let hits_all = |mask: u32| masks.iter().all(|&d| d & mask != 0);

    let mut combo = Vec::with_capacity(n);
    for size in 0..=n {
        combo.clear();
        combo.extend(0..size);
        loop {
            let mask = combo.iter().fold(0u32, |m, &j| m | (1 << j));
            if hits_all(mask) {
                return Ok(combo);
            }
            // advance to the next combination in lexicographic order
            let Some(pos) = (0..size).rev().find(|&p| combo[p] < n - size + p) else {
                break;
            };
            combo[pos] += 1;
            for q in pos + 1..size {
                combo[q] = combo[q - 1] + 1;
            }
        }
    }
    Err(SelectError::Infeasible)
}
