//! Operations checked against independent recomputations.

mod common;

use std::collections::BTreeMap;

use chanprobe_core::corr::topk_count;
use chanprobe_core::*;
use common::*;
use rand::Rng;

#[test]
fn layer_correlations_match_pearson_per_pair() {
    let mut rng = rng(11);
    let cols = factor_columns(&mut rng, 120, 5);
    let labels: Vec<u32> = (0..120).map(|_| rng.random_range(0..3)).collect();
    let trace = trace_from_columns(&[("conv", 5)], &cols, Some((labels, 3)));
    let slice = slice_by_class(&trace, 1).unwrap();
    assert!(slice.len() >= 30);
    for mode in [CorrMode::Signed, CorrMode::Absolute] {
        let pc = layer_correlations(&slice, 0, mode).unwrap();
        for p in pc.pairs() {
            let r = pearson(
                &column(&trace, slice.rows(), p.i),
                &column(&trace, slice.rows(), p.j),
            )
            .unwrap();
            let expected = if mode == CorrMode::Absolute { r.abs() } else { r };
            assert_eq!(p.coef.to_bits(), expected.to_bits(), "pair ({}, {})", p.i, p.j);
        }
    }
}

#[test]
fn greedy_on_hand_built_matrix_is_minimal() {
    let coef = [
        [1.0, 0.9, 0.2, 0.2],
        [0.9, 1.0, 0.2, 0.2],
        [0.2, 0.2, 1.0, 0.7],
        [0.2, 0.2, 0.7, 1.0],
    ];
    let theta = 0.6;
    let delta: Vec<Vec<usize>> = (0..4)
        .map(|i| (0..4).filter(|&j| coef[i][j] >= theta).collect())
        .collect();
    let universe = (0..4).map(|c| ChannelRef::new(0, c, "conv")).collect();
    let problem = SelectionProblem::new(universe, theta, CorrMode::Absolute, delta.clone()).unwrap();
    let greedy = greedy_select(&problem, Policy::GreedyMax);
    assert_eq!(greedy.selected(), &[0, 2]);

    // every subset of the four channels
    let smallest = (0u32..16)
        .filter(|mask| delta.iter().all(|d| d.iter().any(|&j| mask & (1 << j) != 0)))
        .map(u32::count_ones)
        .min()
        .unwrap();
    assert_eq!(smallest as usize, greedy.selected().len());
}

#[test]
fn build_delta_extremes() {
    let mut rng = rng(5);
    let cols = factor_columns(&mut rng, 40, 6);
    let trace = trace_from_columns(&[("a", 3), ("b", 3)], &cols, None);

    let strict = build_delta(&trace, &[0, 1], 1.0, CorrMode::Absolute).unwrap();
    for i in 0..strict.len() {
        assert_eq!(strict.delta(i).collect::<Vec<_>>(), vec![i]);
    }

    let loose = build_delta(&trace, &[0, 1], f64::MIN_POSITIVE, CorrMode::Absolute).unwrap();
    for i in 0..loose.len() {
        let layer = i / 3;
        assert_eq!(
            loose.delta(i).collect::<Vec<_>>(),
            (layer * 3..layer * 3 + 3).collect::<Vec<_>>()
        );
    }
}

#[test]
fn build_delta_gives_dead_channels_themselves() {
    let cols = vec![
        vec![1.0, 2.0, 3.0, 4.0],
        vec![7.0; 4],
        vec![2.0, 4.0, 6.0, 8.5],
    ];
    let trace = trace_from_columns(&[("conv", 3)], &cols, None);
    let p = build_delta(&trace, &[0], 0.5, CorrMode::Signed).unwrap();
    assert_eq!(p.delta(1).collect::<Vec<_>>(), vec![1]);
    assert_eq!(p.delta(0).collect::<Vec<_>>(), vec![0, 2]);
    let r = greedy_select(&p, Policy::GreedyMax);
    assert!(r.feasible());
    assert_eq!(r.selected(), &[0, 1]);
}

/// Unexpectedness recomputed from `pearson`, an explicit sort and an explicit
/// sum over the chosen pairs.
fn score_oracle(train: &ActivationTrace, test: &ActivationTrace, class: u32, k: f64) -> (f64, f64) {
    let rows = |t: &ActivationTrace| -> Vec<usize> {
        (0..t.num_samples())
            .filter(|&r| t.labels().unwrap()[r] == class)
            .collect()
    };
    let (train_rows, test_rows) = (rows(train), rows(test));
    let n = train.layers()[0].channels;
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let a = pearson(&column(train, &train_rows, i), &column(train, &train_rows, j)).unwrap();
            let b = pearson(&column(test, &test_rows, i), &column(test, &test_rows, j)).unwrap();
            pairs.push((i, j, a, b));
        }
    }
    pairs.sort_by(|x, y| y.2.partial_cmp(&x.2).unwrap().then((x.0, x.1).cmp(&(y.0, y.1))));
    let count = (k * pairs.len() as f64 - 1e-9).ceil() as usize;
    let mut raw = 0.0;
    for p in &pairs[..count] {
        raw += (p.2 - p.3).abs();
    }
    (raw, raw / count as f64)
}

#[test]
fn unexpectedness_matches_compositional_oracle() {
    let mut rng = rng(23);
    for k in [0.05, 0.2, 0.5] {
        let train_cols = factor_columns(&mut rng, 200, 6);
        let test_cols = factor_columns(&mut rng, 200, 6);
        let labels: Vec<u32> = (0..200).map(|r| (r % 2) as u32).collect();
        let train = trace_from_columns(&[("conv", 6)], &train_cols, Some((labels.clone(), 2)));
        let test = trace_from_columns(&[("conv", 6)], &test_cols, Some((labels, 2)));
        for class in 0..2 {
            let s = unexpectedness_score(&train, &test, 0, class, k).unwrap();
            let (raw, normalized) = score_oracle(&train, &test, class, k);
            assert_eq!(s.raw, raw);
            assert_eq!(s.normalized, normalized);
            assert_eq!(s.topk_size, topk_count(k, 15));
        }
    }
}

#[test]
fn ranking_matches_manual_sort() {
    let mut rng = rng(31);
    let labels: Vec<u32> = (0..90).map(|r| (r % 2) as u32).collect();
    let train_cols = factor_columns(&mut rng, 90, 5);
    let train = trace_from_columns(&[("conv", 5)], &train_cols, Some((labels.clone(), 2)));
    let shared = factor_columns(&mut rng, 90, 5);

    let mut tests = BTreeMap::new();
    // channels 0 and 3 get identical test data, forcing exact score ties
    for c in [3usize, 0, 2] {
        let cols = if c == 2 {
            factor_columns(&mut rng, 90, 5)
        } else {
            shared.clone()
        };
        tests.insert(
            ChannelRef::new(0, c, "conv"),
            trace_from_columns(&[("conv", 5)], &cols, Some((labels.clone(), 2))),
        );
    }

    for basis in [Basis::Raw, Basis::Normalized] {
        let report = rank_channels(&tests, &train, 0.3, basis, Aggregate::Max).unwrap();
        let mut manual = Vec::new();
        for (channel, test) in &tests {
            for class in 0..2 {
                let s = unexpectedness_score(&train, test, 0, class, 0.3).unwrap();
                let v = if basis == Basis::Raw { s.raw } else { s.normalized };
                manual.push((v, channel.channel_index, class));
            }
        }
        manual.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then((a.1, a.2).cmp(&(b.1, b.2))));
        let got: Vec<_> = report
            .entries
            .iter()
            .map(|e| (e.score.get(basis), e.channel.channel_index, e.class_id))
            .collect();
        assert_eq!(got, manual);
        let ranks: Vec<_> = report.entries.iter().map(|e| e.rank).collect();
        assert_eq!(ranks, (1..=6).collect::<Vec<_>>());

        // per-channel aggregate is the max over classes
        for agg in &report.channels {
            let best = manual
                .iter()
                .filter(|m| m.1 == agg.channel.channel_index)
                .map(|m| m.0)
                .fold(f64::MIN, f64::max);
            assert_eq!(agg.score, best);
        }
        let tie: Vec<_> = report
            .channels
            .iter()
            .filter(|c| c.channel.channel_index != 2)
            .map(|c| c.channel.channel_index)
            .collect();
        assert_eq!(tie, vec![0, 3]);
    }

    let mean = rank_channels(&tests, &train, 0.3, Basis::Raw, Aggregate::Mean).unwrap();
    for agg in &mean.channels {
        let scores: Vec<f64> = mean
            .entries
            .iter()
            .filter(|e| e.channel == agg.channel)
            .map(|e| e.score.raw)
            .collect();
        assert_eq!(agg.score, scores.iter().sum::<f64>() / scores.len() as f64);
    }
}

#[test]
fn two_channel_order() {
    // channel 1's test data matches training; channel 0's is scrambled
    let mut rng = rng(3);
    let labels = vec![0u32; 60];
    let train_cols = factor_columns(&mut rng, 60, 4);
    let train = trace_from_columns(&[("conv", 4)], &train_cols, Some((labels.clone(), 1)));
    let scrambled = factor_columns(&mut rng, 60, 4);
    let mut tests = BTreeMap::new();
    tests.insert(
        ChannelRef::new(0, 0, "conv"),
        trace_from_columns(&[("conv", 4)], &scrambled, Some((labels.clone(), 1))),
    );
    tests.insert(ChannelRef::new(0, 1, "conv"), train.clone());
    let r = rank_channels(&tests, &train, 0.5, Basis::Raw, Aggregate::Max).unwrap();
    assert!(r.entries[0].score.raw > 0.0);
    assert_eq!(r.entries[0].channel.channel_index, 0);
    assert_eq!(r.entries[1].channel.channel_index, 1);
    assert_eq!(r.entries[1].score.raw, 0.0);
}

#[test]
fn subgroups_sharing_a_generator_are_closer() {
    let mut rng = rng(47);
    let n = 8;
    // one weight matrix per generator; groups 0 and 1 share generator A
    let weights = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect()
    };
    let gen_a = weights(&mut rng);
    let gen_b = weights(&mut rng);
    let rows_per_group = 300;
    let mut values = Vec::new();
    let mut grouping = Vec::new();
    for (group, w) in [(0u32, &gen_a), (1, &gen_a), (2, &gen_b)] {
        for _ in 0..rows_per_group {
            let latent: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            for wc in w.iter() {
                let v: f64 = wc.iter().zip(&latent).map(|(a, b)| a * b).sum::<f64>()
                    + 0.3 * rng.random_range(-1.0..1.0);
                values.push(v as f32);
            }
            grouping.push(group);
        }
    }
    let trace = ActivationTrace::new(
        vec![LayerInfo::new("conv", n)],
        3 * rows_per_group,
        values,
        None,
        None,
    )
    .unwrap();
    let d = subgroup_distance_study(&trace, &grouping, 0, 0.1).unwrap();
    assert_eq!(d.groups, vec![0, 1, 2]);
    for g in 0..3 {
        assert_eq!(d.get(g, g), 0.0);
        for h in 0..3 {
            assert_eq!(d.get(g, h), d.get(h, g));
        }
    }
    assert!(d.get(0, 1) < d.get(0, 2), "{:?}", d.matrix);
    assert!(d.get(0, 1) < d.get(1, 2), "{:?}", d.matrix);
}

#[test]
fn coverage_matches_brute_force() {
    let mut rng = rng(59);
    for _ in 0..20 {
        let channels = rng.random_range(1..12);
        let train_rows = rng.random_range(1..40);
        let test_rows = rng.random_range(0..40);
        let gen = |rng: &mut rand_chacha::ChaCha8Rng, rows: usize, scale: f32| -> Vec<Vec<f32>> {
            (0..channels)
                .map(|_| (0..rows).map(|_| rng.random_range(0.0..scale)).collect())
                .collect()
        };
        let train_cols = gen(&mut rng, train_rows, 1.0);
        let test_cols = gen(&mut rng, test_rows, 1.1);
        let train = trace_from_columns(&[("conv", channels)], &train_cols, None);
        let test = if test_rows == 0 {
            ActivationTrace::new(vec![LayerInfo::new("conv", channels)], 0, vec![], None, None).unwrap()
        } else {
            trace_from_columns(&[("conv", channels)], &test_cols, None)
        };
        let report = boundary_coverage(&train, &test, &train.channels()).unwrap();

        let mut covered = 0;
        for c in 0..channels {
            let mut upper = f32::MIN;
            for r in 0..train_rows {
                upper = upper.max(train_cols[c][r]);
            }
            assert_eq!(report.upper_bounds()[c], upper as f64);
            let mut hit = false;
            for r in 0..test_rows {
                if test_cols[c][r] > upper {
                    hit = true;
                }
            }
            assert_eq!(report.covered()[c], hit);
            covered += hit as usize;
        }
        assert_eq!(report.fraction(), covered as f64 / channels as f64);
    }
}
