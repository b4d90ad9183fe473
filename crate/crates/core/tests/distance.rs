mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_force_order, dtw_enumerate, dtw_recursive, pooled_std, reference_distance, rows};
use tablecls::dataset::{channel_stats, Series, TimeSeriesSample};
use tablecls::distance::{distance, lockstep_path_cost, DistanceMetric, MetricKind};
use tablecls::retrieval::retrieve_neighbors;
use tablecls::synthetic::random_series;

fn metrics(train: &[TimeSeriesSample]) -> Vec<DistanceMetric> {
    vec![
        DistanceMetric::euclidean(),
        DistanceMetric::manhattan(),
        DistanceMetric::standardized(channel_stats(train).unwrap()),
        DistanceMetric::dtw(None),
    ]
}

#[test]
fn dtw_matches_unpruned_recursion_on_short_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..60 {
        let m = rng.random_range(1..=3);
        let (t, t2) = (rng.random_range(1..=7), rng.random_range(1..=7));
        let a = random_series(&mut rng, t, m, 3.0);
        let b = random_series(&mut rng, t2, m, 3.0);
        let got = distance(&a, &b, &DistanceMetric::dtw(None)).unwrap();
        let want = dtw_recursive(&rows(&a), &rows(&b));
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    }
}

#[test]
fn windowed_dtw_matches_constrained_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let m = rng.random_range(1..=3);
        let t = rng.random_range(1..=10);
        let t2 = (t + rng.random_range(0..=2)).min(12);
        let w = rng.random_range(0..=4);
        let a = random_series(&mut rng, t, m, 2.0);
        let b = random_series(&mut rng, t2, m, 2.0);
        let got = distance(&a, &b, &DistanceMetric::dtw(Some(w))).unwrap();
        let want = dtw_enumerate(&rows(&a), &rows(&b), Some(w));
        if want.is_infinite() {
            assert!(got.is_infinite(), "window {w} t={t} t'={t2}: {got}");
        } else {
            assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
        }
    }
}

#[test]
fn zero_window_on_equal_lengths_is_the_lockstep_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = random_series(&mut rng, 9, 3, 1.0);
    let b = random_series(&mut rng, 9, 3, 1.0);
    let got = distance(&a, &b, &DistanceMetric::dtw(Some(0))).unwrap();
    assert!((got - lockstep_path_cost(&a, &b)).abs() < 1e-12);
}

#[test]
fn toy_retrieval() {
    let s = |v: f64, l: &str, id| TimeSeriesSample { id, values: Series::from_rows(&[vec![v]]).unwrap(), label: l.into() };
    let train = vec![s(0.0, "a", 0), s(10.0, "b", 1), s(1.0, "a", 2)];
    let q = Series::from_rows(&[vec![0.4]]).unwrap();
    let hits = retrieve_neighbors(&q, &train, &DistanceMetric::euclidean(), 2).unwrap();
    assert_eq!(hits.iter().map(|h| h.train_index).collect::<Vec<_>>(), vec![0, 2]);
    let all = retrieve_neighbors(&q, &train, &DistanceMetric::euclidean(), 3).unwrap();
    assert_eq!(all.iter().map(|h| h.train_index).collect::<Vec<_>>(), vec![0, 2, 1]);
}

#[test]
fn retrieval_ties_go_to_lower_index() {
    let s = |v: f64, id| TimeSeriesSample { id, values: Series::from_rows(&[vec![v]]).unwrap(), label: "x".into() };
    let train = vec![s(2.0, 0), s(-2.0, 1), s(2.0, 2), s(5.0, 3)];
    let q = Series::from_rows(&[vec![0.0]]).unwrap();
    let hits = retrieve_neighbors(&q, &train, &DistanceMetric::manhattan(), 3).unwrap();
    assert_eq!(hits.iter().map(|h| h.train_index).collect::<Vec<_>>(), vec![0, 1, 2]);
}

#[test]
fn awr_shaped_manhattan_k3_equals_scan_and_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let train: Vec<TimeSeriesSample> = (0..275)
        .map(|id| TimeSeriesSample { id, values: random_series(&mut rng, 144, 9, 1.0), label: format!("{}.0", id % 25 + 1) })
        .collect();
    let std = pooled_std(&train);
    for _ in 0..100 {
        let q = random_series(&mut rng, 144, 9, 1.0);
        let dists: Vec<f64> = train.iter().map(|s| reference_distance(MetricKind::Man, &q, &s.values, &std)).collect();
        let want = &brute_force_order(&dists)[..3];
        let hits = retrieve_neighbors(&q, &train, &DistanceMetric::manhattan(), 3).unwrap();
        assert_eq!(hits.iter().map(|h| h.train_index).collect::<Vec<_>>(), want);
        for h in &hits {
            assert_eq!(h.distance, dists[h.train_index]);
            assert_eq!(h.label, train[h.train_index].label);
        }
    }
}

fn pair(max_t: usize, equal: bool) -> impl Strategy<Value = (Series, Series)> {
    (1..=max_t, 1..=max_t, 1..=3usize, any::<u64>()).prop_map(move |(t, t2, m, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_series(&mut rng, t, m, 5.0);
        let b = random_series(&mut rng, if equal { t } else { t2 }, m, 5.0);
        (a, b)
    })
}

fn all_metrics_for(a: &Series, b: &Series) -> Vec<DistanceMetric> {
    let train = [a, b].iter().enumerate().map(|(id, s)| TimeSeriesSample { id, values: (*s).clone(), label: "x".into() }).collect::<Vec<_>>();
    metrics(&train)
}

proptest! {
    #[test]
    fn symmetric_nonnegative_with_zero_self_distance((a, b) in pair(10, true)) {
        for metric in all_metrics_for(&a, &b) {
            let ab = distance(&a, &b, &metric).unwrap();
            let ba = distance(&b, &a, &metric).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0), "{:?}: {} vs {}", metric.kind(), ab, ba);
            prop_assert_eq!(distance(&a, &a, &metric).unwrap(), 0.0);
        }
    }

    #[test]
    fn dtw_is_symmetric_on_unequal_lengths((a, b) in pair(12, false)) {
        let m = DistanceMetric::dtw(None);
        let ab = distance(&a, &b, &m).unwrap();
        prop_assert!((ab - distance(&b, &a, &m).unwrap()).abs() <= 1e-9 * ab.max(1.0));
    }

    #[test]
    fn dtw_never_exceeds_lockstep((a, b) in pair(15, true)) {
        prop_assert!(distance(&a, &b, &DistanceMetric::dtw(None)).unwrap() <= lockstep_path_cost(&a, &b) + 1e-9);
    }

    #[test]
    fn wide_window_equals_unconstrained((a, b) in pair(15, false), extra in 0usize..5) {
        let w = a.len().max(b.len()) + extra;
        prop_assert_eq!(distance(&a, &b, &DistanceMetric::dtw(Some(w))).unwrap(), distance(&a, &b, &DistanceMetric::dtw(None)).unwrap());
    }

    #[test]
    fn retrieval_is_a_prefix_of_the_full_order(seed in any::<u64>(), k in 1usize..=20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train: Vec<TimeSeriesSample> = (0..20)
            .map(|id| TimeSeriesSample { id, values: random_series(&mut rng, 6, 2, 1.0), label: (id % 3).to_string() })
            .collect();
        let q = random_series(&mut rng, 6, 2, 1.0);
        for metric in metrics(&train) {
            let full = retrieve_neighbors(&q, &train, &metric, train.len()).unwrap();
            let part = retrieve_neighbors(&q, &train, &metric, k).unwrap();
            prop_assert_eq!(&full[..k], &part[..]);
            prop_assert!(full.windows(2).all(|w| (w[0].distance, w[0].train_index) < (w[1].distance, w[1].train_index)));
        }
    }
}
