use crane_twin_core::{dtw, max_dev, rmse};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Enumerates every monotone alignment path inside the band and returns the
/// lexicographically best (lowest cost, then longest) as (cost, length).
fn exhaustive_dtw(a: &[f64], b: &[f64], band: usize) -> f64 {
    fn walk(
        a: &[f64],
        b: &[f64],
        band: usize,
        i: usize,
        j: usize,
        cost: f64,
        len: usize,
        best: &mut Option<(f64, usize)>,
    ) {
        if i.abs_diff(j) > band {
            return;
        }
        let cost = cost + (a[i] - b[j]).abs();
        let len = len + 1;
        if i == a.len() - 1 && j == b.len() - 1 {
            let better = match best {
                None => true,
                Some((c, l)) => cost < *c || (cost == *c && len > *l),
            };
            if better {
                *best = Some((cost, len));
            }
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, band, i + 1, j, cost, len, best);
        }
        if j + 1 < b.len() {
            walk(a, b, band, i, j + 1, cost, len, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, band, i + 1, j + 1, cost, len, best);
        }
    }
    let mut best = None;
    walk(a, b, band, 0, 0, 0.0, 0, &mut best);
    let (cost, len) = best.expect("band admits a path");
    cost / len as f64
}

fn random_seq(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn dtw_hand_instance() {
    assert_eq!(exhaustive_dtw(&[0.0, 0.0, 1.0], &[0.0, 1.0, 1.0], 2), 0.0);
    assert_eq!(dtw(&[0.0, 0.0, 1.0], &[0.0, 1.0, 1.0], 2).unwrap(), 0.0);
}

#[test]
fn dtw_matches_exhaustive_alignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=6);
        let a = random_seq(&mut rng, n);
        let b = random_seq(&mut rng, m);
        let band = n.abs_diff(m) + rng.random_range(0..=3);
        let expected = exhaustive_dtw(&a, &b, band);
        let got = dtw(&a, &b, band).unwrap();
        assert_eq!(got, expected, "case {case}: a={a:?} b={b:?} band={band}");
    }
}

#[test]
fn rmse_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let a = random_seq(&mut rng, 7);
        let b = random_seq(&mut rng, 7);
        let mut sq = 0.0;
        for i in 0..7 {
            let d = a[i] - b[i];
            sq += d * d;
        }
        let direct = (sq / 7.0).sqrt();
        assert!((rmse(&a, &b).unwrap() - direct).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn metric_axioms(
        a in prop::collection::vec(-10.0f64..10.0, 1..40),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        let band = 5;
        for d in [rmse(&a, &b).unwrap(), max_dev(&a, &b).unwrap(), dtw(&a, &b, band).unwrap()] {
            prop_assert!(d >= 0.0);
        }
        prop_assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
        prop_assert_eq!(max_dev(&a, &b).unwrap(), max_dev(&b, &a).unwrap());
        prop_assert_eq!(dtw(&a, &b, band).unwrap(), dtw(&b, &a, band).unwrap());
        prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(max_dev(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(dtw(&a, &a, band).unwrap(), 0.0);

        prop_assert!(max_dev(&a, &b).unwrap() >= rmse(&a, &b).unwrap());
        let mean_abs = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
        prop_assert!(dtw(&a, &b, band).unwrap() <= mean_abs + 1e-12);
    }
}
