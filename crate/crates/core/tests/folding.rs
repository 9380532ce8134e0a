use foldgan::{fold, kernel_economy, normalize, unfold, ClassLabel, Error, Heatmap, LoadSeries};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn series(values: Vec<f64>) -> LoadSeries<f64> {
    LoadSeries::new(values, 15, ClassLabel::Pool, "s").unwrap()
}

#[test]
fn index_law_holds_on_every_grid_up_to_8x8() {
    for p in 1..=8 {
        for d in 1..=8 {
            for extra in 0..p {
                let len = p * d + extra;
                let values: Vec<f64> = (0..len).map(|i| i as f64 * 1.5 + 0.25).collect();
                let f = fold(&series(values.clone()), p).unwrap();
                let h = &f.heatmap;
                assert_eq!((h.rows(), h.cols()), (p, d));
                assert_eq!(f.discarded, extra);
                assert_eq!(f.truncated(), extra > 0);
                assert_eq!(h.label, ClassLabel::Pool);
                assert!(!h.normalized);
                for r in 0..p {
                    for c in 0..d {
                        assert_eq!(h.get(r, c), values[c * p + r], "P={p} D={d} ({r},{c})");
                    }
                }
                let back = unfold(h, 15, "s").unwrap();
                assert_eq!(back.values(), &values[..p * d]);
                let again = fold(&back, p).unwrap().heatmap;
                assert_eq!(&again, h);
            }
        }
    }
}

#[test]
fn fifteen_minute_household_folds_to_96_by_395() {
    let s = series((0..37920).map(|i| (i % 97) as f64).collect());
    assert_eq!(s.samples_per_day(), 96);
    let f = fold(&s, s.samples_per_day()).unwrap();
    assert_eq!((f.heatmap.rows(), f.heatmap.cols()), (96, 395));
    assert!(!f.truncated());
}

#[test]
fn partial_period_is_dropped() {
    let f = fold(&series((0..11).map(f64::from).collect()), 4).unwrap();
    assert_eq!((f.heatmap.rows(), f.heatmap.cols()), (4, 2));
    assert_eq!(f.discarded, 3);
    assert_eq!(f.heatmap.get(3, 1), 7.0);
}

#[test]
fn too_short_series_is_an_error() {
    assert!(matches!(
        fold(&series(vec![1.0, 2.0]), 3),
        Err(Error::SeriesTooShort { len: 2, period: 3 })
    ));
}

#[test]
fn unfold_matches_brute_force_index_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data: Vec<f64> = (0..35).map(|_| rng.gen_range(0.0..6.0)).collect();
    let h = Heatmap::from_row_major(5, 7, data.clone(), ClassLabel::NonPool, false).unwrap();
    let s = unfold(&h, 15, "x").unwrap();
    assert_eq!(s.len(), 35);
    let mut expected = vec![0.0; 35];
    for r in 0..5 {
        for c in 0..7 {
            expected[c * 5 + r] = data[r * 7 + c];
        }
    }
    assert_eq!(s.values(), &expected[..]);

    let one = Heatmap::from_row_major(1, 1, vec![7.0], ClassLabel::NonPool, false).unwrap();
    assert_eq!(unfold(&one, 15, "x").unwrap().values(), &[7.0]);
}

#[test]
fn normalize_matches_two_pass_oracle() {
    let h = Heatmap::from_row_major(2, 2, vec![0.0, 10.0, 5.0, 10.0], ClassLabel::NonPool, false).unwrap();
    assert_eq!(normalize(&h).unwrap().as_row_major(), &[0.0, 1.0, 0.5, 1.0]);
    let flat = Heatmap::from_row_major(2, 2, vec![3.0; 4], ClassLabel::NonPool, false).unwrap();
    assert_eq!(normalize(&flat).unwrap().as_row_major(), &[0.0; 4]);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let data: Vec<f64> = (0..16).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let mut lo = f64::INFINITY;
        for &v in &data {
            lo = lo.min(v);
        }
        let mut hi = f64::NEG_INFINITY;
        for &v in &data {
            hi = hi.max(v);
        }
        let expected: Vec<f64> = data.iter().map(|v| (v - lo) / (hi - lo)).collect();
        let h = Heatmap::from_row_major(4, 4, data, ClassLabel::Pool, false).unwrap();
        let n = normalize(&h).unwrap();
        assert!(n.normalized);
        assert_eq!(n.as_row_major(), &expected[..]);
    }
}

/// Span covered by the sample positions of a feature at phase `phase` in
/// periods `start..start + m`, in the raw series and in the folded grid.
fn brute_force_spans(m: usize, p: usize, start: usize, phase: usize) -> (usize, usize) {
    let positions: Vec<usize> = (0..m).map(|k| (start + k) * p + phase).collect();
    let span_1d = positions.iter().max().unwrap() - positions.iter().min().unwrap() + 1;
    let cols: Vec<usize> = positions.iter().map(|i| i / p).collect();
    let rows: Vec<usize> = positions.iter().map(|i| i % p).collect();
    assert!(rows.iter().all(|&r| r == phase));
    let width_2d = cols.iter().max().unwrap() - cols.iter().min().unwrap() + 1;
    (span_1d, width_2d)
}

#[test]
fn kernel_economy_matches_brute_force() {
    for m in 1..=6 {
        for p in 1..=12 {
            let e = kernel_economy(m, p, 0).unwrap();
            for start in 0..3 {
                for phase in 0..p {
                    assert_eq!(brute_force_spans(m, p, start, phase), (e.span_1d, e.weights_2d));
                }
            }
        }
    }
    let e = kernel_economy(5, 96, 0).unwrap();
    assert_eq!((e.span_1d, e.weights_2d), (385, 5));
    let e = kernel_economy(1, 37, 0).unwrap();
    assert_eq!((e.span_1d, e.weights_2d), (1, 1));
    assert_eq!(kernel_economy(2, 4, 3).unwrap().reduction_example_2d, 6);
    assert!(kernel_economy(0, 4, 0).is_err());
}

proptest! {
    #[test]
    fn fold_unfold_roundtrip(p in 1usize..12, d in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..p * d).map(|_| rng.gen_range(0.0..2e3)).collect();
        let h = fold(&series(values.clone()), p).unwrap().heatmap;
        let back = unfold(&h, 15, "s").unwrap();
        prop_assert_eq!(back.values(), &values[..]);
    }

    #[test]
    fn heatmap_unfold_fold_roundtrip(p in 1usize..10, d in 1usize..10, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..p * d).map(|_| rng.gen_range(0.0..5.0)).collect();
        let h = Heatmap::from_row_major(p, d, data, ClassLabel::Pool, false).unwrap();
        let s = unfold(&h, 15, "s").unwrap();
        prop_assert_eq!(fold(&s, p).unwrap().heatmap, h);
    }

    #[test]
    fn normalized_range(p in 1usize..8, d in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..p * d).map(|_| rng.gen_range(-1e6..1e6)).collect();
        let h = Heatmap::from_row_major(p, d, data.clone(), ClassLabel::NonPool, false).unwrap();
        let n = normalize(&h).unwrap();
        prop_assert!(n.as_row_major().iter().all(|&v| (0.0..=1.0).contains(&v)));
        if p * d > 1 {
            let (imin, imax) = data.iter().enumerate().fold((0, 0), |(a, b), (i, &v)| {
                (if v < data[a] { i } else { a }, if v > data[b] { i } else { b })
            });
            if data[imax] > data[imin] {
                prop_assert_eq!(n.as_row_major()[imin], 0.0);
                prop_assert_eq!(n.as_row_major()[imax], 1.0);
            }
        }
    }

    #[test]
    fn economy_span_is_monotone(m in 2usize..20, p in 1usize..200) {
        let e = kernel_economy(m, p, 0).unwrap();
        prop_assert!(kernel_economy(m + 1, p, 0).unwrap().span_1d > e.span_1d);
        prop_assert!(kernel_economy(m, p + 1, 0).unwrap().span_1d > e.span_1d);
    }
}
