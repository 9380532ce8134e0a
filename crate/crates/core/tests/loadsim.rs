use foldgan::loadsim::simulate_household_raw;
use foldgan::{simulate_dataset, simulate_household, split_dataset, ClassLabel, Dataset32, Dataset64, Error, SimConfig};
use proptest::prelude::*;

fn cfg(n: usize, pool_fraction: f64) -> SimConfig {
    SimConfig {
        n_households: n,
        pool_fraction,
        ..SimConfig::default()
    }
}

#[test]
fn pool_counts_follow_the_fraction() {
    let ds: Dataset32 = simulate_dataset(&cfg(100, 0.1)).unwrap();
    assert_eq!((ds.count(ClassLabel::Pool), ds.count(ClassLabel::NonPool)), (10, 90));

    let large = SimConfig {
        rows: 8,
        cols: 16,
        peak_hours: (2, 6),
        pump_daily_window: (3, 6),
        pump_season_window: (1, 7),
        ..cfg(869, 58.0 / 869.0)
    };
    let ds: Dataset32 = simulate_dataset(&large).unwrap();
    assert_eq!(ds.len(), 869);
    assert_eq!(ds.count(ClassLabel::Pool), 58);
}

#[test]
fn simulation_is_deterministic_and_valid() {
    let c = cfg(40, 0.2);
    let a: Dataset64 = simulate_dataset(&c).unwrap();
    let b: Dataset64 = simulate_dataset(&c).unwrap();
    assert_eq!(a, b);
    for h in a.items() {
        assert!(h.normalized);
        assert_eq!((h.rows(), h.cols()), (24, 64));
        assert!(h.as_row_major().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }
    let other: Dataset64 = simulate_dataset(&SimConfig { seed: 43, ..c }).unwrap();
    assert_ne!(a, other);
}

#[test]
fn too_few_households_is_an_error() {
    assert!(matches!(simulate_dataset::<f32>(&cfg(1, 0.5)), Err(Error::Config(_))));
    let bad = SimConfig {
        pump_season_window: (10, 40),
        ..SimConfig::default()
    };
    assert!(matches!(simulate_dataset::<f32>(&bad), Err(Error::Config(_))));
}

#[test]
fn off_peak_mean_matches_configured_moments() {
    // Peaks far from the sampled rows so the profile there is the bare base load.
    let c = SimConfig {
        rows: 64,
        peak_hours: (24, 40),
        pump_daily_window: (24, 40),
        base_mean: 1.0,
        ..SimConfig::default()
    };
    let rows: Vec<usize> = (0..12).chain(52..64).collect();
    let mut checked = 0;
    for seed in 0..8u64 {
        let raw = simulate_household_raw(&c, ClassLabel::NonPool, seed).unwrap();
        let mu = c.base_mean * raw.scale;
        // Clamping at zero biases the mean unless the load sits well above the noise.
        if mu < 4.0 * c.noise_sigma {
            continue;
        }
        let cells: Vec<f64> = rows
            .iter()
            .flat_map(|&r| (0..c.cols).map(move |col| (r, col)))
            .take(1000)
            .map(|(r, col)| raw.heatmap.get(r, col))
            .collect();
        assert_eq!(cells.len(), 1000);
        let mean = cells.iter().sum::<f64>() / 1000.0;
        let tol = 3.0 * c.noise_sigma / 1000f64.sqrt();
        assert!((mean - mu).abs() < tol, "seed {seed}: mean {mean}, expected {mu} ± {tol}");
        checked += 1;
    }
    assert!(checked >= 5, "only {checked} households had a usable scale");
}

#[test]
fn pool_region_is_brighter() {
    let c = SimConfig::default();
    let (r0, r1) = c.pump_daily_window;
    let (c0, c1) = c.pump_season_window;
    let region_mean = |label: ClassLabel| {
        let mut sum = 0.0;
        for seed in 0..60u64 {
            let h = simulate_household::<f64>(&c, label, 1000 + seed).unwrap();
            for r in r0..r1 {
                for col in c0..c1 {
                    sum += h.get(r, col);
                }
            }
        }
        sum / (60 * (r1 - r0) * (c1 - c0)) as f64
    };
    let (pool, non_pool) = (region_mean(ClassLabel::Pool), region_mean(ClassLabel::NonPool));
    assert!(pool > non_pool, "pool {pool} vs non-pool {non_pool}");
}

#[test]
fn stratified_split_counts() {
    let ds: Dataset32 = simulate_dataset(&cfg(100, 0.1)).unwrap();
    let (train, test) = split_dataset(&ds, 0.5, 3).unwrap();
    assert_eq!((train.count(ClassLabel::NonPool), train.count(ClassLabel::Pool)), (45, 5));
    assert_eq!((test.count(ClassLabel::NonPool), test.count(ClassLabel::Pool)), (45, 5));
    assert_eq!(split_dataset(&ds, 0.5, 3).unwrap(), (train, test));

    let small: Dataset32 = simulate_dataset(&cfg(10, 0.3)).unwrap();
    let (train, test) = split_dataset(&small, 0.99, 1).unwrap();
    for label in ClassLabel::ALL {
        assert!(test.count(label) >= 1);
        assert!(train.count(label) >= 1);
    }
}

#[test]
fn split_needs_two_members_per_class() {
    let ds: Dataset32 = simulate_dataset(&cfg(20, 0.05)).unwrap();
    assert_eq!(ds.count(ClassLabel::Pool), 1);
    assert!(matches!(split_dataset(&ds, 0.5, 0), Err(Error::Stratify(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn split_partitions_and_stratifies(n in 10usize..60, frac in 0.1f64..0.5, ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let c = SimConfig { rows: 8, cols: 8, peak_hours: (2, 6), pump_daily_window: (3, 6), pump_season_window: (0, 4), ..cfg(n, frac) };
        let ds: Dataset32 = simulate_dataset(&c).unwrap();
        prop_assume!(ds.count(ClassLabel::Pool) >= 2 && ds.count(ClassLabel::NonPool) >= 2);
        let (train, test) = split_dataset(&ds, ratio, seed).unwrap();
        let mut ids: Vec<&String> = train.ids().iter().chain(test.ids()).collect();
        ids.sort();
        let mut all: Vec<&String> = ds.ids().iter().collect();
        all.sort();
        prop_assert_eq!(ids, all);
        for label in ClassLabel::ALL {
            let want = ratio * ds.count(label) as f64;
            prop_assert!((train.count(label) as f64 - want).abs() <= 1.0);
            prop_assert!(test.count(label) >= 1);
        }
    }
}
