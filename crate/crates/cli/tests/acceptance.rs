//! End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
//! if any fails. Runs without the libtest harness so the lines stay readable.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use foldgan::io::{checkpoint_to_bytes, load_checkpoint, parse_report};
use foldgan::nn::{Dense, Layer, Network, Tensor};
use foldgan::seed::rng_from_seed;
use foldgan::tstr::{
    boxplot_stats, class_metrics, macro_average, run_tstr_trials, top_k, ClassMetrics, ConfusionMatrix,
    GeneratorSource, TrialResult, TstrConfig,
};
use foldgan::wgan::{gradient_penalty, train_wgan, EpochLog, GanArch, GanTrainConfig};
use foldgan::{fold, simulate_dataset, unfold, ClassLabel, Dataset32, Heatmap, LabelledDataset, LoadSeries, SimConfig};
use rand::Rng;

#[path = "../../core/tests/gradients.rs"]
mod gradients;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cli(args: &[&str]) -> Result<(), String> {
    let argv = std::iter::once("foldgan").chain(args.iter().copied());
    match foldgan_cli::run(argv) {
        0 => Ok(()),
        code => Err(format!("`foldgan {}` exited with {code}", args.join(" "))),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn desk_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")
}

// 1: folding

fn folding() -> Check {
    let mut grids = 0;
    for p in 1..=8usize {
        for d in 1..=8usize {
            for extra in 0..p {
                let values: Vec<f64> = (0..p * d + extra).map(|i| i as f64 * 0.5 + 1.0).collect();
                let series = LoadSeries::new(values.clone(), 15, ClassLabel::NonPool, "s").map_err(|e| e.to_string())?;
                let f = fold(&series, p).map_err(|e| e.to_string())?;
                let h = &f.heatmap;
                ensure((h.rows(), h.cols(), f.discarded) == (p, d, extra), || format!("shape at P={p} D={d}"))?;
                for r in 0..p {
                    for c in 0..d {
                        ensure(h.get(r, c) == values[c * p + r], || format!("index law at P={p} D={d} ({r},{c})"))?;
                    }
                }
                let back = unfold(h, 15, "s").map_err(|e| e.to_string())?;
                ensure(back.values() == &values[..p * d], || format!("roundtrip at P={p} D={d}"))?;
                grids += 1;
            }
        }
    }
    let household = LoadSeries::new((0..37920).map(|i| (i % 89) as f32).collect(), 15, ClassLabel::Pool, "h")
        .map_err(|e| e.to_string())?;
    let f = fold(&household, household.samples_per_day()).map_err(|e| e.to_string())?;
    let shape = (f.heatmap.rows(), f.heatmap.cols());
    ensure(shape == (96, 395), || format!("37920 readings folded to {shape:?}"))?;
    Ok(format!("{grids} grids exact, 37920 -> 96x395"))
}

// 2: gradients

fn gradient_suite() -> Check {
    let mut failed = Vec::new();
    for (name, check) in gradients::ALL {
        if catch_unwind(*check).is_err() {
            failed.push(*name);
        }
    }
    ensure(failed.is_empty(), || format!("failed: {}", failed.join(", ")))?;
    Ok(format!("{} finite-difference checks", gradients::ALL.len()))
}

// 3: analytic penalty

fn linear_critic(w: Vec<f64>) -> Network<f64> {
    let n = w.len();
    Network::new(vec![
        Layer::Flatten,
        Layer::Dense(Dense {
            weight: Tensor::from_vec(&[n, 1], w).unwrap(),
            bias: Tensor::from_vec(&[1], vec![0.25]).unwrap(),
        }),
    ])
}

fn analytic_penalty() -> Check {
    let batch = |seed| Tensor::uniform(&[4, 1, 8, 8], 0.0, 1.0, &mut rng_from_seed(seed));
    let mut worst_unit = 0.0f64;
    for seed in 0..10 {
        let mut rng = rng_from_seed(seed);
        let w: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let critic = linear_critic(w.into_iter().map(|x| x / norm).collect());
        let out = gradient_penalty(&critic, &batch(seed + 10), &batch(seed + 20), 10.0, &mut rng)
            .map_err(|e| e.to_string())?;
        worst_unit = worst_unit.max(out.penalty.abs());
    }
    ensure(worst_unit < 1e-10, || format!("unit-norm critic penalty {worst_unit:e}"))?;
    let zero = linear_critic(vec![0.0; 64]);
    let out = gradient_penalty(&zero, &batch(1), &batch(2), 10.0, &mut rng_from_seed(3)).map_err(|e| e.to_string())?;
    ensure((out.penalty - 10.0).abs() < 1e-10, || format!("zero critic penalty {}", out.penalty))?;
    Ok(format!("unit-norm max {worst_unit:.1e}, zero critic {}", out.penalty))
}

// 4: simulator ceiling

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn simulator_ceiling() -> Check {
    let mut f1s = Vec::new();
    for seed in 0..5u64 {
        let sim = SimConfig {
            seed,
            ..SimConfig::default()
        };
        let real: Dataset32 = simulate_dataset(&sim).map_err(|e| e.to_string())?;
        let cfg = TstrConfig {
            n_trials: 1,
            n_generated_per_class: 500,
            source: GeneratorSource::Oracle,
            seed,
            ..TstrConfig::default()
        };
        let report = run_tstr_trials(&real, &cfg, |_| {}).map_err(|e| e.to_string())?;
        let t = report.trials.first().ok_or_else(|| format!("seed {seed}: trial failed: {:?}", report.failed))?;
        f1s.push(t.macro_avg.f1);
    }
    let m = median(f1s.clone());
    let shown: Vec<String> = f1s.iter().map(|f| format!("{f:.3}")).collect();
    ensure(m >= 0.9, || format!("median macro F1 {m:.3} [{}]", shown.join(" ")))?;
    Ok(format!("median macro F1 {m:.3} [{}]", shown.join(" ")))
}

// 5 and 9: desk-scale TSTR through the CLI

struct Section {
    header: String,
    rows: Vec<Vec<String>>,
}

fn section(text: &str, name: &str) -> Option<Section> {
    let mut lines = text.lines().skip_while(|l| *l != name).skip(1);
    let header = lines.next()?.to_string();
    let rows = lines
        .take_while(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Some(Section { header, rows })
}

fn desk_tstr(work: &Path) -> Result<String, String> {
    let data_dir = work.join("desk");
    let report = work.join("desk_report.txt");
    let cfg = desk_config();
    cli(&["simulate", "--config", s(&cfg), "--out", s(&data_dir)])?;
    cli(&[
        "evaluate",
        "--real",
        s(&data_dir.join("dataset.csv")),
        "--config",
        s(&cfg),
        "--trials",
        "8",
        "--out",
        s(&report),
    ])?;
    fs::read_to_string(&report).map_err(|e| e.to_string())
}

fn tstr_bar(text: &str) -> Check {
    let trials = section(text, "[trials]").ok_or("no [trials] section")?;
    let col = trials.header.split(',').position(|h| h == "macro_f1").ok_or("no macro_f1 column")?;
    let f1s: Vec<f64> = trials.rows.iter().map(|r| r[col].parse().unwrap_or(f64::NAN)).collect();
    let above = f1s.iter().filter(|&&f| f > 0.5).count();
    let shown: Vec<String> = f1s.iter().map(|f| format!("{f:.3}")).collect();
    let detail = format!("{above}/8 trials with macro F1 > 0.5 [{}]", shown.join(" "));
    ensure(above >= 5, || detail.clone())?;
    Ok(detail)
}

fn report_format(text: &str) -> Check {
    let trials = section(text, "[trials]").ok_or("no [trials] section")?;
    ensure(trials.rows.len() == 8, || format!("{} trial rows", trials.rows.len()))?;
    let summary = section(text, "[summary]").ok_or("no [summary] section")?;
    ensure(summary.header == "metric,min,lower_hinge,median,upper_hinge,max", || summary.header.clone())?;
    for metric in ["macro_precision", "macro_recall", "macro_f1"] {
        let row = summary.rows.iter().find(|r| r[0] == metric).ok_or(format!("no summary for {metric}"))?;
        let v: Vec<f64> = row[1..].iter().filter_map(|x| x.parse().ok()).collect();
        ensure(v.len() == 5 && v.windows(2).all(|w| w[0] <= w[1]), || format!("bad five-number row {row:?}"))?;
    }
    let top = section(text, "[top5]").ok_or("no [top5] section")?;
    ensure(top.header == "rank,trial,F1,Prec,Rec", || top.header.clone())?;
    ensure(top.rows.len() == 5, || format!("{} top rows", top.rows.len()))?;
    let f1: Vec<f64> = top.rows.iter().map(|r| r[2].parse().unwrap_or(f64::NAN)).collect();
    ensure(f1.windows(2).all(|w| w[0] >= w[1]), || "top table not sorted by F1".into())?;
    parse_report(text, 5).map_err(|e| e.to_string())?;
    Ok(format!("8 trial rows, {} summaries, top-5 table", summary.rows.len()))
}

// 6: training trend

fn blob_set(n: usize, seed: u64) -> LabelledDataset<f32> {
    let mut rng = rng_from_seed(seed);
    let items = (0..n)
        .map(|_| {
            let (cr, cc) = (3.5 + rng.gen_range(-0.5..0.5), 3.5 + rng.gen_range(-0.5..0.5));
            let data = (0..64)
                .map(|i| {
                    let (r, c) = ((i / 8) as f64, (i % 8) as f64);
                    (-((r - cr).powi(2) + (c - cc).powi(2)) / 4.0).exp() as f32
                })
                .collect();
            Heatmap::from_row_major(8, 8, data, ClassLabel::Pool, true).unwrap()
        })
        .collect();
    LabelledDataset::with_generated_ids(items, "blob", seed).unwrap()
}

fn training_trend() -> Check {
    let mean_abs = |s: &[EpochLog]| s.iter().map(|e| e.em_estimate.abs()).sum::<f64>() / s.len() as f64;
    let mut ratios = Vec::new();
    for seed in 0..5u64 {
        let arch = GanArch {
            latent_dim: 16,
            ..GanArch::new(8, 8)
        };
        let cfg = GanTrainConfig {
            epochs: 200,
            seed,
            ..GanTrainConfig::default()
        };
        let out = train_wgan(&blob_set(64, seed + 100), &cfg, &arch).map_err(|e| e.to_string())?;
        ratios.push(mean_abs(&out.log[180..]) / mean_abs(&out.log[..20]));
    }
    let m = median(ratios.clone());
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    let detail = format!("median last/first |EM| ratio {m:.3} [{}]", shown.join(" "));
    ensure(m < 1.0, || detail.clone())?;
    Ok(detail)
}

// 7: metrics

fn metrics_oracle() -> Check {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let cm = ConfusionMatrix { counts: [[10, 1], [2, 3]] };
    let [m0, m1] = class_metrics(&cm);
    ensure(close(m1.precision, 0.75) && close(m1.recall, 0.6) && close(m1.f1, 0.9 / 1.35), || format!("{m1:?}"))?;
    ensure(close(m0.precision, 10.0 / 12.0) && close(m0.recall, 10.0 / 11.0), || format!("{m0:?}"))?;
    let never = class_metrics(&ConfusionMatrix { counts: [[6, 0], [4, 0]] })[1];
    ensure((never.precision, never.recall, never.f1) == (0.0, 0.0, 0.0), || format!("{never:?}"))?;

    let f1 = |f1| ClassMetrics { precision: 0.0, recall: 0.0, f1 };
    let macro_f1 = macro_average(&[f1(0.95), f1(0.31)]).f1;
    ensure(close(macro_f1, 0.63), || format!("macro of 0.95/0.31 is {macro_f1}"))?;

    let five = |v: &[f64]| {
        let b = boxplot_stats(v).unwrap();
        (b.min, b.lower_hinge, b.median, b.upper_hinge, b.max)
    };
    ensure(five(&[6.0, 1.0, 5.0, 2.0, 4.0, 3.0]) == (1.0, 2.0, 3.5, 5.0, 6.0), || "even hinges".into())?;
    ensure(five(&[7.0, 1.0, 2.0, 6.0, 3.0, 4.0, 5.0]) == (1.0, 2.5, 4.0, 5.5, 7.0), || "odd hinges".into())?;

    let result = |trial: usize, counts| {
        let confusion = ConfusionMatrix { counts };
        let per_class = class_metrics(&confusion);
        TrialResult {
            trial,
            seed: 0,
            confusion,
            per_class,
            macro_avg: macro_average(&per_class),
        }
    };
    let trials: Vec<TrialResult> = (0..12)
        .map(|i| result(i, [[10 - (i as u64 * 7) % 5, (i as u64 * 7) % 5], [(i as u64 * 3) % 4, 6 - (i as u64 * 3) % 4]]))
        .collect();
    let mut brute: Vec<(f64, f64, f64, usize)> = trials
        .iter()
        .map(|t| (t.macro_avg.f1, t.macro_avg.precision, t.macro_avg.recall, t.trial))
        .collect();
    brute.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(b.1.total_cmp(&a.1))
            .then(b.2.total_cmp(&a.2))
            .then(a.3.cmp(&b.3))
    });
    let top: Vec<usize> = top_k(&trials, 5).map_err(|e| e.to_string())?.iter().map(|r| r.trial).collect();
    let expected: Vec<usize> = brute.iter().take(5).map(|b| b.3).collect();
    ensure(top == expected, || format!("top-5 {top:?} vs brute force {expected:?}"))?;
    Ok("class metrics, macro 0.95/0.31 -> 0.63, hinges, top-5".into())
}

// 8: reproducibility

const SMALL: &str = r#"
seed = 9
sim_rows = 8
sim_cols = 16
sim_n_households = 40
sim_pool_fraction = 0.25
sim_peak_morning = 2
sim_peak_evening = 6
sim_pump_row_start = 3
sim_pump_row_end = 6
sim_pump_col_start = 1
sim_pump_col_end = 7
gan_latent_dim = 8
gan_epochs = 3
clf_epochs = 2
n_generated_per_class = 40
n_trials = 3
"#;

fn pipeline(dir: &Path, cfg: &Path) -> Result<[Vec<u8>; 3], String> {
    let read = |p: PathBuf| fs::read(&p).map_err(|e| format!("{}: {e}", p.display()));
    cli(&["simulate", "--config", s(cfg), "--out", s(dir)])?;
    let data = dir.join("dataset.csv");
    let ckpt = dir.join("pool.ckpt");
    cli(&["train-gan", "--data", s(&data), "--class", "1", "--out", s(&ckpt), "--config", s(cfg)])?;
    let report = dir.join("report.txt");
    cli(&["evaluate", "--real", s(&data), "--config", s(cfg), "--out", s(&report)])?;
    Ok([read(data)?, read(ckpt)?, read(report)?])
}

fn reproducibility(work: &Path) -> Check {
    let cfg = work.join("small.toml");
    fs::write(&cfg, SMALL).map_err(|e| e.to_string())?;
    let a = pipeline(&work.join("run_a"), &cfg)?;
    let b = pipeline(&work.join("run_b"), &cfg)?;
    for (name, (x, y)) in ["dataset", "checkpoint", "report"].iter().zip(a.iter().zip(&b)) {
        ensure(x == y, || format!("{name} differs between identical runs"))?;
    }
    let ckpt = load_checkpoint(work.join("run_a").join("pool.ckpt")).map_err(|e| e.to_string())?;
    let bytes = checkpoint_to_bytes(&ckpt).map_err(|e| e.to_string())?;
    ensure(bytes == a[1], || "checkpoint load/save is not bit-exact".into())?;
    Ok(format!("dataset, checkpoint ({} bytes) and report identical", a[1].len()))
}

fn run(id: &str, budget: Duration, check: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
    let elapsed = start.elapsed();
    let (ok, detail) = match outcome {
        Ok(d) if elapsed <= budget => (true, d),
        Ok(d) => (false, format!("{d}; over the {budget:?} budget")),
        Err(e) => (false, e),
    };
    println!(
        "{} criterion {id}: {detail} ({:.1}s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    ok
}

fn main() {
    // Keep panic messages from checks that are expected to catch corruption
    // out of the summary.
    std::panic::set_hook(Box::new(|_| {}));
    let work = tempfile::tempdir().expect("temporary directory");
    let min = |m: u64| Duration::from_secs(60 * m);
    let mut results = vec![
        run("1", Duration::from_secs(1), folding),
        run("2", min(2), gradient_suite),
        run("3", Duration::from_secs(1), analytic_penalty),
        run("4", min(5), simulator_ceiling),
    ];

    let start = Instant::now();
    let desk = desk_tstr(work.path());
    let desk_time = start.elapsed();
    results.push(run("5", min(45), || {
        let text = desk.as_ref().map_err(|e| e.clone())?;
        ensure(desk_time <= min(45), || format!("desk run took {desk_time:?}"))?;
        tstr_bar(text).map(|d| format!("{d}, desk run {:.0}s", desk_time.as_secs_f64()))
    }));
    results.push(run("6", min(3), training_trend));
    results.push(run("7", Duration::from_secs(1), metrics_oracle));
    results.push(run("8", min(2), || reproducibility(work.path())));
    results.push(run("9", min(45), || report_format(desk.as_ref().map_err(|e| e.clone())?)));

    let passed = results.iter().filter(|&&r| r).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
