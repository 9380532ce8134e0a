//! The `foldgan` command line: simulate data, fold raw series, train and
//! sample per-class GANs, run train-synthetic-test-real evaluations and
//! render heatmaps.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use foldgan::io::{self, RunConfig};
use foldgan::tstr::{run_tstr_trials, TrialOutcome, DEFAULT_TOP_K};
use foldgan::wgan::{sample, train_wgan_with};
use foldgan::{fold, normalize, simulate_dataset, ClassLabel, Dataset32, Heatmap32, LoadSeries};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// File name of the dataset written by `simulate`.
pub const DATASET_FILE: &str = "dataset.csv";

#[derive(Parser, Debug)]
#[command(name = "foldgan", version, about = "Heatmap GAN augmentation for periodic load data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a labelled household dataset.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; receives dataset.csv and effective_config.toml.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fold raw series (CSV rows `id,label,x_0,x_1,...`) into a normalized
    /// heatmap dataset.
    Fold {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sampling interval in minutes; one column per day.
        #[arg(long, default_value_t = 15)]
        minutes: u32,
        /// How to bring the day count to a multiple of 8.
        #[arg(long, value_enum, default_value_t = Align::None)]
        align: Align,
    },
    /// Train one class's GAN.
    TrainGan {
        #[arg(long)]
        data: PathBuf,
        /// 0 (non-pool) or 1 (pool).
        #[arg(long)]
        class: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Training log path; defaults to the checkpoint path plus `.log.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Sample heatmaps from a trained generator.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 5000)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Min–max rescale each generated heatmap.
        #[arg(long)]
        renormalize: bool,
    },
    /// Run train-synthetic-test-real trials and write a report.
    Evaluate {
        #[arg(long)]
        real: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-aggregate an existing report.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        top: usize,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render one heatmap of a dataset as a grayscale PNG.
    Render {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Align {
    /// Require equal day counts.
    None,
    /// Drop days down to a common multiple of 8.
    Crop,
    /// Append zero days up to a common multiple of 8.
    Pad,
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if seed.is_some() {
        cfg.seed = seed;
    }
    Ok(cfg.resolved()?)
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Simulate { config, out, seed } => {
            let cfg = load_config(config.as_deref(), seed)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let ds: Dataset32 = simulate_dataset(&cfg.sim())?;
            let path = out.join(DATASET_FILE);
            io::save_dataset(&ds, &path)?;
            cfg.echo_to(&out)?;
            eprintln!(
                "wrote {} heatmaps ({} pool) to {}",
                ds.len(),
                ds.count(ClassLabel::Pool),
                path.display()
            );
        }
        Command::Fold {
            input,
            out,
            minutes,
            align,
        } => {
            let ds = fold_file(&input, minutes, align)?;
            io::save_dataset(&ds, &out)?;
            let (p, d) = ds.dims().unwrap_or((0, 0));
            eprintln!("folded {} series into {p}×{d} heatmaps", ds.len());
        }
        Command::TrainGan {
            data,
            class,
            out,
            config,
            epochs,
            seed,
            log,
        } => {
            let mut cfg = load_config(config.as_deref(), seed)?;
            if let Some(e) = epochs {
                cfg.gan_epochs = e;
            }
            let label = ClassLabel::from_index(class)?;
            let ds: Dataset32 = io::load_dataset(&data)?;
            let class_data = ds.class_subset(label);
            let (rows, cols) = class_data
                .dims()
                .with_context(|| format!("{} has no class-{class} heatmaps", data.display()))?;
            let arch = cfg.arch(rows, cols);
            let gan = cfg.gan();
            let log_path = log.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".log.csv");
                PathBuf::from(p)
            });
            let every = (gan.epochs / 20).max(1);
            let progress = |e: &foldgan::wgan::EpochLog| {
                if (e.epoch + 1) % every == 0 {
                    eprintln!(
                        "epoch {:>4}  em {:>10.4}  penalty {:>8.4}  gen {:>10.4}",
                        e.epoch + 1,
                        e.em_estimate,
                        e.penalty,
                        e.gen_loss
                    );
                }
            };
            cfg.echo_to(parent_dir(&out))?;
            match train_wgan_with(&class_data, &gan, &arch, progress) {
                Ok(t) => {
                    io::save_checkpoint(&t.checkpoint, &out)?;
                    io::write_training_log(&t.log, &log_path)?;
                }
                Err(f) => {
                    io::write_training_log(&f.log, &log_path)?;
                    if !f.log.is_empty() {
                        io::save_checkpoint(&f.last_good, &out)?;
                        bail!("{f}; last good checkpoint saved to {}", out.display());
                    }
                    bail!("{f}");
                }
            }
        }
        Command::Generate {
            ckpt,
            count,
            out,
            seed,
            renormalize,
        } => {
            let seed = match seed {
                Some(s) => s,
                None => io::config::default_seed()?,
            };
            let ckpt = io::load_checkpoint(&ckpt)?;
            let mut ds = sample(&ckpt, count, seed)?;
            if renormalize {
                let items = ds.items().iter().map(normalize).collect::<foldgan::Result<Vec<_>>>()?;
                ds = Dataset32::new(items, ds.ids().to_vec(), seed)?;
            }
            io::save_dataset(&ds, &out)?;
        }
        Command::Evaluate {
            real,
            config,
            trials,
            out,
            seed,
        } => {
            let mut cfg = load_config(config.as_deref(), seed)?;
            if let Some(t) = trials {
                cfg.n_trials = t;
            }
            let real = real
                .or_else(|| cfg.real_data.clone())
                .context("no real data: pass --real or set real_data in the config")?;
            cfg.real_data = Some(real.clone());
            let ds: Dataset32 = io::load_dataset(&real)?;
            cfg.echo_to(parent_dir(&out))?;
            let tstr = cfg.tstr();
            let report = run_tstr_trials(&ds, &tstr, |o: &TrialOutcome| match o {
                Ok(t) => eprintln!(
                    "trial {:>3}  F1 {:.3}  P {:.3}  R {:.3}",
                    t.trial, t.macro_avg.f1, t.macro_avg.precision, t.macro_avg.recall
                ),
                Err(f) => eprintln!("trial {:>3}  failed: {}", f.trial, f.error),
            })?;
            fs::write(&out, io::format_report(&report))?;
            eprintln!(
                "{} of {} trials succeeded; report written to {}",
                report.trials.len(),
                report.attempted(),
                out.display()
            );
        }
        Command::Report { input, top, out } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let report = io::parse_report(&text, top)?;
            let formatted = io::format_report(&report);
            match out {
                Some(p) => fs::write(p, formatted)?,
                None => print!("{formatted}"),
            }
        }
        Command::Render { data, index, out } => {
            let ds: Dataset32 = io::load_dataset(&data)?;
            let h = ds
                .items()
                .get(index)
                .with_context(|| format!("index {index} out of range ({} heatmaps)", ds.len()))?;
            io::render_png(h, &out)?;
        }
    }
    Ok(())
}

fn fold_file(input: &Path, minutes: u32, align: Align) -> anyhow::Result<Dataset32> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(input)
        .with_context(|| format!("reading {}", input.display()))?;
    let mut heatmaps: Vec<Heatmap32> = Vec::new();
    let mut ids = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() < 3 {
            bail!("line {line}: expected id,label and at least one value");
        }
        let label: usize = rec[1].trim().parse().with_context(|| format!("line {line}: bad label"))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|v| v.trim().parse::<f32>())
            .collect::<Result<Vec<f32>, _>>()
            .with_context(|| format!("line {line}: bad value"))?;
        let series = LoadSeries::new(values, minutes, ClassLabel::from_index(label)?, &rec[0])?;
        let folded = fold(&series, series.samples_per_day())?;
        if folded.truncated() {
            eprintln!("warning: {}: dropped {} trailing samples", &rec[0], folded.discarded);
        }
        heatmaps.push(folded.heatmap);
        ids.push(rec[0].to_string());
    }
    let (min_d, max_d) = heatmaps
        .iter()
        .fold((usize::MAX, 0), |(lo, hi), h| (lo.min(h.cols()), hi.max(h.cols())));
    if heatmaps.is_empty() {
        bail!("{} contains no series", input.display());
    }
    let target = match align {
        Align::None if min_d != max_d => {
            bail!("series span {min_d} to {max_d} days; use --align crop or --align pad")
        }
        Align::None => None,
        Align::Crop if min_d < 8 => bail!("shortest series has {min_d} days; cropping needs at least 8"),
        Align::Crop => Some(min_d / 8 * 8),
        Align::Pad => Some(max_d.div_ceil(8) * 8),
    };
    let items = heatmaps
        .iter()
        .map(|h| {
            let h = match target {
                Some(d) if d < h.cols() => h.crop_cols(d)?,
                Some(d) if d > h.cols() => h.pad_cols(d)?,
                _ => h.clone(),
            };
            normalize(&h)
        })
        .collect::<foldgan::Result<Vec<_>>>()?;
    Ok(Dataset32::new(items, ids, 0)?)
}
