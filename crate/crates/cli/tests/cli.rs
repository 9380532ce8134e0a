use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_foldgan");

/// 8×16 heatmaps keep every command fast.
const SMALL: &str = r#"
seed = 5
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
gan_epochs = 2
clf_epochs = 1
n_generated_per_class = 20
source = "oracle"
"#;

fn foldgan(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("FOLDGAN_SEED").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("small.toml"), SMALL).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn simulate(&self, name: &str) -> PathBuf {
        let out = self.path(name);
        let o = foldgan(&["simulate", "--config", p(&self.path("small.toml")), "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out.join("dataset.csv")
    }
}

fn data_rows(csv: &Path) -> usize {
    fs::read_to_string(csv).unwrap().lines().count() - 2
}

#[test]
fn usage_errors_exit_one() {
    let o = foldgan(&[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&foldgan(&["frobnicate"])), 1);
    assert_eq!(code(&foldgan(&["simulate", "--out", "x", "--bogus"])), 1);
    assert_eq!(code(&foldgan(&["render", "--data", "x.csv"])), 1);
    assert_eq!(code(&foldgan(&["--help"])), 0);
}

#[test]
fn runtime_errors_exit_two() {
    let f = Fixture::new();
    let o = foldgan(&["render", "--data", p(&f.path("missing.csv")), "--index", "0", "--out", p(&f.path("a.png"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    fs::write(f.path("bad.toml"), "gan_epochz = 3\n").unwrap();
    let o = foldgan(&["simulate", "--config", p(&f.path("bad.toml")), "--out", p(&f.path("s"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("gan_epochz"));
}

#[test]
fn simulate_echoes_config_and_reruns_identically() {
    let f = Fixture::new();
    let first = f.simulate("a");
    assert_eq!(data_rows(&first), 40);
    let echoed = f.path("a").join("effective_config.toml");
    let again = f.path("b");
    let o = foldgan(&["simulate", "--config", p(&echoed), "--out", p(&again)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(&first).unwrap(), fs::read(again.join("dataset.csv")).unwrap());
    assert_eq!(fs::read(&echoed).unwrap(), fs::read(again.join("effective_config.toml")).unwrap());
}

#[test]
fn seed_comes_from_the_environment_when_unset() {
    let f = Fixture::new();
    let no_seed: String = SMALL.lines().filter(|l| !l.starts_with("seed")).collect::<Vec<_>>().join("\n");
    fs::write(f.path("noseed.toml"), no_seed).unwrap();
    let run = |dir: &str, env: Option<&str>| {
        let mut cmd = Command::new(BIN);
        cmd.args(["simulate", "--config", p(&f.path("noseed.toml")), "--out", p(&f.path(dir))]);
        match env {
            Some(v) => cmd.env("FOLDGAN_SEED", v),
            None => cmd.env_remove("FOLDGAN_SEED"),
        };
        assert!(cmd.status().unwrap().success());
        fs::read_to_string(f.path(dir).join("effective_config.toml")).unwrap()
    };
    assert!(run("default", None).contains("seed = 42"));
    assert!(run("env", Some("7")).contains("seed = 7"));
}

#[test]
fn fold_aligns_day_counts() {
    let f = Fixture::new();
    // 24 samples per day at 60-minute resolution; 10 and 13 days.
    let row = |id: &str, label: u8, days: usize| {
        let vals: Vec<String> = (0..24 * days).map(|i| ((i * 7) % 11).to_string()).collect();
        format!("{id},{label},{}", vals.join(","))
    };
    let raw = format!("id,label,values\n{}\n{}\n", row("a", 0, 10), row("b", 1, 13));
    fs::write(f.path("raw.csv"), raw).unwrap();
    let fold = |align: &str, out: &str| {
        foldgan(&["fold", "--input", p(&f.path("raw.csv")), "--out", p(&f.path(out)), "--minutes", "60", "--align", align])
    };
    assert_eq!(code(&fold("none", "n.csv")), 2);
    assert_eq!(code(&fold("crop", "c.csv")), 0);
    assert_eq!(code(&fold("pad", "p.csv")), 0);
    let dims = |name: &str| {
        let text = fs::read_to_string(f.path(name)).unwrap();
        let first = text.lines().nth(2).unwrap().split(',').collect::<Vec<_>>();
        (first[2].to_string(), first[3].to_string())
    };
    assert_eq!(dims("c.csv"), ("24".into(), "8".into()));
    assert_eq!(dims("p.csv"), ("24".into(), "16".into()));
}

#[test]
fn train_generate_and_render() {
    let f = Fixture::new();
    let data = f.simulate("sim");
    let ckpt = f.path("pool.ckpt");
    let o = foldgan(&[
        "train-gan", "--data", p(&data), "--class", "1", "--out", p(&ckpt), "--config", p(&f.path("small.toml")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(f.path("pool.ckpt.log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,em_estimate,penalty,gen_loss"));
    assert_eq!(log.lines().count(), 3);

    let gen = f.path("gen.csv");
    assert_eq!(code(&foldgan(&["generate", "--ckpt", p(&ckpt), "--out", p(&gen)])), 0);
    assert_eq!(data_rows(&gen), 5000);
    let gen = f.path("gen12.csv");
    assert_eq!(code(&foldgan(&["generate", "--ckpt", p(&ckpt), "--count", "12", "--out", p(&gen), "--renormalize"])), 0);
    assert_eq!(data_rows(&gen), 12);
    assert!(fs::read_to_string(&gen).unwrap().lines().skip(2).all(|l| l.split(',').nth(1) == Some("1")));

    let png = f.path("h.png");
    assert_eq!(code(&foldgan(&["render", "--data", p(&data), "--index", "3", "--out", p(&png)])), 0);
    let bytes = fs::read(&png).unwrap();
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    let be = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
    assert_eq!((be(16), be(20)), (16, 8));
    assert_eq!(bytes[24], 8, "bit depth");
    assert_eq!(bytes[25], 0, "grayscale");
    assert_eq!(code(&foldgan(&["render", "--data", p(&data), "--index", "40", "--out", p(&png)])), 2);
    assert_eq!(code(&foldgan(&["train-gan", "--data", p(&data), "--class", "2", "--out", p(&ckpt)])), 2);
}

#[test]
fn evaluate_writes_one_row_per_trial_and_report_reaggregates() {
    let f = Fixture::new();
    let data = f.simulate("sim");
    let report = f.path("out").join("report.txt");
    fs::create_dir_all(f.path("out")).unwrap();
    let o = foldgan(&[
        "evaluate", "--real", p(&data), "--config", p(&f.path("small.toml")), "--trials", "64", "--out", p(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&report).unwrap();
    let trials: Vec<&str> = text
        .lines()
        .skip_while(|l| *l != "[trials]")
        .skip(2)
        .take_while(|l| !l.is_empty())
        .collect();
    assert_eq!(trials.len(), 64);
    assert!(f.path("out").join("effective_config.toml").exists());

    let o = foldgan(&["report", "--input", p(&report)]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), text);
    let o = foldgan(&["report", "--input", p(&report), "--top", "3"]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("[top3]"));
}
