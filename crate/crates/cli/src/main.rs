//! `churnlab`: generate data, train, run experiments and ablations, and
//! report churn.

mod overrides;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use churnlab::data::SeedBundle;
use churnlab::harness::{
    ablation_grid, render_ablation, render_table, report_csv, run_experiment, run_training_indexed,
    write_atomic, write_json_atomic, ExperimentConfig, ExperimentSummary,
};
use churnlab::losses::{landscape_scan_with_scores, write_landscape_csv, default_score_grid};
use churnlab::metrics::{audit_bounds, read_labels_csv, read_prob_csv};
use churnlab::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use walkdir::WalkDir;

#[derive(Debug, Parser)]
#[command(name = "churnlab", version, about = "Measure and reduce prediction churn between trained classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment config; unspecified keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override applied after the config file, e.g. method.beta=0.04.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory.
    #[arg(long, env = "CHURNLAB_OUT", default_value = "out")]
    out: PathBuf,
    /// Base seed for all three seed channels.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Worker threads for concurrent runs.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = overrides::load_config(self.config.as_deref(), &self.sets)?;
        if let Some(s) = self.seed {
            c.seeds = SeedBundle::uniform(s);
        }
        if let Some(r) = self.runs {
            c.n_runs = r;
        }
        if self.jobs.is_some() {
            c.jobs = self.jobs;
        }
        c.out_dir = Some(self.out.clone());
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the configured dataset as CSV.
    GenData(Common),
    /// Train a single run (run index 0 of the configured seeds).
    Train(Common),
    /// Train all runs and summarize pairwise churn.
    Experiment(Common),
    /// Run the seed-channel ablation grid.
    Ablate(Common),
    /// Tabulate every summary found under a directory.
    Report {
        /// Directory searched recursively for summary files.
        #[arg(env = "CHURNLAB_OUT", default_value = "out")]
        run_dir: PathBuf,
    },
    /// Write loss-landscape curves as CSV.
    Landscape {
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,4")]
        taus: Vec<f64>,
        /// Probability grid; defaults to 0.01..0.99 in steps of 0.01.
        #[arg(long, value_delimiter = ',')]
        ps: Vec<f64>,
        /// Score grid for the temperature curves; defaults to −6..6 in steps of 0.1.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        scores: Vec<f64>,
        #[arg(long, env = "CHURNLAB_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Check the churn bounds on two prediction files.
    Audit {
        /// Prediction CSV (`label,p0,...`); give exactly two.
        #[arg(long = "preds", required = true, num_args = 1)]
        preds: Vec<PathBuf>,
        /// Label CSV whose first column is `label`.
        #[arg(long)]
        labels: PathBuf,
    },
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_digest: Option<String>,
    tool_version: &'static str,
    started_unix: u64,
    finished_unix: u64,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_manifest(out: &Path, command: &str, config: Option<&ExperimentConfig>, started: u64) -> Result<()> {
    let m = Manifest {
        command,
        config_digest: config.map(ExperimentConfig::digest),
        tool_version: env!("CARGO_PKG_VERSION"),
        started_unix: started,
        finished_unix: unix_now(),
    };
    write_json_atomic(&out.join("manifest.json"), &m)
}

/// What a finished command reports back to `main`.
enum Outcome {
    Ok,
    /// The command ran but found a violated bound.
    Violation,
}

fn gen_data(common: &Common) -> Result<Outcome> {
    let started = unix_now();
    let config = common.config()?;
    let data = config.dataset.load()?;
    fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
    let path = common.out.join("data.csv");
    data.write_csv(&path)?;
    println!("wrote {} rows ({} features, {} classes) to {}", data.len(), data.dim(), data.k(), path.display());
    println!("dataset digest {:016x}", data.digest());
    write_manifest(&common.out, "gen-data", Some(&config), started)?;
    Ok(Outcome::Ok)
}

fn train(common: &Common) -> Result<Outcome> {
    let started = unix_now();
    let config = common.config()?;
    let art = run_training_indexed(&config, config.bundle(0), 0)?;
    println!(
        "{}: accuracy {:.4}, mean entropy {:.4}, mean confidence {:.4}, {} steps in {:.2}s",
        art.method, art.accuracy, art.mean_entropy, art.mean_confidence, art.steps, art.wall_clock_secs
    );
    println!("eval probabilities digest {}", art.probs_digest);
    write_manifest(&common.out, "train", Some(&config), started)?;
    Ok(Outcome::Ok)
}

fn experiment(common: &Common) -> Result<Outcome> {
    let started = unix_now();
    let config = common.config()?;
    let summary = run_experiment(&config)?;
    print!("{}", render_table(std::slice::from_ref(&summary)));
    if summary.n_failed > 0 {
        println!("{} run(s) failed and were excluded", summary.n_failed);
    }
    write_manifest(&common.out, "experiment", Some(&config), started)?;
    Ok(Outcome::Ok)
}

fn ablate(common: &Common) -> Result<Outcome> {
    let started = unix_now();
    let config = common.config()?;
    let cells = ablation_grid(&config)?;
    let text = render_ablation(&cells);
    print!("{text}");
    write_atomic(&common.out.join("ablation.txt"), text.as_bytes())?;
    write_json_atomic(&common.out.join("ablation.json"), &cells)?;
    write_manifest(&common.out, "ablate", Some(&config), started)?;
    Ok(Outcome::Ok)
}

fn is_summary_file(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.starts_with("summary_") && name.ends_with(".json")
}

fn report(run_dir: &Path) -> Result<Outcome> {
    if !run_dir.is_dir() {
        return Err(Error::Usage(format!("{} is not a directory", run_dir.display())));
    }
    let mut paths: Vec<PathBuf> = WalkDir::new(run_dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .map(|e| e.into_path())
        .filter(|p| p.is_file() && is_summary_file(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Usage(format!("no experiment summaries under {}", run_dir.display())));
    }
    let mut summaries = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let s: ExperimentSummary =
            serde_json::from_str(&text).map_err(|e| Error::Schema { path: p.clone(), message: e.to_string() })?;
        summaries.push(s);
    }
    let table = render_table(&summaries);
    print!("{table}");
    write_atomic(&run_dir.join("report.txt"), table.as_bytes())?;
    write_atomic(&run_dir.join("report.csv"), report_csv(&summaries)?.as_bytes())?;
    Ok(Outcome::Ok)
}

fn landscape(alphas: &[f64], taus: &[f64], ps: &[f64], scores: &[f64], out: &Path) -> Result<Outcome> {
    let started = unix_now();
    let ps: Vec<f64> = if ps.is_empty() { (1..100).map(|i| i as f64 / 100.0).collect() } else { ps.to_vec() };
    if let Some(p) = ps.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::Usage(format!("probability grid values must lie in (0, 1), got {p}")));
    }
    if let Some(t) = taus.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::Usage(format!("temperatures must be positive, got {t}")));
    }
    let scores = if scores.is_empty() { default_score_grid() } else { scores.to_vec() };
    let samples = landscape_scan_with_scores(alphas, taus, &ps, &scores);
    let mut buf = Vec::new();
    write_landscape_csv(&mut buf, &samples)?;
    let path = out.join("landscape.csv");
    write_atomic(&path, &buf)?;
    println!("wrote {} curve samples to {}", samples.len(), path.display());
    write_manifest(out, "landscape", None, started)?;
    Ok(Outcome::Ok)
}

fn audit(preds: &[PathBuf], labels: &Path) -> Result<Outcome> {
    let [a, b] = preds else {
        return Err(Error::Usage(format!("audit needs exactly two --preds files, got {}", preds.len())));
    };
    let (p1, _) = read_prob_csv(a)?;
    let (p2, _) = read_prob_csv(b)?;
    let y = read_labels_csv(labels)?;
    let audit = audit_bounds(&p1, &p2, &y)?;
    let show = |name: &str, c: &churnlab::metrics::Check| match c.witness {
        None => println!("{name:<8} ok"),
        Some(i) => println!("{name:<8} VIOLATED at row {i}"),
    };
    show("lemma1", &audit.lemma1);
    show("lemma2", &audit.lemma2);
    show("pinsker", &audit.pinsker);
    println!("error-sum slack {:.6}", audit.lemma1_slack);
    Ok(if audit.all_ok() { Outcome::Ok } else { Outcome::Violation })
}

fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::GenData(c) => gen_data(c),
        Command::Train(c) => train(c),
        Command::Experiment(c) => experiment(c),
        Command::Ablate(c) => ablate(c),
        Command::Report { run_dir } => report(run_dir),
        Command::Landscape { alphas, taus, ps, scores, out } => landscape(alphas, taus, ps, scores, out),
        Command::Audit { preds, labels } => audit(preds, labels),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric { .. } | Error::Experiment(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Violation) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
