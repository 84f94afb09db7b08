use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use asymspec::detector::{detect, NConvention};
use asymspec::harness::checks::{null_with_study_spikes, run_suite, CheckContext, Suite};
use asymspec::harness::config::parse_config;
use asymspec::harness::io::read_dense_csv;
use asymspec::harness::figures::{reproduce_at, FIGURE_SEED, STUDY_N, STUDY_P};
use asymspec::harness::{run_first_order, DetectionOptions, Figure, RunOptions};
use asymspec::model::ExperimentConfig;
use asymspec::spectrum::{eigs_asym, write_spectrum_csv};
use asymspec::theory::{
    dyson_solve, fluct_variance, null_edge, threshold, trace_moment_limit, DysonOptions, KernelPath, NullEdgeMethod,
    PSEUDOSPECTRUM_GRID,
};

#[derive(Parser)]
#[command(name = "asymspec", version, about = "Signal detection from two noisy samples via linearized eigenvalues")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true, env = "ASYMSPEC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo detection experiment described by a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        /// Worker count, further capped by ASYMSPEC_THREADS.
        #[arg(long)]
        parallel: Option<usize>,
        /// Evaluate the secular function at every flagged eigenvalue.
        #[arg(long)]
        certify: bool,
        #[arg(long, env = "ASYMSPEC_SEED")]
        seed: Option<u64>,
    },
    /// Detect signals in a pair of observations stored as dense CSV.
    Detect {
        #[arg(long)]
        h1: PathBuf,
        #[arg(long)]
        h2: PathBuf,
        #[arg(long = "N-convention", default_value = "p+n")]
        n_convention: NConvention,
        #[arg(long)]
        out: PathBuf,
        /// Also write the stored spectrum with flags.
        #[arg(long)]
        spectrum: Option<PathBuf>,
    },
    /// Print theoretical predictions for a config as JSON.
    Theory {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "ASYMSPEC_SEED")]
        seed: Option<u64>,
    },
    /// Write the scatter-plot data of one simulation-study figure.
    Reproduce {
        #[arg(long)]
        figure: Figure,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "ASYMSPEC_SEED", default_value_t = FIGURE_SEED)]
        seed: u64,
        #[arg(long, hide = true, default_value_t = STUDY_P)]
        p: usize,
        #[arg(long, hide = true, default_value_t = STUDY_N)]
        n: usize,
    },
    /// Run acceptance checks; exits with 1 if any criterion fails.
    Check {
        #[arg(long, default_value = "all")]
        suite: Suite,
        #[arg(long, env = "ASYMSPEC_SEED", default_value_t = asymspec::harness::checks::DEFAULT_CHECK_SEED)]
        seed: u64,
        /// Write the outcomes as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn cap(requested: Option<usize>, limit: Option<usize>) -> Option<usize> {
    match (requested, limit) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text, seed).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &PathBuf, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn emit<T: serde::Serialize + ?Sized>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn theory_report(config: &ExperimentConfig) -> Result<serde_json::Value> {
    let thr = threshold(&config.profile)?;
    let edge = match config.profile.flat_value() {
        Some(_) => null_edge(&config.profile, NullEdgeMethod::FlatClosedForm)?,
        None => null_edge(&config.profile, NullEdgeMethod::MonteCarlo { trials: 20, seed: config.seed })?,
    };
    let z = 1.2 * thr;
    let mut dyson = Vec::new();
    for eta in PSEUDOSPECTRUM_GRID {
        let sol = dyson_solve(&config.profile, z, eta, DysonOptions::default())?;
        dyson.push(json!({
            "eta": eta, "z_abs": z, "residual": sol.residual, "iterations": sol.iterations,
            "balance_gap": sol.balance_gap(), "max_over_eta": sol.max_over_eta(),
        }));
    }
    let signals: Vec<_> = (0..config.signal.rank())
        .map(|i| {
            let d = config.signal.strengths()[i];
            match fluct_variance(&config.profile, &config.sigma, &config.signal, i, KernelPath::Auto) {
                Ok(f) => json!({"d": d, "detectable": true, "fluctuation": f}),
                Err(e) => json!({"d": d, "detectable": d > thr, "note": e.to_string()}),
            }
        })
        .collect();
    Ok(json!({
        "p": config.p,
        "n": config.n,
        "threshold": thr,
        "null_edge": edge,
        "sigma_max": config.sigma.sigma_max(),
        "dyson": dyson,
        "signals": signals,
        "trace_limits": {
            "k4": trace_moment_limit(config.p, config.n, 4),
            "k8": trace_moment_limit(config.p, config.n, 8),
        },
    }))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { config, out, trials, parallel, certify, seed } => {
            let mut cfg = load_config(&config, seed)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            let opts = DetectionOptions {
                run: RunOptions { threads: cap(parallel, cli.threads) },
                certify,
                ..DetectionOptions::default()
            };
            let run = run_first_order(&cfg, &opts)?;
            fs::create_dir_all(&out)?;
            let mut summary = serde_json::to_value(&run.summary)?;
            summary["theory_report"] = theory_report(&cfg)?;
            write_json(&out.join("summary.json"), &summary)?;
            write_json(&out.join("trials.json"), &serde_json::to_value(&run.records)?)?;
            emit(&run.summary)?;
            Ok(true)
        }
        Command::Detect { h1, h2, n_convention, out, spectrum } => {
            let a = read_dense_csv(File::open(&h1).with_context(|| format!("opening {}", h1.display()))?)?;
            let b = read_dense_csv(File::open(&h2).with_context(|| format!("opening {}", h2.display()))?)?;
            if a.shape() != b.shape() {
                bail!("H1 is {:?} but H2 is {:?}", a.shape(), b.shape());
            }
            let spec = eigs_asym(&a, &b, 0)?;
            let report = detect(&spec, n_convention.resolve(a.rows(), a.cols()));
            write_json(&out, &report.to_json())?;
            if let Some(path) = spectrum {
                let mut w = BufWriter::new(File::create(&path)?);
                write_spectrum_csv(&mut w, &spec.lambdas, Some(&report.flagged_mask(spec.len())))?;
            }
            emit(&report.to_json())?;
            Ok(true)
        }
        Command::Theory { config, seed } => {
            let cfg = load_config(&config, seed)?;
            emit(&theory_report(&cfg)?)?;
            Ok(true)
        }
        Command::Reproduce { figure, out, seed, p, n } => {
            let res = reproduce_at(figure, p, n, &out, seed)?;
            emit(&res)?;
            Ok(true)
        }
        Command::Check { suite, seed, json } => {
            let ctx = CheckContext { seed, run: RunOptions { threads: cli.threads } };
            let outcomes = run_suite(suite, &ctx)?;
            for o in &outcomes {
                println!("{}", o.line());
            }
            if suite.criteria().contains(&2) {
                let (ev, sv) = null_with_study_spikes(&ctx)?;
                println!("INFO null calibration with spikes (3, 2): EV-null rate {ev:.2}, SV-outlier rate {sv:.2}");
            }
            if let Some(path) = json {
                write_json(&path, &serde_json::to_value(&outcomes)?)?;
            }
            Ok(outcomes.iter().all(|o| o.passed))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
