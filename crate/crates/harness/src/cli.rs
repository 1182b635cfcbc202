use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;
use seqmargin_core::data::save_dataset;
use seqmargin_core::geometry::{max_margin_certificate, nonsep_certificate, nonseparability_coefficient_b, DEFAULT_B_RESOLUTION};
use seqmargin_core::loss::LossSpec;
use seqmargin_core::train::{nonsep_for_guard, Algorithm, Horizon, OrderingSchedule, StepSize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::run_and_write;
use crate::source::{resolve_dataset, with_seed};
use crate::suite;
use crate::trace::write_summary;

#[derive(Debug, Parser)]
#[command(name = "seqmargin", version, about = "Sequential GD on linearly separable and non-separable task sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON); same as the positional argument of train/smm.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for generators and random ordering.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Step size: a number or auto:<fraction of the guard>.
    #[arg(long, global = true)]
    eta: Option<String>,
    #[arg(long, global = true, conflicts_with = "stages")]
    cycles: Option<usize>,
    #[arg(long, global = true)]
    stages: Option<usize>,
    /// Gradient steps per stage.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the joint and per-task max-margin certificates of a dataset.
    Margin { dataset: String },
    /// Run sequential or joint GD from a config and write trace + summary.
    Train {
        #[arg(value_name = "CONFIG")]
        path: Option<PathBuf>,
    },
    /// Run the sequential max-margin projection from a config.
    Smm {
        #[arg(value_name = "CONFIG")]
        path: Option<PathBuf>,
    },
    /// Print the non-separable certificate (w★, b, μ, ...) of a dataset.
    NonsepCert { dataset: String },
    /// Run acceptance experiments: all, or one by name or number.
    Verify { suite: Option<String> },
    /// Write a builtin or generated dataset to a file.
    GenData { spec: String, out: PathBuf },
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("SEQMARGIN_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a pool built earlier in the process keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn say(cli: &Cli, line: impl AsRef<str>) {
    if !cli.quiet {
        println!("{}", line.as_ref());
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Margin { dataset } => margin(cli, dataset),
        Command::Train { path } => train(cli, path.as_ref(), false),
        Command::Smm { path } => train(cli, path.as_ref(), true),
        Command::NonsepCert { dataset } => nonsep(cli, dataset),
        Command::Verify { suite } => verify(cli, suite.as_deref()),
        Command::GenData { spec, out } => {
            let loaded = resolve_dataset(spec, cli.seed)?;
            save_dataset(loaded.fixed()?, out)?;
            say(cli, format!("wrote {}", out.display()));
            Ok(0)
        }
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("finite or null values"));
}

fn emit(cli: &Cli, name: &str, value: serde_json::Value) -> Result<()> {
    print_json(&value);
    if let Some(dir) = &cli.out {
        let dir = dir.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        write_summary(&value, &dir.join("summary.json"))?;
    }
    Ok(())
}

fn margin(cli: &Cli, dataset: &str) -> Result<i32> {
    let ds = resolve_dataset(dataset, cli.seed)?.evaluation();
    let cert = max_margin_certificate(&ds)?;
    let tasks = (0..ds.num_tasks())
        .map(|m| seqmargin_core::geometry::task_max_margin(&ds, m))
        .collect::<seqmargin_core::Result<Vec<_>>>()?;
    let value = json!({
        "dataset": dataset,
        "direction": cert.direction(),
        "phi": cert.phi,
        "certificate": cert,
        "task_directions": tasks.iter().map(|c| c.direction()).collect::<Vec<_>>(),
        "task_certificates": tasks,
    });
    emit(cli, "margin", value)?;
    Ok(0)
}

fn nonsep(cli: &Cli, dataset: &str) -> Result<i32> {
    let ds = resolve_dataset(dataset, cli.seed)?.evaluation();
    let spec = LossSpec::logistic();
    let k = cli.k.unwrap_or(1);
    let cert = match &cli.eta {
        None => nonsep_for_guard(&ds, &spec, k)?,
        Some(text) => match StepSize::<f64>::parse(text)? {
            StepSize::Fixed(eta) => nonsep_certificate(&ds, &spec, eta, k)?,
            StepSize::Auto { .. } => {
                return Err(HarnessError::Usage("nonsep-cert takes a numeric --eta".into()));
            }
        },
    };
    let b = nonseparability_coefficient_b(&ds, DEFAULT_B_RESOLUTION)?;
    emit(cli, "nonsep-cert", json!({ "dataset": dataset, "certificate": cert, "b_estimate": b }))?;
    Ok(0)
}

fn load_config(cli: &Cli, positional: Option<&PathBuf>) -> Result<ExperimentConfig> {
    let path = match (positional, &cli.config) {
        (Some(p), None) | (None, Some(p)) => p,
        (Some(_), Some(_)) => return Err(HarnessError::Usage("give the config either positionally or with --config".into())),
        (None, None) => return Err(HarnessError::Usage("a config file is required".into())),
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.dataset = with_seed(&cfg.dataset, seed);
        if let OrderingSchedule::Random { .. } = cfg.train.schedule {
            cfg.train.schedule = OrderingSchedule::Random { seed };
        }
    }
    if let Some(eta) = &cli.eta {
        cfg.train.eta = StepSize::parse(eta)?;
    }
    if let Some(j) = cli.cycles {
        cfg.train.horizon = Horizon::Cycles(j);
    }
    if let Some(t) = cli.stages {
        cfg.train.horizon = Horizon::Stages(t);
    }
    if let Some(k) = cli.k {
        if k == 0 {
            return Err(HarnessError::Usage("--k must be at least 1".into()));
        }
        cfg.train.k = k;
    }
    Ok(cfg)
}

fn train(cli: &Cli, positional: Option<&PathBuf>, smm: bool) -> Result<i32> {
    let mut cfg = load_config(cli, positional)?;
    if smm {
        cfg.train.algorithm = Algorithm::Smm;
    } else if cfg.train.algorithm == Algorithm::Smm {
        return Err(HarnessError::Usage("use the smm subcommand for the projection baseline".into()));
    }
    let out = run_and_write(&cfg)?;
    let dir = cfg.run_dir();
    say(
        cli,
        format!(
            "{}: {} stages, eta {:.6e}, final joint loss {:.6e}, status {:?}",
            cfg.name,
            out.run.stages(),
            out.run.eta,
            out.summary["final_joint_loss"].as_f64().unwrap_or(f64::NAN),
            out.run.status
        ),
    );
    for r in &out.reports {
        say(
            cli,
            format!("  check {}: {} violation(s), min slack {:.3e}", r.name, r.violations, r.min_slack()),
        );
    }
    say(cli, format!("wrote {} and {}", dir.join("trace.csv").display(), dir.join("summary.json").display()));
    if out.failed_checks > 0 {
        return Err(HarnessError::ChecksFailed(out.failed_checks));
    }
    Ok(0)
}

fn verify(cli: &Cli, name: Option<&str>) -> Result<i32> {
    let results = suite::run_suite(name).ok_or_else(|| {
        HarnessError::Usage(format!(
            "unknown suite {:?}; choose one of {}",
            name.unwrap_or(""),
            suite::names().join(", ")
        ))
    })?;
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    say(cli, format!("{} passed, {failed} failed", results.len() - failed));
    Ok(if failed == 0 { 0 } else { 1 })
}
