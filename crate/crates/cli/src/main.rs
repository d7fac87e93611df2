//! Command-line runner for the dyadic two-weight testbed.
//!
//! Exit status: 0 when every hard assertion holds, 1 when one fails, 2 for
//! usage, configuration and I/O errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dyadic_bloom::experiment::{
    all_passed, parse_range, results_to_json, run, sweep, write_summary_csv, write_sweep_csv, ExperimentConfig,
    NormReport, Suite, SuiteResult, SweepParameter,
};
use dyadic_bloom::{StepFunction, Weight};

#[derive(Parser, Debug)]
#[command(name = "dyadic-bloom", version, about = "Two-weight dyadic harmonic analysis experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Grid depth D.
    #[arg(long, global = true)]
    depth: Option<u32>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Suite to run (repeatable).
    #[arg(long = "suite", global = true)]
    suites: Vec<String>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate (μ, λ, b) for each trial as JSON step functions.
    Gen,
    /// Full norm report for one (μ, λ, b) triple of JSON files.
    Norms { mu: PathBuf, lambda: PathBuf, symbol: PathBuf },
    /// Run verification suites.
    Verify,
    /// Norm reports along a parameter range `start:step:end`.
    Sweep {
        parameter: String,
        #[arg(allow_hyphen_values = true)]
        range: String,
    },
    /// Summarize the JSON results of `verify` as CSV.
    Report { results: PathBuf },
}

enum Status {
    Pass,
    Fail,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            ExperimentConfig::from_json(&text).with_context(|| format!("config {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(d) = common.depth {
        config.depth = d;
    }
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(t) = common.trials {
        config.trials = t;
    }
    if !common.suites.is_empty() {
        config.suites = common.suites.iter().map(|s| s.parse::<Suite>()).collect::<Result<_, _>>()?;
    }
    if let Some(out) = &common.out {
        config.outputs.json = Some(out.clone());
    }
    config.validate().context("invalid configuration")?;
    Ok(config)
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn gen(common: &Common) -> Result<Status> {
    let config = load_config(common)?;
    let Some(dir) = &common.out else { bail!("gen needs --out <directory>") };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for t in 0..config.trials {
        let inputs = config.trial(t)?;
        let target = if config.trials == 1 { dir.clone() } else { dir.join(format!("trial-{t:04}")) };
        fs::create_dir_all(&target).with_context(|| format!("creating {}", target.display()))?;
        write(&target.join("mu.json"), to_json(&inputs.mu)?.as_bytes())?;
        write(&target.join("lambda.json"), to_json(&inputs.lambda)?.as_bytes())?;
        write(&target.join("symbol.json"), to_json(&inputs.symbol)?.as_bytes())?;
        println!("trial {t} seed {} -> {}", inputs.seed, target.display());
    }
    Ok(Status::Pass)
}

fn read_json<T: serde::de::DeserializeOwned>(role: &str, path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("{role} file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{role} file {}", path.display()))
}

fn norms(common: &Common, mu: &Path, lambda: &Path, symbol: &Path) -> Result<Status> {
    let mu: Weight = read_json("mu", mu)?;
    let lambda: Weight = read_json("lambda", lambda)?;
    let b: StepFunction = read_json("symbol", symbol)?;
    let report = NormReport::compute(&mu, &lambda, &b).context("grids of the three files must match")?;
    let json = to_json(&report)?;
    println!("{json}");
    if let Some(out) = &common.out {
        write(out, json.as_bytes())?;
    }
    Ok(Status::Pass)
}

fn print_results(results: &[SuiteResult]) {
    for r in results {
        match r.failures.first() {
            None => println!("{}: pass ({} trials)", r.suite, r.records.len()),
            Some(f) => println!(
                "{}: FAIL ({} failures; first: trial {} seed {} {} = {:e} > {:e})",
                r.suite,
                r.failures.len(),
                f.trial,
                f.seed,
                f.check,
                f.value,
                f.limit
            ),
        }
    }
}

fn verify(common: &Common) -> Result<Status> {
    let config = load_config(common)?;
    let results = run(&config)?;
    print_results(&results);
    if let Some(path) = &config.outputs.json {
        write(path, results_to_json(&results)?.as_bytes())?;
    }
    if let Some(path) = &config.outputs.csv {
        let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        write_summary_csv(&results, file)?;
    }
    Ok(if all_passed(&results) { Status::Pass } else { Status::Fail })
}

fn run_sweep(common: &Common, parameter: &str, range: &str) -> Result<Status> {
    let parameter: SweepParameter = parameter.parse()?;
    let values = parse_range(range)?;
    let mut config = load_config(common)?;
    config.outputs.json = None;
    let table = sweep(&config, parameter, &values)?;
    match &common.out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
            write_sweep_csv(&table, file)?;
        }
        None => write_sweep_csv(&table, std::io::stdout().lock())?,
    }
    Ok(Status::Pass)
}

fn report(common: &Common, results: &Path) -> Result<Status> {
    let results: Vec<SuiteResult> = read_json("results", results)?;
    match &common.out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
            write_summary_csv(&results, file)?;
            print_results(&results);
        }
        None => write_summary_csv(&results, std::io::stdout().lock())?,
    }
    Ok(if all_passed(&results) { Status::Pass } else { Status::Fail })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen => gen(&cli.common),
        Command::Norms { mu, lambda, symbol } => norms(&cli.common, mu, lambda, symbol),
        Command::Verify => verify(&cli.common),
        Command::Sweep { parameter, range } => run_sweep(&cli.common, parameter, range),
        Command::Report { results } => report(&cli.common, results),
    };
    match outcome {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
