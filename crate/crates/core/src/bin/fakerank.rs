use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fakerank::config::{self, ExperimentConfig};
use fakerank::harness::run_replications;
use fakerank::report::{summary_lines, write_csv};
use fakerank::Error;

/// Online learning-to-rank under fake users: experiment runner.
#[derive(Debug, Parser)]
#[command(name = "fakerank", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write the regret CSV.
    Run(RunArgs),
    /// List the built-in scenarios.
    List,
    /// Print a scenario's (or config file's) resolved configuration as JSON.
    Show(SourceArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct SourceArgs {
    /// Built-in scenario name.
    #[arg(long)]
    scenario: Option<String>,
    /// Path to a JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Base seed; replication r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Output CSV path, `-` for stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of evenly spaced checkpoints.
    #[arg(long)]
    checkpoints: Option<usize>,
    /// Only run this algorithm (label or kind); repeatable.
    #[arg(long = "algo")]
    algos: Vec<String>,
    /// Override the horizon T.
    #[arg(long)]
    horizon: Option<u64>,
}

fn load(source: &SourceArgs) -> Result<ExperimentConfig, Error> {
    match (&source.scenario, &source.config) {
        (Some(name), _) => config::scenario(name),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            let parsed: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Config {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            Ok(parsed)
        }
        (None, None) => unreachable!("clap requires one source"),
    }
}

fn run(args: RunArgs) -> Result<(), Error> {
    let mut config = load(&args.source)?;
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    if let Some(reps) = args.reps {
        config.reps = reps;
    }
    if let Some(checkpoints) = args.checkpoints {
        config.checkpoints = checkpoints;
    }
    if let Some(horizon) = args.horizon {
        config.horizon = horizon;
    }
    config.retain_algorithms(&args.algos)?;
    config.validate()?;

    let out = args
        .out
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", config.scenario)));

    let output = run_replications(&config)?;
    let to_stdout = out.as_os_str() == "-";
    if to_stdout {
        let stdout = io::stdout();
        let mut w = stdout.lock();
        write_csv(&mut w, &config.scenario, &output.runs)?;
        w.flush()?;
    } else {
        let mut w = BufWriter::new(File::create(&out)?);
        write_csv(&mut w, &config.scenario, &output.runs)?;
        w.flush()?;
    }

    let summary = summary_lines(&output.series);
    let mut log: Box<dyn Write> = if to_stdout {
        Box::new(io::stderr())
    } else {
        Box::new(io::stdout())
    };
    writeln!(
        log,
        "{}: T={} reps={} seed={}",
        config.scenario, config.horizon, config.reps, config.base_seed
    )?;
    for line in summary {
        writeln!(log, "  {line}")?;
    }
    if !to_stdout {
        writeln!(log, "wrote {}", out.display())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::List => {
            for (name, description) in config::list_scenarios() {
                println!("{name:<18} {description}");
            }
            Ok(())
        }
        Command::Show(source) => load(&source).map(|c| println!("{}", c.to_json())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
