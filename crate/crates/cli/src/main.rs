use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polariton_cli::config::{Profile, RunConfig};
use polariton_cli::output::write_run;
use polariton_cli::run::{execute, Context, RunError};
use polariton_cli::{inspect, protocol, scan, series};

#[derive(Parser, Debug)]
#[command(name = "polariton-rdmft", version, about = "Ground states of electrons coupled to a cavity mode")]
struct Cli {
    /// Threshold profile.
    #[arg(long, value_enum, default_value = "paper", global = true)]
    profile: Profile,
    /// Rows run concurrently in series and cold-start scans.
    #[arg(long, default_value_t = 1, global = true)]
    jobs: usize,
    /// Output directory; overrides [output].directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Memory limit in GiB.
    #[arg(long = "max-memory", default_value_t = 4.0, global = true)]
    max_memory: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Convergence series over [series].variable.
    Series {
        #[arg(long)]
        config: PathBuf,
    },
    /// Four-step validation protocol.
    Protocol {
        #[arg(long)]
        config: PathBuf,
        /// Exit with status 3 when a step fails.
        #[arg(long)]
        strict: bool,
    },
    /// Sweep d or g_over_omega.
    Scan {
        #[arg(long)]
        config: PathBuf,
        /// Start every row from scratch.
        #[arg(long)]
        no_warm_start: bool,
    },
    /// Print the header of a checkpoint or cache file.
    Inspect { path: PathBuf },
}

const NOT_CONVERGED: u8 = 3;

fn load(path: &Path) -> Result<RunConfig, RunError> {
    Ok(RunConfig::from_path(path)?)
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn main_inner(cli: &Cli) -> Result<u8, RunError> {
    if !(cli.max_memory > 0.0) {
        return Err(polariton_cli::config::ConfigError::Invalid("--max-memory must be positive".into()).into());
    }
    let ctx = Context::new(cli.profile, cli.max_memory);
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config)?;
            let out = out_dir(cli, &cfg);
            let result = execute(&cfg, &ctx, None, None)?;
            write_run(&out, &cfg, &result)?;
            println!("E = {:.12} converged = {}", result.summary.total, result.summary.converged);
            Ok(if result.summary.converged { 0 } else { NOT_CONVERGED })
        }
        Command::Series { config } => {
            let cfg = load(config)?;
            if cfg.series.is_none() {
                return Err(polariton_cli::config::ConfigError::Invalid("series needs a [series] section".into()).into());
            }
            let out = out_dir(cli, &cfg);
            let report = series::run_series(&cfg, &ctx, &out, cli.jobs)?;
            for r in &report.rows {
                println!("{} = {}: E = {}", report.variable, r.value, r.energy.map_or("failed".into(), |e| format!("{e:.12}")));
            }
            Ok(if report.all_converged() { 0 } else { NOT_CONVERGED })
        }
        Command::Protocol { config, strict } => {
            let cfg = load(config)?;
            let out = out_dir(cli, &cfg);
            let report = protocol::run_protocol(&cfg, &ctx, &out)?;
            for s in &report.steps {
                println!("step {} {}: {:?}", s.step, s.name, s.status);
            }
            Ok(if *strict && !report.passed() { NOT_CONVERGED } else { 0 })
        }
        Command::Scan { config, no_warm_start } => {
            let cfg = load(config)?;
            let out = out_dir(cli, &cfg);
            let report = scan::run_scan(&cfg, &ctx, &out, cli.jobs, !no_warm_start)?;
            for r in &report.rows {
                println!("{} = {}: E = {}", report.variable, r.value, r.energy.map_or("failed".into(), |e| format!("{e:.12}")));
            }
            Ok(if report.all_converged() { 0 } else { NOT_CONVERGED })
        }
        Command::Inspect { path } => {
            let v = inspect(path)?;
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
