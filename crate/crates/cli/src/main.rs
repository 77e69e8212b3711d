mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kinfer::pipeline::Method;

use commands::StudyKind;
use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "kinfer", version, about = "Discover kinetic rate laws from concentration data")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log more (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(short, long, env = "KINFER_OUTPUT_DIR")]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SystemArgs {
    /// Built-in system: isomerization, n2o or toluene.
    #[arg(long)]
    system: Option<String>,
    /// JSON file describing a custom system.
    #[arg(long, conflicts_with = "system")]
    system_file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a noisy dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        noise_std: Option<f64>,
    },
    /// Discover a rate law, designing new experiments between iterations.
    Discover {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        system: SystemArgs,
        /// Dataset directory with manifest.json.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Do not run proposed experiments on the system's simulator.
        #[arg(long)]
        no_simulate: bool,
    },
    /// Information-criterion studies on the isomerization rival set.
    Study {
        #[arg(value_enum)]
        kind: StudyKind,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "adok-s" => Ok(Method::AdokS),
        "adok-w" => Ok(Method::AdokW),
        _ => Err(format!("unknown method {s:?} (expected adok-s or adok-w)")),
    }
}

fn resolve(common: &Common, system: Option<&SystemArgs>) -> Result<RunConfig, CliError> {
    let mut c = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(o) = &common.output {
        c.output_dir = Some(o.clone());
    }
    if let Some(sys) = system {
        if let Some(name) = &sys.system {
            c.system = Some(name.clone());
            c.system_file = None;
        }
        if let Some(file) = &sys.system_file {
            c.system_file = Some(file.clone());
            c.system = None;
        }
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate { common, system, noise_std } => {
            let mut c = resolve(&common, Some(&system))?;
            if noise_std.is_some() {
                c.noise_std = noise_std;
            }
            commands::simulate(&c)
        }
        Command::Discover { common, system, data, method, max_iterations, no_simulate } => {
            let mut c = resolve(&common, Some(&system))?;
            if data.is_some() {
                c.data_dir = data;
            }
            if let Some(m) = method {
                c.method = m;
            }
            if let Some(n) = max_iterations {
                c.loop_config.max_iterations = n;
            }
            if no_simulate {
                c.simulate_in_loop = false;
            }
            commands::discover(&c)
        }
        Command::Study { kind, common } => commands::study(kind, &resolve(&common, None)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
