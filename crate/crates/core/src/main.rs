use clap::{Parser, Subcommand, ValueEnum};
use grf_excursion::commands::{cmd_calibrate, cmd_plan_step, cmd_pointwise_table, cmd_replicate, cmd_simulate, CommandOutput};
use grf_excursion::config::{OutputFormat, RunConfig};
use grf_excursion::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "grf-excursion", version, about = "Adaptive sampling for excursion sets of vector-valued Gaussian random fields")]
struct Cli {
    /// TOML run configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `survey.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single-location excursion probabilities and expected Bernoulli variances.
    PointwiseTable,
    /// One survey of the configured strategy.
    Simulate,
    /// Replicate study comparing the configured strategies.
    Replicate,
    /// Criterion table and choice of the configured strategy at a snapshot.
    PlanStep {
        /// Snapshot JSON written by `simulate`.
        snapshot: PathBuf,
        /// Plan from this node instead of the snapshot's current node.
        #[arg(long)]
        node: Option<usize>,
    },
    /// Fit trend and covariance parameters from survey data.
    Calibrate {
        /// CSV with header `t,x,y,depth,temperature,salinity`.
        data: PathBuf,
    },
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("EXCURSION_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("EXCURSION_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn report(out: &CommandOutput) {
    println!("{}", out.summary);
    for f in &out.files {
        eprintln!("wrote {}", f.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.survey.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
    }
    if let Some(f) = cli.format {
        cfg.output.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Jsonl => OutputFormat::Jsonl,
        };
    }
    cfg.validate()?;
    let dir = Path::new(&cfg.output.dir).to_path_buf();
    let format = cfg.output.format;

    match &cli.command {
        Command::PointwiseTable => report(&cmd_pointwise_table(&cfg, &dir, format)?),
        Command::Simulate => report(&cmd_simulate(&cfg, &dir, format)?),
        Command::Replicate => report(&cmd_replicate(&cfg, &dir, format)?),
        Command::PlanStep { snapshot, node } => {
            let (decision, table) = cmd_plan_step(&cfg, snapshot, *node, format)?;
            print!("{table}");
            eprintln!("chosen node {}", decision.chosen);
        }
        Command::Calibrate { data } => report(&cmd_calibrate(&cfg, data, &dir, format)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
