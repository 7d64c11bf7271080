use clap::{Args, Parser, Subcommand};
use floodrisk::pipeline::{parse_stages, run, PipelineConfig, PipelineStage, RunOptions};
use floodrisk::trend::{extreme_precip_counts, poisson_trend, read_precip_csv, wald_t_test, TrendError};
use floodrisk::Execution;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "floodrisk", version, about = "Flood-loss normalization and trend pipeline")]
struct Cli {
    /// Pipeline configuration (TOML). Missing keys take their defaults.
    #[arg(long, global = true, default_value = "floodrisk.toml")]
    config: PathBuf,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
    /// Rerun stages even when their inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the event catalog.
    Ingest,
    /// Reconstruct exposure grids for the configured years.
    Backcast,
    /// Intersect events with hazard zones.
    Footprints,
    /// Rescale losses to baseline exposure.
    Normalize,
    /// Fit pairwise copulas to relative damages.
    FitCopulas,
    /// Fill missing losses from the fitted copulas.
    GapFill,
    /// Estimate underreporting factors by severity quintile.
    Underreport,
    /// Poisson trends with Monte Carlo significance.
    Trend,
    /// Write the trend table and plot-ready series.
    Report,
    /// Run several stages in order.
    Run {
        /// Comma-separated stages; all stages when omitted.
        #[arg(long)]
        stages: Option<String>,
    },
    /// Annual counts of extreme precipitation events from daily records.
    Precip(PrecipArgs),
}

#[derive(Args)]
struct PrecipArgs {
    /// CSV with `cell,date,precip_mm` rows.
    #[arg(long)]
    input: PathBuf,
    /// Rolling-sum durations in days.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,5,7")]
    durations: Vec<usize>,
    /// Return period of the threshold in years.
    #[arg(long, default_value_t = 5)]
    return_period: usize,
    #[arg(long)]
    output: PathBuf,
}

fn precip(args: &PrecipArgs, exec: Execution) -> Result<(), String> {
    let file = std::fs::File::open(&args.input).map_err(|e| format!("{}: {e}", args.input.display()))?;
    let cells = read_precip_csv(file).map_err(|e| e.to_string())?;
    let counts = extreme_precip_counts(&cells, &args.durations, args.return_period, exec).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(&args.output).map_err(|e| e.to_string())?;
    let mut trends = String::from("duration_days,rate_percent,b,t_test_significant\n");
    for (d, series) in &counts {
        let path = args.output.join(format!("extreme_precipitation_{d}d.csv"));
        let mut f = std::fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        series.write_csv(&mut f).map_err(|e| e.to_string())?;
        match poisson_trend(series) {
            Ok(fit) => trends.push_str(&format!("{d},{},{},{}\n", fit.rate_percent(), fit.b, wald_t_test(&fit, 0.05))),
            Err(TrendError::Degenerate) => trends.push_str(&format!("{d},,,\n")),
            Err(e) => return Err(e.to_string()),
        }
    }
    let path = args.output.join("precip_trends.csv");
    std::fs::File::create(&path)
        .and_then(|mut f| f.write_all(trends.as_bytes()))
        .map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };

    let stages = match &cli.command {
        Command::Precip(args) => {
            return match precip(args, exec) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            };
        }
        Command::Ingest => vec![PipelineStage::Ingest],
        Command::Backcast => vec![PipelineStage::Backcast],
        Command::Footprints => vec![PipelineStage::Footprints],
        Command::Normalize => vec![PipelineStage::Normalize],
        Command::FitCopulas => vec![PipelineStage::FitCopulas],
        Command::GapFill => vec![PipelineStage::GapFill],
        Command::Underreport => vec![PipelineStage::Underreport],
        Command::Trend => vec![PipelineStage::Trend],
        Command::Report => vec![PipelineStage::Report],
        Command::Run { stages: None } => PipelineStage::ALL.to_vec(),
        Command::Run { stages: Some(list) } => match parse_stages(list) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        },
    };

    let config = if cli.config.exists() {
        PipelineConfig::load(&cli.config)
    } else {
        Err(format!("config file {} not found", cli.config.display()))
    };
    let config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions {
        stages,
        seed_override: cli.seed,
        exec: cli.sequential.then_some(Execution::Sequential),
        timestamp: None,
        force: cli.force,
    };
    match run(&config, &opts) {
        Ok(summary) => {
            for (stage, status) in summary.stages {
                log::info!("{stage}: {status:?}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
