//! `folionet` — shareholder-register similarity networks from the command
//! line. Every subcommand is one pipeline stage over a shared output
//! directory; `run` chains them all and writes a content-hash manifest.

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use folionet_core::pipeline::{self, InputConfig, PipelineConfig};
use folionet_core::report::CurveVariant;
use folionet_core::synth::{self, MarketSpec};
use folionet_core::Error;

#[derive(Parser)]
#[command(name = "folionet", version, about = "who holds alike, trades alike")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
    /// Pipeline config file (key = value lines).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic market into a directory of snapshot files.
    Synth {
        /// Market spec file, or "default".
        #[arg(long, value_name = "FILE")]
        spec: Option<String>,
        /// Target directory (default: <out_dir>/market).
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Clean a snapshot pair into a universe file.
    Ingest {
        #[arg(long, value_name = "FILE", requires_all = ["t2", "prices_t1", "prices_t2"])]
        t1: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        t2: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        prices_t1: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        prices_t2: Option<PathBuf>,
        /// First snapshot date (default: the synthetic market's date).
        #[arg(long, value_name = "YYYY-MM-DD")]
        t1_date: Option<NaiveDate>,
        #[arg(long, value_name = "YYYY-MM-DD")]
        t2_date: Option<NaiveDate>,
        /// Maximum relative change in total shares outstanding.
        #[arg(long, value_name = "FRAC")]
        max_share_change: Option<f64>,
        /// Output file (default: <out_dir>/universe.bin).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Portfolio and trading vectors from the universe.
    Vectors,
    /// Deduplicate portfolios and build the similarity network.
    Network,
    /// Cluster the network into a module tree.
    Cluster,
    /// Group statistics and bootstrap significance.
    Cohort,
    /// Figure-style CSV products from persisted artifacts. Bare `report`
    /// writes the whole report directory; the subcommands emit one file.
    Report {
        #[command(subcommand)]
        what: Option<ReportCommand>,
    },
    /// All stages in order, then the artifact manifest.
    Run {
        /// Output directory; overrides the config file.
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Relative trading similarity by portfolio-similarity bin.
    Curve {
        /// Pipeline output directory holding universe.bin and vectors/.
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long, value_name = "W")]
        bin_width: Option<f64>,
        /// all | new
        #[arg(long, default_value = "all")]
        variant: String,
        #[arg(long, value_name = "S")]
        seed: Option<u64>,
    },
    /// Random-group similarity distributions.
    Dist {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long, value_name = "S")]
        seed: Option<u64>,
    },
    /// Mean-similarity scatter point per group.
    Scatter {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

/// Failures before any stage runs (unreadable config or spec file) count as
/// config errors for exit-code purposes.
fn as_config_error(e: Error) -> Error {
    match e {
        e @ Error::Config(_) => e,
        e => Error::Config(e.to_string()),
    }
}

fn run(cli: Cli) -> folionet_core::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(as_config_error)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Synth { spec, out_dir } => {
            let market_spec = match spec.as_deref() {
                None | Some("default") => match &cfg.input {
                    InputConfig::Synth { spec: Some(path) } if spec.is_none() => {
                        MarketSpec::load(path).map_err(as_config_error)?
                    }
                    _ => MarketSpec::default(),
                },
                Some(path) => {
                    MarketSpec::load(std::path::Path::new(path)).map_err(as_config_error)?
                }
            };
            let market = synth::generate(&market_spec)?;
            let dir = out_dir.unwrap_or_else(|| cfg.market_dir());
            synth::write_market(&dir, &market)?;
            println!("market written to {}", dir.display());
            Ok(())
        }
        Command::Ingest { t1, t2, prices_t1, prices_t2, t1_date, t2_date, max_share_change, out } => {
            if let Some(t1) = t1 {
                // clap enforces that the other three paths came with it.
                cfg.input = InputConfig::Files {
                    t1,
                    t2: t2.unwrap(),
                    prices_t1: prices_t1.unwrap(),
                    prices_t2: prices_t2.unwrap(),
                    t1_date: t1_date
                        .unwrap_or_else(|| synth::T1_DATE.parse().expect("valid constant date")),
                    t2_date: t2_date
                        .unwrap_or_else(|| synth::T2_DATE.parse().expect("valid constant date")),
                };
            }
            if let Some(m) = max_share_change {
                cfg.max_share_change = m;
            }
            let universe = pipeline::build_universe(&cfg)?;
            let path = out.unwrap_or_else(|| cfg.universe_path());
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            universe.write(&path)?;
            println!("universe written to {}", path.display());
            Ok(())
        }
        Command::Vectors => pipeline::stage_vectors(&cfg),
        Command::Network => pipeline::stage_network(&cfg),
        Command::Cluster => pipeline::stage_cluster(&cfg),
        Command::Cohort => pipeline::stage_cohort(&cfg),
        Command::Report { what } => {
            match what {
                None => pipeline::stage_report(&cfg),
                Some(ReportCommand::Curve { input, out, bin_width, variant, seed }) => {
                    cfg.out_dir = input;
                    if let Some(w) = bin_width {
                        cfg.bin_width = w;
                    }
                    if let Some(s) = seed {
                        cfg.seed = s;
                    }
                    pipeline::report_curve_file(&cfg, CurveVariant::parse(&variant)?, &out)
                }
                Some(ReportCommand::Dist { input, out, seed }) => {
                    cfg.out_dir = input;
                    if let Some(s) = seed {
                        cfg.seed = s;
                    }
                    pipeline::report_dist_file(&cfg, &out)
                }
                Some(ReportCommand::Scatter { input, out }) => {
                    cfg.out_dir = input;
                    pipeline::report_scatter_file(&cfg, &out)
                }
            }
        }
        Command::Run { out_dir } => {
            if let Some(dir) = out_dir {
                cfg.out_dir = dir;
            }
            let entries = pipeline::run_pipeline(&cfg)?;
            for e in &entries {
                println!("{}\t{}\t{}", e.name, e.path, e.sha256);
            }
            println!("manifest written to {}", cfg.manifest_path().display());
            Ok(())
        }
    }
}
