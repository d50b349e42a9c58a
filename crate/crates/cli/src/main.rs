//! `mtreid` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 training divergence,
//! 4 I/O or file-format error, 1 anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mtreid::config::RunConfig;
use mtreid::evaluator::EvalReport;
use mtreid::pipeline;
use mtreid::plot::{center_loss_chart, cmc_chart, train_rank1_chart, Chart};
use mtreid::trainer::TrainingLog;
use mtreid::Error;

#[derive(Parser)]
#[command(name = "mtreid", version, about = "Multi-dataset person re-identification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic corpus to PNG files and manifests.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the stage plan: stage 1, then every stage-2 variant.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint written by an earlier run into --out.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Write signatures of the test split (or every sample) to a store file.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        all: bool,
    },
    /// Held-out evaluation: report.json, cmc.svg and a summary table.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Charts of a training log (and optionally an evaluation report).
    Plot {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_chart(dir: &Path, name: &str, chart: &Chart) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, chart.to_svg()).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn print_report(report: &EvalReport) {
    println!("{:<20} {:>8} {:>10}", "dataset", "test ids", "rank-1");
    for d in &report.per_dataset {
        println!("{:<20} {:>8} {:>10.4}", d.dataset, d.test_identities, d.rank1);
    }
    println!("{:<20} {:>8} {:>10.4}", "mean", "", report.rank1);
    if let Some(attrs) = &report.attributes {
        println!();
        println!("{:<20} {:>10}", "attribute", "AP");
        for a in &attrs.attributes {
            println!("{:<20} {:>10}", a.name, fmt_opt(a.ap));
        }
        println!("{:<20} {:>10}", "mean", fmt_opt(attrs.mean_ap));
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, out } => {
            let cfg = load_config(&common)?;
            for p in pipeline::synthesize(&cfg, &out)? {
                println!("wrote {}", p.display());
            }
            println!("wrote {}", out.join(pipeline::MANIFEST_CONFIG_FILE).display());
        }
        Command::Train { common, out, resume } => {
            let cfg = load_config(&common)?;
            let prepared = pipeline::prepare(&cfg)?;
            let summaries = pipeline::train(&cfg, &prepared, &out, resume.as_deref())?;
            println!("{:<20} {:>8} {:>12} {:>10}", "stage", "steps", "train rank-1", "plateaued");
            for s in summaries {
                println!("{:<20} {:>8} {:>12} {:>10}", s.name, s.steps, fmt_opt(s.final_train_rank1), s.plateaued);
            }
        }
        Command::Extract { common, weights, out, all } => {
            let cfg = load_config(&common)?;
            let prepared = pipeline::prepare(&cfg)?;
            let store = pipeline::extract_signatures(&cfg, &prepared, &weights, all)
                .with_context(|| format!("weights {}", weights.display()))?;
            store.save(&out)?;
            println!("wrote {} signatures of dimension {} to {}", store.len(), store.dim(), out.display());
        }
        Command::Eval { common, weights, out } => {
            let cfg = load_config(&common)?;
            let prepared = pipeline::prepare(&cfg)?;
            let report = pipeline::evaluate_weights(&cfg, &prepared, &weights)
                .with_context(|| format!("weights {}", weights.display()))?;
            fs::create_dir_all(&out)?;
            report.write(&out.join("report.json"))?;
            write_chart(&out, "cmc.svg", &cmc_chart(&report))?;
            print_report(&report);
        }
        Command::Plot { log, report, out } => {
            let log = TrainingLog::read_csv(&log).with_context(|| format!("reading {}", log.display()))?;
            fs::create_dir_all(&out)?;
            write_chart(&out, "train_rank1.svg", &train_rank1_chart(&log))?;
            write_chart(&out, "center_loss.svg", &center_loss_chart(&log))?;
            if let Some(r) = report {
                write_chart(&out, "cmc.svg", &cmc_chart(&EvalReport::read(&r)?))?;
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<std::io::Error>()) {
        return 4;
    }
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(
            Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::ConfigMismatch { .. }
            | Error::DigestMismatch { .. }
            | Error::Manifest { .. }
            | Error::Annotation(_),
        ) => 2,
        Some(Error::Divergence { .. }) => 3,
        Some(
            Error::Io(_)
            | Error::Image(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Format(_)
            | Error::Version { .. }
            | Error::NoSamples(_),
        ) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
