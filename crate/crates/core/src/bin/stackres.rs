use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stackres::lognormal::Eq17Variant;
use stackres::pipeline::{self, report, RunConfig};
use stackres::{Line, Result};

/// Stacked-ANN loss reserving experiment runner.
#[derive(Parser)]
#[command(name = "stackres", version)]
struct Cli {
    #[command(flatten)]
    opts: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated subset of CA,PA,WC,OL.
    #[arg(long, global = true, value_delimiter = ',')]
    lines: Option<Vec<Line>>,
    /// First K selected triangles per line.
    #[arg(long, global = true)]
    limit: Option<usize>,
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=3))]
    depth: Option<u8>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    eq17: Option<Eq17Variant>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate the selected triangles; writes ingest.json.
    Ingest,
    /// Fit all models, simulate, evaluate and write the report.
    Run,
    /// Stacked-ANN error at several hidden-layer depths; writes table7.csv.
    Sensitivity {
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<usize>>,
    },
    /// Re-aggregate the report from the artifacts in the output directory.
    Report,
}

fn load_config(o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(l) = &o.lines {
        cfg.lines = l.clone();
    }
    if o.limit.is_some() {
        cfg.limit = o.limit;
    }
    if let Some(d) = o.depth {
        cfg.depth = d as usize;
    }
    if let Some(j) = o.jobs {
        cfg.jobs = j;
    }
    if let Some(e) = o.eq17 {
        cfg.eq17 = e;
    }
    if let Some(out) = &o.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.opts)?;
    match cli.command {
        Command::Ingest => {
            let s = pipeline::run_ingest(&cfg)?;
            for l in &s.lines {
                log::info!("{}: {} triangles, {} with run-off", l.line, l.triangles, l.with_runoff);
            }
        }
        Command::Run => {
            let r = pipeline::run_pipeline(&cfg)?;
            log::info!(
                "{} companies, {} gaps; report in {}",
                r.companies,
                r.gaps.len(),
                cfg.output.display()
            );
        }
        Command::Sensitivity { depths } => {
            let depths = depths.unwrap_or_else(|| cfg.sensitivity_depths.clone());
            pipeline::run_sensitivity(&cfg, &depths)?;
            log::info!("table7.csv in {}", cfg.output.display());
        }
        Command::Report => {
            let r = report::rebuild(&cfg.output)?;
            log::info!("re-aggregated {} companies", r.companies);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
