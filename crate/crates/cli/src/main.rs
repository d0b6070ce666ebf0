use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use facegrowth_cli::config::{InputSource, RunConfig};
use facegrowth_cli::pipeline::{
    read_results_csv, stage_align, stage_correlate, stage_input, stage_label, stage_measure, write_failure,
    REPORT_FILE, RESULTS_FILE,
};
use facegrowth_cli::{run_pipeline, ArtifactWriter, PipelineError};
use facegrowth_core::evaluation::aggregate;

#[derive(Parser, Debug)]
#[command(name = "facegrowth", version, about = "Facial growth-direction prediction pipeline")]
struct Cli {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// 60 synthetic patients, 3 scenarios, 4 models, 2 repeats.
    #[arg(long, global = true)]
    smoke: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort and write its landmark CSV.
    Synth,
    /// Validate a landmark CSV and write the ingest report.
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Procrustes-align every cephalogram; write coordinates and diagnostics.
    Align {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Evaluate the measurement panel on every cephalogram.
    Measure {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Label growth direction per target.
    Label {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Period correlations and class-mean trajectories.
    Correlate {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Full pipeline through cross-validated evaluation.
    Run {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Re-render the ranked report from a results CSV.
    Report {
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

impl Command {
    fn input(&self) -> Option<&Path> {
        match self {
            Command::Ingest { input }
            | Command::Align { input }
            | Command::Measure { input }
            | Command::Label { input }
            | Command::Correlate { input }
            | Command::Run { input } => input.as_deref(),
            Command::Synth | Command::Report { .. } => None,
        }
    }
}

fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(input) = cli.command.input() {
        cfg.input.source = InputSource::File;
        cfg.input.path = Some(input.to_path_buf());
    }
    if matches!(cli.command, Command::Ingest { .. }) && cfg.input.source != InputSource::File {
        return Err(PipelineError::Config("ingest needs --input or input.source = \"file\"".into()).into());
    }
    if cli.smoke {
        cfg.apply_smoke();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli, cfg: &RunConfig) -> anyhow::Result<()> {
    let mut out = ArtifactWriter::new(&cli.out, cfg.digest(), cfg.master_seed)?;
    match &cli.command {
        Command::Synth => {
            let mut synth_only = cfg.clone();
            synth_only.input.source = InputSource::Synth;
            let cohort = stage_input(&synth_only, &mut out)?;
            eprintln!("synthesized {} patients", cohort.len());
        }
        Command::Ingest { .. } => {
            let cohort = stage_input(cfg, &mut out)?;
            eprintln!("ingested {} patients", cohort.len());
        }
        Command::Align { .. } => {
            let cohort = stage_input(cfg, &mut out)?;
            let a = stage_align(cfg, &cohort, &mut out)?;
            eprintln!("aligned {} shapes in {} iteration(s)", a.iter().map(|x| x.shapes.len()).sum::<usize>(), a[0].iterations);
        }
        Command::Measure { .. } => {
            let cohort = stage_input(cfg, &mut out)?;
            stage_measure(cfg, &cohort, &mut out)?;
        }
        Command::Label { .. } => {
            let cohort = stage_input(cfg, &mut out)?;
            let meas = stage_measure(cfg, &cohort, &mut out)?;
            for s in stage_label(cfg, &meas, &mut out)?.1 {
                eprintln!("{}: H/M/V = {:?}", s.target, s.counts);
            }
        }
        Command::Correlate { .. } => {
            let cohort = stage_input(cfg, &mut out)?;
            let meas = stage_measure(cfg, &cohort, &mut out)?;
            let (labels, _) = stage_label(cfg, &meas, &mut out)?;
            stage_correlate(&cohort, &meas, &labels, &mut out)?;
        }
        Command::Run { .. } => {
            let outcome = run_pipeline(cfg, &mut out)?;
            print!("{}", outcome.results.render());
            let failed: usize = outcome.records().iter().map(|r| r.failures.len()).sum();
            eprintln!("{} records, {failed} failed cells", outcome.records().len());
        }
        Command::Report { results } => {
            let path = results.clone().unwrap_or_else(|| cli.out.join(RESULTS_FILE));
            let records = read_results_csv(&path)?;
            let table = aggregate(records).context("aggregating results")?;
            out.write_bytes(REPORT_FILE, table.render().as_bytes())?;
            print!("{}", table.render());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<PipelineError>())
        .map_or(2, |p| p.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let started = Instant::now();
    let result = resolve_config(&cli).and_then(|cfg| execute(&cli, &cfg));
    match result {
        Ok(()) => {
            eprintln!("done in {:.1}s", started.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(p) = e.chain().find_map(|x| x.downcast_ref::<PipelineError>()) {
                write_failure(&cli.out, p);
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
