use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coldstart::config::ExperimentConfig;
use coldstart::core::data::{synth_generate, SynthSpec};
use coldstart::core::preprocess::SchemaSpec;
use coldstart::csvio::write_events;
use coldstart::output::write_atomic;
use coldstart::report::build_report;
use coldstart::runner::{execute, write_results};

#[derive(Parser)]
#[command(name = "coldstart", version, about = "Cold-start streaming active learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every fold x sequence x seed of an experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `out_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        seeds: Option<usize>,
        /// Comma-separated sequence ids.
        #[arg(long, value_delimiter = ',')]
        sequences: Option<Vec<String>>,
    },
    /// Build ranking, band and positives-boost tables from a results directory.
    Report {
        #[arg(long)]
        results: PathBuf,
        /// Defaults to `<results>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset as CSV.
    Synth {
        /// TOML file with synthetic-stream fields.
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out, jobs, seeds, sequences } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(|e| Failure::Validation(e.to_string()))?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(s) = sequences {
                cfg.sequences = s;
            }
            if jobs == Some(0) {
                return Err(Failure::Validation("--jobs must be positive".into()));
            }
            cfg.validate().map_err(|e| Failure::Validation(e.to_string()))?;
            let out = out
                .or_else(|| cfg.out_dir.clone())
                .ok_or_else(|| Failure::Validation("no output directory: pass --out or set out_dir".into()))?;
            let results = execute(&cfg, jobs).map_err(|e| {
                if e.is_validation() { Failure::Validation(e.to_string()) } else { Failure::Runtime(e.to_string()) }
            })?;
            write_results(&results, &out).map_err(|e| Failure::Runtime(e.to_string()))?;
            eprintln!("{} runs, {} baselines written to {}", results.curves.len(), results.baselines.len(), out.display());
            Ok(())
        }
        Command::Report { results, out } => {
            let out = out.unwrap_or_else(|| results.join("report"));
            let report = build_report(&results, &out).map_err(|e| Failure::Runtime(e.to_string()))?;
            for g in &report.gaps {
                eprintln!("gap: {g}");
            }
            eprintln!("report written to {}", out.display());
            Ok(())
        }
        Command::Synth { spec, preset, seed, out } => {
            let mut s = match (spec, preset) {
                (Some(p), _) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?;
                    toml::from_str::<SynthSpec>(&text).map_err(|e| Failure::Validation(e.to_string()))?
                }
                (None, Some(name)) => SynthSpec::preset(&name).ok_or_else(|| {
                    Failure::Validation(format!("unknown preset `{name}`; known: {}", SynthSpec::PRESETS.join(", ")))
                })?,
                (None, None) => SynthSpec::default(),
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let stream = synth_generate(&s).map_err(|e| Failure::Validation(e.to_string()))?;
            if stream.sparse_positives {
                eprintln!("warning: fewer than one positive expected");
            }
            let schema = SchemaSpec::canonical(s.n_categoricals, s.n_numericals);
            let mut buf = Vec::new();
            write_events(&mut buf, &stream.events, &schema).map_err(|e| Failure::Runtime(e.to_string()))?;
            write_atomic(&out, &buf).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
