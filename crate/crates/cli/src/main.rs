//! `coevo`: single runs, multi-run experiments, aggregation and plot data.
//!
//! Exit status is 0 on success, 1 for configuration or usage errors and 2
//! for failures while running or writing output.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coevo::engine::{run_simulation, RunConfig, Treatment};
use coevo::harness::{self, ExperimentConfig, JOBS_ENV};
use coevo::{ConfigError, HarnessError};

#[derive(Debug, Parser)]
#[command(name = "coevo", version, about = "Gene-culture coevolution simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one population and write its run record.
    Run {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "full")]
        treatment: Treatment,
        #[arg(long)]
        days: Option<u32>,
        #[arg(long)]
        sample_interval: Option<u32>,
        /// Experiment config file supplying the remaining run parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run record destination (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Also write the sample table here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Include the per-day event log and final population in the record.
        #[arg(long)]
        log_events: bool,
    },
    /// Run every treatment many times and aggregate the results.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, env = JOBS_ENV)]
        jobs: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Rebuild aggregate tables from a directory of run records.
    Aggregate {
        #[arg(long)]
        in_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write long-format figure tables from aggregate tables.
    PlotData {
        /// An aggregate table or a directory containing them.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Check an experiment config file and print it with defaults filled in.
    ValidateConfig {
        path: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, ConfigError> {
    match path {
        Some(p) => ExperimentConfig::from_file(p),
        None => Ok(ExperimentConfig { jobs: harness::default_jobs(), ..ExperimentConfig::default() }),
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { seed, treatment, days, sample_interval, config, out, csv, log_events } => {
            let base = load_config(config.as_deref())?.base;
            let cfg = RunConfig {
                seed,
                treatment,
                days: days.unwrap_or(base.days),
                sample_interval: sample_interval.unwrap_or(base.sample_interval),
                log_events: log_events || base.log_events,
                record_population: log_events || base.record_population,
                ..base
            };
            let record = run_simulation(&cfg, |_| {})?;
            harness::write_file(&out, |w| {
                serde_json::to_writer(&mut *w, &record)
                    .map_err(|source| HarnessError::Json { path: out.clone(), source })
            })?;
            if let Some(csv) = csv {
                harness::write_file(&csv, |w| harness::write_sample_table(w, [&record]))?;
            }
            if let Some(last) = record.samples.last() {
                println!(
                    "{} seed {} day {}: best memeplex {:.3}, best geneplex {:.3}",
                    treatment, seed, last.day, last.mean_best_meme_fitness, last.mean_best_gene_fitness
                );
            }
            println!("population hash {}", record.final_population_hash);
            Ok(())
        }
        Command::Experiment { config, runs, jobs, out_dir } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(r) = runs {
                cfg.run_count = r;
            }
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            cfg.validate()?;
            let out = harness::run_experiment(&cfg, &out_dir)?;
            println!("{} runs written to {}", out.records.len(), out_dir.display());
            for f in &out.files {
                println!("  {}", f.display());
            }
            Ok(())
        }
        Command::Aggregate { in_dir, out } => {
            for f in harness::aggregate_dir(&in_dir, &out)? {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::PlotData { input, out_dir } => {
            let rows = harness::load_aggregates(&input)?;
            for f in harness::emit_plot_data(&rows, &out_dir)? {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::ValidateConfig { path } => {
            let cfg = ExperimentConfig::from_file(&path)?;
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}
