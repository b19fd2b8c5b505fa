use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use feasimap::harness::{compare, emit_grid, run_campaign, CampaignConfig};
use feasimap::problems::{monte_carlo_rho, ProblemId};
use feasimap::search::Method;
use feasimap::Result;

#[derive(Parser)]
#[command(name = "feasimap", version, about = "Bayesian search for feasible regions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark campaign described by a TOML file.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        master_seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        problems: Option<Vec<ProblemId>>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
    },
    /// Write model predictions on a regular grid as CSV.
    Grid {
        problem: ProblemId,
        model: PathBuf,
        resolution: usize,
        /// Output file; standard output if omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Tabulate median informedness of a campaign directory.
    Compare {
        dir: PathBuf,
        #[arg(long)]
        csv: bool,
    },
    /// Monte Carlo estimate of the feasible share of the box, in percent.
    Rho {
        problem: ProblemId,
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            output_dir,
            reps,
            workers,
            master_seed,
            problems,
            methods,
        } => {
            let mut cfg = CampaignConfig::load(&config)?;
            cfg.apply_env();
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            if let Some(r) = reps {
                cfg.reps = r;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            if let Some(s) = master_seed {
                cfg.master_seed = s;
            }
            if let Some(p) = problems {
                cfg.problems = p;
            }
            if let Some(m) = methods {
                cfg.methods = m;
            }
            let report = run_campaign(&cfg)?;
            println!(
                "{} runs executed, {} skipped, {} aborted; summary in {}",
                report.executed,
                report.skipped,
                report.aborted,
                cfg.output_dir.join("summary.csv").display()
            );
            Ok(())
        }
        Command::Grid {
            problem,
            model,
            resolution,
            output,
        } => {
            let rows = match output {
                Some(path) => {
                    let file = File::create(&path).map_err(|e| feasimap::Error::Io { path, source: e })?;
                    emit_grid(problem, &model, resolution, BufWriter::new(file))?
                }
                None => emit_grid(problem, &model, resolution, io::stdout().lock())?,
            };
            log::info!("wrote {rows} grid rows");
            Ok(())
        }
        Command::Compare { dir, csv } => {
            let report = compare(&dir)?;
            let text = if csv { report.to_csv() } else { report.render() };
            io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| feasimap::Error::Io { path: "<stdout>".into(), source: e })
        }
        Command::Rho {
            problem,
            samples,
            seed,
            json,
        } => {
            let spec = problem.spec();
            let rho = monte_carlo_rho(&spec, samples, seed)?;
            let p = rho / 100.0;
            let se = 100.0 * (p * (1.0 - p) / samples as f64).sqrt();
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "problem": problem.name(),
                        "samples": samples,
                        "seed": seed,
                        "rho": rho,
                        "standard_error": se,
                        "reference": spec.reference_rho,
                    })
                );
            } else {
                println!(
                    "{problem}: rho = {rho:.4}% (se {se:.4}, reference {:.4}%)",
                    spec.reference_rho
                );
            }
            Ok(())
        }
    }
}
