//! `dispersal`: experiment runner for the local/nonlocal competition
//! laboratory. Parses a JSON scenario config, executes the named experiment,
//! writes CSV/JSON artifacts plus a summary, and exits 0 only if every
//! assertion passed.

mod config;
mod experiments;
mod expr;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::{Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dispersal", version, about = "local vs nonlocal dispersal laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config's `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed override for every randomized ingredient.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the full acceptance suite and print one line per criterion.
    Acceptance {
        /// Smoke mode: smaller grids, identical tolerances.
        #[arg(long)]
        fast: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(serde::Serialize)]
struct Summary<'a> {
    experiment: Experiment,
    inputs: &'a ExperimentConfig,
    numbers: &'a std::collections::BTreeMap<String, f64>,
    passes: &'a std::collections::BTreeMap<String, bool>,
    wall_time_seconds: f64,
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            // machine-readable error record
            let record = serde_json::json!({ "error": format!("{e:#}") });
            eprintln!("{record}");
            2
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { config, out, seed } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| anyhow::anyhow!("reading {}: {e}", config.display()))?;
            let mut parsed = config::parse_config(&text)?;
            if let Some(seed) = seed {
                parsed.seed = seed;
            }
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&parsed.output_dir));
            execute(&parsed, &out_dir)
        }
        Command::Acceptance { fast, out, seed } => {
            let parsed = ExperimentConfig {
                experiment: Experiment::Acceptance,
                grid: Default::default(),
                s: 0.5,
                s_prime: None,
                sigma: Default::default(),
                tolerances: Default::default(),
                output_dir: "out".into(),
                seed: seed.unwrap_or(0),
                lambda_factor: None,
                center: None,
                radius: None,
                tau_list: None,
                eps: None,
                t_final: None,
                dt: None,
                r_outer: None,
                contrast: None,
                fast: Some(fast),
            };
            let out_dir = out.unwrap_or_else(|| PathBuf::from("out"));
            execute(&parsed, &out_dir)
        }
    }
}

fn execute(parsed: &ExperimentConfig, out_dir: &std::path::Path) -> anyhow::Result<bool> {
    experiments::prepare_output(out_dir)?;
    let start = Instant::now();
    let outcome = experiments::run(parsed, out_dir)?;
    let summary = Summary {
        experiment: parsed.experiment,
        inputs: parsed,
        numbers: &outcome.numbers,
        passes: &outcome.passes,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    let file = std::fs::File::create(out_dir.join("summary.json"))?;
    serde_json::to_writer_pretty(file, &summary)?;
    println!(
        "{:?} finished in {:.2}s -> {}",
        parsed.experiment,
        start.elapsed().as_secs_f64(),
        out_dir.join("summary.json").display()
    );
    println!("{}", experiments::describe(&outcome));
    Ok(outcome.all_passed())
}
