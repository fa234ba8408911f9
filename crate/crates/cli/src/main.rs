//! `tis`: command-line front-end for risk-estimation campaigns.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tis_core::campaign::{
    compare, format_comparison_table, metamodel_normalization, run_campaign, train_metamodel, write_comparison_csv,
    CampaignConfig, CampaignReport, TrainedMetamodel,
};
use tis_core::density::{build_density, synthesize_dataset};
use tis_core::estimate::{run_sim_seed, ConvergenceHistory};
use tis_core::scenario::{ScenarioParams, PARAM_NAMES};
use tis_core::sim::{run_hifi_traced, run_lofi_pre_traced};
use tis_core::{Error, Result};

#[derive(Parser)]
#[command(name = "tis", version, about = "Multi-fidelity rare-event risk estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the proposal metamodel of the configured approach.
    TrainMetamodel {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `metamodel_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run an estimation campaign and write its report and convergence history.
    RunCampaign {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Metamodel written by `train-metamodel`; trained inline when absent.
        #[arg(long)]
        metamodel: Option<PathBuf>,
        /// Overrides `base_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Also write a frame CSV for every hi-fi run under `<out>/traces`.
        #[arg(long)]
        trace: bool,
    },
    /// Compare campaign reports by total cost.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Directory for `comparison.csv`; the table is printed either way.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic naturalistic dataset behind `p(x)`.
    SynthData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `density.data_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-simulate one run of a convergence history and write its frames.
    DumpTrace {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        history: PathBuf,
        /// Run index `i` in the history.
        #[arg(long)]
        run: usize,
        #[arg(long, value_enum, default_value_t = TraceTier::Hifi)]
        fidelity: TraceTier,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceTier {
    Hifi,
    LofiPre,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                _ => 3,
            })
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::TrainMetamodel { config, out, seed, workers } => {
            let mut cfg = load_config(config.as_deref(), workers)?;
            if let Some(seed) = seed {
                cfg.metamodel_seed = seed;
            }
            if cfg.approach.derivation_tier().is_none() {
                return Err(Error::Config("approach mc has no metamodel to train".into()));
            }
            let density = build_density(&cfg.density)?;
            let trained = train_metamodel(&cfg, &density)?;
            let norm = metamodel_normalization(&cfg, &density, &trained)?;
            create_dir(&out)?;
            trained.save(&out.join("metamodel.json"))?;
            write_text(&out.join("normalization.json"), &(serde_json::to_string_pretty(&norm)? + "\n"))?;
            println!(
                "{}: n_q {} design collisions {} ell_M {} (std {}, n_mc {})",
                cfg.approach.name(),
                trained.n_q,
                trained.design_collisions,
                norm.mean,
                norm.std,
                norm.n_mc
            );
            Ok(())
        }
        Command::RunCampaign { config, out, metamodel, seed, workers, trace } => {
            let mut cfg = load_config(config.as_deref(), workers)?;
            if let Some(seed) = seed {
                cfg.base_seed = seed;
            }
            cfg.validate()?;
            let trained = metamodel
                .as_deref()
                .map(|p| TrainedMetamodel::from_json(&read_text(p)?).map_err(|e| input_error(p, e)))
                .transpose()?;
            let density = build_density(&cfg.density)?;
            create_dir(&out)?;
            let mut history = ConvergenceHistory::new();
            let result = run_campaign(&cfg, &density, trained.as_ref(), &mut history);
            let mut csv = Vec::new();
            history.write_csv(&mut csv)?;
            fs::write(out.join("history.csv"), csv)?;
            let report = result?;
            write_text(&out.join("report.json"), &(report.to_json()? + "\n"))?;
            if trace {
                let dir = out.join("traces");
                create_dir(&dir)?;
                for r in &history.records {
                    let (_, frames) = run_hifi_traced(&cfg.sim, &r.x, run_sim_seed(r.seed))?;
                    let mut buf = Vec::new();
                    frames.write_csv(&mut buf)?;
                    fs::write(dir.join(format!("run_{}.csv", r.i)), buf)?;
                }
            }
            println!(
                "{}: ell {} std {} upper_99 {} N_l {} total cost {} stopped {} surprises {}",
                report.approach.name(),
                report.estimate.mean,
                report.estimate.std_of_mean,
                report.estimate.upper_99,
                report.n_l,
                report.cost.total,
                report.stopping_reached,
                report.surprise_events
            );
            Ok(())
        }
        Command::Compare { reports, out } => {
            let reports = reports
                .iter()
                .map(|p| CampaignReport::from_json(&read_text(p)?).map_err(|e| input_error(p, e)))
                .collect::<Result<Vec<_>>>()?;
            let rows = compare(&reports)?;
            if let Some(out) = out {
                create_dir(&out)?;
                let mut buf = Vec::new();
                write_comparison_csv(&rows, &mut buf)?;
                fs::write(out.join("comparison.csv"), buf)?;
            }
            print!("{}", format_comparison_table(&rows));
            Ok(())
        }
        Command::SynthData { config, out, seed } => {
            let mut cfg = load_config(config.as_deref(), None)?;
            if let Some(seed) = seed {
                cfg.density.data_seed = seed;
            }
            cfg.density.validate()?;
            let data = synthesize_dataset(cfg.density.data_seed, cfg.density.n_hours)?;
            create_dir(&out)?;
            data.save(&out.join("naturalistic.csv"))?;
            println!("{} hours written", cfg.density.n_hours);
            Ok(())
        }
        Command::DumpTrace { config, history, run, fidelity, out } => {
            let cfg = load_config(config.as_deref(), None)?;
            let (x, seed) = history_run(&history, run)?;
            let sim_seed = run_sim_seed(seed);
            let (outcome, frames) = match fidelity {
                TraceTier::Hifi => run_hifi_traced(&cfg.sim, &x, sim_seed)?,
                TraceTier::LofiPre => run_lofi_pre_traced(&cfg.sim, &x, sim_seed)?,
            };
            create_dir(&out)?;
            let mut buf = Vec::new();
            frames.write_csv(&mut buf)?;
            fs::write(out.join(format!("trace_{run}.csv")), buf)?;
            println!("run {run}: collided {} d_min_star {}", outcome.collided, outcome.d_min_star);
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>, workers: Option<usize>) -> Result<CampaignConfig> {
    let mut cfg = match path {
        Some(p) => CampaignConfig::load(p)?,
        None => CampaignConfig::default(),
    };
    if let Some(w) = workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parameters and run seed of history row `run`.
fn history_run(path: &Path, run: usize) -> Result<(ScenarioParams, u64)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let column: HashMap<&str, usize> = headers.iter().enumerate().map(|(k, h)| (h, k)).collect();
    let field = |name: &str| {
        column
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("history {} lacks column {name}", path.display())))
    };
    let param_cols = PARAM_NAMES
        .iter().map(|n| field(n)).collect::<Result<Vec<_>>>()?;
    let (i_col, seed_col) = (field("i")?, field("seed")?);
    for row in reader.records() {
        let row = row?;
        let parse = |k: usize| {
            row[k].parse::<f64>().map_err(|e| Error::Config(format!("history value {:?}: {e}", &row[k])))
        };
        if row[i_col].parse::<usize>().ok() != Some(run) {
            continue;
        }
        let values = param_cols.iter().map(|k| parse(*k)).collect::<Result<Vec<_>>>()?;
        let seed = row[seed_col].parse::<u64>().map_err(|e| Error::Config(format!("history seed: {e}")))?;
        return Ok((ScenarioParams::from_slice(&values)?, seed));
    }
    Err(Error::Config(format!("run {run} not found in {}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn input_error(path: &Path, e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(format!("{}: {other}", path.display())),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}
