//! Command-line interface. Exit codes: 0 success, 1 invalid input or
//! configuration, 2 runtime failure (simulation divergence, I/O).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use crate::building::{shipped, Building};
use crate::controllers::{run_episode, Controller, HeatingCurve, MpcConfig, MpcController};
use crate::crl::checkpoint::load_checkpoint;
use crate::disturbance::{load_weather_csv, synth_weather, DisturbanceSeries, SLOTS_PER_DAY};
use crate::env::{log_episode, Env, EnvConfig, Mode};
use crate::error::{Error, Result};
use crate::experiment::{report, run_experiment_config, ExperimentConfig};
use crate::kpi::kpis_from_transitions;

#[derive(Debug, Parser)]
#[command(name = "hpctl", version, about = "Heat-pump building control workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerKind {
    HeatingCurve,
    Mpc,
}

#[derive(Debug, clap::Args)]
pub struct ScenarioArgs {
    /// Building JSON file, or a shipped building name (building1, building2).
    #[arg(long)]
    pub config: String,
    /// Weather CSV (timestamp,t_amb_c,solar_wm2). Synthetic weather if absent.
    #[arg(long)]
    pub weather: Option<PathBuf>,
    /// Seed for synthetic weather and observation noise.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Observation noise standard deviation, K.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Episode length in days.
    #[arg(long, default_value_t = 365)]
    pub days: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a reference controller for one evaluation episode.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value_t = ControllerKind::HeatingCurve)]
        controller: ControllerKind,
    },
    /// Run an experiment file (scenario matrix incl. RL training).
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: runs/<experiment name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the experiment's seed list by this single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replace the experiment's noise levels by this single level.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Evaluate a trained checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Summarize run directories into tables and plot-ready CSVs.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Missing inputs are usage errors, not runtime failures.
fn require_file(field: &str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::param(field, format!("{} does not exist", path.display())))
    }
}

fn load_building(spec: &str) -> Result<Building> {
    let path = Path::new(spec);
    if path.exists() {
        Building::load(path)
    } else {
        shipped(spec).map_err(|_| Error::param("config", format!("no building file or shipped building named `{spec}`")))
    }
}

fn scenario_env(s: &ScenarioArgs) -> Result<Env> {
    if s.days == 0 {
        return Err(Error::param("days", "must be at least 1"));
    }
    let building = load_building(&s.config)?;
    let weather: DisturbanceSeries = match &s.weather {
        Some(p) => {
            require_file("weather", p)?;
            load_weather_csv(p)?
        }
        None => synth_weather(s.seed, s.days.max(1))?,
    };
    let series = building.disturbances(weather)?;
    let cfg = EnvConfig {
        noise_sigma: s.noise,
        rng_seed: s.seed,
        eval_len: s.days * SLOTS_PER_DAY,
        ..Default::default()
    };
    Env::new(Arc::new(building), Arc::new(series), cfg, 0)
}

fn finish_episode(env: &Env, tr: &[crate::env::Transition], out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    log_episode(tr, out.join("episode.csv"))?;
    let kpis = kpis_from_transitions(tr, env.config().t_ref, env.config().dt)?;
    let text = serde_json::to_string_pretty(&kpis).expect("plain struct");
    let path = out.join("kpis.json");
    fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    println!("{text}");
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { scenario, controller } => {
            let mut env = scenario_env(&scenario)?;
            let mut ctl = match controller {
                ControllerKind::HeatingCurve => Controller::HeatingCurve(HeatingCurve::default()),
                ControllerKind::Mpc => {
                    let cfg = env.config().clone();
                    Controller::Mpc(Box::new(MpcController::new(
                        MpcConfig::default(),
                        Arc::new(env.building().clone()),
                        cfg.dt,
                        cfg.substep,
                    )?))
                }
            };
            let tr = run_episode(&mut env, &mut ctl, Mode::Eval)?;
            finish_episode(&env, &tr, &scenario.out)
        }
        Command::Train { config, out, seed, noise } => {
            require_file("config", &config)?;
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(n) = noise {
                cfg.noise_levels = vec![n];
            }
            let out = out.unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
            let base = config.parent().unwrap_or(Path::new("."));
            let records = run_experiment_config(&cfg, base, &out)?;
            println!("{} runs written to {}", records.len(), out.display());
            Ok(())
        }
        Command::Evaluate { checkpoint, scenario } => {
            require_file("checkpoint", &checkpoint)?;
            let (agent, _) = load_checkpoint(&checkpoint)?;
            let mut env = scenario_env(&scenario)?;
            let mut ctl = Controller::Policy(agent.actor);
            let tr = run_episode(&mut env, &mut ctl, Mode::Eval)?;
            finish_episode(&env, &tr, &scenario.out)
        }
        Command::Report { runs, out } => {
            let records = report(&runs, &out)?;
            println!("{} runs summarized in {}", records.len(), out.display());
            Ok(())
        }
    }
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_runtime() {
                2
            } else {
                1
            }
        }
    }
}
