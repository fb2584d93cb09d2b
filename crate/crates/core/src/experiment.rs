//! Experiment runner: a scenario matrix of buildings × noise levels ×
//! controllers/algorithms × seeds, each run isolated in its own directory,
//! followed by a summary table (rows = controllers, columns = KPIs per
//! scenario, mean and standard deviation across seeds).
//!
//! Output layout under the chosen directory:
//!
//! ```text
//! experiment.json                     copy of the resolved config
//! runs/<scenario>/<label>/seed_<s>/   run.json, kpis.json, eval_episode.csv
//!                                     (+ metrics.csv, agent.bin for RL runs)
//! runs.csv                            one row per run
//! summary.csv, summary.md             aggregated table
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::building::{shipped, Building};
use crate::controllers::{run_episode, Controller, HeatingCurve, MpcConfig, MpcController};
use crate::crl::trainer::{EVAL_LOG_FILE, METRICS_FILE};
use crate::crl::{train, TrainerConfig};
use crate::disturbance::{load_weather_csv, synth_weather, DisturbanceSeries};
use crate::env::{log_episode, Env, EnvConfig, Mode};
use crate::error::{Error, Result};
use crate::kpi::{kpis_from_transitions, KpiReport};

pub const RUN_META_FILE: &str = "run.json";
pub const KPI_FILE: &str = "kpis.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WeatherSource {
    Synth { seed: u64, days: usize },
    Csv { path: PathBuf },
}

impl Default for WeatherSource {
    fn default() -> Self {
        WeatherSource::Synth { seed: 1, days: 365 }
    }
}

impl WeatherSource {
    pub fn load(&self, base: &Path) -> Result<DisturbanceSeries> {
        match self {
            WeatherSource::Synth { seed, days } => synth_weather(*seed, *days),
            WeatherSource::Csv { path } => load_weather_csv(resolve(base, path)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerSpec {
    HeatingCurve {
        #[serde(default)]
        curve: HeatingCurve,
    },
    Mpc {
        #[serde(default)]
        mpc: MpcConfig,
    },
}

impl ControllerSpec {
    pub fn label(&self) -> String {
        match self {
            ControllerSpec::HeatingCurve { .. } => "heating_curve".into(),
            ControllerSpec::Mpc { .. } => "mpc".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlSpec {
    /// Row label in the summary; defaults to the algorithm label.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub trainer: TrainerConfig,
    pub episodes: usize,
}

impl RlSpec {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.trainer.algorithm.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Shipped building names (`building1`, `building2`) or paths to building
    /// JSON files, relative to the experiment file.
    pub buildings: Vec<String>,
    #[serde(default)]
    pub weather: WeatherSource,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default = "default_noise")]
    pub noise_levels: Vec<f64>,
    #[serde(default)]
    pub controllers: Vec<ControllerSpec>,
    #[serde(default)]
    pub rl: Vec<RlSpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_noise() -> Vec<f64> {
    vec![0.0]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn field_err(field: String, e: Error) -> Error {
    match e {
        Error::InvalidParameter { field: inner, reason } => Error::InvalidParameter {
            field: format!("{field}.{inner}"),
            reason,
        },
        other => Error::Config(format!("{field}: {other}")),
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Json {
            path: origin.to_path_buf(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_json_str(&text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::param("name", "must not be empty"));
        }
        if self.buildings.is_empty() {
            return Err(Error::param("buildings", "list at least one building"));
        }
        if self.seeds.is_empty() {
            return Err(Error::param("seeds", "list at least one seed"));
        }
        if self.noise_levels.is_empty() {
            return Err(Error::param("noise_levels", "list at least one level"));
        }
        for (i, n) in self.noise_levels.iter().enumerate() {
            if !(*n >= 0.0 && n.is_finite()) {
                return Err(Error::param(&format!("noise_levels[{i}]"), "must be non-negative"));
            }
        }
        if self.controllers.is_empty() && self.rl.is_empty() {
            return Err(Error::param("controllers/rl", "declare at least one controller or algorithm"));
        }
        if let WeatherSource::Synth { days: 0, .. } = self.weather {
            return Err(Error::param("weather.synth.days", "must be at least 1"));
        }
        self.env.validate().map_err(|e| field_err("env".into(), e))?;
        for (i, c) in self.controllers.iter().enumerate() {
            let r = match c {
                ControllerSpec::HeatingCurve { curve } => curve.validate(),
                ControllerSpec::Mpc { mpc } => mpc.validate(),
            };
            r.map_err(|e| field_err(format!("controllers[{i}]"), e))?;
        }
        for (i, r) in self.rl.iter().enumerate() {
            if r.episodes == 0 {
                return Err(Error::param(&format!("rl[{i}].episodes"), "must be at least 1"));
            }
            r.trainer.validate().map_err(|e| field_err(format!("rl[{i}].trainer"), e))?;
        }
        let mut labels: Vec<String> = self.controllers.iter().map(ControllerSpec::label).collect();
        labels.extend(self.rl.iter().map(RlSpec::label));
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::param("rl.name", format!("duplicate row label `{l}`; give each entry a distinct name")));
            }
        }
        Ok(())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Identity of one run, stored as `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scenario: String,
    pub building: String,
    pub noise_sigma: f64,
    pub label: String,
    pub seed: u64,
    /// `controller` or `rl`.
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub kpis: KpiReport,
}

#[derive(Debug, Clone)]
enum Job {
    Controller(ControllerSpec),
    Rl(RlSpec),
}

struct RunSpec {
    building: Arc<Building>,
    series: Arc<DisturbanceSeries>,
    meta: RunMeta,
    job: Job,
    dir: PathBuf,
}

pub fn scenario_label(building: &str, noise: f64) -> String {
    format!("{building}_noise{noise}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn execute(run: &RunSpec, env_cfg: &EnvConfig) -> Result<RunRecord> {
    fs::create_dir_all(&run.dir).map_err(|e| Error::io(&run.dir, e))?;
    write_json(&run.dir.join(RUN_META_FILE), &run.meta)?;
    let cfg = EnvConfig {
        noise_sigma: run.meta.noise_sigma,
        rng_seed: run.meta.seed,
        ..env_cfg.clone()
    };
    let mut env = Env::new(run.building.clone(), run.series.clone(), cfg.clone(), 0)?;
    let kpis = match &run.job {
        Job::Controller(spec) => {
            let mut ctl = match spec {
                ControllerSpec::HeatingCurve { curve } => Controller::HeatingCurve(*curve),
                ControllerSpec::Mpc { mpc } => Controller::Mpc(Box::new(MpcController::new(
                    mpc.clone(),
                    run.building.clone(),
                    cfg.dt,
                    cfg.substep,
                )?)),
            };
            let tr = run_episode(&mut env, &mut ctl, Mode::Eval)?;
            log_episode(&tr, run.dir.join(EVAL_LOG_FILE))?;
            kpis_from_transitions(&tr, cfg.t_ref, cfg.dt)?
        }
        Job::Rl(spec) => {
            let trainer = TrainerConfig {
                seed: run.meta.seed,
                ..spec.trainer.clone()
            };
            train(&trainer, &mut env, spec.episodes, Some(&run.dir))?.last_eval.report
        }
    };
    write_json(&run.dir.join(KPI_FILE), &kpis)?;
    Ok(RunRecord {
        meta: run.meta.clone(),
        kpis,
    })
}

/// Run every entry of the scenario matrix in parallel and write the summary.
/// Returns the per-run records in matrix order.
pub fn run_experiment_config(cfg: &ExperimentConfig, base: &Path, out: &Path) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("experiment.json"), cfg)?;
    let weather = cfg.weather.load(base)?;
    let mut runs = Vec::new();
    for name in &cfg.buildings {
        let building = match shipped(name) {
            Ok(b) => b,
            Err(_) => Building::load(resolve(base, Path::new(name)))?,
        };
        let series = Arc::new(building.disturbances(weather.clone())?);
        let building = Arc::new(building);
        for &noise in &cfg.noise_levels {
            let scenario = scenario_label(&building.name, noise);
            let jobs = cfg
                .controllers
                .iter()
                .map(|c| (c.label(), "controller", Job::Controller(c.clone())))
                .chain(cfg.rl.iter().map(|r| (r.label(), "rl", Job::Rl(r.clone()))));
            for (label, kind, job) in jobs {
                for &seed in &cfg.seeds {
                    runs.push(RunSpec {
                        building: building.clone(),
                        series: series.clone(),
                        dir: out.join("runs").join(&scenario).join(&label).join(format!("seed_{seed}")),
                        meta: RunMeta {
                            scenario: scenario.clone(),
                            building: building.name.clone(),
                            noise_sigma: noise,
                            label: label.clone(),
                            seed,
                            kind: kind.into(),
                        },
                        job: job.clone(),
                    });
                }
            }
        }
    }
    let records: Vec<RunRecord> = runs
        .par_iter()
        .map(|r| execute(r, &cfg.env))
        .collect::<Result<_>>()?;
    write_summary(&records, out)?;
    Ok(records)
}

/// Load, validate and run an experiment file. Relative paths inside it
/// resolve against its directory.
pub fn run_experiment(config_path: &Path, out: &Path) -> Result<Vec<RunRecord>> {
    let cfg = ExperimentConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    run_experiment_config(&cfg, base, out)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One (label, scenario) cell of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryCell {
    pub label: String,
    pub scenario: String,
    pub runs: usize,
    pub energy_kwh_mean: f64,
    pub energy_kwh_std: f64,
    pub avg_dev_k_mean: f64,
    pub avg_dev_k_std: f64,
    pub max_dev_k_mean: f64,
    pub max_dev_k_std: f64,
}

fn first_seen<'a>(it: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in it {
        if !out.contains(s) {
            out.push(s.clone());
        }
    }
    out
}

/// Aggregate across seeds, keeping the order in which labels and scenarios
/// first appear.
pub fn aggregate(records: &[RunRecord]) -> Vec<SummaryCell> {
    let labels = first_seen(records.iter().map(|r| &r.meta.label));
    let scenarios = first_seen(records.iter().map(|r| &r.meta.scenario));
    let mut cells = Vec::new();
    for label in &labels {
        for scenario in &scenarios {
            let group: Vec<&KpiReport> = records
                .iter()
                .filter(|r| &r.meta.label == label && &r.meta.scenario == scenario)
                .map(|r| &r.kpis)
                .collect();
            if group.is_empty() {
                continue;
            }
            let col = |f: fn(&KpiReport) -> f64| mean_std(&group.iter().map(|k| f(k)).collect::<Vec<_>>());
            let (em, es) = col(|k| k.energy_kwh);
            let (am, as_) = col(|k| k.avg_dev_k);
            let (mm, ms) = col(|k| k.max_dev_k);
            cells.push(SummaryCell {
                label: label.clone(),
                scenario: scenario.clone(),
                runs: group.len(),
                energy_kwh_mean: em,
                energy_kwh_std: es,
                avg_dev_k_mean: am,
                avg_dev_k_std: as_,
                max_dev_k_mean: mm,
                max_dev_k_std: ms,
            });
        }
    }
    cells
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

/// Write `runs.csv`, `summary.csv` (wide: one row per label, three KPI
/// pairs per scenario) and `summary.md`.
pub fn write_summary(records: &[RunRecord], out: &Path) -> Result<()> {
    let mut w = csv_writer(&out.join("runs.csv"))?;
    w.write_record([
        "scenario", "label", "seed", "energy_kwh", "avg_dev_k", "max_dev_k", "max_underheat_k", "violation_steps",
        "pass_comfort",
    ])?;
    for r in records {
        let k = &r.kpis;
        w.write_record([
            r.meta.scenario.clone(),
            r.meta.label.clone(),
            r.meta.seed.to_string(),
            k.energy_kwh.to_string(),
            k.avg_dev_k.to_string(),
            k.max_dev_k.to_string(),
            k.max_underheat_k.to_string(),
            k.violation_steps.to_string(),
            k.pass_comfort.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(out.join("runs.csv"), e))?;

    let cells = aggregate(records);
    let labels = first_seen(cells.iter().map(|c| &c.label));
    let scenarios = first_seen(cells.iter().map(|c| &c.scenario));
    let cell = |l: &String, s: &String| cells.iter().find(|c| &c.label == l && &c.scenario == s);

    let path = out.join("summary.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["label".to_string()];
    for s in &scenarios {
        for kpi in ["energy_kwh", "avg_dev_k", "max_dev_k"] {
            header.push(format!("{s}_{kpi}_mean"));
            header.push(format!("{s}_{kpi}_std"));
        }
    }
    w.write_record(&header)?;
    for l in &labels {
        let mut row = vec![l.clone()];
        for s in &scenarios {
            match cell(l, s) {
                Some(c) => {
                    for v in [
                        c.energy_kwh_mean,
                        c.energy_kwh_std,
                        c.avg_dev_k_mean,
                        c.avg_dev_k_std,
                        c.max_dev_k_mean,
                        c.max_dev_k_std,
                    ] {
                        row.push(v.to_string());
                    }
                }
                None => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let mut md = String::from("| controller |");
    for s in &scenarios {
        md.push_str(&format!(" {s} energy [kWh] | {s} avg dev [K] | {s} max dev [K] |"));
    }
    md.push_str("\n|---|");
    md.push_str(&"---|".repeat(3 * scenarios.len()));
    md.push('\n');
    for l in &labels {
        md.push_str(&format!("| {l} |"));
        for s in &scenarios {
            match cell(l, s) {
                Some(c) => md.push_str(&format!(
                    " {:.1} ± {:.1} | {:.3} ± {:.3} | {:.2} ± {:.2} |",
                    c.energy_kwh_mean,
                    c.energy_kwh_std,
                    c.avg_dev_k_mean,
                    c.avg_dev_k_std,
                    c.max_dev_k_mean,
                    c.max_dev_k_std
                )),
                None => md.push_str(" | | |"),
            }
        }
        md.push('\n');
    }
    let path = out.join("summary.md");
    fs::write(&path, md).map_err(|e| Error::io(&path, e))
}

fn find_runs(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    if dir.join(RUN_META_FILE).is_file() {
        found.push(dir.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for p in entries {
        find_runs(&p, found)?;
    }
    Ok(())
}

/// Collect every run below `roots` and write the summary table plus
/// plot-ready series: `curves.csv` (evaluation KPIs against training
/// episode) and `pareto.csv` (final max deviation against energy).
pub fn report(roots: &[PathBuf], out: &Path) -> Result<Vec<RunRecord>> {
    let mut dirs = Vec::new();
    for r in roots {
        if !r.is_dir() {
            return Err(Error::param("runs", format!("{} is not a directory", r.display())));
        }
        find_runs(r, &mut dirs)?;
    }
    if dirs.is_empty() {
        return Err(Error::Empty("no run directories found"));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut records = Vec::new();
    let curves_path = out.join("curves.csv");
    let mut curves = csv_writer(&curves_path)?;
    curves.write_record([
        "scenario",
        "label",
        "seed",
        "episode",
        "env_steps",
        "energy_kwh",
        "avg_dev_k",
        "max_dev_k",
        "max_underheat_k",
    ])?;
    for d in &dirs {
        let meta: RunMeta = read_json(&d.join(RUN_META_FILE))?;
        let kpis: KpiReport = read_json(&d.join(KPI_FILE))?;
        let metrics = d.join(METRICS_FILE);
        if metrics.is_file() {
            for m in crate::crl::trainer::read_metrics(&metrics)? {
                curves.write_record([
                    meta.scenario.clone(),
                    meta.label.clone(),
                    meta.seed.to_string(),
                    m.episode.to_string(),
                    m.env_steps.to_string(),
                    m.eval_energy_kwh.to_string(),
                    m.eval_avg_dev_k.to_string(),
                    m.eval_max_dev_k.to_string(),
                    m.eval_max_underheat_k.to_string(),
                ])?;
            }
        }
        records.push(RunRecord { meta, kpis });
    }
    curves.flush().map_err(|e| Error::io(&curves_path, e))?;

    let pareto_path = out.join("pareto.csv");
    let mut pareto = csv_writer(&pareto_path)?;
    pareto.write_record(["scenario", "label", "seed", "max_dev_k", "energy_kwh", "avg_dev_k"])?;
    for r in &records {
        pareto.write_record([
            r.meta.scenario.clone(),
            r.meta.label.clone(),
            r.meta.seed.to_string(),
            r.kpis.max_dev_k.to_string(),
            r.kpis.energy_kwh.to_string(),
            r.kpis.avg_dev_k.to_string(),
        ])?;
    }
    pareto.flush().map_err(|e| Error::io(&pareto_path, e))?;
    write_summary(&records, out)?;
    Ok(records)
}
