//! JSON-configured batch workflows behind the `effham` binary.
//!
//! A run config names a model (inline, by file, or by preset) and one block
//! per workflow. Each `cmd_*` function writes its artifacts into the output
//! directory and returns the paths it wrote.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::chain::{detailed_balance_report, DETAILED_BALANCE_GRID};
use crate::eigen::{Discretization, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::hamiltonian::{
    coercivity_check, convexity_report, legendre, normalization_check, path_rate, sweep, symmetry_check, velocity_of,
    SolverParams, DEFAULT_GRID, DEFAULT_VELOCITY_STEP,
};
use crate::model::{validate, Model};
use crate::presets;
use crate::simulate::{concentration_with_prediction, simulate_continuous, simulate_discrete, BatchConfig, ContinuousSimParams, DiscreteSimParams, Scale};

/// Exit code for invalid configurations or models.
pub const EXIT_INVALID: i32 = 2;
/// Exit code for numerical failures (including failed diagnostics).
pub const EXIT_NUMERICAL: i32 = 3;

/// Tolerance used by `check` for convexity and, under detailed balance, symmetry.
pub const CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    #[serde(default = "default_p_min")]
    pub p_min: f64,
    #[serde(default = "default_p_max")]
    pub p_max: f64,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(rename = "N", default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub scheme: Discretization,
}

fn default_p_min() -> f64 {
    -3.0
}
fn default_p_max() -> f64 {
    3.0
}
fn default_count() -> usize {
    61
}
fn default_grid() -> usize {
    DEFAULT_GRID
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            p_min: default_p_min(),
            p_max: default_p_max(),
            count: default_count(),
            grid: default_grid(),
            tol: default_tol(),
            scheme: Discretization::default(),
        }
    }
}

impl SweepBlock {
    pub fn solver(&self) -> SolverParams {
        SolverParams::default().with_grid(self.grid).with_tol(self.tol).with_scheme(self.scheme)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathBlock {
    /// `[t, x]` pairs.
    pub knots: Vec<[f64; 2]>,
    #[serde(default)]
    pub initial_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegendreBlock {
    pub v_min: f64,
    pub v_max: f64,
    pub count: usize,
    #[serde(default)]
    pub path: Option<PathBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    /// `epsilon` values for continuous models, lattice sizes `n` for discrete ones.
    pub scales: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Euler step as a fraction of `epsilon`.
    #[serde(default)]
    pub dt: Option<f64>,
    pub paths: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Absolute tolerance floor for the concentration verdict.
    #[serde(default)]
    pub floor: f64,
    /// Number of full trajectories (finest scale) dumped as CSV.
    #[serde(default = "default_dump")]
    pub trajectories: usize,
}

fn default_dump() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckBlock {
    #[serde(default = "default_check_p")]
    pub p_max: f64,
    #[serde(default = "default_check_count")]
    pub count: usize,
    #[serde(rename = "N", default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_check_p() -> f64 {
    2.0
}
fn default_check_count() -> usize {
    41
}

impl Default for CheckBlock {
    fn default() -> Self {
        Self { p_max: default_check_p(), count: default_check_count(), grid: default_grid(), tol: default_tol() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Inline model object or path to a model JSON file.
    #[serde(default)]
    pub model: Option<Value>,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub legendre: Option<LegendreBlock>,
    #[serde(default)]
    pub simulate: Option<SimulateBlock>,
    #[serde(default)]
    pub check: Option<CheckBlock>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Directory against which relative model paths are resolved.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn with_preset(preset: &str) -> Self {
        Self { preset: Some(preset.to_string()), ..Self::default() }
    }

    /// Resolves the model; a preset takes precedence over `model`.
    pub fn load_model(&self) -> Result<Model> {
        if let Some(name) = &self.preset {
            return presets::by_name(name);
        }
        match &self.model {
            None => Err(Error::Config("config names neither a model nor a preset".into())),
            Some(Value::String(file)) => {
                let mut path = PathBuf::from(file);
                if path.is_relative() {
                    if let Some(base) = &self.base_dir {
                        path = base.join(path);
                    }
                }
                let text = fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("cannot read model {}: {e}", path.display())))?;
                Model::from_json(&text)
            }
            Some(inline) => Model::from_json(&inline.to_string()),
        }
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn linspace(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 || !(hi > lo) {
        return Err(Error::Config(format!("need count >= 2 and a nonempty range, got [{lo}, {hi}] x {count}")));
    }
    Ok((0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect())
}

/// `hamiltonian.csv` and `certificates.json`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let model = cfg.load_model()?;
    let block = cfg.sweep.clone().unwrap_or_default();
    let table = sweep(&model, block.p_min, block.p_max, block.count, &block.solver())?;
    let dir = cfg.out_dir()?;
    let csv_path = dir.join("hamiltonian.csv");
    table.write_csv(create(&csv_path)?)?;
    let certs_path = dir.join("certificates.json");
    let certs: Vec<Value> = table
        .momenta
        .iter()
        .zip(&table.certificates)
        .map(|(p, c)| json!({ "p": p, "certificate": c }))
        .collect();
    write_json(
        &certs_path,
        &json!({ "provenance": table.provenance, "samples": certs, "failures": table.failures }),
    )?;
    if !table.is_complete() {
        return Err(Error::CoarseGrid(format!("{} samples failed; gaps marked in hamiltonian.csv", table.failures.len())));
    }
    Ok(vec![csv_path, certs_path])
}

/// `velocity.json`.
pub fn cmd_velocity(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let model = cfg.load_model()?;
    let block = cfg.sweep.clone().unwrap_or_default();
    let (est, table) = velocity_of(&model, &block.solver(), DEFAULT_VELOCITY_STEP)?;
    let path = cfg.out_dir()?.join("velocity.json");
    write_json(
        &path,
        &json!({ "velocity": est.velocity, "error": est.error, "step": est.step, "provenance": table.provenance }),
    )?;
    Ok(vec![path])
}

/// `lagrangian.csv`, plus `path_rate.json` when a path is given.
pub fn cmd_legendre(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let model = cfg.load_model()?;
    let lb = cfg.legendre.clone().ok_or_else(|| Error::Config("missing 'legendre' block".into()))?;
    let block = cfg.sweep.clone().unwrap_or_default();
    let table = sweep(&model, block.p_min, block.p_max, block.count, &block.solver())?;
    let lag = legendre(&table, &linspace(lb.v_min, lb.v_max, lb.count)?)?;
    let dir = cfg.out_dir()?;
    let csv_path = dir.join("lagrangian.csv");
    lag.write_csv(create(&csv_path)?)?;
    let mut written = vec![csv_path];
    if let Some(path) = lb.path {
        let knots: Vec<(f64, f64)> = path.knots.iter().map(|k| (k[0], k[1])).collect();
        let rate = path_rate(&knots, &lag, path.initial_rate)?;
        let out = dir.join("path_rate.json");
        write_json(&out, &json!({ "knots": path.knots, "initial_rate": path.initial_rate, "rate": rate }))?;
        written.push(out);
    }
    Ok(written)
}

/// `summary.csv` plus `trajectory_<k>.csv` for the first trajectories at the
/// finest scale. `seed` overrides the config seed.
pub fn cmd_simulate(cfg: &RunConfig, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let model = cfg.load_model()?;
    let sb = cfg.simulate.clone().ok_or_else(|| Error::Config("missing 'simulate' block".into()))?;
    let seed = seed.or(sb.seed).ok_or_else(|| Error::Config("simulate needs a seed (config or --seed)".into()))?;
    if sb.scales.is_empty() {
        return Err(Error::Config("simulate.scales is empty".into()));
    }
    let scales: Vec<Scale> = match &model {
        Model::Continuous(_) => sb.scales.iter().map(|&e| Scale::Epsilon(e)).collect(),
        Model::Discrete(_) => sb
            .scales
            .iter()
            .map(|&n| {
                if n >= 1.0 && n.fract() == 0.0 {
                    Ok(Scale::Lattice(n as u32))
                } else {
                    Err(Error::Config(format!("discrete scales are lattice sizes n, got {n}")))
                }
            })
            .collect::<Result<_>>()?,
    };
    let mut batch = BatchConfig::new(sb.horizon, sb.paths, seed);
    if let Some(dt) = sb.dt {
        batch.dt_fraction = dt;
    }
    let solver = cfg.sweep.clone().unwrap_or_default().solver();
    let report = concentration_with_prediction(&model, &scales, &batch, &solver, sb.floor)?;
    let dir = cfg.out_dir()?;
    let summary = dir.join("summary.csv");
    report.write_csv(create(&summary)?)?;
    let mut written = vec![summary];
    let finest = *scales.last().unwrap();
    for k in 0..sb.trajectories.min(sb.paths) {
        let traj = match (&model, finest) {
            (Model::Continuous(m), Scale::Epsilon(eps)) => {
                let mut p = ContinuousSimParams::new(eps, sb.horizon, m.dim).with_dt(eps * batch.dt_fraction);
                p.record_stride = 1;
                simulate_continuous(m, &p, seed, k as u64)?
            }
            (Model::Discrete(m), Scale::Lattice(n)) => {
                let mut p = DiscreteSimParams::new(n, sb.horizon);
                p.record_events = true;
                simulate_discrete(m, &p, seed, k as u64)?
            }
            _ => unreachable!("scales follow the model kind"),
        };
        let path = dir.join(format!("trajectory_{k}.csv"));
        traj.write_csv(create(&path)?)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryVerdict {
    /// Symmetry is only required under detailed balance.
    pub expected: bool,
    pub pass: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetailedBalanceVerdict {
    pub applicable: bool,
    pub holds: Option<bool>,
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub h0: Verdict,
    pub convexity: Verdict,
    pub symmetry: SymmetryVerdict,
    pub coercivity: Verdict,
    pub detailed_balance: DetailedBalanceVerdict,
}

impl CheckReport {
    pub fn all_pass(&self) -> bool {
        self.h0.pass && self.convexity.pass && self.symmetry.pass && self.coercivity.pass
    }
}

/// Runs the structural diagnostics on a symmetric sweep `[-p_max, p_max]`.
pub fn run_checks(model: &Model, block: &CheckBlock) -> Result<CheckReport> {
    let params = SolverParams::default().with_grid(block.grid).with_tol(block.tol);
    let table = sweep(model, -block.p_max, block.p_max, block.count, &params)?;
    let h0 = normalization_check(&table)?;
    let conv = convexity_report(&table);
    let sym = symmetry_check(&table);
    let coer = coercivity_check(&table, model)?;
    let detailed_balance = match model {
        Model::Continuous(m) => {
            let db = detailed_balance_report(m, DETAILED_BALANCE_GRID);
            DetailedBalanceVerdict { applicable: true, holds: Some(db.holds), residual: Some(db.max_violation) }
        }
        Model::Discrete(_) => DetailedBalanceVerdict { applicable: false, holds: None, residual: None },
    };
    let expected = detailed_balance.holds == Some(true);
    Ok(CheckReport {
        h0: Verdict { pass: h0.holds, residual: h0.value.abs() },
        convexity: Verdict { pass: conv.max_violation <= CHECK_TOL, residual: conv.max_violation.max(0.0) },
        symmetry: SymmetryVerdict { expected, pass: !expected || sym.max_residual <= CHECK_TOL, residual: sym.max_residual },
        coercivity: Verdict { pass: coer.holds, residual: (-coer.min_margin).max(0.0) },
        detailed_balance,
    })
}

/// `check.json`; fails with a numerical error when a diagnostic fails (the
/// report is written first).
pub fn cmd_check(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let model = cfg.load_model()?;
    let report = run_checks(&model, &cfg.check.clone().unwrap_or_default())?;
    let path = cfg.out_dir()?.join("check.json");
    write_json(&path, &report)?;
    if !report.all_pass() {
        return Err(Error::Diagnostics(format!("see {}", path.display())));
    }
    Ok(vec![path])
}

/// `validation.json`; invalid models fail with [`Error::InvalidModel`].
pub fn cmd_validate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let model = cfg.load_model()?;
    let report = validate(&model);
    let path = cfg.out_dir()?.join("validation.json");
    write_json(
        &path,
        &json!({ "valid": report.is_valid(), "issues": report.issues, "states": model.states(), "dim": model.dim() }),
    )?;
    report.into_result()?;
    Ok(vec![path])
}

/// Maps a workflow result to the process exit code.
pub fn exit_code<T>(result: &Result<T>) -> i32 {
    match result {
        Ok(_) => 0,
        Err(e) if e.is_input_error() => EXIT_INVALID,
        Err(_) => EXIT_NUMERICAL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys() {
        let r: std::result::Result<RunConfig, _> = serde_json::from_str(r#"{"preset":"quadratic","bogus":1}"#);
        assert!(r.is_err());
    }

    #[test]
    fn missing_model_is_input_error() {
        let r = RunConfig::default().load_model();
        assert_eq!(exit_code(&r), EXIT_INVALID);
    }

    #[test]
    fn inline_model() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"model":{"kind":"discrete","J":1,"regime":"I","ell":2,"hop_plus":[[1,1]],"hop_minus":[[2,2]],"switching":[[[0,0]]]}}"#,
        )
        .unwrap();
        let m = cfg.load_model().unwrap();
        assert_eq!(m.states(), 1);
    }
}
