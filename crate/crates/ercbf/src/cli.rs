//! Command-line front end: JSON experiment configs (schema-validated, unknown
//! keys rejected, `_note_*` keys reserved for inline commentary), single runs,
//! three-controller comparisons, Monte Carlo sweeps, and CSV/JSON emission.
//!
//! Exit codes: 0 success, 2 config error, 3 infeasibility-aborted run,
//! 4 diverged run, 1 other failures.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acc::{kmh_to_mps, AccErrorBounds, HdvParams, MeasurementPolicy, VehicleParams};
use crate::sim::{
    monte_carlo, run_closed_loop, ClfMode, ControllerKind, MonteCarloSummary, RunMetrics,
    RunOutcome, SimConfig, SimError, StepRecord, StepStatus, Trajectory,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("simulation error: {0}")]
    Sim(#[from] SimError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_FAILURE,
            CliError::Sim(_) => EXIT_FAILURE,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub vehicle: VehicleSection,
    pub hdv: HdvSection,
    pub error_bounds: BoundsSection,
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSection {
    pub mass_kg: f64,
    pub c0_n: f64,
    pub c1_ns_per_m: f64,
    pub c2_ns2_per_m2: f64,
    pub c_d: f64,
    pub gravity_mps2: f64,
    pub look_ahead_s: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HdvSection {
    pub lambda_per_s: f64,
    #[serde(default)]
    pub v_desired_kmh: Option<f64>,
    #[serde(default)]
    pub v_desired_mps: Option<f64>,
    pub tau_s: f64,
    pub sigma_mps2: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub e_p_m: f64,
    pub e_v_mps: f64,
    pub e_vdot_mps2: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub initial_gap_m: f64,
    #[serde(default)]
    pub initial_ego_speed_kmh: Option<f64>,
    #[serde(default)]
    pub initial_ego_speed_mps: Option<f64>,
    #[serde(default)]
    pub initial_lead_speed_kmh: Option<f64>,
    #[serde(default)]
    pub initial_lead_speed_mps: Option<f64>,
    #[serde(default)]
    pub v_desired_kmh: Option<f64>,
    #[serde(default)]
    pub v_desired_mps: Option<f64>,
    #[serde(default)]
    pub v_max_kmh: Option<f64>,
    #[serde(default)]
    pub v_max_mps: Option<f64>,
    #[serde(default)]
    pub v_min_kmh: Option<f64>,
    #[serde(default)]
    pub v_min_mps: Option<f64>,
    pub nu: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_dt_control")]
    pub dt_control_s: f64,
    #[serde(default = "default_dt_integrator")]
    pub dt_integrator_s: f64,
    #[serde(default = "default_horizon")]
    pub horizon_s: f64,
    #[serde(default = "default_controller")]
    pub controller: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_policy")]
    pub measurement_policy: String,
    #[serde(default = "default_true")]
    pub resample_measurement: bool,
    #[serde(default = "default_clf_mode")]
    pub clf_mode: String,
    #[serde(default = "default_clf_weight")]
    pub clf_soft_weight: f64,
    #[serde(default)]
    pub abort_on_infeasible: bool,
}

fn default_dt_control() -> f64 {
    0.01
}
fn default_dt_integrator() -> f64 {
    0.001
}
fn default_horizon() -> f64 {
    20.0
}
fn default_controller() -> String {
    "qp".to_string()
}
fn default_seed() -> u64 {
    42
}
fn default_policy() -> String {
    "uniform".to_string()
}
fn default_true() -> bool {
    true
}
fn default_clf_mode() -> String {
    "two_stage".to_string()
}
fn default_clf_weight() -> f64 {
    1e4
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt_control_s: default_dt_control(),
            dt_integrator_s: default_dt_integrator(),
            horizon_s: default_horizon(),
            controller: default_controller(),
            seed: default_seed(),
            measurement_policy: default_policy(),
            resample_measurement: true,
            clf_mode: default_clf_mode(),
            clf_soft_weight: default_clf_weight(),
            abort_on_infeasible: false,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<String>,
}

/// Strips `_note_*` commentary keys, then deserializes strictly: any other
/// unknown key is rejected with its path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let mut value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
    strip_notes(&mut value);
    let deserializer = value.clone();
    serde_path_to_error::deserialize(deserializer)
        .map_err(|e| CliError::Config(format!("at `{}`: {}", e.path(), e.inner())))
}

fn strip_notes(value: &mut serde_json::Value) {
    if let serde_json::Value::Object(map) = value {
        map.retain(|k, _| !k.starts_with("_note"));
        for v in map.values_mut() {
            strip_notes(v);
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text)
}

fn speed(
    kmh: Option<f64>,
    mps: Option<f64>,
    key: &str,
) -> Result<f64, CliError> {
    match (kmh, mps) {
        (Some(k), None) => Ok(kmh_to_mps(k)),
        (None, Some(m)) => Ok(m),
        (Some(_), Some(_)) => Err(CliError::Config(format!(
            "`{key}`: give either the _kmh or the _mps key, not both"
        ))),
        (None, None) => Err(CliError::Config(format!(
            "`{key}`: missing; provide {key}_kmh or {key}_mps"
        ))),
    }
}

fn parse_controller(name: &str) -> Result<ControllerKind, CliError> {
    match name {
        "nominal" => Ok(ControllerKind::Nominal),
        "socp" => Ok(ControllerKind::Socp),
        "qp" => Ok(ControllerKind::Qp),
        other => Err(CliError::Config(format!(
            "`sim.controller`: unknown controller `{other}` (expected nominal|socp|qp)"
        ))),
    }
}

fn parse_policy(name: &str) -> Result<MeasurementPolicy, CliError> {
    match name {
        "zero" => Ok(MeasurementPolicy::Zero),
        "uniform" => Ok(MeasurementPolicy::UniformInBox),
        "worst_case_corner" => Ok(MeasurementPolicy::WorstCaseCorner),
        other => Err(CliError::Config(format!(
            "`sim.measurement_policy`: unknown policy `{other}` (expected zero|uniform|worst_case_corner)"
        ))),
    }
}

impl ExperimentConfig {
    pub fn to_sim_config(&self) -> Result<SimConfig, CliError> {
        let v = &self.vehicle;
        let vehicle = VehicleParams::new(
            v.mass_kg,
            v.c0_n,
            v.c1_ns_per_m,
            v.c2_ns2_per_m2,
            v.c_d,
            v.gravity_mps2,
            v.look_ahead_s,
        )
        .map_err(|e| CliError::Config(format!("`vehicle`: {e}")))?;
        let hdv = HdvParams {
            lambda: self.hdv.lambda_per_s,
            v_desired: speed(self.hdv.v_desired_kmh, self.hdv.v_desired_mps, "hdv.v_desired")?,
            tau: self.hdv.tau_s,
            sigma: self.hdv.sigma_mps2,
        };
        let bounds = AccErrorBounds::new(
            self.error_bounds.e_p_m,
            self.error_bounds.e_v_mps,
            self.error_bounds.e_vdot_mps2,
        )
        .map_err(|e| CliError::Config(format!("`error_bounds`: {e}")))?;
        let s = &self.scenario;
        let clf_mode = match self.sim.clf_mode.as_str() {
            "two_stage" => ClfMode::TwoStage,
            "soft" => ClfMode::SoftConstraint {
                weight: self.sim.clf_soft_weight,
            },
            other => {
                return Err(CliError::Config(format!(
                    "`sim.clf_mode`: unknown mode `{other}` (expected two_stage|soft)"
                )))
            }
        };
        let config = SimConfig {
            dt_control: self.sim.dt_control_s,
            dt_integrator: self.sim.dt_integrator_s,
            horizon: self.sim.horizon_s,
            controller: parse_controller(&self.sim.controller)?,
            seeds: vec![self.sim.seed],
            measurement_policy: parse_policy(&self.sim.measurement_policy)?,
            resample_measurement: self.sim.resample_measurement,
            clf_mode,
            abort_on_infeasible: self.sim.abort_on_infeasible,
            vehicle,
            hdv,
            bounds,
            initial_gap: s.initial_gap_m,
            initial_ego_speed: speed(
                s.initial_ego_speed_kmh,
                s.initial_ego_speed_mps,
                "scenario.initial_ego_speed",
            )?,
            initial_lead_speed: speed(
                s.initial_lead_speed_kmh,
                s.initial_lead_speed_mps,
                "scenario.initial_lead_speed",
            )?,
            v_desired: speed(s.v_desired_kmh, s.v_desired_mps, "scenario.v_desired")?,
            nu: s.nu,
            gamma: s.gamma,
            v_max: speed(s.v_max_kmh, s.v_max_mps, "scenario.v_max")?,
            v_min: speed(s.v_min_kmh, s.v_min_mps, "scenario.v_min")?,
        };
        config
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }
}

// ---------------------------------------------------------------------------
// Trajectory CSV
// ---------------------------------------------------------------------------

pub const TRAJECTORY_COLUMNS: &[&str] = &[
    "t",
    "p",
    "v",
    "p_s",
    "v_s",
    "v_s_dot",
    "p_s_meas",
    "v_s_meas",
    "v_s_dot_meas",
    "u_applied",
    "h_nominal",
    "h_true",
    "h_band_lo",
    "h_band_hi",
    "v_lyap",
    "phi_nom",
    "phi_rob",
    "phi_rob_hat",
    "u_delta",
    "u_delta_bar",
    "status",
];

/// 17 significant decimal digits: lossless f64 round-trip.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(traj.records.len() * 420);
    out.push_str(&TRAJECTORY_COLUMNS.join(","));
    out.push('\n');
    for r in &traj.records {
        let status = match r.status {
            StepStatus::Optimal => "optimal",
            StepStatus::InfeasibleHeld => "infeasible_held",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt(r.t),
            fmt(r.p),
            fmt(r.v),
            fmt(r.p_s),
            fmt(r.v_s),
            fmt(r.v_s_dot),
            fmt(r.p_s_meas),
            fmt(r.v_s_meas),
            fmt(r.v_s_dot_meas),
            fmt(r.u_applied),
            fmt(r.h_nominal),
            fmt(r.h_true),
            fmt(r.h_band_lo),
            fmt(r.h_band_hi),
            fmt(r.v_lyap),
            fmt(r.phi_nom),
            fmt(r.phi_rob),
            fmt(r.phi_rob_hat),
            fmt(r.u_delta),
            fmt(r.u_delta_bar),
            status,
        );
    }
    out
}

/// Parses a trajectory CSV emitted by [`trajectory_to_csv`]; values
/// round-trip exactly.
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<StepRecord>, CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config("empty trajectory CSV".into()))?;
    if header != TRAJECTORY_COLUMNS.join(",") {
        return Err(CliError::Config("unexpected trajectory CSV header".into()));
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != TRAJECTORY_COLUMNS.len() {
            return Err(CliError::Config(format!(
                "line {}: expected {} fields, got {}",
                lineno + 2,
                TRAJECTORY_COLUMNS.len(),
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64, CliError> {
            fields[i].parse::<f64>().map_err(|e| {
                CliError::Config(format!("line {}: field {}: {e}", lineno + 2, i))
            })
        };
        let status = match fields[20] {
            "optimal" => StepStatus::Optimal,
            "infeasible_held" => StepStatus::InfeasibleHeld,
            other => {
                return Err(CliError::Config(format!(
                    "line {}: unknown status `{other}`",
                    lineno + 2
                )))
            }
        };
        records.push(StepRecord {
            t: num(0)?,
            p: num(1)?,
            v: num(2)?,
            p_s: num(3)?,
            v_s: num(4)?,
            v_s_dot: num(5)?,
            p_s_meas: num(6)?,
            v_s_meas: num(7)?,
            v_s_dot_meas: num(8)?,
            u_applied: num(9)?,
            h_nominal: num(10)?,
            h_true: num(11)?,
            h_band_lo: num(12)?,
            h_band_hi: num(13)?,
            v_lyap: num(14)?,
            phi_nom: num(15)?,
            phi_rob: num(16)?,
            phi_rob_hat: num(17)?,
            u_delta: num(18)?,
            u_delta_bar: num(19)?,
            status,
        });
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct RunMetricsJson {
    pub controller: &'static str,
    pub seed: u64,
    pub outcome: RunOutcome,
    pub min_h_true: f64,
    pub min_h_band_lo: f64,
    pub min_gap_m: f64,
    pub infeasible_steps: usize,
    pub mean_abs_u: f64,
    pub wall_time_s: f64,
}

impl RunMetricsJson {
    fn new(controller: ControllerKind, traj: &Trajectory, wall_time_s: f64) -> Self {
        Self {
            controller: controller.name(),
            seed: traj.seed,
            outcome: traj.outcome,
            min_h_true: traj.min_h_true(),
            min_h_band_lo: traj.min_h_band_lo(),
            min_gap_m: traj.min_gap(),
            infeasible_steps: traj.infeasible_steps,
            mean_abs_u: traj.mean_abs_u(),
            wall_time_s,
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(path))?;
        }
    }
    fs::write(path, text).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("serialization failed: {e}")))?;
    write_text(path, &(text + "\n"))
}

fn outcome_exit(outcome: RunOutcome) -> i32 {
    match outcome {
        RunOutcome::Completed => EXIT_OK,
        RunOutcome::AbortedInfeasible => EXIT_INFEASIBLE,
        RunOutcome::Diverged => EXIT_DIVERGED,
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub controller: Option<ControllerKind>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub runs: Option<usize>,
}

fn resolve_out_dir(config: &ExperimentConfig, overrides: &Overrides) -> PathBuf {
    overrides
        .out_dir
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// `ercbf run`: one closed-loop run; writes `trajectory.csv` and
/// `metrics.json` into the output directory. Returns the process exit code.
pub fn cmd_run(config_path: &Path, overrides: &Overrides) -> Result<i32, CliError> {
    let config = load_config(config_path)?;
    let mut sim_config = config.to_sim_config()?;
    if let Some(kind) = overrides.controller {
        sim_config.controller = kind;
    }
    if let Some(seed) = overrides.seed {
        sim_config.seeds = vec![seed];
    }
    let out_dir = resolve_out_dir(&config, overrides);

    let started = Instant::now();
    let traj = run_closed_loop(&sim_config)?;
    let wall = started.elapsed().as_secs_f64();

    write_text(&out_dir.join("trajectory.csv"), &trajectory_to_csv(&traj))?;
    let metrics = RunMetricsJson::new(sim_config.controller, &traj, wall);
    write_json(&out_dir.join("metrics.json"), &metrics)?;
    println!(
        "{}: seed {} min_h_true {:.4} min_h_band_lo {:.4} min_gap {:.3} m infeasible {} -> {}",
        sim_config.controller.name(),
        traj.seed,
        metrics.min_h_true,
        metrics.min_h_band_lo,
        metrics.min_gap_m,
        metrics.infeasible_steps,
        out_dir.display(),
    );
    Ok(outcome_exit(traj.outcome))
}

#[derive(Debug, Clone, Serialize)]
struct ComparisonSeries {
    t: Vec<f64>,
    u_nominal: Vec<f64>,
    u_socp: Vec<f64>,
    u_qp: Vec<f64>,
    gap_nominal: Vec<f64>,
    gap_socp: Vec<f64>,
    gap_qp: Vec<f64>,
    h_true_nominal: Vec<f64>,
    h_true_socp: Vec<f64>,
    h_true_qp: Vec<f64>,
    delta_u_qp_minus_socp: Vec<f64>,
    delta_gap_qp_minus_socp: Vec<f64>,
    delta_h_qp_minus_socp: Vec<f64>,
    /// Robust-QP decomposition u_rob = u_nom* + u_δ̂ at each tick.
    qp_u_nom_star: Vec<f64>,
    qp_u_delta_hat: Vec<f64>,
    qp_u_rob: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct ComparisonJson {
    seed: u64,
    max_abs_u_qp_minus_socp: f64,
    max_abs_gap_qp_minus_socp: f64,
    max_abs_h_qp_minus_socp: f64,
    min_gap: std::collections::BTreeMap<&'static str, f64>,
    min_h_true: std::collections::BTreeMap<&'static str, f64>,
    min_h_band_lo: std::collections::BTreeMap<&'static str, f64>,
    infeasible_steps: std::collections::BTreeMap<&'static str, usize>,
    series: ComparisonSeries,
}

/// `ercbf compare`: runs all three controllers on identical seeds and noise
/// streams; writes per-controller trajectories plus `comparison.json` with
/// per-time deltas and the closed-form decomposition of the robust QP input.
pub fn cmd_compare(config_path: &Path, overrides: &Overrides) -> Result<i32, CliError> {
    let config = load_config(config_path)?;
    let base = config.to_sim_config()?;
    let out_dir = resolve_out_dir(&config, overrides);

    let mut trajectories = Vec::new();
    for kind in [
        ControllerKind::Nominal,
        ControllerKind::Socp,
        ControllerKind::Qp,
    ] {
        let mut c = base.clone();
        c.controller = kind;
        if let Some(seed) = overrides.seed {
            c.seeds = vec![seed];
        }
        let traj = run_closed_loop(&c)?;
        write_text(
            &out_dir.join(format!("trajectory_{}.csv", kind.name())),
            &trajectory_to_csv(&traj),
        )?;
        trajectories.push((kind, traj));
    }

    let n = trajectories
        .iter()
        .map(|(_, t)| t.records.len())
        .min()
        .unwrap_or(0);
    let rec = |i: usize, k: usize| &trajectories[k].1.records[i];
    let series = ComparisonSeries {
        t: (0..n).map(|i| rec(i, 0).t).collect(),
        u_nominal: (0..n).map(|i| rec(i, 0).u_applied).collect(),
        u_socp: (0..n).map(|i| rec(i, 1).u_applied).collect(),
        u_qp: (0..n).map(|i| rec(i, 2).u_applied).collect(),
        gap_nominal: (0..n).map(|i| rec(i, 0).p_s - rec(i, 0).p).collect(),
        gap_socp: (0..n).map(|i| rec(i, 1).p_s - rec(i, 1).p).collect(),
        gap_qp: (0..n).map(|i| rec(i, 2).p_s - rec(i, 2).p).collect(),
        h_true_nominal: (0..n).map(|i| rec(i, 0).h_true).collect(),
        h_true_socp: (0..n).map(|i| rec(i, 1).h_true).collect(),
        h_true_qp: (0..n).map(|i| rec(i, 2).h_true).collect(),
        delta_u_qp_minus_socp: (0..n)
            .map(|i| rec(i, 2).u_applied - rec(i, 1).u_applied)
            .collect(),
        delta_gap_qp_minus_socp: (0..n)
            .map(|i| (rec(i, 2).p_s - rec(i, 2).p) - (rec(i, 1).p_s - rec(i, 1).p))
            .collect(),
        delta_h_qp_minus_socp: (0..n)
            .map(|i| rec(i, 2).h_true - rec(i, 1).h_true)
            .collect(),
        qp_u_nom_star: (0..n)
            .map(|i| {
                let r = rec(i, 2);
                if r.u_delta.is_nan() {
                    r.u_applied
                } else {
                    r.u_applied - r.u_delta
                }
            })
            .collect(),
        qp_u_delta_hat: (0..n).map(|i| rec(i, 2).u_delta).collect(),
        qp_u_rob: (0..n).map(|i| rec(i, 2).u_applied).collect(),
    };
    let max_abs = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max)
    };
    let mut min_gap = std::collections::BTreeMap::new();
    let mut min_h_true = std::collections::BTreeMap::new();
    let mut min_h_band_lo = std::collections::BTreeMap::new();
    let mut infeasible = std::collections::BTreeMap::new();
    for (kind, traj) in &trajectories {
        min_gap.insert(kind.name(), traj.min_gap());
        min_h_true.insert(kind.name(), traj.min_h_true());
        min_h_band_lo.insert(kind.name(), traj.min_h_band_lo());
        infeasible.insert(kind.name(), traj.infeasible_steps);
    }
    let comparison = ComparisonJson {
        seed: trajectories[0].1.seed,
        max_abs_u_qp_minus_socp: max_abs(&series.u_qp, &series.u_socp),
        max_abs_gap_qp_minus_socp: max_abs(&series.gap_qp, &series.gap_socp),
        max_abs_h_qp_minus_socp: max_abs(&series.h_true_qp, &series.h_true_socp),
        min_gap,
        min_h_true,
        min_h_band_lo,
        infeasible_steps: infeasible,
        series,
    };
    write_json(&out_dir.join("comparison.json"), &comparison)?;
    println!(
        "compare: seed {} max|gap_qp-gap_socp| {:.4} m, min_gap qp {:.3} socp {:.3} nominal {:.3} -> {}",
        comparison.seed,
        comparison.max_abs_gap_qp_minus_socp,
        comparison.min_gap["qp"],
        comparison.min_gap["socp"],
        comparison.min_gap["nominal"],
        out_dir.display(),
    );
    let worst = trajectories
        .iter()
        .map(|(_, t)| outcome_exit(t.outcome))
        .max()
        .unwrap_or(EXIT_OK);
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
struct MonteCarloJson {
    controller: &'static str,
    n_runs: usize,
    violation_rate: f64,
    total_infeasible_steps: usize,
    worst_min_h_true: f64,
    worst_min_gap: f64,
    wall_time_s: f64,
    runs: Vec<RunMetrics>,
}

/// `ercbf montecarlo`: N independent seeded runs; writes a per-run metrics
/// table (CSV) and an aggregate summary (JSON).
pub fn cmd_montecarlo(
    config_path: &Path,
    overrides: &Overrides,
) -> Result<i32, CliError> {
    let config = load_config(config_path)?;
    let mut sim_config = config.to_sim_config()?;
    if let Some(kind) = overrides.controller {
        sim_config.controller = kind;
    }
    if let Some(seed) = overrides.seed {
        sim_config.seeds = vec![seed];
    }
    let n_runs = overrides.runs.unwrap_or(100);
    if n_runs == 0 {
        return Err(CliError::Usage("--runs must be >= 1".into()));
    }
    let out_dir = resolve_out_dir(&config, overrides);

    let started = Instant::now();
    let summary: MonteCarloSummary = monte_carlo(&sim_config, n_runs)?;
    let wall = started.elapsed().as_secs_f64();

    let mut table = String::from(
        "seed,outcome,min_h_true,min_h_band_lo,min_gap_m,infeasible_steps,violation_steps,mean_abs_u\n",
    );
    for r in &summary.runs {
        let outcome = match r.outcome {
            RunOutcome::Completed => "completed",
            RunOutcome::AbortedInfeasible => "aborted_infeasible",
            RunOutcome::Diverged => "diverged",
        };
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{},{}",
            r.seed,
            outcome,
            fmt(r.min_h_true),
            fmt(r.min_h_band_lo),
            fmt(r.min_gap),
            r.infeasible_steps,
            r.violation_steps,
            fmt(r.mean_abs_u),
        );
    }
    write_text(&out_dir.join("montecarlo_runs.csv"), &table)?;
    let json = MonteCarloJson {
        controller: sim_config.controller.name(),
        n_runs,
        violation_rate: summary.violation_rate,
        total_infeasible_steps: summary.total_infeasible_steps,
        worst_min_h_true: summary.worst_min_h_true,
        worst_min_gap: summary.worst_min_gap,
        wall_time_s: wall,
        runs: summary.runs.clone(),
    };
    write_json(&out_dir.join("montecarlo_summary.json"), &json)?;
    println!(
        "montecarlo: {} runs, violation_rate {:.4}, worst_min_h_true {:.4}, infeasible {} -> {}",
        n_runs,
        summary.violation_rate,
        summary.worst_min_h_true,
        summary.total_infeasible_steps,
        out_dir.display(),
    );
    let worst = summary
        .runs
        .iter()
        .map(|r| outcome_exit(r.outcome))
        .max()
        .unwrap_or(EXIT_OK);
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

const USAGE: &str = "\
ercbf — robust control barrier function safety filters (cruise-control testbed)

USAGE:
  ercbf run <config.json> [--controller nominal|socp|qp] [--seed N] [--out DIR]
  ercbf compare <config.json> [--seed N] [--out DIR]
  ercbf montecarlo <config.json> [--runs N] [--controller ...] [--seed N] [--out DIR]

Outputs:
  run         trajectory.csv, metrics.json
  compare     trajectory_{nominal,socp,qp}.csv, comparison.json
  montecarlo  montecarlo_runs.csv, montecarlo_summary.json

ERCBF_THREADS caps Monte Carlo parallelism.
Exit codes: 0 ok, 2 config error, 3 infeasibility-aborted, 4 diverged.
";

/// Parses argv (without the program name) and executes; returns the exit code.
pub fn run_cli(args: &[String]) -> i32 {
    match dispatch(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("\n{USAGE}");
            }
            e.exit_code()
        }
    }
}

fn dispatch(args: &[String]) -> Result<i32, CliError> {
    let Some(command) = args.first() else {
        return Err(CliError::Usage("missing command".into()));
    };
    if command == "--help" || command == "-h" || command == "help" {
        println!("{USAGE}");
        return Ok(EXIT_OK);
    }
    let mut config_path: Option<PathBuf> = None;
    let mut overrides = Overrides::default();
    let mut i = 1;
    while i < args.len() {
        let arg = &args[i];
        let mut take_value = |name: &str| -> Result<String, CliError> {
            i += 1;
            args.get(i)
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("{name} requires a value")))
        };
        match arg.as_str() {
            "--controller" => {
                let v = take_value("--controller")?;
                overrides.controller = Some(parse_controller(&v)?);
            }
            "--seed" => {
                let v = take_value("--seed")?;
                overrides.seed = Some(v.parse().map_err(|_| {
                    CliError::Usage(format!("--seed expects an integer, got `{v}`"))
                })?);
            }
            "--out" => {
                overrides.out_dir = Some(PathBuf::from(take_value("--out")?));
            }
            "--runs" => {
                let v = take_value("--runs")?;
                overrides.runs = Some(v.parse().map_err(|_| {
                    CliError::Usage(format!("--runs expects an integer, got `{v}`"))
                })?);
            }
            other if other.starts_with("--") => {
                return Err(CliError::Usage(format!("unknown flag `{other}`")));
            }
            other => {
                if config_path.is_some() {
                    return Err(CliError::Usage(format!(
                        "unexpected positional argument `{other}`"
                    )));
                }
                config_path = Some(PathBuf::from(other));
            }
        }
        i += 1;
    }
    let config_path =
        config_path.ok_or_else(|| CliError::Usage("missing <config.json> argument".into()))?;
    match command.as_str() {
        "run" => cmd_run(&config_path, &overrides),
        "compare" => cmd_compare(&config_path, &overrides),
        "montecarlo" => cmd_montecarlo(&config_path, &overrides),
        other => Err(CliError::Usage(format!("unknown command `{other}`"))),
    }
}
