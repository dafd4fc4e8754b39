//! Closed-loop simulation: zero-order-hold control at a fixed period, RK4
//! integration of ego and lead between ticks, full diagnostic recording
//! (including the barrier uncertainty band), and seeded Monte Carlo batches.
//!
//! Runs are deterministic in (config, seed). Note the guarantees enforced by
//! the filters are continuous-time; no sampled-data margin compensates the
//! control period, so the band can graze zero by O(dt) effects in principle.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::acc::{
    acc_barrier, acc_clf, acc_error_expressions, acc_system, apply_measurement_error,
    draw_measurement_error, hdv_step, speed_limit_barriers, AccError, AccErrorBounds, EgoState,
    HdvParams, LeadState, MeasurementPolicy, VehicleParams, VelocityHistory,
};
use crate::controllers::{
    cbf_clf_soft_qp, cbf_qp_numeric, clf_desired_input, er_cbf_qp, er_cbf_socp,
    error_expression_range, phi_robust_hat, u_delta_bound, worst_case_errors, ControllerError,
    ErrorBounds, ErrorModel, FilterStatus, LinearConstraint,
};
use crate::core::{
    phi_nominal, phi_robust, BarrierSpec, ControlAffineSystem, CoreError, EnvironmentEstimate,
};

/// Decorrelates the measurement stream from the HDV noise stream.
const MEASUREMENT_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(&'static str),
    #[error("state diverged (non-finite) during integration")]
    Diverged,
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Acc(#[from] AccError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Nominal,
    Socp,
    Qp,
}

impl ControllerKind {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Nominal => "nominal",
            ControllerKind::Socp => "socp",
            ControllerKind::Qp => "qp",
        }
    }
}

/// How the tracking objective produces the desired input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClfMode {
    /// Two-stage pipeline: min-norm CLF input, then the safety filter.
    TwoStage,
    /// CLF as a soft constraint (slack δ, quadratic penalty) inside the
    /// nominal QP; sensitivity-study alternative.
    SoftConstraint { weight: f64 },
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Control update period (zero-order hold), s.
    pub dt_control: f64,
    /// Integrator substep, s; must not exceed `dt_control`.
    pub dt_integrator: f64,
    /// Simulation horizon, s.
    pub horizon: f64,
    pub controller: ControllerKind,
    /// Per-run seeds; `run_closed_loop` uses the first, Monte Carlo extends.
    pub seeds: Vec<u64>,
    pub measurement_policy: MeasurementPolicy,
    /// Resample the measurement error each tick (the default) or hold the
    /// first draw for the whole run.
    pub resample_measurement: bool,
    pub clf_mode: ClfMode,
    /// Abort the run on the first infeasible step instead of holding the
    /// previous input.
    pub abort_on_infeasible: bool,
    pub vehicle: VehicleParams,
    pub hdv: HdvParams,
    pub bounds: AccErrorBounds,
    pub initial_gap: f64,
    pub initial_ego_speed: f64,
    pub initial_lead_speed: f64,
    /// Ego CLF target speed, m/s.
    pub v_desired: f64,
    /// Barrier class-K rate ν.
    pub nu: f64,
    /// CLF rate γ (c₃).
    pub gamma: f64,
    pub v_max: f64,
    pub v_min: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if [self.dt_control, self.dt_integrator].iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err(SimError::InvalidConfig("time steps must be > 0"));
        }
        if self.dt_integrator > self.dt_control + 1e-12 {
            return Err(SimError::InvalidConfig(
                "dt_integrator must not exceed dt_control",
            ));
        }
        if self.horizon.is_nan() || self.horizon <= 0.0 {
            return Err(SimError::InvalidConfig("horizon must be > 0"));
        }
        if self.seeds.is_empty() {
            return Err(SimError::InvalidConfig("at least one seed is required"));
        }
        if self.v_max.is_nan() || self.v_min.is_nan() || self.v_max <= self.v_min {
            return Err(SimError::InvalidConfig("v_max must exceed v_min"));
        }
        if self.nu.is_nan() || self.nu < 0.0 || self.gamma.is_nan() || self.gamma <= 0.0 {
            return Err(SimError::InvalidConfig("rates: nu >= 0 and gamma > 0"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt_control).round() as usize
    }

    fn substeps(&self) -> usize {
        (self.dt_control / self.dt_integrator).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Optimal,
    /// Filter infeasible; the previous input was held.
    InfeasibleHeld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Completed,
    AbortedInfeasible,
    Diverged,
}

/// One control tick's full record.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: f64,
    pub p: f64,
    pub v: f64,
    pub p_s: f64,
    pub v_s: f64,
    pub v_s_dot: f64,
    pub p_s_meas: f64,
    pub v_s_meas: f64,
    pub v_s_dot_meas: f64,
    pub u_applied: f64,
    /// h at the measured environment state.
    pub h_nominal: f64,
    /// h at the true environment state.
    pub h_true: f64,
    pub h_band_lo: f64,
    pub h_band_hi: f64,
    pub v_lyap: f64,
    pub phi_nom: f64,
    pub phi_rob: f64,
    /// NaN except on the robust-QP path.
    pub phi_rob_hat: f64,
    /// Realized robust modification; NaN on the nominal path.
    pub u_delta: f64,
    /// Modification bound ū_δ; NaN when not computed.
    pub u_delta_bar: f64,
    pub status: StepStatus,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub infeasible_steps: usize,
    pub outcome: RunOutcome,
    pub seed: u64,
}

impl Trajectory {
    pub fn min_h_true(&self) -> f64 {
        self.records.iter().map(|r| r.h_true).fold(f64::INFINITY, f64::min)
    }

    pub fn min_h_band_lo(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.h_band_lo)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_gap(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.p_s - r.p)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mean_abs_u(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.u_applied.abs()).sum::<f64>() / self.records.len() as f64
    }
}

/// One classic fourth-order Runge–Kutta step with the input held constant.
pub fn integrate_step<F>(
    dynamics: &F,
    state: &DVector<f64>,
    u_held: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>, SimError>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    if dt.is_nan() || dt <= 0.0 {
        return Err(SimError::InvalidConfig("integration step must be > 0"));
    }
    let k1 = dynamics(state, u_held);
    let k2 = dynamics(&(state + &k1 * (dt / 2.0)), u_held);
    let k3 = dynamics(&(state + &k2 * (dt / 2.0)), u_held);
    let k4 = dynamics(&(state + &k3 * dt), u_held);
    let next = state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(SimError::Diverged);
    }
    Ok(next)
}

/// Barrier uncertainty band: h(x, x̂_s) shifted by the exact range of e_h
/// over the error box. The true barrier value lies inside the band whenever
/// the realized error respects the bounds.
pub fn h_uncertainty_band(
    bar: &BarrierSpec,
    model: &ErrorModel,
    bounds: &ErrorBounds,
    x: &DVector<f64>,
    est: &EnvironmentEstimate,
) -> Result<(f64, f64), ControllerError> {
    let h_meas = bar.value(x, &est.x_s_hat);
    let (lo, hi) = error_expression_range(&model.e_h, bounds, x, est, model.class)?;
    Ok((h_meas + lo, h_meas + hi))
}

struct Scenario {
    sys: ControlAffineSystem,
    bar: BarrierSpec,
    model: ErrorModel,
    box_bounds: ErrorBounds,
    speed_uppers: BarrierSpec,
    speed_lowers: BarrierSpec,
    lyap: crate::core::LyapunovSpec,
}

impl Scenario {
    fn build(config: &SimConfig) -> Result<Self, SimError> {
        let sys = acc_system(&config.vehicle);
        let bar = acc_barrier(&config.vehicle, config.nu);
        let model = acc_error_expressions(&config.vehicle);
        let box_bounds = config.bounds.to_error_bounds();
        let (speed_uppers, speed_lowers) =
            speed_limit_barriers(config.v_max, config.v_min, config.nu);
        let lyap = acc_clf(config.v_desired, config.gamma)?;
        Ok(Self {
            sys,
            bar,
            model,
            box_bounds,
            speed_uppers,
            speed_lowers,
            lyap,
        })
    }

    fn speed_constraints(
        &self,
        x: &DVector<f64>,
        xs: &DVector<f64>,
        xsd: &DVector<f64>,
    ) -> Result<Vec<LinearConstraint>, ControllerError> {
        Ok(vec![
            LinearConstraint::from_barrier(&self.sys, &self.speed_uppers, x, xs, xsd)?,
            LinearConstraint::from_barrier(&self.sys, &self.speed_lowers, x, xs, xsd)?,
        ])
    }
}

/// Runs the closed loop: at each control tick the lead acceleration is drawn,
/// the lead state measured, worst-case errors extremized, the desired input
/// produced by the CLF, the selected filter applied, and the input held while
/// both vehicles integrate to the next tick.
pub fn run_closed_loop(config: &SimConfig) -> Result<Trajectory, SimError> {
    config.validate()?;
    let seed = config.seeds[0];
    let scenario = Scenario::build(config)?;

    let mut hdv = config
        .hdv
        .build(ChaCha8Rng::seed_from_u64(seed))?;
    let mut meas_rng = ChaCha8Rng::seed_from_u64(seed ^ MEASUREMENT_SEED_SALT);

    let mut ego = EgoState {
        p: 0.0,
        v: config.initial_ego_speed,
    };
    let mut lead = LeadState {
        p_s: config.initial_gap,
        v_s: config.initial_lead_speed,
        v_s_dot: 0.0,
    };

    let mut history = VelocityHistory::new();
    if config.hdv.tau > 0.0 {
        // The lead is taken to have cruised at its initial speed before t = 0.
        history.push(-config.hdv.tau - config.dt_control, lead.v_s);
    }
    history.push(0.0, lead.v_s);

    let n_steps = config.steps();
    let substeps = config.substeps();
    let dt_sub = config.dt_control / substeps as f64;

    let mut records = Vec::with_capacity(n_steps + 1);
    let mut infeasible_steps = 0usize;
    let mut outcome = RunOutcome::Completed;
    let mut held_u = 0.0f64;
    let mut held_error: Option<[f64; 3]> = None;

    for k in 0..=n_steps {
        let t = k as f64 * config.dt_control;

        lead.v_s_dot = hdv_step(&mut hdv, lead.v_s, t, &history, config.dt_control)?;

        let error = match (&held_error, config.resample_measurement) {
            (Some(e), false) => *e,
            _ => {
                let e = draw_measurement_error(&config.bounds, config.measurement_policy, &mut meas_rng);
                held_error = Some(e);
                e
            }
        };
        let est = apply_measurement_error(&lead, &error);

        let x = DVector::from_column_slice(&[ego.p, ego.v]);
        let xs_true = DVector::from_column_slice(&[lead.p_s, lead.v_s]);

        let wce = worst_case_errors(&scenario.model, &scenario.box_bounds, &x, &est)?;
        let (band_lo, band_hi) =
            h_uncertainty_band(&scenario.bar, &scenario.model, &scenario.box_bounds, &x, &est)?;

        let speed_cons = scenario.speed_constraints(&x, &est.x_s_hat, &est.x_s_hat_dot)?;

        // Stage 1: nominal input (measured environment).
        let nominal_stage = match config.clf_mode {
            ClfMode::TwoStage => {
                let u_des = clf_desired_input(&scenario.sys, &scenario.lyap, &x)?;
                cbf_qp_numeric(
                    &scenario.sys,
                    &[&scenario.bar],
                    &x,
                    &est.x_s_hat,
                    &est.x_s_hat_dot,
                    &u_des,
                    &speed_cons,
                )?
            }
            ClfMode::SoftConstraint { weight } => cbf_clf_soft_qp(
                &scenario.sys,
                &[&scenario.bar],
                &scenario.lyap,
                &x,
                &est.x_s_hat,
                &est.x_s_hat_dot,
                weight,
                &speed_cons,
            )?,
        };

        // Stage 2: the selected filter.
        let mut u_delta = f64::NAN;
        let mut u_delta_bar = f64::NAN;
        let mut phi_rob_hat_val = f64::NAN;
        let mut step_status = StepStatus::Optimal;
        let mut u_applied = held_u;

        let stage_feasible = nominal_stage.status == FilterStatus::Optimal;
        if !stage_feasible {
            step_status = StepStatus::InfeasibleHeld;
        } else {
            let u_nom = nominal_stage.u.clone();
            match config.controller {
                ControllerKind::Nominal => {
                    u_applied = u_nom[0];
                }
                ControllerKind::Socp => {
                    let res = er_cbf_socp(
                        &scenario.sys,
                        &scenario.bar,
                        &x,
                        &est,
                        &wce,
                        &u_nom,
                        &speed_cons,
                    )?;
                    u_delta_bar =
                        u_delta_bound(&scenario.sys, &scenario.bar, &x, &est, &wce, &u_nom)
                            .unwrap_or(f64::NAN);
                    if res.status == FilterStatus::Optimal {
                        u_applied = res.u[0];
                        u_delta = res.u[0] - u_nom[0];
                    } else {
                        step_status = StepStatus::InfeasibleHeld;
                    }
                }
                ControllerKind::Qp => {
                    let res = er_cbf_qp(
                        &scenario.sys,
                        &scenario.bar,
                        &x,
                        &est,
                        &wce,
                        &u_nom,
                        &speed_cons,
                    );
                    match res {
                        Ok(res) if res.status == FilterStatus::Optimal => {
                            u_applied = res.u[0];
                            u_delta = res.u[0] - u_nom[0];
                            u_delta_bar = res.u_delta_bar.unwrap_or(f64::NAN);
                            let uv = DVector::from_element(1, u_applied);
                            phi_rob_hat_val = phi_robust_hat(
                                &scenario.sys,
                                &scenario.bar,
                                &x,
                                &est,
                                &wce,
                                &u_nom,
                                &uv,
                            )
                            .unwrap_or(f64::NAN);
                        }
                        Ok(res) => {
                            u_delta_bar = res.u_delta_bar.unwrap_or(f64::NAN);
                            step_status = StepStatus::InfeasibleHeld;
                        }
                        Err(ControllerError::DegenerateDenominator) => {
                            step_status = StepStatus::InfeasibleHeld;
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }

        if step_status == StepStatus::InfeasibleHeld {
            infeasible_steps += 1;
        }

        let uv = DVector::from_element(1, u_applied);
        let record = StepRecord {
            t,
            p: ego.p,
            v: ego.v,
            p_s: lead.p_s,
            v_s: lead.v_s,
            v_s_dot: lead.v_s_dot,
            p_s_meas: est.x_s_hat[0],
            v_s_meas: est.x_s_hat[1],
            v_s_dot_meas: est.x_s_hat_dot[1],
            u_applied,
            h_nominal: scenario.bar.value(&x, &est.x_s_hat),
            h_true: scenario.bar.value(&x, &xs_true),
            h_band_lo: band_lo,
            h_band_hi: band_hi,
            v_lyap: scenario.lyap.value(&x),
            phi_nom: phi_nominal(
                &scenario.sys,
                &scenario.bar,
                &x,
                &est.x_s_hat,
                &est.x_s_hat_dot,
                &uv,
            )?,
            phi_rob: phi_robust(&scenario.sys, &scenario.bar, &x, &est, &wce, &uv)?,
            phi_rob_hat: phi_rob_hat_val,
            u_delta,
            u_delta_bar,
            status: step_status,
        };
        records.push(record);

        if step_status == StepStatus::InfeasibleHeld && config.abort_on_infeasible {
            outcome = RunOutcome::AbortedInfeasible;
            break;
        }
        held_u = u_applied;

        if k == n_steps {
            break;
        }

        // Integrate ego and lead together under the held inputs.
        let mass = config.vehicle.mass;
        let params = config.vehicle;
        let a_s = lead.v_s_dot;
        let dynamics = move |z: &DVector<f64>, u: &DVector<f64>| {
            DVector::from_column_slice(&[
                z[1],
                (u[0] - params.rolling_force(z[1])) / mass,
                z[3],
                a_s,
            ])
        };
        let mut z = DVector::from_column_slice(&[ego.p, ego.v, lead.p_s, lead.v_s]);
        let mut diverged = false;
        for s in 0..substeps {
            match integrate_step(&dynamics, &z, &uv, dt_sub) {
                Ok(next) => z = next,
                Err(SimError::Diverged) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
            history.push(t + (s + 1) as f64 * dt_sub, z[3]);
        }
        if diverged {
            outcome = RunOutcome::Diverged;
            break;
        }
        ego.p = z[0];
        ego.v = z[1];
        lead.p_s = z[2];
        lead.v_s = z[3];
    }

    Ok(Trajectory {
        records,
        infeasible_steps,
        outcome,
        seed,
    })
}

/// Per-run summary statistics.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub outcome: RunOutcome,
    pub min_h_true: f64,
    pub min_h_band_lo: f64,
    pub min_gap: f64,
    pub infeasible_steps: usize,
    /// Steps with h_true < −1e−6.
    pub violation_steps: usize,
    pub mean_abs_u: f64,
}

impl RunMetrics {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let violation_steps = traj
            .records
            .iter()
            .filter(|r| r.h_true < -1e-6)
            .count();
        Self {
            seed: traj.seed,
            outcome: traj.outcome,
            min_h_true: traj.min_h_true(),
            min_h_band_lo: traj.min_h_band_lo(),
            min_gap: traj.min_gap(),
            infeasible_steps: traj.infeasible_steps,
            violation_steps,
            mean_abs_u: traj.mean_abs_u(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloSummary {
    pub runs: Vec<RunMetrics>,
    /// Fraction of runs with at least one violating step.
    pub violation_rate: f64,
    pub total_infeasible_steps: usize,
    pub worst_min_h_true: f64,
    pub worst_min_gap: f64,
}

/// Independent seeded runs, optionally in parallel (each run owns its RNGs);
/// results merge in seed order so the summary is thread-count independent.
/// The `ERCBF_THREADS` environment variable caps parallelism.
pub fn monte_carlo(config: &SimConfig, n_runs: usize) -> Result<MonteCarloSummary, SimError> {
    if n_runs == 0 {
        return Err(SimError::InvalidConfig("n_runs must be >= 1"));
    }
    config.validate()?;
    let seeds: Vec<u64> = (0..n_runs)
        .map(|i| {
            if i < config.seeds.len() {
                config.seeds[i]
            } else {
                config.seeds[config.seeds.len() - 1] + (i - config.seeds.len() + 1) as u64
            }
        })
        .collect();

    let threads = std::env::var("ERCBF_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .min(n_runs);

    let mut results: Vec<Option<Result<RunMetrics, SimError>>> = Vec::new();
    results.resize_with(n_runs, || None);

    if threads <= 1 {
        for (i, &seed) in seeds.iter().enumerate() {
            let mut run_config = config.clone();
            run_config.seeds = vec![seed];
            results[i] = Some(run_closed_loop(&run_config).map(|t| RunMetrics::from_trajectory(&t)));
        }
    } else {
        let chunk = n_runs.div_ceil(threads);
        std::thread::scope(|scope| {
            for (slot, seed_chunk) in results.chunks_mut(chunk).zip(seeds.chunks(chunk)) {
                scope.spawn(move || {
                    for (out, &seed) in slot.iter_mut().zip(seed_chunk) {
                        let mut run_config = config.clone();
                        run_config.seeds = vec![seed];
                        *out = Some(
                            run_closed_loop(&run_config).map(|t| RunMetrics::from_trajectory(&t)),
                        );
                    }
                });
            }
        });
    }

    let mut runs = Vec::with_capacity(n_runs);
    for r in results {
        runs.push(r.expect("all runs dispatched")?);
    }
    let violating = runs.iter().filter(|r| r.violation_steps > 0).count();
    let summary = MonteCarloSummary {
        violation_rate: violating as f64 / n_runs as f64,
        total_infeasible_steps: runs.iter().map(|r| r.infeasible_steps).sum(),
        worst_min_h_true: runs.iter().map(|r| r.min_h_true).fold(f64::INFINITY, f64::min),
        worst_min_gap: runs.iter().map(|r| r.min_gap).fold(f64::INFINITY, f64::min),
        runs,
    };
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    use crate::acc::kmh_to_mps;

    use super::*;

    pub(crate) fn paper_config(controller: ControllerKind, seed: u64) -> SimConfig {
        SimConfig {
            dt_control: 0.01,
            dt_integrator: 0.001,
            horizon: 20.0,
            controller,
            seeds: vec![seed],
            measurement_policy: MeasurementPolicy::UniformInBox,
            resample_measurement: true,
            clf_mode: ClfMode::TwoStage,
            abort_on_infeasible: false,
            vehicle: VehicleParams::default_car(),
            hdv: HdvParams::default_driver(),
            bounds: AccErrorBounds::new(1.0, 1.0, 0.0).unwrap(),
            initial_gap: 80.0,
            initial_ego_speed: 27.78,
            initial_lead_speed: 27.78,
            v_desired: kmh_to_mps(120.0),
            nu: 5.0,
            gamma: 5.0,
            v_max: kmh_to_mps(120.0),
            v_min: kmh_to_mps(60.0),
        }
    }

    #[test]
    fn integrator_exact_for_constant_velocity() {
        let dynamics = |z: &DVector<f64>, _u: &DVector<f64>| {
            DVector::from_column_slice(&[z[1], 0.0])
        };
        let mut z = DVector::from_column_slice(&[0.0, 3.0]);
        let u = DVector::zeros(1);
        for _ in 0..100 {
            z = integrate_step(&dynamics, &z, &u, 0.01).unwrap();
        }
        assert!((z[0] - 3.0).abs() < 1e-10);
        assert_eq!(z[1], 3.0);
    }

    #[test]
    fn integrator_flags_divergence() {
        let dynamics = |z: &DVector<f64>, _u: &DVector<f64>| z * 1e300;
        let z = DVector::from_column_slice(&[1.0]);
        let u = DVector::zeros(1);
        assert!(matches!(
            integrate_step(&dynamics, &z, &u, 1.0),
            Err(SimError::Diverged)
        ));
    }

    #[test]
    fn zero_dynamics_leave_state_unchanged() {
        let dynamics = |_z: &DVector<f64>, _u: &DVector<f64>| DVector::zeros(2);
        let z = DVector::from_column_slice(&[4.0, -1.0]);
        let u = DVector::zeros(1);
        let next = integrate_step(&dynamics, &z, &u, 0.1).unwrap();
        assert_eq!(next, z);
    }

    #[test]
    fn equilibrium_run_tracks_desired_speed() {
        // No noise, no error, matched speeds, ego target equal to current
        // speed: velocities and the barrier hold steady.
        let mut config = paper_config(ControllerKind::Nominal, 1);
        config.hdv.sigma = 0.0;
        config.hdv.v_desired = 27.78;
        config.bounds = AccErrorBounds::zero();
        config.measurement_policy = MeasurementPolicy::Zero;
        config.v_desired = 27.78;
        config.horizon = 10.0;
        let traj = run_closed_loop(&config).unwrap();
        assert_eq!(traj.outcome, RunOutcome::Completed);
        assert_eq!(traj.records.len(), config.steps() + 1);
        let last = traj.records.last().unwrap();
        assert!((last.v - 27.78).abs() < 0.1, "v = {}", last.v);
        let h0 = traj.records[0].h_true;
        assert!(
            (last.h_true - h0).abs() < 2.0,
            "h drifted from {h0} to {}",
            last.h_true
        );
    }

    #[test]
    fn records_have_strictly_increasing_time() {
        let mut config = paper_config(ControllerKind::Socp, 3);
        config.horizon = 2.0;
        let traj = run_closed_loop(&config).unwrap();
        for w in traj.records.windows(2) {
            assert!(w[1].t > w[0].t);
        }
        assert_eq!(traj.records.len(), 201);
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let mut config = paper_config(ControllerKind::Qp, 11);
        config.horizon = 3.0;
        let a = run_closed_loop(&config).unwrap();
        let b = run_closed_loop(&config).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.u_applied.to_bits(), rb.u_applied.to_bits());
            assert_eq!(ra.h_true.to_bits(), rb.h_true.to_bits());
            assert_eq!(ra.p_s_meas.to_bits(), rb.p_s_meas.to_bits());
        }
    }

    #[test]
    fn band_contains_truth_when_errors_in_box() {
        let mut config = paper_config(ControllerKind::Socp, 17);
        config.horizon = 5.0;
        let traj = run_closed_loop(&config).unwrap();
        for r in &traj.records {
            assert!(
                r.h_band_lo <= r.h_true + 1e-9 && r.h_true <= r.h_band_hi + 1e-9,
                "band [{}, {}] misses h_true {}",
                r.h_band_lo,
                r.h_band_hi,
                r.h_true
            );
        }
    }

    #[test]
    fn band_collapses_with_zero_bounds() {
        let bar = acc_barrier(&VehicleParams::default_car(), 5.0);
        let model = acc_error_expressions(&VehicleParams::default_car());
        let bounds = AccErrorBounds::zero().to_error_bounds();
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..20 {
            let x = DVector::from_column_slice(&[0.0, rng.gen_range(10.0..35.0)]);
            let est = EnvironmentEstimate::new(
                DVector::from_column_slice(&[
                    rng.gen_range(30.0..120.0),
                    rng.gen_range(10.0..35.0),
                ]),
                DVector::from_column_slice(&[27.0, 0.0]),
            )
            .unwrap();
            let (lo, hi) = h_uncertainty_band(&bar, &model, &bounds, &x, &est).unwrap();
            let h = bar.value(&x, &est.x_s_hat);
            assert_eq!(lo, h);
            assert_eq!(hi, h);
        }
    }

    #[test]
    fn band_formula_at_matched_speeds() {
        // At v̂_s = v the e_h range is [−E_p − E_v²/(2 c_d g), +E_p].
        let params = VehicleParams::default_car();
        let bar = acc_barrier(&params, 5.0);
        let model = acc_error_expressions(&params);
        let bounds = AccErrorBounds::new(1.0, 1.0, 0.0).unwrap().to_error_bounds();
        let x = DVector::from_column_slice(&[0.0, 27.78]);
        let est = EnvironmentEstimate::new(
            DVector::from_column_slice(&[80.0, 27.78]),
            DVector::from_column_slice(&[27.78, 0.0]),
        )
        .unwrap();
        let (lo, hi) = h_uncertainty_band(&bar, &model, &bounds, &x, &est).unwrap();
        let h = bar.value(&x, &est.x_s_hat);
        let cdg = params.max_decel();
        assert!((lo - (h - 1.0 - 1.0 / (2.0 * cdg))).abs() < 1e-10);
        assert!((hi - (h + 1.0)).abs() < 1e-10);
    }

    #[test]
    fn monte_carlo_single_run_equals_run_closed_loop() {
        let mut config = paper_config(ControllerKind::Qp, 5);
        config.horizon = 2.0;
        let summary = monte_carlo(&config, 1).unwrap();
        let traj = run_closed_loop(&config).unwrap();
        let direct = RunMetrics::from_trajectory(&traj);
        assert_eq!(summary.runs.len(), 1);
        assert_eq!(summary.runs[0].min_h_true.to_bits(), direct.min_h_true.to_bits());
        assert_eq!(summary.runs[0].min_gap.to_bits(), direct.min_gap.to_bits());
    }

    #[test]
    fn monte_carlo_merges_in_seed_order_regardless_of_threads() {
        let mut config = paper_config(ControllerKind::Nominal, 100);
        config.horizon = 1.0;
        std::env::set_var("ERCBF_THREADS", "1");
        let serial = monte_carlo(&config, 6).unwrap();
        std::env::set_var("ERCBF_THREADS", "3");
        let parallel = monte_carlo(&config, 6).unwrap();
        std::env::remove_var("ERCBF_THREADS");
        for (a, b) in serial.runs.iter().zip(&parallel.runs) {
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.min_h_true.to_bits(), b.min_h_true.to_bits());
        }
    }
}
