//! Adaptive cruise control scenario: ego longitudinal dynamics, the rear-end
//! barrier with analytic environment-error expressions, speed-limit barriers,
//! a velocity-tracking CLF, the stochastic free-flow lead-vehicle model, and
//! the measurement model.
//!
//! Everything is SI internally; km/h values are converted on ingestion.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::controllers::{ErrorBounds, ErrorExprClass, ErrorFn, ErrorModel};
use crate::core::{BarrierSpec, ControlAffineSystem, EnvironmentEstimate, LyapunovSpec};

#[derive(Debug, Error)]
pub enum AccError {
    #[error("invalid parameter {what}: {why}")]
    InvalidParameter { what: &'static str, why: &'static str },
    #[error("velocity history does not reach back to the requested delay")]
    InsufficientHistory,
}

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

/// Longitudinal vehicle parameters and the rear-end constraint constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Mass, kg.
    pub mass: f64,
    /// Rolling force constant term, N.
    pub c0: f64,
    /// Rolling force linear coefficient, N·s/m.
    pub c1: f64,
    /// Rolling force quadratic coefficient, N·s²/m².
    pub c2: f64,
    /// Deceleration factor (dimensionless); c_d·g is the maximum deceleration.
    pub c_d: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
    /// Look-ahead (reaction) time of the rear-end constraint, s.
    pub look_ahead: f64,
}

impl VehicleParams {
    pub fn new(
        mass: f64,
        c0: f64,
        c1: f64,
        c2: f64,
        c_d: f64,
        gravity: f64,
        look_ahead: f64,
    ) -> Result<Self, AccError> {
        if mass.is_nan() || mass <= 0.0 {
            return Err(AccError::InvalidParameter {
                what: "mass",
                why: "must be > 0",
            });
        }
        if (c_d * gravity).is_nan() || c_d * gravity <= 0.0 {
            return Err(AccError::InvalidParameter {
                what: "c_d * gravity",
                why: "maximum deceleration must be > 0",
            });
        }
        if look_ahead.is_nan() || look_ahead < 0.0 {
            return Err(AccError::InvalidParameter {
                what: "look_ahead",
                why: "must be >= 0",
            });
        }
        Ok(Self {
            mass,
            c0,
            c1,
            c2,
            c_d,
            gravity,
            look_ahead,
        })
    }

    /// Default sedan parameters: m = 1650 kg, c0 = 0.1 N, c1 = 5 N·s/m,
    /// c2 = 0.25 N·s²/m², c_d = 0.3, g = 9.81 m/s², and a standard 1.8 s
    /// headway as the look-ahead time.
    pub fn default_car() -> Self {
        Self {
            mass: 1650.0,
            c0: 0.1,
            c1: 5.0,
            c2: 0.25,
            c_d: 0.3,
            gravity: 9.81,
            look_ahead: 1.8,
        }
    }

    /// Rolling force c0 + c1·v + c2·v².
    pub fn rolling_force(&self, v: f64) -> f64 {
        self.c0 + self.c1 * v + self.c2 * v * v
    }

    /// Maximum deceleration c_d·g.
    pub fn max_decel(&self) -> f64 {
        self.c_d * self.gravity
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoState {
    pub p: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadState {
    pub p_s: f64,
    pub v_s: f64,
    /// Lead acceleration; feeds the barrier's time-partial.
    pub v_s_dot: f64,
}

/// (ṗ, v̇) of the ego vehicle: ṗ = v, v̇ = (u − F_r(v))/m.
pub fn acc_dynamics(params: &VehicleParams, state: &EgoState, u: f64) -> (f64, f64) {
    (state.v, (u - params.rolling_force(state.v)) / params.mass)
}

/// The ego dynamics as a control-affine system with x = [p, v], m = 1.
pub fn acc_system(params: &VehicleParams) -> ControlAffineSystem {
    let p = *params;
    let mass = params.mass;
    ControlAffineSystem::new(
        2,
        1,
        move |x: &DVector<f64>| {
            DVector::from_column_slice(&[x[1], -p.rolling_force(x[1]) / p.mass])
        },
        move |_x: &DVector<f64>| DMatrix::from_column_slice(2, 1, &[0.0, 1.0 / mass]),
    )
}

/// Rear-end barrier h = p_s − p − T_h·v − (v_s − v)²/(2·c_d·g) with analytic
/// gradient and time-partial. The time-partial contracts the environment
/// rate [ṗ_s, v̇_s] against ∇_{x_s} h = [1, −(v_s − v)/(c_d·g)].
pub fn acc_barrier(params: &VehicleParams, nu: f64) -> BarrierSpec {
    let th = params.look_ahead;
    let cdg = params.max_decel();
    BarrierSpec::new(
        move |x: &DVector<f64>, xs: &DVector<f64>| {
            let dv = xs[1] - x[1];
            xs[0] - x[0] - th * x[1] - dv * dv / (2.0 * cdg)
        },
        move |x: &DVector<f64>, xs: &DVector<f64>| {
            DVector::from_column_slice(&[-1.0, -th + (xs[1] - x[1]) / cdg])
        },
        move |x: &DVector<f64>, xs: &DVector<f64>, xsd: &DVector<f64>| {
            xsd[0] - xsd[1] * (xs[1] - x[1]) / cdg
        },
        nu,
    )
    .expect("nu validated by caller")
}

/// The three analytic environment-error expressions of the rear-end barrier,
/// written in the measured quantities and the error coordinates
/// e_s = (e_p, e_v), ė_s = (e_ṗ, e_v̇):
///
///   e_h     = e_p − (2·e_v·(v̂_s − v) + e_v²)/(2·c_d·g)
///   e_∇h    = |e_v|/(c_d·g)
///   e_∂h/∂t = e_v − (v̇̂_s·e_v + e_v̇·(v̂_s − v) + e_v·e_v̇)/(c_d·g)
///
/// Each equals the direct difference of the corresponding true and measured
/// barrier quantity (the unit tests pin this identity to 1e-10), which is
/// what the worst-case robustification argument requires.
pub fn acc_error_expressions(params: &VehicleParams) -> ErrorModel {
    let cdg = params.max_decel();
    let e_h: ErrorFn = Arc::new(
        move |x: &DVector<f64>, xs_hat: &DVector<f64>, _xsd: &DVector<f64>, e_s: &[f64], _ed: &[f64]| {
            let rel = xs_hat[1] - x[1];
            e_s[0] - (2.0 * e_s[1] * rel + e_s[1] * e_s[1]) / (2.0 * cdg)
        },
    );
    let e_grad_h: ErrorFn = Arc::new(
        move |_x: &DVector<f64>, _xs: &DVector<f64>, _xsd: &DVector<f64>, e_s: &[f64], _ed: &[f64]| {
            (e_s[1] / cdg).abs()
        },
    );
    let e_dhdt: ErrorFn = Arc::new(
        move |x: &DVector<f64>, xs_hat: &DVector<f64>, xsd_hat: &DVector<f64>, e_s: &[f64], e_d: &[f64]| {
            let rel = xs_hat[1] - x[1];
            e_s[1] - (xsd_hat[1] * e_s[1] + e_d[1] * rel + e_s[1] * e_d[1]) / cdg
        },
    );
    ErrorModel {
        e_h,
        e_grad_h,
        e_dhdt,
        class: ErrorExprClass::Quadratic,
    }
}

/// Componentwise worst-case bounds on the lead-state measurement errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccErrorBounds {
    pub e_p: f64,
    pub e_v: f64,
    pub e_vdot: f64,
}

impl AccErrorBounds {
    pub fn new(e_p: f64, e_v: f64, e_vdot: f64) -> Result<Self, AccError> {
        if [e_p, e_v, e_vdot].iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(AccError::InvalidParameter {
                what: "error bounds",
                why: "must be componentwise >= 0",
            });
        }
        Ok(Self { e_p, e_v, e_vdot })
    }

    pub fn zero() -> Self {
        Self {
            e_p: 0.0,
            e_v: 0.0,
            e_vdot: 0.0,
        }
    }

    /// Box bounds in environment coordinates: e_s = (e_p, e_v) and
    /// ė_s = (e_ṗ, e_v̇). The position-rate error equals the velocity error
    /// (ṗ_s = v_s on both the true and measured side), hence the E_v entry.
    pub fn to_error_bounds(&self) -> ErrorBounds {
        ErrorBounds::new(
            DVector::from_column_slice(&[self.e_p, self.e_v]),
            DVector::from_column_slice(&[self.e_v, self.e_vdot]),
        )
        .expect("componentwise bounds validated at construction")
    }
}

/// Ego-only speed-limit barriers h₂ = v_max − v and h₃ = v − v_min. They
/// carry no environment dependence and enter the solvers as plain linear
/// constraints.
pub fn speed_limit_barriers(v_max: f64, v_min: f64, nu: f64) -> (BarrierSpec, BarrierSpec) {
    assert!(v_max > v_min, "v_max must exceed v_min");
    let upper = BarrierSpec::new(
        move |x: &DVector<f64>, _xs: &DVector<f64>| v_max - x[1],
        |_x: &DVector<f64>, _xs: &DVector<f64>| DVector::from_column_slice(&[0.0, -1.0]),
        |_x: &DVector<f64>, _xs: &DVector<f64>, _xsd: &DVector<f64>| 0.0,
        nu,
    )
    .expect("nu validated by caller");
    let lower = BarrierSpec::new(
        move |x: &DVector<f64>, _xs: &DVector<f64>| x[1] - v_min,
        |_x: &DVector<f64>, _xs: &DVector<f64>| DVector::from_column_slice(&[0.0, 1.0]),
        |_x: &DVector<f64>, _xs: &DVector<f64>, _xsd: &DVector<f64>| 0.0,
        nu,
    )
    .expect("nu validated by caller");
    (upper, lower)
}

/// Velocity-tracking CLF V = (v − v_d)².
pub fn acc_clf(v_d: f64, c3: f64) -> Result<LyapunovSpec, AccError> {
    LyapunovSpec::new(
        move |x: &DVector<f64>| (x[1] - v_d) * (x[1] - v_d),
        move |x: &DVector<f64>| DVector::from_column_slice(&[0.0, 2.0 * (x[1] - v_d)]),
        c3,
    )
    .map_err(|_| AccError::InvalidParameter {
        what: "c3",
        why: "CLF rate must be > 0",
    })
}

/// Fixed-spacing record of past lead velocities, for reaction-delay lookups.
#[derive(Debug, Clone)]
pub struct VelocityHistory {
    samples: Vec<(f64, f64)>,
}

impl VelocityHistory {
    pub fn new() -> Self {
        Self {
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, v: f64) {
        self.samples.push((t, v));
    }

    /// Velocity at time `t`, linearly interpolated between samples.
    pub fn at(&self, t: f64) -> Result<f64, AccError> {
        let first = self.samples.first().ok_or(AccError::InsufficientHistory)?;
        if t < first.0 - 1e-12 {
            return Err(AccError::InsufficientHistory);
        }
        let mut prev = *first;
        for &(ts, vs) in &self.samples {
            if ts >= t {
                if ts == prev.0 {
                    return Ok(vs);
                }
                let w = (t - prev.0) / (ts - prev.0);
                return Ok(prev.1 + w * (vs - prev.1));
            }
            prev = (ts, vs);
        }
        Ok(prev.1)
    }
}

impl Default for VelocityHistory {
    fn default() -> Self {
        Self::new()
    }
}

/// Plain free-flow parameters, separable from the RNG so configurations can
/// be cloned across runs and seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdvParams {
    pub lambda: f64,
    pub v_desired: f64,
    pub tau: f64,
    pub sigma: f64,
}

impl HdvParams {
    /// Default driver: λ = 0.309, v⁽ᵈ⁾ = 100 km/h, τ = 0, σ = 1.13.
    pub fn default_driver() -> Self {
        Self {
            lambda: 0.309,
            v_desired: kmh_to_mps(100.0),
            tau: 0.0,
            sigma: 1.13,
        }
    }

    pub fn build(&self, rng: ChaCha8Rng) -> Result<HdvModel, AccError> {
        HdvModel::new(self.lambda, self.v_desired, self.tau, self.sigma, rng)
    }
}

/// Linear free-flow lead-vehicle model v̇_s(t) = λ[v⁽ᵈ⁾ − v_s(t−τ)] + ε(t)
/// with ε ~ N(0, σ²) from an owned seeded stream.
#[derive(Debug, Clone)]
pub struct HdvModel {
    pub lambda: f64,
    pub v_desired: f64,
    pub tau: f64,
    pub sigma: f64,
    rng: ChaCha8Rng,
}

impl HdvModel {
    pub fn new(
        lambda: f64,
        v_desired: f64,
        tau: f64,
        sigma: f64,
        rng: ChaCha8Rng,
    ) -> Result<Self, AccError> {
        if [lambda, sigma, tau].iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(AccError::InvalidParameter {
                what: "hdv model",
                why: "lambda, sigma, tau must be >= 0",
            });
        }
        Ok(Self {
            lambda,
            v_desired,
            tau,
            sigma,
            rng,
        })
    }
}

/// One lead-model evaluation: the acceleration to hold until the next tick.
/// `t` is the current time; the delayed velocity is read from `history` at
/// t − τ (the current `v_s` when τ = 0).
pub fn hdv_step(
    model: &mut HdvModel,
    v_s: f64,
    t: f64,
    history: &VelocityHistory,
    dt: f64,
) -> Result<f64, AccError> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(AccError::InvalidParameter {
            what: "dt",
            why: "must be > 0",
        });
    }
    let v_delayed = if model.tau == 0.0 {
        v_s
    } else {
        history.at(t - model.tau)?
    };
    let noise = if model.sigma > 0.0 {
        let normal = Normal::new(0.0, model.sigma).expect("sigma validated");
        normal.sample(&mut model.rng)
    } else {
        0.0
    };
    Ok(model.lambda * (model.v_desired - v_delayed) + noise)
}

/// How measurement errors are drawn at each control tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementPolicy {
    /// Exact measurements (x̂_s = x_s).
    Zero,
    /// Errors uniform over the declared box.
    UniformInBox,
    /// The adversarial corner: measured gap, lead speed, and lead
    /// acceleration all inflated by their full bounds.
    WorstCaseCorner,
}

/// Draws one error realization (e_p, e_v, e_v̇) per the policy, guaranteed
/// inside the box.
pub fn draw_measurement_error(
    bounds: &AccErrorBounds,
    policy: MeasurementPolicy,
    rng: &mut ChaCha8Rng,
) -> [f64; 3] {
    match policy {
        MeasurementPolicy::Zero => [0.0, 0.0, 0.0],
        MeasurementPolicy::UniformInBox => {
            let mut draw = |b: f64| if b > 0.0 { rng.gen_range(-b..=b) } else { 0.0 };
            [draw(bounds.e_p), draw(bounds.e_v), draw(bounds.e_vdot)]
        }
        MeasurementPolicy::WorstCaseCorner => [-bounds.e_p, -bounds.e_v, -bounds.e_vdot],
    }
}

/// x̂_s = x_s − e; the measured rate vector is [v̂_s, v̇̂_s], i.e. the measured
/// velocity serves as the measured position rate.
pub fn apply_measurement_error(lead: &LeadState, error: &[f64; 3]) -> EnvironmentEstimate {
    let p_hat = lead.p_s - error[0];
    let v_hat = lead.v_s - error[1];
    let vdot_hat = lead.v_s_dot - error[2];
    EnvironmentEstimate::new(
        DVector::from_column_slice(&[p_hat, v_hat]),
        DVector::from_column_slice(&[v_hat, vdot_hat]),
    )
    .expect("finite lead state yields finite estimate")
}

/// Draws a measurement of the lead state with errors inside the declared box.
pub fn measure_lead(
    lead: &LeadState,
    bounds: &AccErrorBounds,
    policy: MeasurementPolicy,
    rng: &mut ChaCha8Rng,
) -> EnvironmentEstimate {
    let e = draw_measurement_error(bounds, policy, rng);
    apply_measurement_error(lead, &e)
}
