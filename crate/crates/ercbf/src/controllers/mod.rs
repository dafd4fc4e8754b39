//! The three safety filters — nominal CBF-QP (with its closed form), the
//! environmentally robust SOCP, and the environmentally robust QP (with its
//! closed form) — plus the worst-case-error engine, the u_δ modification
//! bound, and the min-norm CLF input generator.

mod worst_case;

pub use worst_case::{
    error_expression_range, worst_case_errors, worst_case_errors_detailed, ErrorBounds,
    ErrorExprClass, ErrorFn, ErrorModel, ExtremizerInfo, WorstCaseAnalysis,
};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::core::{
    phi_nominal, phi_robust, BarrierSpec, ControlAffineSystem, CoreError, EnvironmentEstimate,
    LyapunovSpec,
};
pub use crate::core::WorstCaseErrors;
use crate::optim::{
    feasible_interval, project_to_interval, solve_qp, DenseQP, FeasibleSet, OptimError, QpOutcome,
    ScalarConeConstraint,
};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("filter requires a scalar input (m = 1), got m = {0}")]
    NotScalarInput(usize),
    #[error("L_g h vanishes: barrier is degenerate for closed-form filtering")]
    DegenerateBarrier,
    #[error("u_delta bound denominator L_g h ± e_grad*·‖g‖ is numerically zero")]
    DegenerateDenominator,
    #[error("CLF condition unsatisfiable: L_g V = 0 with L_f V + c3·V > 0")]
    ClfInfeasible,
    #[error("error bounds must be finite and componentwise >= 0, matching the environment dimension")]
    InvalidBounds,
    #[error("error expression is not quadratic but was declared quadratic")]
    UnsupportedDegree,
    #[error("error box has too many active dimensions ({0}) for exact extremization")]
    BoxTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterBranch {
    /// Desired input already satisfies the governing constraint.
    Unconstrained,
    /// Input moved onto the constraint boundary.
    Constrained,
}

/// Synthesized input plus diagnostics. When `status` is `Infeasible` the
/// input field merely echoes the desired input and must not be applied.
#[derive(Debug, Clone)]
pub struct FilterResult {
    pub u: DVector<f64>,
    pub status: FilterStatus,
    pub branch: FilterBranch,
    /// The governing constraint (Φ_nom, Φ_rob, or Φ̂_rob) at the returned u.
    pub phi_value: f64,
    /// Realized modification u − u_des (robust filters only).
    pub u_delta: Option<f64>,
    /// The u_δ upper bound (robust QP path only).
    pub u_delta_bar: Option<f64>,
}

impl FilterResult {
    pub fn is_optimal(&self) -> bool {
        self.status == FilterStatus::Optimal
    }
}

/// Linear input constraint coeffᵀu ≥ min_value, used for the ego-only
/// barriers (speed limits) that need no robustification.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub coeff: DVector<f64>,
    pub min_value: f64,
}

impl LinearConstraint {
    /// Realizes Φ_nom(u) ≥ 0 for a barrier as a linear constraint on u.
    pub fn from_barrier(
        sys: &ControlAffineSystem,
        bar: &BarrierSpec,
        x: &DVector<f64>,
        x_s: &DVector<f64>,
        x_s_dot: &DVector<f64>,
    ) -> Result<Self, ControllerError> {
        let coeff = bar.lie_g(sys, x, x_s)?;
        let constant = bar.time_partial(x, x_s, x_s_dot)
            + bar.lie_f(sys, x, x_s)?
            + bar.alpha(bar.value(x, x_s));
        Ok(Self {
            coeff,
            min_value: -constant,
        })
    }

    pub fn margin(&self, u: &DVector<f64>) -> f64 {
        self.coeff.dot(u) - self.min_value
    }

    fn half_line(&self) -> Result<FeasibleSet, ControllerError> {
        if self.coeff.len() != 1 {
            return Err(ControllerError::NotScalarInput(self.coeff.len()));
        }
        let c = self.coeff[0];
        Ok(if c > 0.0 {
            FeasibleSet::half_line_above(self.min_value / c)
        } else if c < 0.0 {
            FeasibleSet::half_line_below(self.min_value / c)
        } else if self.min_value <= 0.0 {
            FeasibleSet::all()
        } else {
            FeasibleSet::Empty
        })
    }
}

/// Minimum-norm input satisfying the CLF decrease condition
/// L_f V + L_g V·u + c₃V ≤ 0: zero when the drift already satisfies it,
/// otherwise the least-squares correction along L_g V.
pub fn clf_desired_input(
    sys: &ControlAffineSystem,
    lyap: &LyapunovSpec,
    x: &DVector<f64>,
) -> Result<DVector<f64>, ControllerError> {
    let grad = lyap.grad(x);
    let lfv = grad.dot(&sys.drift(x)?);
    let lgv = sys.input_matrix(x)?.transpose() * grad;
    let excess = lfv + lyap.c3() * lyap.value(x);
    if excess <= 0.0 {
        return Ok(DVector::zeros(sys.input_dim()));
    }
    // Near the target both excess and L_gV shrink together and the ratio
    // stays bounded, so a tiny denominator is fine; infeasibility means the
    // gradient has vanished while a real excess remains.
    let denom = lgv.norm_squared();
    if denom == 0.0 || excess / denom.sqrt() > 1e15 {
        return if excess <= 1e-9 {
            Ok(DVector::zeros(sys.input_dim()))
        } else {
            Err(ControllerError::ClfInfeasible)
        };
    }
    Ok(-&lgv * (excess / denom))
}

/// Closed-form nominal filter: u = u_des when Φ_nom(u_des) ≥ 0, else the
/// minimum-norm correction −(L_g h)ᵀ Φ_nom(u_des)/‖L_g h‖².
pub fn cbf_qp_closed_form(
    sys: &ControlAffineSystem,
    bar: &BarrierSpec,
    x: &DVector<f64>,
    x_s: &DVector<f64>,
    x_s_dot: &DVector<f64>,
    u_des: &DVector<f64>,
) -> Result<FilterResult, ControllerError> {
    let lgh = bar.lie_g(sys, x, x_s)?;
    let lgh_sq = lgh.norm_squared();
    if lgh_sq < 1e-24 {
        return Err(ControllerError::DegenerateBarrier);
    }
    let phi_des = phi_nominal(sys, bar, x, x_s, x_s_dot, u_des)?;
    if phi_des >= 0.0 {
        return Ok(FilterResult {
            u: u_des.clone(),
            status: FilterStatus::Optimal,
            branch: FilterBranch::Unconstrained,
            phi_value: phi_des,
            u_delta: None,
            u_delta_bar: None,
        });
    }
    let u = u_des - &lgh * (phi_des / lgh_sq);
    let phi = phi_nominal(sys, bar, x, x_s, x_s_dot, &u)?;
    Ok(FilterResult {
        u,
        status: FilterStatus::Optimal,
        branch: FilterBranch::Constrained,
        phi_value: phi,
        u_delta: None,
        u_delta_bar: None,
    })
}

/// Multi-constraint nominal filter: KKT-certified minimizer of ‖u − u_des‖²
/// subject to Φ_nom ≥ 0 for every barrier plus any extra linear constraints.
pub fn cbf_qp_numeric(
    sys: &ControlAffineSystem,
    bars: &[&BarrierSpec],
    x: &DVector<f64>,
    x_s: &DVector<f64>,
    x_s_dot: &DVector<f64>,
    u_des: &DVector<f64>,
    extra: &[LinearConstraint],
) -> Result<FilterResult, ControllerError> {
    let m = sys.input_dim();
    let rows: Vec<LinearConstraint> = bars
        .iter()
        .map(|bar| LinearConstraint::from_barrier(sys, bar, x, x_s, x_s_dot))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .chain(extra.iter().cloned())
        .collect();

    let k = rows.len();
    let mut a = DMatrix::zeros(k, m);
    let mut b = DVector::zeros(k);
    for (i, row) in rows.iter().enumerate() {
        a.row_mut(i).copy_from(&row.coeff.transpose());
        b[i] = row.min_value;
    }
    let qp = DenseQP::new(
        DMatrix::identity(m, m) * 2.0,
        u_des * -2.0,
        a,
        b,
    )?;
    match solve_qp(&qp)? {
        QpOutcome::Optimal { z, active_set, .. } => {
            let phi = rows
                .iter()
                .map(|r| r.margin(&z))
                .fold(f64::INFINITY, f64::min);
            Ok(FilterResult {
                u: z,
                status: FilterStatus::Optimal,
                branch: if active_set.is_empty() {
                    FilterBranch::Unconstrained
                } else {
                    FilterBranch::Constrained
                },
                phi_value: phi,
                u_delta: None,
                u_delta_bar: None,
            })
        }
        QpOutcome::Infeasible => Ok(FilterResult {
            u: u_des.clone(),
            status: FilterStatus::Infeasible,
            branch: FilterBranch::Constrained,
            phi_value: rows
                .iter()
                .map(|r| r.margin(u_des))
                .fold(f64::INFINITY, f64::min),
            u_delta: None,
            u_delta_bar: None,
        }),
    }
}

/// Nominal filter with the CLF as a soft constraint: minimizes
/// ‖u‖² + weight·δ² subject to L_f V + L_g V·u + c₃V ≤ δ and every barrier
/// constraint. Sensitivity-study alternative to the two-stage pipeline.
#[allow(clippy::too_many_arguments)]
pub fn cbf_clf_soft_qp(
    sys: &ControlAffineSystem,
    bars: &[&BarrierSpec],
    lyap: &LyapunovSpec,
    x: &DVector<f64>,
    x_s: &DVector<f64>,
    x_s_dot: &DVector<f64>,
    weight: f64,
    extra: &[LinearConstraint],
) -> Result<FilterResult, ControllerError> {
    let m = sys.input_dim();
    let d = m + 1; // decision variables (u, δ)
    let rows: Vec<LinearConstraint> = bars
        .iter()
        .map(|bar| LinearConstraint::from_barrier(sys, bar, x, x_s, x_s_dot))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .chain(extra.iter().cloned())
        .collect();

    let grad = lyap.grad(x);
    let lfv = grad.dot(&sys.drift(x)?);
    let lgv = sys.input_matrix(x)?.transpose() * grad;

    let k = rows.len() + 1;
    let mut a = DMatrix::zeros(k, d);
    let mut b = DVector::zeros(k);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..m {
            a[(i, j)] = row.coeff[j];
        }
        b[i] = row.min_value;
    }
    // CLF row: −L_gV·u + δ ≥ L_fV + c₃V.
    for j in 0..m {
        a[(k - 1, j)] = -lgv[j];
    }
    a[(k - 1, m)] = 1.0;
    b[k - 1] = lfv + lyap.c3() * lyap.value(x);

    let mut h = DMatrix::identity(d, d) * 2.0;
    h[(m, m)] = 2.0 * weight;
    let qp = DenseQP::new(h, DVector::zeros(d), a, b)?;
    match solve_qp(&qp)? {
        QpOutcome::Optimal { z, active_set, .. } => {
            let u = z.rows(0, m).into_owned();
            let phi = rows
                .iter()
                .map(|r| r.margin(&u))
                .fold(f64::INFINITY, f64::min);
            Ok(FilterResult {
                u,
                status: FilterStatus::Optimal,
                branch: if active_set.is_empty() {
                    FilterBranch::Unconstrained
                } else {
                    FilterBranch::Constrained
                },
                phi_value: phi,
                u_delta: None,
                u_delta_bar: None,
            })
        }
        QpOutcome::Infeasible => Ok(FilterResult {
            u: DVector::zeros(m),
            status: FilterStatus::Infeasible,
            branch: FilterBranch::Constrained,
            phi_value: f64::NEG_INFINITY,
            u_delta: None,
            u_delta_bar: None,
        }),
    }
}

/// Robust SOCP filter for scalar input: projects the desired input onto the
/// exact feasible interval of Φ_rob ≥ 0 intersected with any extra linear
/// constraints. Infeasibility is reported, never patched with slack.
pub fn er_cbf_socp(
    sys: &ControlAffineSystem,
    bar: &BarrierSpec,
    x: &DVector<f64>,
    est: &EnvironmentEstimate,
    wce: &WorstCaseErrors,
    u_des: &DVector<f64>,
    extra: &[LinearConstraint],
) -> Result<FilterResult, ControllerError> {
    if sys.input_dim() != 1 {
        return Err(ControllerError::NotScalarInput(sys.input_dim()));
    }
    let xs = &est.x_s_hat;
    let lgh = bar.lie_g(sys, x, xs)?;
    let affine = bar.time_partial(x, xs, &est.x_s_hat_dot)
        + bar.lie_f(sys, x, xs)?
        + bar.alpha(bar.value(x, xs))
        + wce.e_dhdt_star
        + bar.alpha(wce.e_h_star);
    let cone = ScalarConeConstraint::new(
        affine,
        lgh[0],
        wce.e_grad_h_star,
        sys.drift(x)?,
        sys.input_matrix(x)?.column(0).into_owned(),
    )?;

    let mut set = feasible_interval(&cone);
    for c in extra {
        set = set.intersect(&c.half_line()?);
    }

    match project_to_interval(u_des[0], &set) {
        Some(u_star) => {
            let u = DVector::from_element(1, u_star);
            let phi = phi_robust(sys, bar, x, est, wce, &u)?;
            Ok(FilterResult {
                branch: if set.contains(u_des[0]) && u_star == u_des[0] {
                    FilterBranch::Unconstrained
                } else {
                    FilterBranch::Constrained
                },
                u,
                status: FilterStatus::Optimal,
                phi_value: phi,
                u_delta: Some(u_star - u_des[0]),
                u_delta_bar: None,
            })
        }
        None => Ok(FilterResult {
            u: u_des.clone(),
            status: FilterStatus::Infeasible,
            branch: FilterBranch::Constrained,
            phi_value: phi_robust(sys, bar, x, est, wce, u_des)?,
            u_delta: None,
            u_delta_bar: None,
        }),
    }
}

/// Upper bound ū_δ on the modification needed to robustify a nominally safe
/// input: zero when Φ_rob(u_nom*) ≥ 0, else the worse of the two ratios
/// |−Φ_rob(u_nom*)/(L_g h ± e_∇h*‖g‖)|.
pub fn u_delta_bound(
    sys: &ControlAffineSystem,
    bar: &BarrierSpec,
    x: &DVector<f64>,
    est: &EnvironmentEstimate,
    wce: &WorstCaseErrors,
    u_nom_star: &DVector<f64>,
) -> Result<f64, ControllerError> {
    if sys.input_dim() != 1 {
        return Err(ControllerError::NotScalarInput(sys.input_dim()));
    }
    let phi_rob = phi_robust(sys, bar, x, est, wce, u_nom_star)?;
    if phi_rob >= 0.0 {
        return Ok(0.0);
    }
    let lgh = bar.lie_g(sys, x, &est.x_s_hat)?[0];
    let g_norm = sys.input_matrix(x)?.norm();
    let d_plus = lgh + wce.e_grad_h_star * g_norm;
    let d_minus = lgh - wce.e_grad_h_star * g_norm;
    if d_plus.abs() < 1e-12 || d_minus.abs() < 1e-12 {
        return Err(ControllerError::DegenerateDenominator);
    }
    Ok((phi_rob / d_plus).abs().max((phi_rob / d_minus).abs()))
}

/// Φ̂_rob(u): the input-independent robust constraint, with the norm residual
/// frozen at u_nom* and inflated by ū_δ·‖g‖. Affine in u.
pub fn phi_robust_hat(
    sys: &ControlAffineSystem,
    bar: &BarrierSpec,
    x: &DVector<f64>,
    est: &EnvironmentEstimate,
    wce: &WorstCaseErrors,
    u_nom_star: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64, ControllerError> {
    let (affine, lgh) = phi_hat_coefficients(sys, bar, x, est, wce, u_nom_star)?;
    Ok(affine + lgh * u[0])
}

fn phi_hat_coefficients(
    sys: &ControlAffineSystem,
    bar: &BarrierSpec,
    x: &DVector<f64>,
    est: &EnvironmentEstimate,
    wce: &WorstCaseErrors,
    u_nom_star: &DVector<f64>,
) -> Result<(f64, f64), ControllerError> {
    if sys.input_dim() != 1 {
        return Err(ControllerError::NotScalarInput(sys.input_dim()));
    }
    let u_bar = u_delta_bound(sys, bar, x, est, wce, u_nom_star)?;
    let xs = &est.x_s_hat;
    let lgh = bar.lie_g(sys, x, xs)?[0];
    let closed_loop_norm = sys.dynamics(x, u_nom_star)?.norm();
    let g_norm = sys.input_matrix(x)?.norm();
    let affine = bar.time_partial(x, xs, &est.x_s_hat_dot)
        + bar.lie_f(sys, x, xs)?
        + bar.alpha(bar.value(x, xs))
        + wce.e_dhdt_star
        + bar.alpha(wce.e_h_star)
        - wce.e_grad_h_star * (closed_loop_norm + u_bar * g_norm);
    Ok((affine, lgh))
}

/// Robust QP filter: min ‖u − u_nom*‖² subject to Φ̂_rob(u) ≥ 0 (linear in u)
/// plus extra linear constraints, solved by the active-set QP.
pub fn er_cbf_qp(
    sys: &ControlAffineSystem,
    bar: &BarrierSpec,
    x: &DVector<f64>,
    est: &EnvironmentEstimate,
    wce: &WorstCaseErrors,
    u_nom_star: &DVector<f64>,
    extra: &[LinearConstraint],
) -> Result<FilterResult, ControllerError> {
    let (affine, lgh) = phi_hat_coefficients(sys, bar, x, est, wce, u_nom_star)?;
    let u_bar = u_delta_bound(sys, bar, x, est, wce, u_nom_star)?;

    let k = 1 + extra.len();
    let mut a = DMatrix::zeros(k, 1);
    let mut b = DVector::zeros(k);
    a[(0, 0)] = lgh;
    b[0] = -affine;
    for (i, c) in extra.iter().enumerate() {
        a[(i + 1, 0)] = c.coeff[0];
        b[i + 1] = c.min_value;
    }
    let qp = DenseQP::new(
        DMatrix::from_element(1, 1, 2.0),
        u_nom_star * -2.0,
        a,
        b,
    )?;
    match solve_qp(&qp)? {
        QpOutcome::Optimal { z, active_set, .. } => Ok(FilterResult {
            phi_value: affine + lgh * z[0],
            u_delta: Some(z[0] - u_nom_star[0]),
            u_delta_bar: Some(u_bar),
            branch: if active_set.is_empty() {
                FilterBranch::Unconstrained
            } else {
                FilterBranch::Constrained
            },
            u: z,
            status: FilterStatus::Optimal,
        }),
        QpOutcome::Infeasible => Ok(FilterResult {
            u: u_nom_star.clone(),
            status: FilterStatus::Infeasible,
            branch: FilterBranch::Constrained,
            phi_value: affine + lgh * u_nom_star[0],
            u_delta: None,
            u_delta_bar: Some(u_bar),
        }),
    }
}

/// Closed form of the robust QP: u = u_nom* + u_δ̂ with u_δ̂ = 0 when
/// Φ̂_rob(u_nom*) ≥ 0, else −Φ̂_rob(u_nom*)/L_g h(x, x̂_s).
pub fn er_cbf_qp_closed_form(
    sys: &ControlAffineSystem,
    bar: &BarrierSpec,
    x: &DVector<f64>,
    est: &EnvironmentEstimate,
    wce: &WorstCaseErrors,
    u_nom_star: &DVector<f64>,
) -> Result<FilterResult, ControllerError> {
    let (affine, lgh) = phi_hat_coefficients(sys, bar, x, est, wce, u_nom_star)?;
    if lgh.abs() < 1e-12 {
        return Err(ControllerError::DegenerateBarrier);
    }
    let u_bar = u_delta_bound(sys, bar, x, est, wce, u_nom_star)?;
    let phi_at_nom = affine + lgh * u_nom_star[0];
    let (u_delta_hat, branch) = if phi_at_nom >= 0.0 {
        (0.0, FilterBranch::Unconstrained)
    } else {
        (-phi_at_nom / lgh, FilterBranch::Constrained)
    };
    let u = DVector::from_element(1, u_nom_star[0] + u_delta_hat);
    Ok(FilterResult {
        phi_value: affine + lgh * u[0],
        u,
        status: FilterStatus::Optimal,
        branch,
        u_delta: Some(u_delta_hat),
        u_delta_bar: Some(u_bar),
    })
}
