//! Small dense solvers: a dual active-set QP for few-variable problems with
//! linear inequality constraints, and exact interval computation for the
//! scalar second-order-cone constraint of the robust filters.
//!
//! Tolerances are fixed: feasibility 1e-9, stationarity 1e-8.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Constraint-feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// KKT stationarity tolerance.
pub const STATIONARITY_TOL: f64 = 1e-8;

const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("cost Hessian is not symmetric positive definite")]
    DegenerateHessian,
    #[error("H must be symmetric to 1e-12 (max asymmetry {0:.3e})")]
    AsymmetricHessian(f64),
    #[error("dimension mismatch: {0}")]
    Shape(&'static str),
    #[error("problem size exceeds the supported dense limits (d <= 4, k <= 8)")]
    TooLarge,
    #[error("cone multiplier must be >= 0")]
    NegativeConeMultiplier,
    #[error("active-set iteration limit reached")]
    IterationLimit,
    #[error("singular KKT system in active-set step")]
    SingularKkt,
    #[error("solution failed post-solve verification (ill-conditioned constraint geometry)")]
    NumericalBreakdown,
}

/// min ½ zᵀHz + cᵀz  s.t.  Az ≥ b, with H symmetric positive definite.
#[derive(Debug, Clone)]
pub struct DenseQP {
    h: DMatrix<f64>,
    c: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl DenseQP {
    pub fn new(
        h: DMatrix<f64>,
        c: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
    ) -> Result<Self, OptimError> {
        let d = h.nrows();
        let k = a.nrows();
        if h.ncols() != d || c.len() != d || a.ncols() != d || b.len() != k {
            return Err(OptimError::Shape("H, c, A, b sizes are inconsistent"));
        }
        if d == 0 || d > 4 || k > 8 {
            return Err(OptimError::TooLarge);
        }
        let mut asym = 0.0_f64;
        for i in 0..d {
            for j in 0..d {
                asym = asym.max((h[(i, j)] - h[(j, i)]).abs());
            }
        }
        if asym > 1e-12 {
            return Err(OptimError::AsymmetricHessian(asym));
        }
        if h.clone().cholesky().is_none() {
            return Err(OptimError::DegenerateHessian);
        }
        Ok(Self { h, c, a, b })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn num_constraints(&self) -> usize {
        self.a.nrows()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * (z.transpose() * &self.h * z)[(0, 0)] + self.c.dot(z)
    }

    fn slacks(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.a * z - &self.b
    }
}

/// Outcome of [`solve_qp`]: either a KKT-certified minimizer with its active
/// set and multipliers, or a certificate-free infeasibility report.
#[derive(Debug, Clone)]
pub enum QpOutcome {
    Optimal {
        z: DVector<f64>,
        active_set: Vec<usize>,
        multipliers: Vec<f64>,
    },
    Infeasible,
}

/// Dual active-set method (Goldfarb–Idnani scheme): starts from the
/// unconstrained minimum −H⁻¹c and adds the most violated constraint until
/// primal feasibility; ties break toward the lowest constraint index.
/// Infeasibility surfaces when neither a primal nor a dual step exists.
pub fn solve_qp(qp: &DenseQP) -> Result<QpOutcome, OptimError> {
    let d = qp.dim();
    let chol = qp.h.clone().cholesky().ok_or(OptimError::DegenerateHessian)?;
    let mut z = chol.solve(&(-&qp.c));
    let mut active: Vec<usize> = Vec::new();
    let mut lambda: Vec<f64> = Vec::new();

    for _ in 0..MAX_ITERATIONS {
        let slacks = qp.slacks(&z);
        // Most violated constraint; scan order makes the lowest index win ties.
        let mut worst: Option<(usize, f64)> = None;
        for j in 0..qp.num_constraints() {
            if active.contains(&j) {
                continue;
            }
            if slacks[j] < -FEASIBILITY_TOL && worst.is_none_or(|(_, s)| slacks[j] < s) {
                worst = Some((j, slacks[j]));
            }
        }
        let Some((j, _)) = worst else {
            polish(qp, &active, &mut z, &mut lambda);
            let final_slack = qp.slacks(&z);
            let scale = 1.0 + z.norm();
            if (0..qp.num_constraints()).any(|i| final_slack[i] < -FEASIBILITY_TOL * scale) {
                return Err(OptimError::NumericalBreakdown);
            }
            return Ok(QpOutcome::Optimal {
                z,
                active_set: active,
                multipliers: lambda,
            });
        };

        let n_j: DVector<f64> = qp.a.row(j).transpose();
        let mut lam_new = 0.0;
        // Inner loop: take dual steps (dropping blocking constraints) until a
        // full primal step makes constraint j active, or infeasibility shows.
        for _ in 0..MAX_ITERATIONS {
            let w = active.len();
            // KKT system for the step direction:
            //   [H   A_Wᵀ] [dz ]   [n_j]
            //   [A_W  0  ] [dmu] = [ 0 ]
            let mut kkt = DMatrix::zeros(d + w, d + w);
            kkt.view_mut((0, 0), (d, d)).copy_from(&qp.h);
            for (r, &i) in active.iter().enumerate() {
                for col in 0..d {
                    kkt[(col, d + r)] = qp.a[(i, col)];
                    kkt[(d + r, col)] = qp.a[(i, col)];
                }
            }
            let mut rhs = DVector::zeros(d + w);
            rhs.rows_mut(0, d).copy_from(&n_j);
            let sol = kkt.lu().solve(&rhs).ok_or(OptimError::SingularKkt)?;
            let dz = sol.rows(0, d).into_owned();
            let dmu = sol.rows(d, w).into_owned();

            let s_j = (qp.a.row(j) * &z)[(0, 0)] - qp.b[j];
            // In exact arithmetic n_j·dz = dzᵀHdz ≥ 0. A near-singular KKT
            // system (nearly dependent active rows) returns a noise dz that
            // breaks the identity; such a direction must not drive a primal
            // step, or the step length -s_j/rate explodes.
            let rate_linear = n_j.dot(&dz);
            let rate_quadratic = (dz.transpose() * &qp.h * &dz)[(0, 0)];
            let rate = if (rate_linear - rate_quadratic).abs()
                > 1e-8 * (1.0 + rate_linear.abs())
            {
                0.0
            } else {
                rate_linear
            };
            // A full-rank active set of size d pins dz = 0 exactly; any
            // finite primal step there is numerically spurious.
            let t1 = if w < d && rate > 1e-12 {
                -s_j / rate
            } else {
                f64::INFINITY
            };
            let mut t2 = f64::INFINITY;
            let mut blocking: Option<usize> = None;
            for (r, &mu) in dmu.iter().enumerate() {
                if mu > 1e-12 {
                    let step = lambda[r] / mu;
                    if step < t2 {
                        t2 = step;
                        blocking = Some(r);
                    }
                }
            }

            if !t1.is_finite() && !t2.is_finite() {
                return Ok(QpOutcome::Infeasible);
            }
            let t = t1.min(t2);
            z += &dz * t;
            for (r, l) in lambda.iter_mut().enumerate() {
                *l -= t * dmu[r];
            }
            lam_new += t;

            if t2 < t1 {
                let r = blocking.expect("dual step without blocking constraint");
                active.remove(r);
                lambda.remove(r);
            } else {
                active.push(j);
                lambda.push(lam_new);
                break;
            }
        }
    }
    Err(OptimError::IterationLimit)
}

/// Re-solves the terminal active-set KKT system directly with one iterative
/// refinement pass. The stepwise path accumulates roundoff in the active
/// slacks; the direct solve restores them to the dot-product floor. Reverts
/// if the polished point degrades feasibility or multiplier signs.
fn polish(qp: &DenseQP, active: &[usize], z: &mut DVector<f64>, lambda: &mut [f64]) {
    let d = qp.dim();
    let w = active.len();
    let mut kkt = DMatrix::zeros(d + w, d + w);
    kkt.view_mut((0, 0), (d, d)).copy_from(&qp.h);
    for (r, &i) in active.iter().enumerate() {
        for col in 0..d {
            kkt[(col, d + r)] = -qp.a[(i, col)];
            kkt[(d + r, col)] = qp.a[(i, col)];
        }
    }
    let mut rhs = DVector::zeros(d + w);
    rhs.rows_mut(0, d).copy_from(&(-&qp.c));
    for (r, &i) in active.iter().enumerate() {
        rhs[d + r] = qp.b[i];
    }
    let lu = kkt.clone().lu();
    let Some(mut sol) = lu.solve(&rhs) else {
        return;
    };
    let residual = &kkt * &sol - &rhs;
    if let Some(correction) = lu.solve(&residual) {
        sol -= correction;
    }
    let z_new = sol.rows(0, d).into_owned();
    let lam_new = sol.rows(d, w).into_owned();
    if lam_new.iter().any(|&l| l < -1e-9) {
        return;
    }
    let slack = qp.slacks(&z_new);
    if (0..qp.num_constraints()).any(|jj| slack[jj] < -FEASIBILITY_TOL * (1.0 + z_new.norm())) {
        return;
    }
    z.copy_from(&z_new);
    for (r, l) in lambda.iter_mut().enumerate() {
        *l = lam_new[r].max(0.0);
    }
}

/// Scalar cone constraint a + b·u − cnorm·‖v0 + v1·u‖ ≥ 0, the feasible set
/// of Φ_rob ≥ 0 for a single-input system.
#[derive(Debug, Clone)]
pub struct ScalarConeConstraint {
    pub a: f64,
    pub b: f64,
    pub cnorm: f64,
    pub v0: DVector<f64>,
    pub v1: DVector<f64>,
}

impl ScalarConeConstraint {
    pub fn new(
        a: f64,
        b: f64,
        cnorm: f64,
        v0: DVector<f64>,
        v1: DVector<f64>,
    ) -> Result<Self, OptimError> {
        if cnorm < 0.0 {
            return Err(OptimError::NegativeConeMultiplier);
        }
        if v0.len() != v1.len() {
            return Err(OptimError::Shape("v0 and v1 lengths differ"));
        }
        Ok(Self { a, b, cnorm, v0, v1 })
    }

    /// Constraint margin g(u); the feasible set is {u : g(u) ≥ 0}. Concave.
    pub fn margin(&self, u: f64) -> f64 {
        self.a + self.b * u - self.cnorm * (&self.v0 + &self.v1 * u).norm()
    }
}

/// Feasible set of a concave scalar constraint: empty or an interval, with
/// ±∞ endpoints marking unbounded sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeasibleSet {
    Empty,
    Interval { lo: f64, hi: f64 },
}

impl FeasibleSet {
    pub fn all() -> Self {
        FeasibleSet::Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn half_line_above(lo: f64) -> Self {
        FeasibleSet::Interval {
            lo,
            hi: f64::INFINITY,
        }
    }

    pub fn half_line_below(hi: f64) -> Self {
        FeasibleSet::Interval {
            lo: f64::NEG_INFINITY,
            hi,
        }
    }

    pub fn bounded(lo: f64, hi: f64) -> Self {
        if lo > hi {
            FeasibleSet::Empty
        } else {
            FeasibleSet::Interval { lo, hi }
        }
    }

    pub fn contains(&self, u: f64) -> bool {
        match *self {
            FeasibleSet::Empty => false,
            FeasibleSet::Interval { lo, hi } => u >= lo && u <= hi,
        }
    }

    pub fn intersect(&self, other: &FeasibleSet) -> FeasibleSet {
        match (*self, *other) {
            (FeasibleSet::Empty, _) | (_, FeasibleSet::Empty) => FeasibleSet::Empty,
            (
                FeasibleSet::Interval { lo: a, hi: b },
                FeasibleSet::Interval { lo: c, hi: d },
            ) => FeasibleSet::bounded(a.max(c), b.min(d)),
        }
    }

    pub fn is_unbounded_below(&self) -> bool {
        matches!(self, FeasibleSet::Interval { lo, .. } if lo.is_infinite())
    }

    pub fn is_unbounded_above(&self) -> bool {
        matches!(self, FeasibleSet::Interval { hi, .. } if hi.is_infinite())
    }
}

/// Exact feasible interval of a scalar cone constraint.
///
/// Squaring a + bu ≥ cnorm·‖v0+v1u‖ on the half-plane a + bu ≥ 0 gives a
/// quadratic Q(u) = (a+bu)² − cnorm²‖v0+v1u‖²; the margin's zeros are exactly
/// the real roots of Q at which a + bu ≥ 0, and concavity of the margin turns
/// the zero set into an interval classification.
pub fn feasible_interval(cone: &ScalarConeConstraint) -> FeasibleSet {
    let (a, b, c) = (cone.a, cone.b, cone.cnorm);
    let v00 = cone.v0.dot(&cone.v0);
    let v01 = cone.v0.dot(&cone.v1);
    let v11 = cone.v1.dot(&cone.v1);

    let qa = b * b - c * c * v11;
    let qb = 2.0 * (a * b - c * c * v01);
    let qc = a * a - c * c * v00;

    let scale = (b * b + c * c * v11).max(a * a + c * c * v00).max(1e-300);
    // Degenerate cases where the constraint is effectively linear in u.
    if c * c * v11 <= 1e-14 * scale && c * c * v00 <= 1e-14 * scale {
        return linear_feasible(a, b);
    }
    if qa.abs() <= 1e-14 * scale && qb.abs() <= 1e-14 * scale && qc.abs() <= 1e-14 * scale {
        // Q ≡ 0 means ‖·‖-term equals |a+bu| everywhere: feasible iff a+bu ≥ 0.
        return linear_feasible(a, b);
    }

    let mut zeros = quadratic_roots(qa, qb, qc, scale);
    // Keep only roots on the valid sign branch a + bu ≥ 0.
    zeros.retain(|&r| a + b * r >= -1e-9 * (1.0 + a.abs() + b.abs() * r.abs()));
    zeros.sort_by(|p, q| p.partial_cmp(q).unwrap());
    if zeros.len() == 2 && (zeros[1] - zeros[0]).abs() <= 1e-9 * (1.0 + zeros[1].abs()) {
        zeros = vec![0.5 * (zeros[0] + zeros[1])];
    }

    match zeros.as_slice() {
        [] => {
            // No boundary: the concave margin has constant sign.
            if cone.margin(0.0) >= 0.0 {
                FeasibleSet::all()
            } else {
                FeasibleSet::Empty
            }
        }
        [z] => {
            let step = 1.0 + 1e-3 * z.abs();
            let left = cone.margin(z - step) > 0.0;
            let right = cone.margin(z + step) > 0.0;
            match (left, right) {
                (true, false) => FeasibleSet::half_line_below(*z),
                (false, true) => FeasibleSet::half_line_above(*z),
                (false, false) => FeasibleSet::bounded(*z, *z),
                // Concavity forbids positive on both sides of a zero; if the
                // samples say otherwise the zero is spurious noise.
                (true, true) => FeasibleSet::all(),
            }
        }
        [z1, z2] => FeasibleSet::bounded(*z1, *z2),
        _ => unreachable!("a quadratic has at most two roots"),
    }
}

fn linear_feasible(a: f64, b: f64) -> FeasibleSet {
    if b > 0.0 {
        FeasibleSet::half_line_above(-a / b)
    } else if b < 0.0 {
        FeasibleSet::half_line_below(-a / b)
    } else if a >= 0.0 {
        FeasibleSet::all()
    } else {
        FeasibleSet::Empty
    }
}

fn quadratic_roots(qa: f64, qb: f64, qc: f64, scale: f64) -> Vec<f64> {
    if qa.abs() <= 1e-14 * scale {
        if qb.abs() <= 1e-14 * scale {
            return Vec::new();
        }
        return vec![-qc / qb];
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        if disc > -1e-12 * scale * scale {
            // Tangency within roundoff.
            return vec![-qb / (2.0 * qa)];
        }
        return Vec::new();
    }
    let sq = disc.sqrt();
    let q = -0.5 * (qb + qb.signum() * sq);
    if q.abs() <= f64::MIN_POSITIVE {
        return vec![-qb / (2.0 * qa)];
    }
    vec![q / qa, qc / q]
}

/// Euclidean projection of a desired scalar input onto a feasible set;
/// `None` when the set is empty.
pub fn project_to_interval(u_des: f64, set: &FeasibleSet) -> Option<f64> {
    match *set {
        FeasibleSet::Empty => None,
        FeasibleSet::Interval { lo, hi } => Some(u_des.clamp(lo, hi)),
    }
}

/// Slack-variable restatement of min ‖u−u_des‖² subject to a scalar cone
/// constraint: minimize q − u_des·u over the cone and the rotated
/// second-order-cone condition ‖[√2·u, q−1]‖ ≤ q+1 (equivalent to ½u² ≤ q).
///
/// This transformation exists to verify optimizer preservation; the solve
/// path uses [`feasible_interval`] + [`project_to_interval`] directly.
#[derive(Debug, Clone)]
pub struct RotatedConeProgram {
    pub u_des: f64,
    pub cone: ScalarConeConstraint,
}

pub fn rotated_cone_rewrite(u_des: f64, cone: &ScalarConeConstraint) -> RotatedConeProgram {
    RotatedConeProgram {
        u_des,
        cone: cone.clone(),
    }
}

impl RotatedConeProgram {
    pub fn objective(&self, u: f64, q: f64) -> f64 {
        q - self.u_des * u
    }

    /// ‖[√2·u, q−1]‖ ≤ q+1.
    pub fn rotated_soc_holds(&self, u: f64, q: f64) -> bool {
        (2.0 * u * u + (q - 1.0) * (q - 1.0)).sqrt() <= q + 1.0
    }

    pub fn feasible(&self, u: f64, q: f64) -> bool {
        self.rotated_soc_holds(u, q) && self.cone.margin(u) >= 0.0
    }
}
