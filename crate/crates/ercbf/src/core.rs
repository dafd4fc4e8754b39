//! Control-affine systems, barrier/Lyapunov specifications, and the
//! constraint-value functions Φ shared by every safety filter.
//!
//! All types here are immutable after construction and safe to share across
//! threads; the operations are pure functions of their arguments.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Drift field of a control-affine system: state → ℝⁿ.
pub type DriftFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
/// Input matrix of a control-affine system: state → ℝ^{n×m}.
pub type InputMatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// Scalar barrier value at (state, environment state).
pub type BarrierValueFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
/// Barrier gradient in the state, at (state, environment state).
pub type BarrierGradFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
/// Time-partial of the barrier arising through the environment state:
/// (state, environment state, environment rate) → ℝ.
pub type BarrierTimePartialFn =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
/// Scalar Lyapunov value at a state.
pub type LyapunovValueFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
/// Lyapunov gradient at a state.
pub type LyapunovGradFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("invalid parameter {what}: {why}")]
    InvalidParameter { what: &'static str, why: &'static str },
}

/// The pair (f, g) of ẋ = f(x) + g(x)u with declared dimensions.
#[derive(Clone)]
pub struct ControlAffineSystem {
    n: usize,
    m: usize,
    f: DriftFn,
    g: InputMatrixFn,
}

impl ControlAffineSystem {
    pub fn new<F, G>(n: usize, m: usize, f: F, g: G) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        assert!(n > 0 && m > 0, "state and input dimensions must be positive");
        Self {
            n,
            m,
            f: Arc::new(f),
            g: Arc::new(g),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn drift(&self, x: &DVector<f64>) -> Result<DVector<f64>, CoreError> {
        self.check_state(x)?;
        let fx = (self.f)(x);
        if fx.len() != self.n {
            return Err(CoreError::ShapeMismatch {
                what: "f(x)",
                expected: self.n,
                got: fx.len(),
            });
        }
        Ok(fx)
    }

    pub fn input_matrix(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, CoreError> {
        self.check_state(x)?;
        let gx = (self.g)(x);
        if gx.nrows() != self.n || gx.ncols() != self.m {
            return Err(CoreError::ShapeMismatch {
                what: "g(x)",
                expected: self.n * self.m,
                got: gx.nrows() * gx.ncols(),
            });
        }
        Ok(gx)
    }

    /// f(x) + g(x)u, the closed-loop vector field for a held input.
    pub fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, CoreError> {
        self.check_input(u)?;
        Ok(self.drift(x)? + self.input_matrix(x)? * u)
    }

    pub fn check_state(&self, x: &DVector<f64>) -> Result<(), CoreError> {
        if x.len() != self.n {
            return Err(CoreError::ShapeMismatch {
                what: "state",
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn check_input(&self, u: &DVector<f64>) -> Result<(), CoreError> {
        if u.len() != self.m {
            return Err(CoreError::ShapeMismatch {
                what: "input",
                expected: self.m,
                got: u.len(),
            });
        }
        Ok(())
    }
}

/// A barrier h(x, x_s) with analytic gradient, environment time-partial, and
/// linear class-K rate ν, so α(r) = ν·r exactly.
///
/// Only the linear class-K choice is supported: the robust residual splits
/// α(h + e_h) = α(h) + α(e_h), which holds exactly only for linear α.
#[derive(Clone)]
pub struct BarrierSpec {
    h: BarrierValueFn,
    grad_x_h: BarrierGradFn,
    dh_dt: BarrierTimePartialFn,
    nu: f64,
}

impl BarrierSpec {
    pub fn new<H, Gr, Dt>(h: H, grad_x_h: Gr, dh_dt: Dt, nu: f64) -> Result<Self, CoreError>
    where
        H: Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
        Gr: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        Dt: Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(CoreError::InvalidParameter {
                what: "nu",
                why: "class-K rate must be finite and >= 0",
            });
        }
        Ok(Self {
            h: Arc::new(h),
            grad_x_h: Arc::new(grad_x_h),
            dh_dt: Arc::new(dh_dt),
            nu,
        })
    }

    pub fn value(&self, x: &DVector<f64>, x_s: &DVector<f64>) -> f64 {
        (self.h)(x, x_s)
    }

    pub fn grad_x(&self, x: &DVector<f64>, x_s: &DVector<f64>) -> DVector<f64> {
        (self.grad_x_h)(x, x_s)
    }

    pub fn time_partial(
        &self,
        x: &DVector<f64>,
        x_s: &DVector<f64>,
        x_s_dot: &DVector<f64>,
    ) -> f64 {
        (self.dh_dt)(x, x_s, x_s_dot)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// α(r) = ν·r.
    pub fn alpha(&self, r: f64) -> f64 {
        self.nu * r
    }

    /// L_f h(x, x_s) = ∇_x h · f(x).
    pub fn lie_f(
        &self,
        sys: &ControlAffineSystem,
        x: &DVector<f64>,
        x_s: &DVector<f64>,
    ) -> Result<f64, CoreError> {
        Ok(self.grad_x(x, x_s).dot(&sys.drift(x)?))
    }

    /// L_g h(x, x_s) = ∇_x h · g(x), a row vector of length m.
    pub fn lie_g(
        &self,
        sys: &ControlAffineSystem,
        x: &DVector<f64>,
        x_s: &DVector<f64>,
    ) -> Result<DVector<f64>, CoreError> {
        let grad = self.grad_x(x, x_s);
        let gx = sys.input_matrix(x)?;
        Ok(gx.transpose() * grad)
    }
}

/// A Lyapunov function V(x) with analytic gradient and decrease rate c₃.
#[derive(Clone)]
pub struct LyapunovSpec {
    v: LyapunovValueFn,
    grad_v: LyapunovGradFn,
    c3: f64,
}

impl LyapunovSpec {
    pub fn new<V, Gr>(v: V, grad_v: Gr, c3: f64) -> Result<Self, CoreError>
    where
        V: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        Gr: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        if !(c3 > 0.0 && c3.is_finite()) {
            return Err(CoreError::InvalidParameter {
                what: "c3",
                why: "CLF rate must be finite and > 0",
            });
        }
        Ok(Self {
            v: Arc::new(v),
            grad_v: Arc::new(grad_v),
            c3,
        })
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.v)(x)
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.grad_v)(x)
    }

    pub fn c3(&self) -> f64 {
        self.c3
    }
}

/// Measured environment state x̂_s and its measured rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentEstimate {
    pub x_s_hat: DVector<f64>,
    pub x_s_hat_dot: DVector<f64>,
}

impl EnvironmentEstimate {
    pub fn new(x_s_hat: DVector<f64>, x_s_hat_dot: DVector<f64>) -> Result<Self, CoreError> {
        if x_s_hat.len() != x_s_hat_dot.len() {
            return Err(CoreError::ShapeMismatch {
                what: "environment rate",
                expected: x_s_hat.len(),
                got: x_s_hat_dot.len(),
            });
        }
        if x_s_hat.iter().chain(x_s_hat_dot.iter()).any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite {
                what: "environment estimate",
            });
        }
        Ok(Self {
            x_s_hat,
            x_s_hat_dot,
        })
    }

    pub fn dim(&self) -> usize {
        self.x_s_hat.len()
    }
}

/// Worst-case barrier errors over the environment-error box: the minima
/// e_h*, e_∂h/∂t* and the norm maximum e_∇h*.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCaseErrors {
    pub e_h_star: f64,
    pub e_grad_h_star: f64,
    pub e_dhdt_star: f64,
}

impl WorstCaseErrors {
    pub fn new(e_h_star: f64, e_grad_h_star: f64, e_dhdt_star: f64) -> Result<Self, CoreError> {
        if !(e_h_star.is_finite() && e_grad_h_star.is_finite() && e_dhdt_star.is_finite()) {
            return Err(CoreError::NonFinite {
                what: "worst-case errors",
            });
        }
        if e_grad_h_star < 0.0 {
            return Err(CoreError::InvalidParameter {
                what: "e_grad_h_star",
                why: "norm maximum cannot be negative",
            });
        }
        Ok(Self {
            e_h_star,
            e_grad_h_star,
            e_dhdt_star,
        })
    }

    /// All three errors zero: the exact-measurement case.
    pub fn zero() -> Self {
        Self {
            e_h_star: 0.0,
            e_grad_h_star: 0.0,
            e_dhdt_star: 0.0,
        }
    }
}

/// Φ_nom(x, x_s, u) = ∂h/∂t + L_f h + L_g h·u + α(h), evaluated at the given
/// environment state. Affine in u.
pub fn phi_nominal(
    sys: &ControlAffineSystem,
    bar: &BarrierSpec,
    x: &DVector<f64>,
    x_s: &DVector<f64>,
    x_s_dot: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64, CoreError> {
    sys.check_input(u)?;
    let lgh = bar.lie_g(sys, x, x_s)?;
    Ok(bar.time_partial(x, x_s, x_s_dot)
        + bar.lie_f(sys, x, x_s)?
        + lgh.dot(u)
        + bar.alpha(bar.value(x, x_s)))
}

/// Φ_rob(x, x̂_s, u) = Φ_nom at the estimate minus the worst-case residual:
/// −e_∇h*·‖f(x)+g(x)u‖ + e_∂h/∂t* + α(e_h*). Concave in u.
pub fn phi_robust(
    sys: &ControlAffineSystem,
    bar: &BarrierSpec,
    x: &DVector<f64>,
    est: &EnvironmentEstimate,
    wce: &WorstCaseErrors,
    u: &DVector<f64>,
) -> Result<f64, CoreError> {
    let nominal = phi_nominal(sys, bar, x, &est.x_s_hat, &est.x_s_hat_dot, u)?;
    let closed_loop = sys.dynamics(x, u)?;
    Ok(nominal - wce.e_grad_h_star * closed_loop.norm()
        + wce.e_dhdt_star
        + bar.alpha(wce.e_h_star))
}


#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    use super::*;

    fn constant_barrier(nu: f64) -> BarrierSpec {
        BarrierSpec::new(
            |_x, _xs| 1.0,
            |x, _xs| DVector::zeros(x.len()),
            |_x, _xs, _xsd| 0.0,
            nu,
        )
        .unwrap()
    }

    fn random_affine_system(rng: &mut StdRng, n: usize, m: usize) -> ControlAffineSystem {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let g = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
        ControlAffineSystem::new(
            n,
            m,
            move |x: &DVector<f64>| &a * x + &b,
            move |_x: &DVector<f64>| g.clone(),
        )
    }

    fn random_quadratic_barrier(rng: &mut StdRng, n: usize, p: usize) -> BarrierSpec {
        let q = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let w = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
        let c = rng.gen_range(-1.0..1.0);
        let q2 = q.clone();
        let w2 = w.clone();
        BarrierSpec::new(
            move |x: &DVector<f64>, xs: &DVector<f64>| {
                q.dot(x) + w.dot(xs) + c - 0.5 * x.norm_squared()
            },
            move |x: &DVector<f64>, _xs: &DVector<f64>| &q2 - x,
            move |_x: &DVector<f64>, _xs: &DVector<f64>, xsd: &DVector<f64>| w2.dot(xsd),
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn constant_barrier_only_alpha_survives() {
        let sys = ControlAffineSystem::new(
            2,
            1,
            |x: &DVector<f64>| x.clone(),
            |_x: &DVector<f64>| DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        );
        let bar = constant_barrier(5.0);
        let x = DVector::from_column_slice(&[0.3, -0.7]);
        let xs = DVector::from_column_slice(&[1.0]);
        let xsd = DVector::from_column_slice(&[0.0]);
        for u_val in [-10.0, 0.0, 3.5] {
            let u = DVector::from_column_slice(&[u_val]);
            let phi = phi_nominal(&sys, &bar, &x, &xs, &xsd, &u).unwrap();
            assert!((phi - 5.0).abs() < 1e-12, "phi = {phi}");
        }
    }

    #[test]
    fn phi_nominal_affine_in_u() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let sys = random_affine_system(&mut rng, 3, 2);
            let bar = random_quadratic_barrier(&mut rng, 3, 2);
            let x = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let xs = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let xsd = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let u1 = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let u2 = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let lam: f64 = rng.gen_range(0.0..1.0);
            let mix = &u1 * lam + &u2 * (1.0 - lam);
            let p = |u: &DVector<f64>| phi_nominal(&sys, &bar, &x, &xs, &xsd, u).unwrap();
            assert!(
                (p(&mix) - (lam * p(&u1) + (1.0 - lam) * p(&u2))).abs() < 1e-12,
                "affinity violated"
            );
            // Increment form: Φ(u1+u2) − Φ(0) = (Φ(u1)−Φ(0)) + (Φ(u2)−Φ(0)).
            let zero = DVector::zeros(2);
            let lhs = p(&(&u1 + &u2)) - p(&zero);
            let rhs = (p(&u1) - p(&zero)) + (p(&u2) - p(&zero));
            assert!((lhs - rhs).abs() < 1e-11);
        }
    }

    #[test]
    fn phi_robust_zero_residual_matches_nominal() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let sys = random_affine_system(&mut rng, 2, 1);
            let bar = random_quadratic_barrier(&mut rng, 2, 2);
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let est = EnvironmentEstimate::new(
                DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0)),
                DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0)),
            )
            .unwrap();
            let u = DVector::from_fn(1, |_, _| rng.gen_range(-3.0..3.0));
            let rob =
                phi_robust(&sys, &bar, &x, &est, &WorstCaseErrors::zero(), &u).unwrap();
            let nom =
                phi_nominal(&sys, &bar, &x, &est.x_s_hat, &est.x_s_hat_dot, &u).unwrap();
            assert_eq!(rob, nom);
        }
    }

    #[test]
    fn phi_robust_norm_term_direct_substitution() {
        // e_grad = 1 and ‖f+gu‖ = 2 must shift Φ by exactly −2.
        let sys = ControlAffineSystem::new(
            2,
            1,
            |_x: &DVector<f64>| DVector::from_column_slice(&[2.0, 0.0]),
            |_x: &DVector<f64>| DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        );
        let bar = constant_barrier(1.0);
        let x = DVector::zeros(2);
        let est = EnvironmentEstimate::new(DVector::zeros(1), DVector::zeros(1)).unwrap();
        let wce = WorstCaseErrors::new(0.0, 1.0, 0.0).unwrap();
        let u = DVector::zeros(1);
        let rob = phi_robust(&sys, &bar, &x, &est, &wce, &u).unwrap();
        let nom = phi_nominal(&sys, &bar, &x, &est.x_s_hat, &est.x_s_hat_dot, &u).unwrap();
        assert!((rob - (nom - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn phi_robust_lower_bounds_nominal_for_signed_errors() {
        // e_h* ≤ 0, e_∂h/∂t* ≤ 0, e_∇h* ≥ 0 ⇒ Φ_rob ≤ Φ_nom at the estimate.
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..1000 {
            let sys = random_affine_system(&mut rng, 2, 1);
            let bar = random_quadratic_barrier(&mut rng, 2, 2);
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let est = EnvironmentEstimate::new(
                DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0)),
                DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0)),
            )
            .unwrap();
            let wce = WorstCaseErrors::new(
                -rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                -rng.gen_range(0.0..1.0),
            )
            .unwrap();
            let u = DVector::from_fn(1, |_, _| rng.gen_range(-3.0..3.0));
            let rob = phi_robust(&sys, &bar, &x, &est, &wce, &u).unwrap();
            let nom =
                phi_nominal(&sys, &bar, &x, &est.x_s_hat, &est.x_s_hat_dot, &u).unwrap();
            assert!(rob <= nom + 1e-12);
        }
    }

    #[test]
    fn phi_robust_concave_in_u() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..200 {
            let sys = random_affine_system(&mut rng, 3, 2);
            let bar = random_quadratic_barrier(&mut rng, 3, 2);
            let x = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let est = EnvironmentEstimate::new(
                DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0)),
                DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0)),
            )
            .unwrap();
            let wce = WorstCaseErrors::new(-0.5, rng.gen_range(0.0..2.0), -0.3).unwrap();
            let u1 = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let u2 = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let lam: f64 = rng.gen_range(0.0..1.0);
            let mix = &u1 * lam + &u2 * (1.0 - lam);
            let p = |u: &DVector<f64>| phi_robust(&sys, &bar, &x, &est, &wce, u).unwrap();
            assert!(p(&mix) >= lam * p(&u1) + (1.0 - lam) * p(&u2) - 1e-10);
        }
    }

    #[test]
    fn cauchy_schwarz_residual_step() {
        // e·(f+gu) ≥ −E‖f+gu‖ whenever ‖e‖ ≤ E: the Φ_rob lower-bound step.
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..10_000 {
            let n = rng.gen_range(1..=4);
            let v = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
            let bound: f64 = rng.gen_range(0.0..2.0);
            let mut e = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            if e.norm() > 0.0 {
                e *= rng.gen_range(0.0..1.0) * bound / e.norm();
            }
            assert!(e.dot(&v) >= -bound * v.norm() - 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let sys = ControlAffineSystem::new(
            2,
            1,
            |x: &DVector<f64>| x.clone(),
            |_x: &DVector<f64>| DMatrix::zeros(2, 1),
        );
        let bar = constant_barrier(1.0);
        let x = DVector::zeros(3); // wrong state dimension
        let xs = DVector::zeros(1);
        let xsd = DVector::zeros(1);
        let u = DVector::zeros(1);
        assert!(matches!(
            phi_nominal(&sys, &bar, &x, &xs, &xsd, &u),
            Err(CoreError::ShapeMismatch { .. })
        ));
        let u_bad = DVector::zeros(2); // wrong input dimension
        let x_ok = DVector::zeros(2);
        assert!(matches!(
            phi_nominal(&sys, &bar, &x_ok, &xs, &xsd, &u_bad),
            Err(CoreError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn worst_case_errors_validation() {
        assert!(WorstCaseErrors::new(0.0, -0.1, 0.0).is_err());
        assert!(WorstCaseErrors::new(f64::NAN, 0.0, 0.0).is_err());
        assert!(WorstCaseErrors::new(-1.0, 0.5, -0.2).is_ok());
    }

    #[test]
    fn alpha_is_linear() {
        let bar = constant_barrier(3.5);
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..100 {
            let a = rng.gen_range(-10.0..10.0);
            let b = rng.gen_range(-10.0..10.0);
            assert_eq!(bar.alpha(a) + bar.alpha(b), bar.alpha(a) + bar.alpha(b));
            assert!((bar.alpha(a + b) - (bar.alpha(a) + bar.alpha(b))).abs() < 1e-12);
        }
    }
}
