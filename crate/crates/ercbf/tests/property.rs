//! Property-based invariants over the solver and filter primitives.

mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use common::random_scalar_instance;
use ercbf::core::{phi_nominal, phi_robust, EnvironmentEstimate, WorstCaseErrors};
use ercbf::optim::{
    feasible_interval, project_to_interval, solve_qp, DenseQP, FeasibleSet, QpOutcome,
    ScalarConeConstraint, FEASIBILITY_TOL, STATIONARITY_TOL,
};

fn cone_strategy() -> impl Strategy<Value = ScalarConeConstraint> {
    (
        -3.0f64..3.0,
        -3.0f64..3.0,
        0.0f64..2.0,
        prop::array::uniform2(-2.0f64..2.0),
        prop::array::uniform2(-2.0f64..2.0),
    )
        .prop_map(|(a, b, c, v0, v1)| {
            ScalarConeConstraint::new(
                a,
                b,
                c,
                DVector::from_column_slice(&v0),
                DVector::from_column_slice(&v1),
            )
            .unwrap()
        })
}

proptest! {
    /// Interval membership must agree with the sign of the margin away from
    /// the boundary.
    #[test]
    fn cone_membership_matches_margin(cone in cone_strategy(), u in -30.0f64..30.0) {
        let set = feasible_interval(&cone);
        let margin = cone.margin(u);
        if margin > 1e-6 {
            prop_assert!(set.contains(u), "margin {margin} but not a member");
        }
        if margin < -1e-6 {
            prop_assert!(!set.contains(u), "margin {margin} but member");
        }
    }

    /// Finite interval endpoints sit on the constraint boundary.
    #[test]
    fn cone_endpoints_feasible(cone in cone_strategy()) {
        if let FeasibleSet::Interval { lo, hi } = feasible_interval(&cone) {
            if lo.is_finite() {
                prop_assert!(cone.margin(lo) >= -1e-9);
            }
            if hi.is_finite() {
                prop_assert!(cone.margin(hi) >= -1e-9);
            }
        }
    }

    /// The projection is feasible and no feasible point is closer to the
    /// desired input.
    #[test]
    fn projection_is_optimal(cone in cone_strategy(), u_des in -10.0f64..10.0, probe in -30.0f64..30.0) {
        let set = feasible_interval(&cone);
        if let Some(p) = project_to_interval(u_des, &set) {
            prop_assert!(set.contains(p));
            if set.contains(probe) {
                prop_assert!((p - u_des).abs() <= (probe - u_des).abs() + 1e-12);
            }
        } else if cone.margin(probe) > 1e-6 {
            prop_assert!(false, "projection empty but {probe} is feasible");
        }
    }

    /// Every optimal QP answer carries a valid KKT certificate. Random
    /// near-antiparallel constraint pairs can form sliver wedges where the
    /// minimizer and multipliers grow unboundedly; there the exact-arithmetic
    /// complementary-slackness product (zero) is only computable down to the
    /// f64 roundoff floor ε·λ·(‖A_j‖‖z‖ + |b_j|), so that floor joins the
    /// absolute tolerance.
    #[test]
    fn qp_solutions_satisfy_kkt(
        hseed in prop::array::uniform4(-1.0f64..1.0),
        c in prop::array::uniform2(-2.0f64..2.0),
        rows in prop::collection::vec((prop::array::uniform2(-1.0f64..1.0), -1.5f64..0.8), 1..6),
    ) {
        let m = DMatrix::from_row_slice(2, 2, &hseed);
        let h = m.transpose() * &m + DMatrix::identity(2, 2) * 0.3;
        let k = rows.len();
        let a = DMatrix::from_fn(k, 2, |i, j| rows[i].0[j]);
        let b = DVector::from_fn(k, |i, _| rows[i].1);
        let qp = DenseQP::new(h.clone(), DVector::from_column_slice(&c), a.clone(), b.clone()).unwrap();
        let outcome = match solve_qp(&qp) {
            Ok(outcome) => outcome,
            // Declining to certify is a legitimate answer on adversarial
            // near-degenerate constraint geometry; a wrong certificate is not.
            Err(ercbf::optim::OptimError::NumericalBreakdown) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(format!("solver error: {e}"))),
        };
        if let QpOutcome::Optimal { z, active_set, multipliers } = outcome {
            let slack = &a * &z - &b;
            for j in 0..k {
                prop_assert!(slack[j] >= -FEASIBILITY_TOL * (1.0 + z.norm()));
            }
            let mut lam = DVector::zeros(k);
            for (r, &i) in active_set.iter().enumerate() {
                prop_assert!(multipliers[r] >= -1e-10);
                lam[i] = multipliers[r];
            }
            let stat = &h * &z + DVector::from_column_slice(&c) - a.transpose() * &lam;
            prop_assert!(stat.norm() <= STATIONARITY_TOL * (1.0 + lam.norm() + z.norm()));
            for j in 0..k {
                let roundoff_floor =
                    f64::EPSILON * lam[j] * (a.row(j).norm() * z.norm() + b[j].abs());
                prop_assert!(
                    (lam[j] * slack[j]).abs() <= STATIONARITY_TOL + 64.0 * roundoff_floor,
                    "constraint {}: lam {} slack {}", j, lam[j], slack[j]
                );
            }
        }
    }

    /// Φ_nom is affine in u and Φ_rob is its concave under-approximation for
    /// sign-correct worst-case errors.
    #[test]
    fn phi_structure(seed in 0u64..5000, lam in 0.0f64..1.0, u1 in -4.0f64..4.0, u2 in -4.0f64..4.0) {
        let mut rng = StdRng::seed_from_u64(seed);
        let inst = random_scalar_instance(&mut rng);
        let est = EnvironmentEstimate::new(inst.x_s.clone(), inst.x_s_dot.clone()).unwrap();
        let wce = WorstCaseErrors::new(-0.3, 0.25, -0.2).unwrap();
        let p_nom = |u: f64| phi_nominal(
            &inst.sys, &inst.bar, &inst.x, &inst.x_s, &inst.x_s_dot,
            &DVector::from_element(1, u),
        ).unwrap();
        let p_rob = |u: f64| phi_robust(
            &inst.sys, &inst.bar, &inst.x, &est, &wce,
            &DVector::from_element(1, u),
        ).unwrap();
        let mix = lam * u1 + (1.0 - lam) * u2;
        prop_assert!((p_nom(mix) - (lam * p_nom(u1) + (1.0 - lam) * p_nom(u2))).abs() < 1e-9);
        prop_assert!(p_rob(mix) >= lam * p_rob(u1) + (1.0 - lam) * p_rob(u2) - 1e-10);
        let p_nom_at_est = phi_nominal(
            &inst.sys, &inst.bar, &inst.x, &est.x_s_hat, &est.x_s_hat_dot,
            &DVector::from_element(1, u1),
        ).unwrap();
        prop_assert!(p_rob(u1) <= p_nom_at_est + 1e-12);
    }

    /// 17-significant-digit decimal formatting round-trips any finite f64.
    #[test]
    fn csv_float_format_round_trips(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let text = format!("{v:.16e}");
        let back: f64 = text.parse().unwrap();
        prop_assert_eq!(v.to_bits(), back.to_bits());
    }
}
