//! Environmentally robust filtering as a scalar cone program: the robust
//! constraint Φ_rob ≥ 0 has an exactly computable feasible interval, the
//! filter projects the desired input onto it, and tightening the error
//! bounds far enough empties the interval (infeasibility is reported, never
//! patched with slack).
//!
//! Run with: cargo run -p ercbf --example robust_socp_filter

use nalgebra::DVector;

use ercbf::acc::{
    acc_barrier, acc_error_expressions, acc_system, AccErrorBounds, VehicleParams,
};
use ercbf::controllers::{er_cbf_socp, worst_case_errors, LinearConstraint};
use ercbf::core::{EnvironmentEstimate, WorstCaseErrors};
use ercbf::optim::{feasible_interval, rotated_cone_rewrite, FeasibleSet, ScalarConeConstraint};

fn main() {
    let params = VehicleParams::default_car();
    let sys = acc_system(&params);
    let bar = acc_barrier(&params, 5.0);
    let model = acc_error_expressions(&params);

    // Tight spot: lead 35 m ahead and slower; braking authority capped at
    // the barrier's assumed maximum deceleration c_d·g.
    let x = DVector::from_column_slice(&[0.0, 27.78]);
    let est = EnvironmentEstimate::new(
        DVector::from_column_slice(&[35.0, 24.0]),
        DVector::from_column_slice(&[24.0, 0.0]),
    )
    .unwrap();
    let u_des = DVector::from_element(1, 500.0);
    let u_floor = -params.mass * params.max_decel() * 15.0;
    let actuation = LinearConstraint {
        coeff: DVector::from_element(1, 1.0),
        min_value: u_floor,
    };

    println!("actuation floor: u >= {u_floor:.0} N");
    for (label, bounds) in [
        ("exact measurements", AccErrorBounds::zero()),
        ("paper bounds      ", AccErrorBounds::new(1.0, 1.0, 0.0).unwrap()),
        ("inflated bounds   ", AccErrorBounds::new(12.0, 6.0, 1.0).unwrap()),
    ] {
        let wce = worst_case_errors(&model, &bounds.to_error_bounds(), &x, &est).unwrap();
        let res =
            er_cbf_socp(&sys, &bar, &x, &est, &wce, &u_des, std::slice::from_ref(&actuation))
                .unwrap();
        let interval = robust_interval(&sys, &bar, &x, &est, &wce)
            .intersect(&FeasibleSet::half_line_above(u_floor));
        match interval {
            FeasibleSet::Empty => println!(
                "{label}: robust set empty within actuation -> status {:?}",
                res.status
            ),
            FeasibleSet::Interval { lo, hi } => println!(
                "{label}: feasible u in [{:9.1}, {:9.1}] N -> u = {:9.1} N ({:?}, Phi_rob = {:+.2e})",
                lo, hi, res.u[0], res.status, res.phi_value
            ),
        }
    }

    // The slack-variable rewrite used in conic form preserves the optimizer.
    let wce = WorstCaseErrors::new(-1.17, 0.34, -1.0).unwrap();
    let cone = build_cone(&sys, &bar, &x, &est, &wce);
    let prog = rotated_cone_rewrite(u_des[0], &cone);
    let direct = er_cbf_socp(&sys, &bar, &x, &est, &wce, &u_des, &[]).unwrap();
    let mut best = (f64::INFINITY, f64::NAN);
    let n = 600_000;
    for i in 0..=n {
        let u = -100_000.0 + 120_000.0 * (i as f64) / (n as f64);
        let q = 0.5 * u * u;
        if prog.feasible(u, q) {
            let obj = prog.objective(u, q);
            if obj < best.0 {
                best = (obj, u);
            }
        }
    }
    println!(
        "\nrotated-cone rewrite argmin {:9.1} N vs interval projection {:9.1} N",
        best.1, direct.u[0]
    );
}

fn build_cone(
    sys: &ercbf::core::ControlAffineSystem,
    bar: &ercbf::core::BarrierSpec,
    x: &DVector<f64>,
    est: &EnvironmentEstimate,
    wce: &WorstCaseErrors,
) -> ScalarConeConstraint {
    let lgh = bar.lie_g(sys, x, &est.x_s_hat).unwrap()[0];
    let affine = bar.time_partial(x, &est.x_s_hat, &est.x_s_hat_dot)
        + bar.lie_f(sys, x, &est.x_s_hat).unwrap()
        + bar.nu() * bar.value(x, &est.x_s_hat)
        + wce.e_dhdt_star
        + bar.nu() * wce.e_h_star;
    ScalarConeConstraint::new(
        affine,
        lgh,
        wce.e_grad_h_star,
        sys.drift(x).unwrap(),
        sys.input_matrix(x).unwrap().column(0).into_owned(),
    )
    .unwrap()
}

fn robust_interval(
    sys: &ercbf::core::ControlAffineSystem,
    bar: &ercbf::core::BarrierSpec,
    x: &DVector<f64>,
    est: &EnvironmentEstimate,
    wce: &WorstCaseErrors,
) -> FeasibleSet {
    feasible_interval(&build_cone(sys, bar, x, est, wce))
}
