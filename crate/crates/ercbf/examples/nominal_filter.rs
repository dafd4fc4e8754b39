//! Nominal CBF safety filtering on a single cruise-control state: the CLF
//! proposes an input, the filter minimally modifies it so the rear-end
//! barrier constraint Φ_nom ≥ 0 holds, and the closed form agrees with the
//! active-set QP.
//!
//! Run with: cargo run -p ercbf --example nominal_filter

use nalgebra::DVector;

use ercbf::acc::{acc_barrier, acc_clf, acc_system, kmh_to_mps, speed_limit_barriers, VehicleParams};
use ercbf::controllers::{cbf_qp_closed_form, cbf_qp_numeric, clf_desired_input, LinearConstraint};
use ercbf::core::phi_nominal;

fn main() {
    let params = VehicleParams::default_car();
    let sys = acc_system(&params);
    let bar = acc_barrier(&params, 5.0);
    let lyap = acc_clf(kmh_to_mps(120.0), 5.0).unwrap();

    // Ego at 27.78 m/s wants 120 km/h; the lead is 40 m ahead at 24 m/s.
    let x = DVector::from_column_slice(&[0.0, 27.78]);
    let x_s = DVector::from_column_slice(&[40.0, 24.0]);
    let x_s_dot = DVector::from_column_slice(&[24.0, 0.0]);

    let u_des = clf_desired_input(&sys, &lyap, &x).unwrap();
    let phi_at_desired = phi_nominal(&sys, &bar, &x, &x_s, &x_s_dot, &u_des).unwrap();
    println!("CLF desired input : {:10.1} N", u_des[0]);
    println!("Phi_nom(u_des)    : {:10.3}  (negative: unsafe to apply)", phi_at_desired);

    let closed = cbf_qp_closed_form(&sys, &bar, &x, &x_s, &x_s_dot, &u_des).unwrap();
    println!(
        "closed form       : u = {:10.1} N  branch {:?}  Phi_nom(u) = {:.3e}",
        closed.u[0], closed.branch, closed.phi_value
    );

    // Numeric path with the road speed limits as extra linear constraints.
    let (upper, lower) = speed_limit_barriers(kmh_to_mps(120.0), kmh_to_mps(60.0), 5.0);
    let extra = [
        LinearConstraint::from_barrier(&sys, &upper, &x, &x_s, &x_s_dot).unwrap(),
        LinearConstraint::from_barrier(&sys, &lower, &x, &x_s, &x_s_dot).unwrap(),
    ];
    let numeric = cbf_qp_numeric(&sys, &[&bar], &x, &x_s, &x_s_dot, &u_des, &extra).unwrap();
    println!(
        "active-set QP     : u = {:10.1} N  (|closed - numeric| = {:.2e})",
        numeric.u[0],
        (closed.u[0] - numeric.u[0]).abs()
    );
}
