//! The robust QP route: freeze the norm residual at the nominally safe
//! input, bound the necessary modification by ū_δ, and solve the resulting
//! linear-constraint QP — in closed form, u_rob = u_nom* + u_δ̂.
//!
//! Run with: cargo run -p ercbf --example robust_qp_closed_form

use nalgebra::DVector;

use ercbf::acc::{
    acc_barrier, acc_clf, acc_error_expressions, acc_system, kmh_to_mps, AccErrorBounds,
    VehicleParams,
};
use ercbf::controllers::{
    cbf_qp_closed_form, clf_desired_input, er_cbf_qp, er_cbf_qp_closed_form, er_cbf_socp,
    u_delta_bound, worst_case_errors,
};
use ercbf::core::EnvironmentEstimate;

fn main() {
    let params = VehicleParams::default_car();
    let sys = acc_system(&params);
    let bar = acc_barrier(&params, 5.0);
    let model = acc_error_expressions(&params);
    let lyap = acc_clf(kmh_to_mps(120.0), 5.0).unwrap();
    let bounds = AccErrorBounds::new(1.0, 1.0, 0.0).unwrap();

    let x = DVector::from_column_slice(&[0.0, 27.78]);
    let est = EnvironmentEstimate::new(
        DVector::from_column_slice(&[38.0, 25.0]),
        DVector::from_column_slice(&[25.0, -0.5]),
    )
    .unwrap();

    let wce = worst_case_errors(&model, &bounds.to_error_bounds(), &x, &est).unwrap();

    // Stage 1: nominally safe input at the measured environment state.
    let u_des = clf_desired_input(&sys, &lyap, &x).unwrap();
    let nominal =
        cbf_qp_closed_form(&sys, &bar, &x, &est.x_s_hat, &est.x_s_hat_dot, &u_des).unwrap();
    println!("u_des (CLF)        : {:10.1} N", u_des[0]);
    println!("u_nom* (CBF-QP)    : {:10.1} N", nominal.u[0]);

    // Stage 2: bound the modification and robustify.
    let bound = u_delta_bound(&sys, &bar, &x, &est, &wce, &nominal.u).unwrap();
    println!("u_delta bound      : {:10.1} N", bound);

    let closed = er_cbf_qp_closed_form(&sys, &bar, &x, &est, &wce, &nominal.u).unwrap();
    println!(
        "closed form        : u_rob = u_nom* + u_delta_hat = {:10.1} + {:8.1} = {:10.1} N",
        nominal.u[0],
        closed.u_delta.unwrap(),
        closed.u[0]
    );
    assert!(closed.u_delta.unwrap().abs() <= bound + 1e-9);

    let numeric = er_cbf_qp(&sys, &bar, &x, &est, &wce, &nominal.u, &[]).unwrap();
    println!(
        "active-set QP      : u_rob = {:10.1} N  (|closed - numeric| = {:.2e})",
        numeric.u[0],
        (closed.u[0] - numeric.u[0]).abs()
    );

    let socp = er_cbf_socp(&sys, &bar, &x, &est, &wce, &nominal.u, &[]).unwrap();
    println!(
        "SOCP for reference : u_rob = {:10.1} N  (conservatism gap = {:.1} N)",
        socp.u[0],
        (closed.u[0] - socp.u[0]).abs()
    );
}
