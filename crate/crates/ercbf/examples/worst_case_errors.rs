//! Worst-case environment-error extremization for the cruise-control
//! barrier: the analytic error expressions are minimized/maximized exactly
//! over the measurement-error box, and the resulting barrier uncertainty
//! band brackets the true barrier value.
//!
//! Run with: cargo run -p ercbf --example worst_case_errors

use nalgebra::DVector;

use ercbf::acc::{acc_barrier, acc_error_expressions, AccErrorBounds, VehicleParams};
use ercbf::controllers::worst_case_errors_detailed;
use ercbf::core::EnvironmentEstimate;
use ercbf::sim::h_uncertainty_band;

fn main() {
    let params = VehicleParams::default_car();
    let bar = acc_barrier(&params, 5.0);
    let model = acc_error_expressions(&params);
    let bounds = AccErrorBounds::new(1.0, 1.0, 0.0).unwrap();

    let x = DVector::from_column_slice(&[0.0, 27.78]);
    let est = EnvironmentEstimate::new(
        DVector::from_column_slice(&[80.0, 27.78]),
        DVector::from_column_slice(&[27.78, 0.0]),
    )
    .unwrap();

    let analysis =
        worst_case_errors_detailed(&model, &bounds.to_error_bounds(), &x, &est).unwrap();
    let wce = analysis.wce;
    println!("measurement-error box: |e_p| <= {} m, |e_v| <= {} m/s, |e_v_dot| <= {} m/s^2", bounds.e_p, bounds.e_v, bounds.e_vdot);
    println!("e_h*      = {:9.5} m      at (e_p, e_v) = ({:+.2}, {:+.2})  corner: {}",
        wce.e_h_star, analysis.e_h.arg[0], analysis.e_h.arg[1], analysis.e_h.at_corner);
    println!("e_grad_h* = {:9.5}        at e_v = {:+.2}                corner: {}",
        wce.e_grad_h_star, analysis.e_grad_h.arg[1], analysis.e_grad_h.at_corner);
    println!("e_dhdt*   = {:9.5} m/s    at (e_v, e_v_dot) = ({:+.2}, {:+.2})  corner: {}",
        wce.e_dhdt_star, analysis.e_dhdt.arg[1], analysis.e_dhdt.arg[3], analysis.e_dhdt.at_corner);
    println!("extremizers share a corner: {}", analysis.common_corner_extremizer());

    let h_meas = bar.value(&x, &est.x_s_hat);
    let (lo, hi) =
        h_uncertainty_band(&bar, &model, &bounds.to_error_bounds(), &x, &est).unwrap();
    println!("\nh(x, x_s_hat) = {h_meas:.3} m, uncertainty band = [{lo:.3}, {hi:.3}] m");

    // Every in-box error realization keeps the true h inside the band.
    let mut worst_low = f64::INFINITY;
    let mut worst_high = f64::NEG_INFINITY;
    let samples = 50;
    for i in 0..=samples {
        for j in 0..=samples {
            let e_p = -bounds.e_p + 2.0 * bounds.e_p * i as f64 / samples as f64;
            let e_v = -bounds.e_v + 2.0 * bounds.e_v * j as f64 / samples as f64;
            let xs_true = DVector::from_column_slice(&[
                est.x_s_hat[0] + e_p,
                est.x_s_hat[1] + e_v,
            ]);
            let h_true = bar.value(&x, &xs_true);
            worst_low = worst_low.min(h_true);
            worst_high = worst_high.max(h_true);
            assert!(h_true >= lo - 1e-9 && h_true <= hi + 1e-9);
        }
    }
    println!("sampled true-h range over the box: [{worst_low:.3}, {worst_high:.3}] m (inside the band)");
}
