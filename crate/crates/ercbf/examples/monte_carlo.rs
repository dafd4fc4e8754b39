//! Seeded Monte Carlo batches: forward invariance of the robust filters over
//! in-bounds measurement errors, and the violation rate of the nominal
//! filter under an adversarial stress scenario.
//!
//! Run with: cargo run --release -p ercbf --example monte_carlo
//! (ERCBF_THREADS caps parallelism.)

use std::path::Path;

use ercbf::sim::{monte_carlo, ControllerKind};

fn main() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");

    println!("forward invariance: 50 seeded runs per controller, fresh in-bounds errors each tick");
    let config = ercbf::cli::load_config(&configs.join("paper_fig2.json")).unwrap();
    let mut sim = config.to_sim_config().unwrap();
    sim.resample_measurement = true;
    for kind in [ControllerKind::Nominal, ControllerKind::Socp, ControllerKind::Qp] {
        sim.controller = kind;
        let summary = monte_carlo(&sim, 50).unwrap();
        println!(
            "  {:8}: violation_rate {:5.3}  worst min h_true {:8.3} m  infeasible steps {}",
            kind.name(),
            summary.violation_rate,
            summary.worst_min_h_true,
            summary.total_infeasible_steps
        );
    }

    println!("\nstress scenario: adversarial corner measurements while the lead brakes");
    let config = ercbf::cli::load_config(&configs.join("stress_brake.json")).unwrap();
    let mut sim = config.to_sim_config().unwrap();
    for kind in [ControllerKind::Nominal, ControllerKind::Qp] {
        sim.controller = kind;
        let summary = monte_carlo(&sim, 30).unwrap();
        println!(
            "  {:8}: violation_rate {:5.3}  worst min h_true {:8.3} m  worst min gap {:7.2} m",
            kind.name(),
            summary.violation_rate,
            summary.worst_min_h_true,
            summary.worst_min_gap
        );
    }
}
