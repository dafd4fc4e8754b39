//! Environmentally robust control barrier function (ER-CBF) safety filters,
//! with an adaptive cruise control testbed.
//!
//! A safety filter minimally modifies a desired control input so a barrier
//! constraint keeps the system inside a safe set. When the barrier depends on
//! a *measured* environment state (here: a lead vehicle observed with bounded
//! error), the nominal constraint certifies nothing about the true state.
//! This crate implements the worst-case robustification of that constraint
//! and the three resulting filters:
//!
//! - **Nominal CBF-QP** — [`controllers::cbf_qp_numeric`] and its single
//!   constraint closed form [`controllers::cbf_qp_closed_form`].
//! - **Robust SOCP** — [`controllers::er_cbf_socp`]: the robust constraint
//!   Φ_rob carries a −e_∇h*·‖f+gu‖ residual, making the feasible set of a
//!   scalar input an exactly computable interval ([`optim::feasible_interval`]).
//! - **Robust QP** — [`controllers::er_cbf_qp`]: freezing the norm residual at
//!   the nominally safe input u_nom* and inflating it by the modification
//!   bound ū_δ ([`controllers::u_delta_bound`]) restores linearity; the closed
//!   form is u_rob = u_nom* + u_δ̂ ([`controllers::er_cbf_qp_closed_form`]).
//!
//! The worst-case errors e_h*, e_∇h*, e_∂h/∂t* are extremized exactly over a
//! componentwise error box for expressions of degree at most two
//! ([`controllers::worst_case_errors`]).
//!
//! Module map: [`core`] holds systems, barriers, and the Φ constraint values;
//! [`optim`] the dense active-set QP and scalar cone machinery;
//! [`controllers`] the filters and the worst-case engine; [`acc`] the
//! cruise-control scenario; [`sim`] the closed loop and Monte Carlo batches;
//! [`cli`] the config/CSV front end behind the `ercbf` binary.
//!
//! Start with the runnable examples:
//!
//! ```text
//! cargo run -p ercbf --example nominal_filter
//! cargo run -p ercbf --example worst_case_errors
//! cargo run -p ercbf --example robust_socp_filter
//! cargo run -p ercbf --example robust_qp_closed_form
//! cargo run -p ercbf --example closed_loop_acc -- nominal
//! cargo run -p ercbf --example compare_controllers
//! cargo run --release -p ercbf --example monte_carlo
//! ```

pub mod acc;
pub mod cli;
pub mod controllers;
pub mod core;
pub mod optim;
pub mod sim;

#[cfg(test)]
pub(crate) mod test_support;
