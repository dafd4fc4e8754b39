//! Shared random-instance generators for unit tests.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::Rng;

use crate::core::{BarrierSpec, ControlAffineSystem};

pub(crate) struct ScalarInstance {
    pub sys: ControlAffineSystem,
    pub bar: BarrierSpec,
    pub x: DVector<f64>,
    pub x_s: DVector<f64>,
    pub x_s_dot: DVector<f64>,
}

/// Random scalar-input (m = 1) instance with L_g h bounded away from zero,
/// the standing assumption of the closed-form filters.
pub(crate) fn random_scalar_instance(rng: &mut StdRng) -> ScalarInstance {
    loop {
        let n = 2;
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let drift_bias = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let g = DVector::from_fn(n, |_, _| rng.gen_range(-1.5..1.5));

        let q = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let w = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let c = rng.gen_range(-2.0..2.0);

        let x = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let x_s = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
        let x_s_dot = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));

        let grad_at_x = &q - &x;
        let lgh: f64 = grad_at_x.dot(&g);
        if lgh.abs() < 0.2 {
            continue;
        }

        let g_mat = DMatrix::from_column_slice(n, 1, g.as_slice());
        let sys = ControlAffineSystem::new(
            n,
            1,
            move |x: &DVector<f64>| &a * x + &drift_bias,
            move |_x: &DVector<f64>| g_mat.clone(),
        );
        let q2 = q.clone();
        let w2 = w.clone();
        let bar = BarrierSpec::new(
            move |x: &DVector<f64>, xs: &DVector<f64>| {
                q.dot(x) - 0.5 * x.norm_squared() + w.dot(xs) + c
            },
            move |x: &DVector<f64>, _xs: &DVector<f64>| &q2 - x,
            move |_x: &DVector<f64>, _xs: &DVector<f64>, xsd: &DVector<f64>| w2.dot(xsd),
            rng.gen_range(0.5..3.0),
        )
        .unwrap();

        return ScalarInstance {
            sys,
            bar,
            x,
            x_s,
            x_s_dot,
        };
    }
}
