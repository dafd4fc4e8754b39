//! Worst-case environment-error engine: extremizes the scenario's barrier
//! error expressions over the componentwise error box.
//!
//! The exact path extracts the quadratic coefficients of each expression by
//! sampling (a quadratic is determined by its values on an axis pattern),
//! verifies the fit at off-pattern points, and then enumerates every face of
//! the box: each coordinate pinned at a bound or left free, free coordinates
//! solved from stationarity. That covers all box corners plus all interior
//! and face stationary points, which is exhaustive for expressions of total
//! degree at most two.
//!
//! Expressions flagged non-polynomial fall back to a dense grid, which is
//! approximate: its resolution bounds the error of the returned extremum and
//! there is no soundness guarantee between grid points.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::core::{EnvironmentEstimate, WorstCaseErrors};

use super::ControllerError;

/// Scalar error expression of (x, x̂_s, ẋ̂_s, e_s, ė_s).
pub type ErrorFn = Arc<
    dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>, &[f64], &[f64]) -> f64 + Send + Sync,
>;

/// Declared structure of a scenario's error expressions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorExprClass {
    /// At most quadratic in the error coordinates: extremized exactly.
    Quadratic,
    /// Arbitrary smooth expression: extremized on a grid with the given step
    /// expressed as a fraction of each box half-width.
    NonPolynomial { grid_step_frac: f64 },
}

/// The three barrier-error expressions of a scenario, plus their declared
/// degree class.
#[derive(Clone)]
pub struct ErrorModel {
    pub e_h: ErrorFn,
    /// Norm of the gradient error; maximized, must be nonnegative.
    pub e_grad_h: ErrorFn,
    pub e_dhdt: ErrorFn,
    pub class: ErrorExprClass,
}

/// Componentwise bounds on the environment error and its rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBounds {
    pub e_s: DVector<f64>,
    pub e_s_dot: DVector<f64>,
}

impl ErrorBounds {
    pub fn new(e_s: DVector<f64>, e_s_dot: DVector<f64>) -> Result<Self, ControllerError> {
        if e_s.iter().chain(e_s_dot.iter()).any(|b| b.is_nan() || *b < 0.0 || !b.is_finite()) {
            return Err(ControllerError::InvalidBounds);
        }
        Ok(Self { e_s, e_s_dot })
    }

    pub fn zero(p: usize) -> Self {
        Self {
            e_s: DVector::zeros(p),
            e_s_dot: DVector::zeros(p),
        }
    }

    fn half_widths(&self) -> Vec<f64> {
        self.e_s.iter().chain(self.e_s_dot.iter()).copied().collect()
    }
}

/// Extremizer location details for one error expression.
#[derive(Debug, Clone)]
pub struct ExtremizerInfo {
    /// Extremizing point in box coordinates (e_s then ė_s).
    pub arg: Vec<f64>,
    /// Whether the extremum is attained at a box corner.
    pub at_corner: bool,
}

/// Worst-case errors together with where each extremum was attained; the
/// corner-coincidence flag is informational only (it is the situation in
/// which the u_δ bound's derivation is exact) and is never enforced.
#[derive(Debug, Clone)]
pub struct WorstCaseAnalysis {
    pub wce: WorstCaseErrors,
    pub e_h: ExtremizerInfo,
    pub e_grad_h: ExtremizerInfo,
    pub e_dhdt: ExtremizerInfo,
}

impl WorstCaseAnalysis {
    /// True when all three extremizers sit on box corners and agree.
    pub fn common_corner_extremizer(&self) -> bool {
        if !(self.e_h.at_corner && self.e_grad_h.at_corner && self.e_dhdt.at_corner) {
            return false;
        }
        let close = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs()))
        };
        close(&self.e_h.arg, &self.e_grad_h.arg) && close(&self.e_h.arg, &self.e_dhdt.arg)
    }
}

/// e_h* and e_∂h/∂t* by minimization, e_∇h* by maximization, over the box
/// [−ℰ_s, ℰ_s] × [−ℰ̇_s, ℰ̇_s].
pub fn worst_case_errors(
    model: &ErrorModel,
    bounds: &ErrorBounds,
    x: &DVector<f64>,
    est: &EnvironmentEstimate,
) -> Result<WorstCaseErrors, ControllerError> {
    Ok(worst_case_errors_detailed(model, bounds, x, est)?.wce)
}

/// As [`worst_case_errors`], also reporting extremizer locations.
pub fn worst_case_errors_detailed(
    model: &ErrorModel,
    bounds: &ErrorBounds,
    x: &DVector<f64>,
    est: &EnvironmentEstimate,
) -> Result<WorstCaseAnalysis, ControllerError> {
    if bounds.e_s.len() != est.dim() || bounds.e_s_dot.len() != est.dim() {
        return Err(ControllerError::InvalidBounds);
    }
    let p = est.dim();
    let widths = bounds.half_widths();

    type BoxedExpr<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;
    let wrap = |f: &ErrorFn| -> BoxedExpr<'_> {
        let x = x.clone();
        let xs = est.x_s_hat.clone();
        let xsd = est.x_s_hat_dot.clone();
        let f = f.clone();
        Box::new(move |e: &[f64]| f(&x, &xs, &xsd, &e[..p], &e[p..]))
    };

    let e_h = extremize(&wrap(&model.e_h), &widths, Which::Min, model.class)?;
    let e_dhdt = extremize(&wrap(&model.e_dhdt), &widths, Which::Min, model.class)?;
    let e_grad = extremize_norm_max(&wrap(&model.e_grad_h), &widths, model.class)?;

    let wce = WorstCaseErrors::new(e_h.value, e_grad.value.max(0.0), e_dhdt.value)
        .map_err(ControllerError::Core)?;
    Ok(WorstCaseAnalysis {
        wce,
        e_h: ExtremizerInfo {
            arg: e_h.arg,
            at_corner: e_h.at_corner,
        },
        e_grad_h: ExtremizerInfo {
            arg: e_grad.arg,
            at_corner: e_grad.at_corner,
        },
        e_dhdt: ExtremizerInfo {
            arg: e_dhdt.arg,
            at_corner: e_dhdt.at_corner,
        },
    })
}

/// Exact range (min, max) of a single error expression over the box; used
/// for barrier uncertainty bands.
pub fn error_expression_range(
    f: &ErrorFn,
    bounds: &ErrorBounds,
    x: &DVector<f64>,
    est: &EnvironmentEstimate,
    class: ErrorExprClass,
) -> Result<(f64, f64), ControllerError> {
    let p = est.dim();
    let widths = bounds.half_widths();
    let x = x.clone();
    let xs = est.x_s_hat.clone();
    let xsd = est.x_s_hat_dot.clone();
    let f = f.clone();
    let g = move |e: &[f64]| f(&x, &xs, &xsd, &e[..p], &e[p..]);
    let lo = extremize(&g, &widths, Which::Min, class)?;
    let hi = extremize(&g, &widths, Which::Max, class)?;
    Ok((lo.value, hi.value))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Which {
    Min,
    Max,
}

struct Extreme {
    value: f64,
    arg: Vec<f64>,
    at_corner: bool,
}

const MAX_EXACT_DIMS: usize = 8;
const MAX_GRID_POINTS: usize = 2_000_000;

fn extremize(
    f: &dyn Fn(&[f64]) -> f64,
    widths: &[f64],
    which: Which,
    class: ErrorExprClass,
) -> Result<Extreme, ControllerError> {
    match fit_quadratic(f, widths)? {
        Some(fit) => Ok(extremize_fitted(f, widths, &fit, which)),
        None => match class {
            ErrorExprClass::Quadratic => Err(ControllerError::UnsupportedDegree),
            ErrorExprClass::NonPolynomial { grid_step_frac } => {
                grid_extremize(f, widths, which, grid_step_frac)
            }
        },
    }
}

/// Maximum of a norm-valued expression. If the expression itself is
/// quadratic the direct path applies; otherwise its square often is (a norm
/// with affine components), and argmax f = argmax f² for f ≥ 0.
fn extremize_norm_max(
    f: &dyn Fn(&[f64]) -> f64,
    widths: &[f64],
    class: ErrorExprClass,
) -> Result<Extreme, ControllerError> {
    if let Some(fit) = fit_quadratic(f, widths)? {
        return Ok(extremize_fitted(f, widths, &fit, Which::Max));
    }
    let sq = |e: &[f64]| {
        let v = f(e);
        v * v
    };
    if let Some(fit) = fit_quadratic(&sq, widths)? {
        let mut ext = extremize_fitted(&sq, widths, &fit, Which::Max);
        ext.value = ext.value.max(0.0).sqrt();
        return Ok(ext);
    }
    match class {
        ErrorExprClass::Quadratic => Err(ControllerError::UnsupportedDegree),
        ErrorExprClass::NonPolynomial { grid_step_frac } => {
            grid_extremize(f, widths, Which::Max, grid_step_frac)
        }
    }
}

struct QuadraticFit {
    /// Indices of box dimensions with positive width.
    active: Vec<usize>,
    f0: f64,
    lin: DVector<f64>,
    quad: DMatrix<f64>,
}

/// Fits f on the box in scaled coordinates y ∈ [−1,1]^d via axis sampling;
/// returns None when verification shows f is not quadratic.
fn fit_quadratic(
    f: &dyn Fn(&[f64]) -> f64,
    widths: &[f64],
) -> Result<Option<QuadraticFit>, ControllerError> {
    let active: Vec<usize> = (0..widths.len()).filter(|&i| widths[i] > 0.0).collect();
    let d = active.len();
    if d > MAX_EXACT_DIMS {
        return Err(ControllerError::BoxTooLarge(d));
    }
    let eval = |y: &[f64]| {
        let mut e = vec![0.0; widths.len()];
        for (k, &i) in active.iter().enumerate() {
            e[i] = y[k] * widths[i];
        }
        f(&e)
    };

    let f0 = eval(&vec![0.0; d]);
    let mut lin = DVector::zeros(d);
    let mut quad = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut y = vec![0.0; d];
        y[k] = 1.0;
        let fp = eval(&y);
        y[k] = -1.0;
        let fm = eval(&y);
        lin[k] = 0.5 * (fp - fm);
        quad[(k, k)] = fp + fm - 2.0 * f0;
    }
    for k in 0..d {
        for l in (k + 1)..d {
            let mut y = vec![0.0; d];
            y[k] = 1.0;
            y[l] = 1.0;
            let fkl = eval(&y);
            let m = fkl - f0 - lin[k] - lin[l] - 0.5 * quad[(k, k)] - 0.5 * quad[(l, l)];
            quad[(k, l)] = m;
            quad[(l, k)] = m;
        }
    }

    let fit = QuadraticFit {
        active: active.clone(),
        f0,
        lin,
        quad,
    };
    // Verify at off-pattern points; quadratics reproduce exactly (roundoff).
    let mut state = 0x9E37_79B9_u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 33) as f64) / ((1u64 << 31) as f64) - 1.0
    };
    let mut scale = 1.0_f64.max(f0.abs());
    let probes = 3 + 2 * d;
    for _ in 0..probes {
        let y: Vec<f64> = (0..d).map(|_| next()).collect();
        let truth = eval(&y);
        scale = scale.max(truth.abs());
        let model = fit.predict(&y);
        if (truth - model).abs() > 1e-7 * scale {
            return Ok(None);
        }
    }
    Ok(Some(fit))
}

impl QuadraticFit {
    fn predict(&self, y: &[f64]) -> f64 {
        let yv = DVector::from_column_slice(y);
        self.f0 + self.lin.dot(&yv) + 0.5 * (yv.transpose() * &self.quad * &yv)[(0, 0)]
    }
}

/// Enumerates every face of the scaled box: each coordinate at −1, +1, or
/// free, free coordinates solved from the fitted stationarity system, and
/// evaluates the true expression at all resulting candidates.
fn extremize_fitted(
    f: &dyn Fn(&[f64]) -> f64,
    widths: &[f64],
    fit: &QuadraticFit,
    which: Which,
) -> Extreme {
    let d = fit.active.len();
    let eval_true = |y: &[f64]| {
        let mut e = vec![0.0; widths.len()];
        for (k, &i) in fit.active.iter().enumerate() {
            e[i] = y[k] * widths[i];
        }
        (f(&e), e)
    };

    let mut best_val = f64::NAN;
    let mut best_arg: Vec<f64> = vec![0.0; widths.len()];
    let mut best_y: Vec<f64> = vec![0.0; d];
    let better = |candidate: f64, incumbent: f64| {
        incumbent.is_nan()
            || match which {
                Which::Min => candidate < incumbent,
                Which::Max => candidate > incumbent,
            }
    };

    // Ternary mask over {pinned −1, pinned +1, free}.
    let n_faces = 3usize.pow(d as u32);
    for mask in 0..n_faces {
        let mut code = mask;
        let mut pins: Vec<Option<f64>> = Vec::with_capacity(d);
        for _ in 0..d {
            pins.push(match code % 3 {
                0 => Some(-1.0),
                1 => Some(1.0),
                _ => None,
            });
            code /= 3;
        }
        let free: Vec<usize> = (0..d).filter(|&k| pins[k].is_none()).collect();
        let mut y = vec![0.0; d];
        for k in 0..d {
            if let Some(v) = pins[k] {
                y[k] = v;
            }
        }
        if !free.is_empty() {
            // Stationarity on the face: lin_F + Q_FP y_P + Q_FF y_F = 0.
            let nf = free.len();
            let mut rhs = DVector::zeros(nf);
            let mut mat = DMatrix::zeros(nf, nf);
            for (r, &k) in free.iter().enumerate() {
                let mut acc = fit.lin[k];
                for (l, pin) in pins.iter().enumerate() {
                    if let Some(v) = pin {
                        acc += fit.quad[(k, l)] * v;
                    }
                }
                rhs[r] = -acc;
                for (cidx, &l) in free.iter().enumerate() {
                    mat[(r, cidx)] = fit.quad[(k, l)];
                }
            }
            let Some(sol) = mat.lu().solve(&rhs) else {
                continue; // no isolated stationary point on this face
            };
            if sol.iter().any(|v| v.abs() > 1.0 + 1e-9) {
                continue;
            }
            for (r, &k) in free.iter().enumerate() {
                y[k] = sol[r].clamp(-1.0, 1.0);
            }
        }
        let (val, e) = eval_true(&y);
        if better(val, best_val) {
            best_val = val;
            best_arg = e;
            best_y = y;
        }
    }

    let at_corner = best_y.iter().all(|v| (v.abs() - 1.0).abs() <= 1e-12);
    Extreme {
        value: best_val,
        arg: best_arg,
        at_corner,
    }
}

fn grid_extremize(
    f: &dyn Fn(&[f64]) -> f64,
    widths: &[f64],
    which: Which,
    step_frac: f64,
) -> Result<Extreme, ControllerError> {
    let active: Vec<usize> = (0..widths.len()).filter(|&i| widths[i] > 0.0).collect();
    let d = active.len();
    let per_axis = (2.0 / step_frac).round() as usize + 1;
    let total = per_axis.checked_pow(d as u32).unwrap_or(usize::MAX);
    if total > MAX_GRID_POINTS {
        return Err(ControllerError::BoxTooLarge(d));
    }

    let mut best_val = f64::NAN;
    let mut best_arg = vec![0.0; widths.len()];
    let mut best_corner = false;
    let mut idx = vec![0usize; d];
    loop {
        let mut e = vec![0.0; widths.len()];
        let mut corner = true;
        for (k, &i) in active.iter().enumerate() {
            let frac = idx[k] as f64 / (per_axis - 1) as f64;
            e[i] = widths[i] * (2.0 * frac - 1.0);
            corner &= idx[k] == 0 || idx[k] == per_axis - 1;
        }
        let val = f(&e);
        let take = best_val.is_nan()
            || match which {
                Which::Min => val < best_val,
                Which::Max => val > best_val,
            };
        if take {
            best_val = val;
            best_arg = e;
            best_corner = corner;
        }
        // Odometer increment.
        let mut k = 0;
        loop {
            if k == d {
                return Ok(Extreme {
                    value: best_val,
                    arg: best_arg,
                    at_corner: best_corner,
                });
            }
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if d == 0 {
            return Ok(Extreme {
                value: best_val,
                arg: best_arg,
                at_corner: best_corner,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::DVector;

    use super::*;

    fn est2() -> EnvironmentEstimate {
        EnvironmentEstimate::new(
            DVector::from_column_slice(&[100.0, 27.0]),
            DVector::from_column_slice(&[27.0, 0.3]),
        )
        .unwrap()
    }

    /// Mirrors the rear-end scenario structure: linear + quadratic + bilinear.
    fn quadratic_model(vhat_rel: f64, cdg: f64) -> ErrorModel {
        let e_h: ErrorFn = Arc::new(move |_x, _xs, _xsd, e_s, _ed| {
            e_s[0] - (2.0 * e_s[1] * vhat_rel + e_s[1] * e_s[1]) / (2.0 * cdg)
        });
        let e_grad: ErrorFn =
            Arc::new(move |_x, _xs, _xsd, e_s, _ed| (e_s[1] / cdg).abs());
        let e_dhdt: ErrorFn = Arc::new(move |_x, _xs, _xsd, e_s, e_d| {
            e_s[1] * (1.0 - 0.3 / cdg) - (e_d[1] * vhat_rel + e_s[1] * e_d[1]) / cdg
        });
        ErrorModel {
            e_h,
            e_grad_h: e_grad,
            e_dhdt,
            class: ErrorExprClass::Quadratic,
        }
    }

    fn grid_min(f: impl Fn(&[f64]) -> f64, widths: &[f64], n: usize) -> f64 {
        // Dense grid over the active dims; reference oracle.
        let active: Vec<usize> = (0..widths.len()).filter(|&i| widths[i] > 0.0).collect();
        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; active.len()];
        'outer: loop {
            let mut e = vec![0.0; widths.len()];
            for (k, &i) in active.iter().enumerate() {
                e[i] = widths[i] * (2.0 * idx[k] as f64 / (n - 1) as f64 - 1.0);
            }
            best = best.min(f(&e));
            let mut k = 0;
            loop {
                if k == active.len() {
                    break 'outer;
                }
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if active.is_empty() {
                break;
            }
        }
        best
    }

    #[test]
    fn zero_bounds_give_zero_errors() {
        let model = quadratic_model(0.0, 2.943);
        let bounds = ErrorBounds::zero(2);
        let x = DVector::zeros(2);
        let wce = worst_case_errors(&model, &bounds, &x, &est2()).unwrap();
        assert_eq!(wce.e_h_star, 0.0);
        assert_eq!(wce.e_grad_h_star, 0.0);
        assert_eq!(wce.e_dhdt_star, 0.0);
    }

    #[test]
    fn rear_end_structure_min_matches_grid_and_closed_form() {
        // Matched speeds: e_h = e_p − e_v²/(2 c_d g), minimized at a corner;
        // closed form −(E_p + E_v²/(2 c_d g)).
        let cdg = 2.943;
        let model = quadratic_model(0.0, cdg);
        let bounds = ErrorBounds::new(
            DVector::from_column_slice(&[1.0, 1.0]),
            DVector::from_column_slice(&[0.0, 0.0]),
        )
        .unwrap();
        let x = DVector::zeros(2);
        let analysis = worst_case_errors_detailed(&model, &bounds, &x, &est2()).unwrap();
        let expected = -(1.0 + 1.0 / (2.0 * cdg));
        assert!((analysis.wce.e_h_star - expected).abs() < 1e-12);
        assert!(analysis.e_h.at_corner);

        let p = 2;
        let f = |e: &[f64]| {
            e[0] - (2.0 * e[1] * 0.0 + e[1] * e[1]) / (2.0 * cdg)
        };
        let g = grid_min(f, &[1.0, 1.0, 0.0, 0.0], 201);
        assert!((analysis.wce.e_h_star - g).abs() < 1e-4);
        let _ = p;
    }

    #[test]
    fn interior_minimum_found_off_corners() {
        // Relative speed pushes the e_v minimizer inside the box.
        let cdg = 2.943;
        let vhat_rel = -1.5; // minimizer of e_v term at e_v = 1.5 > would be cut at 1
        let model = quadratic_model(vhat_rel, cdg);
        let bounds = ErrorBounds::new(
            DVector::from_column_slice(&[1.0, 2.0]),
            DVector::from_column_slice(&[0.0, 0.0]),
        )
        .unwrap();
        let x = DVector::zeros(2);
        let analysis = worst_case_errors_detailed(&model, &bounds, &x, &est2()).unwrap();
        let f = |e: &[f64]| e[0] - (2.0 * e[1] * vhat_rel + e[1] * e[1]) / (2.0 * cdg);
        let g = grid_min(f, &[1.0, 2.0, 0.0, 0.0], 801);
        assert!(
            (analysis.wce.e_h_star - g).abs() < 1e-4,
            "engine {} vs grid {}",
            analysis.wce.e_h_star,
            g
        );
    }

    #[test]
    fn norm_maximum_via_squared_fit() {
        let cdg = 2.943;
        let model = quadratic_model(0.0, cdg);
        let bounds = ErrorBounds::new(
            DVector::from_column_slice(&[1.0, 1.0]),
            DVector::from_column_slice(&[0.0, 0.0]),
        )
        .unwrap();
        let x = DVector::zeros(2);
        let wce = worst_case_errors(&model, &bounds, &x, &est2()).unwrap();
        // |e_v|/c_d g at e_v = ±1.
        assert!((wce.e_grad_h_star - 1.0 / cdg).abs() < 1e-10);
        assert!((wce.e_grad_h_star - 0.33979).abs() < 1e-4);
    }

    #[test]
    fn signed_minima_nonpositive_when_box_contains_zero() {
        let model = quadratic_model(0.7, 2.943);
        let bounds = ErrorBounds::new(
            DVector::from_column_slice(&[0.5, 1.2]),
            DVector::from_column_slice(&[0.0, 0.3]),
        )
        .unwrap();
        let x = DVector::zeros(2);
        let wce = worst_case_errors(&model, &bounds, &x, &est2()).unwrap();
        assert!(wce.e_h_star <= 0.0);
        assert!(wce.e_dhdt_star <= 0.0);
        assert!(wce.e_grad_h_star >= 0.0);
    }

    #[test]
    fn cubic_expression_rejected_when_declared_quadratic() {
        let e_cubic: ErrorFn = Arc::new(|_x, _xs, _xsd, e_s, _ed| e_s[0].powi(3));
        let model = ErrorModel {
            e_h: e_cubic.clone(),
            e_grad_h: e_cubic.clone(),
            e_dhdt: e_cubic,
            class: ErrorExprClass::Quadratic,
        };
        let bounds = ErrorBounds::new(
            DVector::from_column_slice(&[1.0, 0.0]),
            DVector::from_column_slice(&[0.0, 0.0]),
        )
        .unwrap();
        let x = DVector::zeros(2);
        let res = worst_case_errors(&model, &bounds, &x, &est2());
        assert!(matches!(res, Err(ControllerError::UnsupportedDegree)));
    }

    #[test]
    fn grid_fallback_handles_nonpolynomial() {
        let e_sin: ErrorFn = Arc::new(|_x, _xs, _xsd, e_s, _ed| (3.0 * e_s[0]).sin());
        let zero: ErrorFn = Arc::new(|_x, _xs, _xsd, _e, _ed| 0.0);
        let model = ErrorModel {
            e_h: e_sin,
            e_grad_h: zero.clone(),
            e_dhdt: zero,
            class: ErrorExprClass::NonPolynomial {
                grid_step_frac: 1e-3,
            },
        };
        let bounds = ErrorBounds::new(
            DVector::from_column_slice(&[1.0, 0.0]),
            DVector::from_column_slice(&[0.0, 0.0]),
        )
        .unwrap();
        let x = DVector::zeros(2);
        let wce = worst_case_errors(&model, &bounds, &x, &est2()).unwrap();
        // min of sin(3e) on [−3, 3] radians is −1 (attained at −π/6·... inside).
        assert!((wce.e_h_star + 1.0).abs() < 1e-5);
    }

    #[test]
    fn negative_bounds_rejected() {
        assert!(ErrorBounds::new(
            DVector::from_column_slice(&[-0.1]),
            DVector::from_column_slice(&[0.0]),
        )
        .is_err());
    }
}
