//! Error norms, convergence orders and soliton tracking.

use crate::error::{check_len, KdvError, Result};
use crate::model::{Discretization, KdVParams, Soliton};

pub use crate::model::ConservationRecord;

/// Max-norm and `h`-weighted 2-norm of `a − b`.
pub fn compare_fields(a: &[f64], b: &[f64], h: f64) -> Result<(f64, f64)> {
    check_len(a.len(), b.len())?;
    let mut linf = 0.0_f64;
    let mut sum_sq = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        linf = linf.max(d.abs());
        sum_sq += d * d;
    }
    Ok((linf, (h * sum_sq).sqrt()))
}

/// Least-squares slope of `log(error)` against `log(h)`.
///
/// Needs at least three levels with strictly decreasing `h` and positive errors.
pub fn convergence_order(levels: &[(f64, f64)]) -> Result<f64> {
    if levels.len() < 3 {
        return Err(KdvError::InvalidRefinement(format!(
            "need at least 3 levels, got {}",
            levels.len()
        )));
    }
    if levels
        .iter()
        .any(|&(h, e)| !(h > 0.0 && e > 0.0 && h.is_finite() && e.is_finite()))
    {
        return Err(KdvError::InvalidRefinement(
            "steps and errors must be positive and finite".into(),
        ));
    }
    if levels.windows(2).any(|w| w[1].0 >= w[0].0) {
        return Err(KdvError::InvalidRefinement(
            "step sizes must strictly decrease".into(),
        ));
    }
    let pts: Vec<(f64, f64)> = levels.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

/// Distance of a grid field from the travelling one-soliton at time `t`.
pub fn soliton_error(
    u: &[f64],
    params: &KdVParams,
    grid: &Discretization,
    amplitude: f64,
    center: f64,
    t: f64,
) -> Result<(f64, f64)> {
    let exact = Soliton::new(amplitude, center, params)?.sample(params, grid, t);
    compare_fields(u, &exact, grid.h)
}

/// Position of the largest value, refined by a parabola through the maximum
/// and its two periodic neighbours.
pub fn peak_location(u: &[f64], params: &KdVParams, grid: &Discretization) -> f64 {
    let n = u.len();
    let k = (0..n).fold(0, |best, i| if u[i] > u[best] { i } else { best });
    let (left, mid, right) = (u[(k + n - 1) % n], u[k], u[(k + 1) % n]);
    let curvature = left - 2.0 * mid + right;
    let offset = if curvature < 0.0 {
        0.5 * (left - right) / curvature
    } else {
        0.0
    };
    let x = grid.x(params, k) + offset * grid.h;
    let len = params.length();
    params.xmin + (x - params.xmin).rem_euclid(len)
}
