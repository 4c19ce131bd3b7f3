//! The Zabusky–Kruskal leapfrog scheme (Phys. Rev. Lett. 15, 1965), the
//! classical explicit discretization used as a stability baseline.
//!
//! ```text
//! u_i^{j+1} = u_i^{j−1} − (ητ/3h)(u_{i+1} + u_i + u_{i−1})(u_{i+1} − u_{i−1})
//!                       − (δ²τ/h³)(u_{i+2} − 2u_{i+1} + 2u_{i−1} − u_{i−2})
//! ```
//!
//! with the spatial terms taken at level `j`.

use crate::error::{check_len, Result};
use crate::model::{check_blowup, Discretization, KdVParams};
use crate::stencil::TwoLevelState;

/// The spatial increment over a time span `2τ`, i.e. the leapfrog update.
fn increment(u: &[f64], params: &KdVParams, grid: &Discretization) -> Vec<f64> {
    let n = u.len();
    let (h, tau) = (grid.h, grid.tau);
    let at = |i: usize, k: isize| u[(i as isize + k).rem_euclid(n as isize) as usize];
    let nonlinear = params.eta * tau / (3.0 * h);
    let dispersive = params.delta * params.delta * tau / h.powi(3);
    (0..n)
        .map(|i| {
            -nonlinear * (at(i, 1) + at(i, 0) + at(i, -1)) * (at(i, 1) - at(i, -1))
                - dispersive * (at(i, 2) - 2.0 * at(i, 1) + 2.0 * at(i, -1) - at(i, -2))
        })
        .collect()
}

/// One leapfrog step `(u^{j−1}, u^j) → u^{j+1}`.
pub fn zk_step(
    state: &TwoLevelState,
    params: &KdVParams,
    grid: &Discretization,
) -> Result<Vec<f64>> {
    check_len(grid.n, state.u_curr.len())?;
    check_len(grid.n, state.u_prev.len())?;
    let inc = increment(&state.u_curr, params, grid);
    let next: Vec<f64> = state.u_prev.iter().zip(&inc).map(|(a, d)| a + d).collect();
    check_blowup(&next)?;
    Ok(next)
}

/// The first level by forward Euler on the same semi-discretization, which is
/// half the leapfrog increment.
pub fn zk_bootstrap(u0: &[f64], params: &KdVParams, grid: &Discretization) -> Result<Vec<f64>> {
    check_len(grid.n, u0.len())?;
    let inc = increment(u0, params, grid);
    let next: Vec<f64> = u0.iter().zip(&inc).map(|(a, d)| a + 0.5 * d).collect();
    check_blowup(&next)?;
    Ok(next)
}
