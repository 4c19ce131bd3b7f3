//! Schemes in `u` alone obtained by eliminating `w`, `v` and `φ` cell by cell
//! from the box scheme. They use no inverse of `A` and run for any `n ≥ 4`.
//!
//! With the cyclic stencils
//! `(Su)_i = u_{i+1} + 3u_i + 3u_{i−1} + u_{i−2}` and
//! `(Du)_i = u_{i+1} − 3u_i + 3u_{i−1} − u_{i−2}`, the eight-point scheme reads
//!
//! ```text
//! S(u' − u)/(4τ) + δ² D(u' + u)/h³ + (V'(m_i) − V'(m_{i−2}))/h = 0
//! ```
//!
//! where `m_i` averages `u` and `u'` over the nodes `i, i+1`.

use crate::circulant::{Circulant, Spectral};
use crate::error::{check_len, KdvError, Result};
use crate::model::{check_blowup, potential_vprime, Discretization, KdVParams};
use crate::preissman::{IterationControl, StepReport};
use crate::vecops::{add, axpy, scale, sub};

/// Two consecutive levels `u^{j−1}, u^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelState {
    pub u_prev: Vec<f64>,
    pub u_curr: Vec<f64>,
}

impl TwoLevelState {
    pub fn new(u_prev: Vec<f64>, u_curr: Vec<f64>) -> Result<Self> {
        check_len(u_prev.len(), u_curr.len())?;
        Ok(Self { u_prev, u_curr })
    }

    /// Shifts in a new level.
    pub fn advance(self, next: Vec<f64>) -> Self {
        Self {
            u_prev: self.u_curr,
            u_curr: next,
        }
    }
}

/// Three consecutive levels `u^{j−1}, u^j, u^{j+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeLevelState {
    pub u_prev2: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub u_curr: Vec<f64>,
}

impl ThreeLevelState {
    pub fn new(u_prev2: Vec<f64>, u_prev: Vec<f64>, u_curr: Vec<f64>) -> Result<Self> {
        check_len(u_prev2.len(), u_prev.len())?;
        check_len(u_prev2.len(), u_curr.len())?;
        Ok(Self {
            u_prev2,
            u_prev,
            u_curr,
        })
    }
}

fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// `(Su)_i`.
fn stencil_s(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n as isize)
        .map(|i| {
            u[wrap(i + 1, n)] + 3.0 * u[wrap(i, n)] + 3.0 * u[wrap(i - 1, n)] + u[wrap(i - 2, n)]
        })
        .collect()
}

/// `(Du)_i`.
fn stencil_d(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n as isize)
        .map(|i| {
            u[wrap(i + 1, n)] - 3.0 * u[wrap(i, n)] + 3.0 * u[wrap(i - 1, n)] - u[wrap(i - 2, n)]
        })
        .collect()
}

/// `(V'(m_i) − V'(m_{i−2}))/h` for given cell values `m`.
fn flux_difference(cells: &[f64], params: &KdVParams, h: f64) -> Vec<f64> {
    let n = cells.len();
    let vp: Vec<f64> = cells.iter().map(|&m| potential_vprime(m, params)).collect();
    (0..n as isize)
        .map(|i| (vp[wrap(i, n)] - vp[wrap(i - 2, n)]) / h)
        .collect()
}

/// Four-point averages over the cells `[x_i, x_{i+1}]` of two levels.
fn cell_means(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    (0..n)
        .map(|i| 0.25 * (a[i] + a[(i + 1) % n] + b[i] + b[(i + 1) % n]))
        .collect()
}

/// Two-point averages over the cells of one level.
fn cell_means_single(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    (0..n).map(|i| 0.5 * (a[i] + a[(i + 1) % n])).collect()
}

/// The constant new-level operator `S/(4τ) + δ²D/h³` on one grid, checked
/// for invertibility once.
#[derive(Debug, Clone)]
pub struct StencilOperators {
    pub params: KdVParams,
    pub grid: Discretization,
    lhs: Circulant,
}

impl StencilOperators {
    pub fn new(params: &KdVParams, grid: &Discretization) -> Result<Self> {
        let n = grid.n;
        if n < 4 {
            return Err(KdvError::InvalidParameter(format!(
                "stencil schemes need n >= 4, got {n}"
            )));
        }
        let a = 1.0 / (4.0 * grid.tau);
        let b = params.delta * params.delta / grid.h.powi(3);
        let mut row = vec![0.0; n];
        // (Cx)_i = Σ_m row[m] x_{i+m}: offsets +1, 0, −1, −2
        row[1] += a + b;
        row[0] += 3.0 * a - 3.0 * b;
        row[n - 1] += 3.0 * a + 3.0 * b;
        row[n - 2] += a - b;
        let lhs = Circulant::from_first_row(row, &Spectral::new(n));
        lhs.check_invertible()?;
        Ok(Self {
            params: *params,
            grid: *grid,
            lhs,
        })
    }

    /// The part of the eight-point relation fixed by the known level.
    fn known(&self, u: &[f64]) -> Vec<f64> {
        let a = 1.0 / (4.0 * self.grid.tau);
        let b = self.params.delta * self.params.delta / self.grid.h.powi(3);
        axpy(&scale(&stencil_s(u), a), -b, &stencil_d(u))
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        check_len(self.grid.n, u.len())
    }
}

/// Implicit eight-point step `u^{j−1} → u^j`, by fixed-point iteration on the
/// nonlinear cell terms with one circulant solve per sweep.
pub fn eight_point_step(
    u: &[f64],
    ops: &StencilOperators,
    ctl: &IterationControl,
) -> Result<(Vec<f64>, StepReport)> {
    ops.check(u)?;
    let h = ops.grid.h;
    let known = ops.known(u);
    let (u_new, iterations, residual) = ctl.iterate(u.to_vec(), |u_iter| {
        let flux = flux_difference(&cell_means(u, u_iter), &ops.params, h);
        Ok(ops.lhs.solve_unchecked(&sub(&known, &flux)))
    })?;
    Ok((
        u_new,
        StepReport {
            iterations,
            residual,
        },
    ))
}

/// Explicit eight-point step: the cell terms use `½(u_i + u_{i+1})` of the
/// known level only.
pub fn eight_point_explicit_step(u: &[f64], ops: &StencilOperators) -> Result<Vec<f64>> {
    ops.check(u)?;
    let flux = flux_difference(&cell_means_single(u), &ops.params, ops.grid.h);
    let u_new = ops.lhs.solve_unchecked(&sub(&ops.known(u), &flux));
    check_blowup(&u_new)?;
    Ok(u_new)
}

/// Implicit twelve-point step `(u^{j−1}, u^j) → u^{j+1}`.
///
/// The relation is the average of the eight-point relations on
/// `[t_{j−1}, t_j]` and `[t_j, t_{j+1}]` with all terms scaled by ¼:
/// `S(u'' − u)/(16τ) + δ²D(u'' + 2u' + u)/(4h³) + (fluxes of both cells)/(4h)`.
pub fn twelve_point_step(
    state: &TwoLevelState,
    ops: &StencilOperators,
    ctl: &IterationControl,
) -> Result<(Vec<f64>, StepReport)> {
    let (u0, u1) = (&state.u_prev, &state.u_curr);
    ops.check(u0)?;
    ops.check(u1)?;
    let h = ops.grid.h;
    let tau = ops.grid.tau;
    let b = ops.params.delta * ops.params.delta / h.powi(3);
    // The new-level operator is a quarter of the eight-point one, so the
    // whole relation is multiplied by 4 and solved with the same matrix.
    let old_flux = flux_difference(&cell_means(u0, u1), &ops.params, h);
    let known = sub(
        &axpy(
            &scale(&stencil_s(u0), 1.0 / (4.0 * tau)),
            -b,
            &stencil_d(&axpy(u0, 2.0, u1)),
        ),
        &old_flux,
    );
    let (u_new, iterations, residual) = ctl.iterate(u1.clone(), |u_iter| {
        let flux = flux_difference(&cell_means(u1, u_iter), &ops.params, h);
        Ok(ops.lhs.solve_unchecked(&sub(&known, &flux)))
    })?;
    Ok((
        u_new,
        StepReport {
            iterations,
            residual,
        },
    ))
}

/// Largest pointwise residual and the largest of its grouped terms (time
/// difference, dispersion, nonlinear flux).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilResidual {
    pub max_abs: f64,
    pub scale: f64,
}

impl StencilResidual {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.max_abs
        } else {
            self.max_abs / self.scale
        }
    }
}

fn summarize(terms: [Vec<f64>; 3]) -> StencilResidual {
    let mut max_abs = 0.0_f64;
    let mut scale = 0.0_f64;
    for ((&a, &b), &c) in terms[0].iter().zip(&terms[1]).zip(&terms[2]) {
        let cell = [a, b, c];
        max_abs = max_abs.max(cell.iter().sum::<f64>().abs());
        scale = cell.iter().fold(scale, |s, t| s.max(t.abs()));
    }
    StencilResidual { max_abs, scale }
}

/// Residual of the eight-point relation between two levels.
pub fn eight_point_residual_terms(
    u_old: &[f64],
    u_new: &[f64],
    params: &KdVParams,
    grid: &Discretization,
) -> StencilResidual {
    let (h, tau) = (grid.h, grid.tau);
    let b = params.delta * params.delta / h.powi(3);
    summarize([
        scale(&stencil_s(&sub(u_new, u_old)), 1.0 / (4.0 * tau)),
        scale(&stencil_d(&add(u_new, u_old)), b),
        flux_difference(&cell_means(u_old, u_new), params, h),
    ])
}

/// Residual of the twelve-point relation on three levels.
pub fn twelve_point_residual_terms(
    levels: &ThreeLevelState,
    params: &KdVParams,
    grid: &Discretization,
) -> StencilResidual {
    let (u0, u1, u2) = (&levels.u_prev2, &levels.u_prev, &levels.u_curr);
    let (h, tau) = (grid.h, grid.tau);
    let b = params.delta * params.delta / (4.0 * h.powi(3));
    let flux_new = flux_difference(&cell_means(u1, u2), params, h);
    let flux_old = flux_difference(&cell_means(u0, u1), params, h);
    summarize([
        scale(&stencil_s(&sub(u2, u0)), 1.0 / (16.0 * tau)),
        scale(&stencil_d(&add(&axpy(u0, 2.0, u1), u2)), b),
        scale(&add(&flux_new, &flux_old), 0.25),
    ])
}

/// Maximum absolute value of the twelve-point relation's left side.
pub fn twelve_point_residual(
    levels: &ThreeLevelState,
    params: &KdVParams,
    grid: &Discretization,
) -> f64 {
    twelve_point_residual_terms(levels, params, grid).max_abs
}
