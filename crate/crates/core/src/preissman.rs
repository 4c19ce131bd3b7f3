//! The four-variable box scheme, its fixed-point solvers, and the linearized
//! scheme used to check the discrete multisymplectic conservation law.
//!
//! Unknowns at the new level are `X = (u, v, w, Φ)`. The coupled system is
//!
//! ```text
//! (h/2)A u' − BΦ'                 = −(h/2)A u + BΦ + c
//! −δB u' + (h/2)A v'              = δB u − (h/2)A v
//! −δrB v' + (τ/2)A w' − ½AΦ'      = δrB v − (τ/2)A w − ½AΦ + 2τ V'(ū)
//! ½A u' + rB w'                   = ½A u − rB w
//! ```
//!
//! with `c = (0, .., 0, 2∫u)` carrying the jump `φ_{n+1} = φ_1 + ∫u` of the
//! potential, and `ū` the four-point cell average of `u` over both levels.
//! `B` has rank `n − 1`, so `Φ'` is fixed only up to a constant; one anchored
//! value of `φ` closes the system.

use nalgebra::{DMatrix, DVector, Matrix4};

use crate::circulant::{
    apply_a, apply_b, dense_a, dense_b, rank_of, solve_a, solve_b_anchored, ReducedOperators,
    RANK_TOL,
};
use crate::error::{check_len, KdvError, Result};
use crate::model::{
    potential_vprime, potential_vsecond, Discretization, KdVParams, MassConstant, StateField,
};
use crate::vecops::{add, axpy, max_abs_diff, max_abs_or_inf, scale, sub};

/// The skew matrices of `M z_t + K z_x = ∇S(z)` for `z = (φ, u, v, w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultisymplecticPair {
    pub m: Matrix4<f64>,
    pub k: Matrix4<f64>,
}

impl MultisymplecticPair {
    pub fn new(params: &KdVParams) -> Self {
        let d = params.delta;
        #[rustfmt::skip]
        let m = Matrix4::new(
            0.0, 0.5, 0.0, 0.0,
            -0.5, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
        );
        #[rustfmt::skip]
        let k = Matrix4::new(
            0.0, 0.0, 0.0, 1.0,
            0.0, 0.0, -d, 0.0,
            0.0, d, 0.0, 0.0,
            -1.0, 0.0, 0.0, 0.0,
        );
        Self { m, k }
    }
}

/// Stopping rules of every fixed-point iteration in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationControl {
    /// Bound on the max-norm of the difference of successive iterates.
    pub tol: f64,
    pub max_iter: usize,
    /// Iterates larger than this in max-norm count as divergence.
    pub divergence_threshold: f64,
}

impl Default for IterationControl {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100,
            divergence_threshold: 1e8,
        }
    }
}

impl IterationControl {
    pub fn new(tol: f64, max_iter: usize, divergence_threshold: f64) -> Result<Self> {
        if tol.is_nan()
            || tol <= 0.0
            || max_iter == 0
            || divergence_threshold.is_nan()
            || divergence_threshold <= 0.0
        {
            return Err(KdvError::InvalidParameter(format!(
                "iteration control needs tol > 0, max_iter > 0, threshold > 0 \
                 (got {tol}, {max_iter}, {divergence_threshold})"
            )));
        }
        Ok(Self {
            tol,
            max_iter,
            divergence_threshold,
        })
    }

    /// Runs `sweep` from `start` until successive iterates agree to `tol`.
    ///
    /// `sweep` maps the current iterate to the next one. Returns the last
    /// iterate, the number of sweeps and the final successive difference.
    pub(crate) fn iterate(
        &self,
        start: Vec<f64>,
        mut sweep: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<(Vec<f64>, usize, f64)> {
        let mut current = start;
        let mut residual = f64::INFINITY;
        for iteration in 1..=self.max_iter {
            let next = sweep(&current)?;
            residual = max_abs_diff(&next, &current);
            if max_abs_or_inf(&next) > self.divergence_threshold || !residual.is_finite() {
                return Err(KdvError::Divergence {
                    iterations: iteration,
                    residual,
                });
            }
            current = next;
            if residual <= self.tol {
                return Ok((current, iteration, residual));
            }
        }
        Err(KdvError::Divergence {
            iterations: self.max_iter,
            residual,
        })
    }
}

/// The extra condition `φ[index] = value` (index one-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryAnchor {
    pub index: usize,
    pub value: f64,
}

impl Default for BoundaryAnchor {
    fn default() -> Self {
        Self {
            index: 1,
            value: 0.0,
        }
    }
}

impl BoundaryAnchor {
    pub fn new(index: usize, value: f64, n: usize) -> Result<Self> {
        if index == 0 || index > n || !value.is_finite() {
            return Err(KdvError::InvalidParameter(format!(
                "anchor must satisfy 1 <= index <= {n} with a finite value (got {index}:{value})"
            )));
        }
        Ok(Self { index, value })
    }
}

/// Iteration count and final successive difference of one implicit step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Four-point cell averages `¼(u_i + u_{i+1} + u'_i + u'_{i+1})`.
fn cell_average(u_old: &[f64], u_new: &[f64]) -> Vec<f64> {
    let q = apply_a(u_old);
    let q_new = apply_a(u_new);
    q.iter().zip(&q_new).map(|(a, b)| 0.25 * (a + b)).collect()
}

/// `(2δ/h) A⁻¹ B x`, the box-scheme derivative.
fn box_derivative(x: &[f64], delta: f64, h: f64) -> Result<Vec<f64>> {
    Ok(scale(&solve_a(&apply_b(x))?, 2.0 * delta / h))
}

/// Advances the Preissman scheme one step by the staged fixed-point sweep.
///
/// Each sweep evaluates `BΦ'` from the eliminated fourth block row through
/// `M1`, then `u'` and `v'` by solves with `A`. The auxiliary `Φ'` and `w'`
/// do not feed back into the sweep and are recovered once at convergence.
pub fn preissman_step(
    state: &StateField,
    mass: MassConstant,
    ops: &ReducedOperators,
    anchor: BoundaryAnchor,
    ctl: &IterationControl,
) -> Result<(StateField, StepReport)> {
    let grid = &ops.grid;
    let params = &ops.params;
    grid.require_odd()?;
    check_len(grid.n, state.len())?;
    let (h, r) = (grid.h, grid.r);
    let c = mass.boundary_vector(grid.n);
    let q = apply_a(&state.u);
    let p = apply_b(&state.phi);
    let known = add(
        &ops.m1.apply(&axpy(&q, -1.0 / h, &c)),
        &ops.m2_exact.apply(&add(&p, &c)),
    );
    let pc = add(&p, &c);
    let new_p = |u_iter: &[f64]| -> Vec<f64> {
        let vbar: Vec<f64> = cell_average(&state.u, u_iter)
            .iter()
            .map(|&m| potential_vprime(m, params))
            .collect();
        axpy(&known, -4.0 * r, &ops.m1_t.apply(&vbar))
    };
    let next_u = |big_p: &[f64]| solve_a(&sub(&scale(&add(&pc, big_p), 2.0 / h), &q));
    let (u_conv, iterations, residual) =
        ctl.iterate(state.u.clone(), |u_iter| next_u(&new_p(u_iter)))?;
    // one closing evaluation so that u', Φ' and w' all derive from the same BΦ'
    let big_p = new_p(&u_conv);
    let u_new = next_u(&big_p)?;
    let phi_new = solve_b_anchored(&big_p, anchor.index, anchor.value)?;
    let v_new = sub(
        &box_derivative(&add(&u_new, &state.u), params.delta, h)?,
        &state.v,
    );
    let vbar: Vec<f64> = cell_average(&state.u, &u_conv)
        .iter()
        .map(|&m| potential_vprime(m, params))
        .collect();
    let w_new = recover_w(state, &phi_new, &v_new, &vbar, params, grid)?;
    let next = StateField {
        phi: phi_new,
        u: u_new,
        v: v_new,
        w: w_new,
    };
    Ok((
        next,
        StepReport {
            iterations,
            residual,
        },
    ))
}

/// Third block row solved for `w'`.
fn recover_w(
    state: &StateField,
    phi_new: &[f64],
    v_new: &[f64],
    vprime: &[f64],
    params: &KdVParams,
    grid: &Discretization,
) -> Result<Vec<f64>> {
    let dphi = scale(&sub(phi_new, &state.phi), 1.0 / grid.tau);
    let dv = box_derivative(&add(v_new, &state.v), params.delta, grid.h)?;
    let source = scale(&solve_a(vprime)?, 4.0);
    Ok(sub(&add(&add(&dphi, &dv), &source), &state.w))
}

/// Sets `φ`, `v`, `w` consistently with a given `u0`.
///
/// `φ` satisfies the first block row at one level, `BΦ = (h/2)Au − c/2`;
/// `v` solves the second, `(h/2)Av = δBu` (a centered difference when `n` is
/// even and `A` is singular); and `w = (η/4)u² + (δ²/2)u_xx`, which follows
/// from `w = ½φ_t + δv_x + V'(u)` with `φ_t` taken from the equation itself.
pub fn initialize_auxiliary(
    u0: &[f64],
    mass: MassConstant,
    params: &KdVParams,
    grid: &Discretization,
    anchor: BoundaryAnchor,
) -> Result<StateField> {
    let n = grid.n;
    check_len(n, u0.len())?;
    let h = grid.h;
    let c = mass.boundary_vector(n);
    let rhs = axpy(&scale(&apply_a(u0), 0.5 * h), -0.5, &c);
    let phi = solve_b_anchored(&rhs, anchor.index, anchor.value)?;
    let v = if grid.is_odd() {
        box_derivative(u0, params.delta, h)?
    } else {
        (0..n)
            .map(|i| params.delta * (u0[(i + 1) % n] - u0[(i + n - 1) % n]) / (2.0 * h))
            .collect()
    };
    let w = (0..n)
        .map(|i| {
            let uxx = (u0[(i + 1) % n] - 2.0 * u0[i] + u0[(i + n - 1) % n]) / (h * h);
            0.25 * params.eta * u0[i] * u0[i] + 0.5 * params.delta * params.delta * uxx
        })
        .collect();
    StateField::new(phi, u0.to_vec(), v, w)
}

/// The block coefficient matrix of the coupled system in unknown order
/// `(u, v, w, Φ)`, optionally with the anchor row `e_k` on the `Φ` block.
pub fn assemble_d(
    params: &KdVParams,
    grid: &Discretization,
    anchor: Option<BoundaryAnchor>,
) -> Result<DMatrix<f64>> {
    let n = grid.n;
    if n < 3 {
        return Err(KdvError::InvalidParameter(format!("need n >= 3, got {n}")));
    }
    let (h, tau, r, delta) = (grid.h, grid.tau, grid.r, params.delta);
    let a = dense_a(n);
    let b = dense_b(n);
    let rows = if anchor.is_some() { 4 * n + 1 } else { 4 * n };
    let mut d = DMatrix::zeros(rows, 4 * n);
    let mut put = |row: usize, col: usize, block: DMatrix<f64>| {
        d.view_mut((row * n, col * n), (n, n)).copy_from(&block);
    };
    put(0, 0, &a * (h / 2.0));
    put(0, 3, -&b);
    put(1, 0, &b * -delta);
    put(1, 1, &a * (h / 2.0));
    put(2, 1, &b * (-delta * r));
    put(2, 2, &a * (tau / 2.0));
    put(2, 3, &a * -0.5);
    put(3, 0, &a * 0.5);
    put(3, 2, &b * r);
    if let Some(anchor) = anchor {
        if anchor.index == 0 || anchor.index > n {
            return Err(KdvError::InvalidParameter(format!(
                "anchor index {} outside 1..={n}",
                anchor.index
            )));
        }
        d[(4 * n, 3 * n + anchor.index - 1)] = 1.0;
    }
    Ok(d)
}

/// Right-hand side of the coupled system for a given nonlinear iterate.
fn assemble_rhs(
    state: &StateField,
    u_iter: &[f64],
    c: &[f64],
    params: &KdVParams,
    grid: &Discretization,
    anchor: Option<BoundaryAnchor>,
) -> DVector<f64> {
    let n = grid.n;
    let (h, tau, r, delta) = (grid.h, grid.tau, grid.r, params.delta);
    let au = apply_a(&state.u);
    let bu = apply_b(&state.u);
    let av = apply_a(&state.v);
    let bv = apply_b(&state.v);
    let aw = apply_a(&state.w);
    let bw = apply_b(&state.w);
    let aphi = apply_a(&state.phi);
    let bphi = apply_b(&state.phi);
    let vbar: Vec<f64> = cell_average(&state.u, u_iter)
        .iter()
        .map(|&m| potential_vprime(m, params))
        .collect();
    let rows = if anchor.is_some() { 4 * n + 1 } else { 4 * n };
    let mut rhs = DVector::zeros(rows);
    for i in 0..n {
        rhs[i] = -0.5 * h * au[i] + bphi[i] + c[i];
        rhs[n + i] = delta * bu[i] - 0.5 * h * av[i];
        rhs[2 * n + i] =
            delta * r * bv[i] - 0.5 * tau * aw[i] - 0.5 * aphi[i] + 2.0 * tau * vbar[i];
        rhs[3 * n + i] = 0.5 * au[i] - r * bw[i];
    }
    if let Some(anchor) = anchor {
        rhs[4 * n] = anchor.value;
    }
    rhs
}

/// Fixed-point iteration on the assembled coupled system, each sweep a
/// least-squares solve with a QR factorization computed once per grid.
#[derive(Debug, Clone)]
pub struct MonolithicSolver {
    params: KdVParams,
    grid: Discretization,
    anchor: Option<BoundaryAnchor>,
    qt: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl MonolithicSolver {
    /// Fails with [`KdvError::DegenerateSystem`] unless the matrix has full
    /// column rank, which never holds without an anchor.
    pub fn new(
        params: &KdVParams,
        grid: &Discretization,
        anchor: Option<BoundaryAnchor>,
    ) -> Result<Self> {
        let d = assemble_d(params, grid, anchor)?;
        let expected = 4 * grid.n;
        let rank = rank_of(&d, RANK_TOL);
        if rank < expected {
            return Err(KdvError::DegenerateSystem { rank, expected });
        }
        let qr = d.qr();
        Ok(Self {
            params: *params,
            grid: *grid,
            anchor,
            qt: qr.q().transpose(),
            r: qr.r(),
        })
    }

    pub fn step(
        &self,
        state: &StateField,
        mass: MassConstant,
        ctl: &IterationControl,
    ) -> Result<(StateField, StepReport)> {
        let n = self.grid.n;
        check_len(n, state.len())?;
        let c = mass.boundary_vector(n);
        let start: Vec<f64> = [&state.u, &state.v, &state.w, &state.phi]
            .iter()
            .flat_map(|f| f.iter().copied())
            .collect();
        let (x, iterations, residual) = ctl.iterate(start, |x| {
            let rhs = assemble_rhs(state, &x[..n], &c, &self.params, &self.grid, self.anchor);
            let y = &self.qt * rhs;
            let sol = self
                .r
                .solve_upper_triangular(&y)
                .ok_or(KdvError::DegenerateSystem {
                    rank: 4 * n - 1,
                    expected: 4 * n,
                })?;
            Ok(sol.iter().copied().collect())
        })?;
        let next = StateField {
            u: x[..n].to_vec(),
            v: x[n..2 * n].to_vec(),
            w: x[2 * n..3 * n].to_vec(),
            phi: x[3 * n..].to_vec(),
        };
        Ok((
            next,
            StepReport {
                iterations,
                residual,
            },
        ))
    }
}

/// One step through the assembled coupled system. `anchor = None` reproduces
/// the unanchored iteration, which is rejected as degenerate up front.
pub fn preissman_step_monolithic(
    state: &StateField,
    mass: MassConstant,
    params: &KdVParams,
    grid: &Discretization,
    anchor: Option<BoundaryAnchor>,
    ctl: &IterationControl,
) -> Result<(StateField, StepReport)> {
    MonolithicSolver::new(params, grid, anchor)?.step(state, mass, ctl)
}

/// Residuals of the four block rows for a pair of levels, in max-norm.
pub fn scheme_residual(
    old: &StateField,
    new: &StateField,
    mass: MassConstant,
    params: &KdVParams,
    grid: &Discretization,
) -> [f64; 4] {
    let n = grid.n;
    let (h, tau, r, delta) = (grid.h, grid.tau, grid.r, params.delta);
    let c = mass.boundary_vector(n);
    let su = add(&old.u, &new.u);
    let sv = add(&old.v, &new.v);
    let sw = add(&old.w, &new.w);
    let sphi = add(&old.phi, &new.phi);
    let dphi = sub(&new.phi, &old.phi);
    let vbar: Vec<f64> = cell_average(&old.u, &new.u)
        .iter()
        .map(|&m| potential_vprime(m, params))
        .collect();
    let asu = apply_a(&su);
    let bsu = apply_b(&su);
    let asv = apply_a(&sv);
    let bsv = apply_b(&sv);
    let asw = apply_a(&sw);
    let bsw = apply_b(&sw);
    let bsphi = apply_b(&sphi);
    let adphi = apply_a(&dphi);
    let du = sub(&new.u, &old.u);
    let adu = apply_a(&du);
    let row = |f: &dyn Fn(usize) -> f64| (0..n).map(f).fold(0.0_f64, |m, x| m.max(x.abs()));
    [
        row(&|i| 0.5 * h * asu[i] - bsphi[i] - c[i]),
        row(&|i| -delta * bsu[i] + 0.5 * h * asv[i]),
        row(&|i| -delta * r * bsv[i] + 0.5 * tau * asw[i] - 0.5 * adphi[i] - 2.0 * tau * vbar[i]),
        row(&|i| 0.5 * adu[i] + r * bsw[i]),
    ]
}

/// A solution of the linearized scheme: the differentials `dφ, du, dv, dw`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentField {
    pub dphi: Vec<f64>,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
    pub dw: Vec<f64>,
}

impl TangentField {
    pub fn zeros(n: usize) -> Self {
        Self {
            dphi: vec![0.0; n],
            du: vec![0.0; n],
            dv: vec![0.0; n],
            dw: vec![0.0; n],
        }
    }

    pub fn new(dphi: Vec<f64>, du: Vec<f64>, dv: Vec<f64>, dw: Vec<f64>) -> Result<Self> {
        let n = du.len();
        check_len(n, dphi.len())?;
        check_len(n, dv.len())?;
        check_len(n, dw.len())?;
        if ![&dphi, &du, &dv, &dw]
            .iter()
            .all(|f| f.iter().all(|x| x.is_finite()))
        {
            return Err(KdvError::InvalidParameter(
                "tangent contains non-finite entries".into(),
            ));
        }
        Ok(Self { dphi, du, dv, dw })
    }

    pub fn len(&self) -> usize {
        self.du.len()
    }

    pub fn is_empty(&self) -> bool {
        self.du.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dphi: scale(&self.dphi, s),
            du: scale(&self.du, s),
            dv: scale(&self.dv, s),
            dw: scale(&self.dw, s),
        }
    }

    /// The variation of the mass constant, `h Σ du`.
    pub fn mass(&self, h: f64) -> f64 {
        h * self.du.iter().sum::<f64>()
    }
}

/// The linearized coupled system at one step, factored once and reused for
/// every tangent advanced along that step.
///
/// Rows in unknown order `(du', dv', dw', dΦ')`, with `κ = V''(ū)`:
///
/// ```text
/// (h/2)A du' − B dΦ'                               = f1
/// −δB du' + (h/2)A dv'                             = f2
/// −δrB dv' + (τ/2)A dw' − ½A dΦ' − (τ/2)κ∘A du'    = f3
/// ½A du' + rB dw'                                  = f4
/// ```
///
/// Eliminating `du'`, `dv'`, `dw'` leaves one dense system for `dP = B dΦ'`,
/// `(I + (2r/h) K diag κ) dP = M1(f4 − f1/h − (2/h)T f3 − (4δr/h²)T² f2) + M2 f1 − (2r/h) K(κ∘f1)`,
/// with `T = BA⁻¹` and `K = M1 T`.
struct LinearizedStep<'a> {
    ops: &'a ReducedOperators,
    curvature: Vec<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    anchor_index: usize,
}

impl<'a> LinearizedStep<'a> {
    fn new(
        base_old: &StateField,
        base_new: &StateField,
        ops: &'a ReducedOperators,
        anchor: BoundaryAnchor,
    ) -> Self {
        let (n, h, r) = (ops.grid.n, ops.grid.h, ops.grid.r);
        let curvature: Vec<f64> = cell_average(&base_old.u, &base_new.u)
            .iter()
            .map(|&m| potential_vsecond(m, &ops.params))
            .collect();
        let coupling = 2.0 * r / h;
        let k = ops.m1_t.to_dense();
        let mut lhs = DMatrix::<f64>::identity(n, n);
        for j in 0..n {
            let s = coupling * curvature[j];
            for i in 0..n {
                lhs[(i, j)] += s * k[(i, j)];
            }
        }
        Self {
            ops,
            curvature,
            lu: lhs.lu(),
            anchor_index: anchor.index,
        }
    }

    /// Solves the rows for the new-level unknowns, with `dΦ'` pinned to
    /// `anchor_value` at the anchor.
    fn solve(&self, f: &[Vec<f64>; 4], anchor_value: f64) -> Result<TangentField> {
        let ops = self.ops;
        let (h, tau, r, delta) = (ops.grid.h, ops.grid.tau, ops.grid.r, ops.params.delta);
        let coupling = 2.0 * r / h;
        let [f1, f2, f3, f4] = f;
        let t2f2 = ops.t.apply(&ops.t.apply(f2));
        let reduced = sub(
            &sub(&axpy(f4, -1.0 / h, f1), &scale(&ops.t.apply(f3), 2.0 / h)),
            &scale(&t2f2, 4.0 * delta * r / (h * h)),
        );
        let weighted: Vec<f64> = f1.iter().zip(&self.curvature).map(|(x, k)| x * k).collect();
        let rhs = sub(
            &add(&ops.m1.apply(&reduced), &ops.m2_exact.apply(f1)),
            &scale(&ops.m1_t.apply(&weighted), coupling),
        );
        let big_p: Vec<f64> = self
            .lu
            .solve(&DVector::from_vec(rhs))
            .ok_or(KdvError::SingularLinearSystem { min_symbol: 0.0 })?
            .iter()
            .copied()
            .collect();
        let du = solve_a(&scale(&add(&big_p, f1), 2.0 / h))?;
        let dv = solve_a(&scale(&axpy(f2, delta, &apply_b(&du)), 2.0 / h))?;
        let dphi = solve_b_anchored(&big_p, self.anchor_index, anchor_value)?;
        let adu = apply_a(&du);
        let source: Vec<f64> = adu
            .iter()
            .zip(&self.curvature)
            .map(|(a, k)| 0.5 * tau * k * a)
            .collect();
        let dw_rhs = add(
            &add(
                &axpy(f3, delta * r, &apply_b(&dv)),
                &scale(&apply_a(&dphi), 0.5),
            ),
            &source,
        );
        let dw = solve_a(&scale(&dw_rhs, 2.0 / tau))?;
        Ok(TangentField { dphi, du, dv, dw })
    }

    /// Right-hand sides generated by the old-level tangent.
    fn forcing(&self, old: &TangentField) -> [Vec<f64>; 4] {
        let ops = self.ops;
        let (h, tau, r, delta) = (ops.grid.h, ops.grid.tau, ops.grid.r, ops.params.delta);
        let dc = MassConstant(old.mass(h)).boundary_vector(old.len());
        let adu = apply_a(&old.du);
        let source: Vec<f64> = adu
            .iter()
            .zip(&self.curvature)
            .map(|(a, k)| 0.5 * tau * k * a)
            .collect();
        [
            add(&axpy(&apply_b(&old.dphi), -0.5 * h, &adu), &dc),
            axpy(
                &scale(&apply_b(&old.du), delta),
                -0.5 * h,
                &apply_a(&old.dv),
            ),
            add(
                &sub(
                    &axpy(
                        &scale(&apply_b(&old.dv), delta * r),
                        -0.5 * tau,
                        &apply_a(&old.dw),
                    ),
                    &scale(&apply_a(&old.dphi), 0.5),
                ),
                &source,
            ),
            axpy(&scale(&adu, 0.5), -r, &apply_b(&old.dw)),
        ]
    }

    /// Row residuals `forcing − J·new`, evaluated directly from the banded rows.
    fn residual(&self, forcing: &[Vec<f64>; 4], new: &TangentField) -> [Vec<f64>; 4] {
        let ops = self.ops;
        let (h, tau, r, delta) = (ops.grid.h, ops.grid.tau, ops.grid.r, ops.params.delta);
        let adu = apply_a(&new.du);
        let bdu = apply_b(&new.du);
        let source: Vec<f64> = adu
            .iter()
            .zip(&self.curvature)
            .map(|(a, k)| 0.5 * tau * k * a)
            .collect();
        let rows = [
            sub(&scale(&adu, 0.5 * h), &apply_b(&new.dphi)),
            axpy(&scale(&bdu, -delta), 0.5 * h, &apply_a(&new.dv)),
            sub(
                &sub(
                    &axpy(
                        &scale(&apply_b(&new.dv), -delta * r),
                        0.5 * tau,
                        &apply_a(&new.dw),
                    ),
                    &scale(&apply_a(&new.dphi), 0.5),
                ),
                &source,
            ),
            axpy(&scale(&adu, 0.5), r, &apply_b(&new.dw)),
        ];
        let mut out = rows;
        for (o, f) in out.iter_mut().zip(forcing) {
            *o = sub(f, o);
        }
        out
    }
}

/// Refinement sweeps applied after the eliminated solve. The elimination
/// subtracts nearly equal quantities in the stiff modes; correcting against
/// the banded rows restores a backward-stable tangent.
const TANGENT_REFINEMENTS: usize = 2;

/// Advances a tangent field along a converged step `base_old → base_new`,
/// solving the linearized coupled system exactly. The anchored entry of
/// `dΦ'` is zero, since the anchor value is fixed.
pub fn tangent_step(
    base_old: &StateField,
    base_new: &StateField,
    dz: &TangentField,
    ops: &ReducedOperators,
    anchor: BoundaryAnchor,
) -> Result<TangentField> {
    ops.grid.require_odd()?;
    let n = ops.grid.n;
    check_len(n, dz.len())?;
    check_len(n, base_old.len())?;
    check_len(n, base_new.len())?;
    let step = LinearizedStep::new(base_old, base_new, ops, anchor);
    let forcing = step.forcing(dz);
    let mut next = step.solve(&forcing, 0.0)?;
    for _ in 0..TANGENT_REFINEMENTS {
        let correction = step.solve(&step.residual(&forcing, &next), 0.0)?;
        next = TangentField {
            dphi: add(&next.dphi, &correction.dphi),
            du: add(&next.du, &correction.du),
            dv: add(&next.dv, &correction.dv),
            dw: add(&next.dw, &correction.dw),
        };
    }
    Ok(next)
}

/// Largest cell residual of the discrete conservation law together with the
/// largest single term entering it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationResidual {
    pub max_abs: f64,
    pub scale: f64,
}

impl ConservationResidual {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.max_abs
        } else {
            self.max_abs / self.scale
        }
    }
}

/// Node values of a tangent at index `i ∈ 0..=n`; node `n` is the periodic
/// image of node `0`, where `dφ` carries the jump `h Σ du`.
fn tangent_node(t: &TangentField, i: usize, h: f64) -> [f64; 4] {
    let n = t.len();
    if i == n {
        [t.dphi[0] + t.mass(h), t.du[0], t.dv[0], t.dw[0]]
    } else {
        [t.dphi[i], t.du[i], t.dv[i], t.dw[i]]
    }
}

fn wedge(a: [f64; 4], b: [f64; 4], p: usize, q: usize) -> f64 {
    a[p] * b[q] - b[p] * a[q]
}

fn mean(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        0.5 * (a[0] + b[0]),
        0.5 * (a[1] + b[1]),
        0.5 * (a[2] + b[2]),
        0.5 * (a[3] + b[3]),
    ]
}

/// Evaluates, for every cell `[x_i, x_{i+1}] × [t_j, t_{j+1}]`,
///
/// ```text
/// (ω(a, b)^{j+1}_{i+½} − ω(a, b)^j_{i+½}) / τ + 2 (κ(a, b)^{j+½}_{i+1} − κ(a, b)^{j+½}_i) / h
/// ```
///
/// with `ω = dφ∧du` on space-averaged tangents and `κ = dφ∧dw + δ dv∧du` on
/// time-averaged tangents. `a` and `b` are two tangent solutions given at
/// both levels.
pub fn ms_conservation(
    a: (&TangentField, &TangentField),
    b: (&TangentField, &TangentField),
    params: &KdVParams,
    grid: &Discretization,
) -> ConservationResidual {
    const PHI: usize = 0;
    const U: usize = 1;
    const V: usize = 2;
    const W: usize = 3;
    let (h, tau) = (grid.h, grid.tau);
    let n = grid.n;
    let time_form = |x: [f64; 4], y: [f64; 4]| wedge(x, y, PHI, U);
    let space_form =
        |x: [f64; 4], y: [f64; 4]| wedge(x, y, PHI, W) + params.delta * wedge(x, y, V, U);
    let mut max_abs = 0.0_f64;
    let mut scale = 0.0_f64;
    for i in 0..n {
        let cell = |t: &TangentField| mean(tangent_node(t, i, h), tangent_node(t, i + 1, h));
        let node = |old: &TangentField, new: &TangentField, k: usize| {
            mean(tangent_node(old, k, h), tangent_node(new, k, h))
        };
        let omega_old = time_form(cell(a.0), cell(b.0)) / tau;
        let omega_new = time_form(cell(a.1), cell(b.1)) / tau;
        let kappa_left = 2.0 * space_form(node(a.0, a.1, i), node(b.0, b.1, i)) / h;
        let kappa_right = 2.0 * space_form(node(a.0, a.1, i + 1), node(b.0, b.1, i + 1)) / h;
        let residual = omega_new - omega_old + kappa_right - kappa_left;
        max_abs = max_abs.max(residual.abs());
        scale = [omega_old, omega_new, kappa_left, kappa_right]
            .iter()
            .fold(scale, |s, v| s.max(v.abs()));
    }
    ConservationResidual { max_abs, scale }
}

/// Maximum absolute cell residual of the discrete conservation law.
pub fn ms_conservation_residual(
    a: (&TangentField, &TangentField),
    b: (&TangentField, &TangentField),
    params: &KdVParams,
    grid: &Discretization,
) -> f64 {
    ms_conservation(a, b, params, grid).max_abs
}
