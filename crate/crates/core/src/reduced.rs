//! Schemes in `p = BΦ` and `q = Au` alone, obtained by eliminating `v`, `w`
//! and `Φ` from the box scheme, plus their explicit modifications.
//!
//! All of them need `A⁻¹` and therefore an odd number of grid points.

use crate::circulant::{apply_a, solve_a, solve_b_anchored, OperatorVariant, ReducedOperators};
use crate::error::{check_len, KdvError, Result};
use crate::model::{check_blowup, MassConstant};
use crate::preissman::{BoundaryAnchor, IterationControl, StepReport};
use crate::vecops::{add, axpy, scale, sub};

/// The pair `(p, q) = (BΦ, Au)` at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl ReducedState {
    /// The level consistent with `u`: `q = Au`, `p = (h/2)q − c/2`.
    pub fn from_u(u: &[f64], mass: MassConstant, h: f64) -> Self {
        let q = apply_a(u);
        let c = mass.boundary_vector(u.len());
        let p = axpy(&scale(&q, 0.5 * h), -0.5, &c);
        Self { p, q }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn u(&self) -> Result<Vec<f64>> {
        recover_u(&self.q)
    }
}

/// Two consecutive levels folded into `z = q^j + q^{j−1}`, with `q = q^j` kept
/// so that single levels can be unfolded again.
#[derive(Debug, Clone, PartialEq)]
pub struct ZState {
    pub z: Vec<f64>,
    pub q: Vec<f64>,
}

impl ZState {
    pub fn from_levels(q_prev: &[f64], q: &[f64]) -> Self {
        Self {
            z: add(q, q_prev),
            q: q.to_vec(),
        }
    }

    pub fn q_prev(&self) -> Vec<f64> {
        sub(&self.z, &self.q)
    }

    pub fn u(&self) -> Result<Vec<f64>> {
        recover_u(&self.q)
    }

    /// Starts the three-level recursion from one `pq_step`.
    pub fn bootstrap(
        start: &ReducedState,
        mass: MassConstant,
        ops: &ReducedOperators,
        variant: OperatorVariant,
        ctl: &IterationControl,
    ) -> Result<(Self, StepReport)> {
        let (next, report) = pq_step(start, mass, ops, variant, ctl)?;
        Ok((Self::from_levels(&start.q, &next.q), report))
    }
}

pub fn recover_u(q: &[f64]) -> Result<Vec<f64>> {
    solve_a(q)
}

pub fn recover_phi(p: &[f64], anchor: BoundaryAnchor) -> Result<Vec<f64>> {
    solve_b_anchored(p, anchor.index, anchor.value)
}

fn squared(x: &[f64], s: f64) -> Vec<f64> {
    x.iter().map(|v| (s * v) * (s * v)).collect()
}

fn check_grid(ops: &ReducedOperators, n: usize) -> Result<()> {
    ops.grid.require_odd()?;
    check_len(ops.grid.n, n)
}

/// `M1(q − c/h) + M2(p + c)`, the part of the new `p` fixed by level `j`.
fn pq_known(
    state: &ReducedState,
    c: &[f64],
    ops: &ReducedOperators,
    variant: OperatorVariant,
) -> Vec<f64> {
    let h = ops.grid.h;
    add(
        &ops.m1.apply(&axpy(&state.q, -1.0 / h, c)),
        &ops.m2(variant).apply(&add(&state.p, c)),
    )
}

/// `q' = −q + (2/h)(p + p' + c)`.
fn q_update(state: &ReducedState, p_new: &[f64], c: &[f64], h: f64) -> Vec<f64> {
    axpy(
        &scale(&add(&add(&state.p, p_new), c), 2.0 / h),
        -1.0,
        &state.q,
    )
}

/// One step of the implicit p–q scheme by fixed-point iteration on `q'`.
///
/// Each sweep is `p' = M1(q − c/h) + M2(p + c) + M3((q + q')²/16)` followed
/// by the `q'` update; only products with constant matrices are involved.
pub fn pq_step(
    state: &ReducedState,
    mass: MassConstant,
    ops: &ReducedOperators,
    variant: OperatorVariant,
    ctl: &IterationControl,
) -> Result<(ReducedState, StepReport)> {
    check_grid(ops, state.len())?;
    let h = ops.grid.h;
    let c = mass.boundary_vector(state.len());
    let known = pq_known(state, &c, ops, variant);
    let new_p = |q_iter: &[f64]| {
        add(
            &known,
            &ops.m3.apply(&squared(&add(&state.q, q_iter), 0.25)),
        )
    };
    let (q_conv, iterations, residual) = ctl.iterate(state.q.clone(), |q_iter| {
        Ok(q_update(state, &new_p(q_iter), &c, h))
    })?;
    let p = new_p(&q_conv);
    let q = q_update(state, &p, &c, h);
    Ok((
        ReducedState { p, q },
        StepReport {
            iterations,
            residual,
        },
    ))
}

/// The explicit p–q scheme: the nonlinear term uses `(q/2)²` of the known level.
pub fn pq_step_explicit(
    state: &ReducedState,
    mass: MassConstant,
    ops: &ReducedOperators,
    variant: OperatorVariant,
) -> Result<ReducedState> {
    check_grid(ops, state.len())?;
    let c = mass.boundary_vector(state.len());
    let p = add(
        &pq_known(state, &c, ops, variant),
        &ops.m3.apply(&squared(&state.q, 0.5)),
    );
    let q = q_update(state, &p, &c, ops.grid.h);
    check_blowup(&q)?;
    Ok(ReducedState { p, q })
}

/// `(2/h)(L z + M3 s + C c)`, the right-hand side of every z-form scheme,
/// with `s` the squared nonlinear argument.
fn z_rhs(
    z: &[f64],
    nonlinear: &[f64],
    c: &[f64],
    ops: &ReducedOperators,
    variant: OperatorVariant,
) -> Vec<f64> {
    let h = ops.grid.h;
    let sum = add(
        &add(&ops.z_linear(variant).apply(z), &ops.m3.apply(nonlinear)),
        &ops.z_boundary(variant).apply(c),
    );
    scale(&sum, 2.0 / h)
}

fn advance(state: &ZState, z_new: Vec<f64>) -> ZState {
    let q = sub(&z_new, &state.q);
    ZState { z: z_new, q }
}

/// One step of the implicit z form
/// `(h/2)z' = L z + M3((z'/4)² + (z/4)²) + C c`, iterating on `z'`.
pub fn z_step(
    state: &ZState,
    mass: MassConstant,
    ops: &ReducedOperators,
    variant: OperatorVariant,
    ctl: &IterationControl,
) -> Result<(ZState, StepReport)> {
    check_grid(ops, state.z.len())?;
    check_len(state.z.len(), state.q.len())?;
    let h = ops.grid.h;
    let c = mass.boundary_vector(state.z.len());
    let known = z_rhs(&state.z, &squared(&state.z, 0.25), &c, ops, variant);
    let (z_new, iterations, residual) = ctl.iterate(state.z.clone(), |z_iter| {
        Ok(axpy(&known, 2.0 / h, &ops.m3.apply(&squared(z_iter, 0.25))))
    })?;
    Ok((
        advance(state, z_new),
        StepReport {
            iterations,
            residual,
        },
    ))
}

/// Explicit z form with nonlinear term `(q^j/2)² + (q^{j−1}/2)²`.
pub fn z_step_explicit(
    state: &ZState,
    mass: MassConstant,
    ops: &ReducedOperators,
    variant: OperatorVariant,
) -> Result<ZState> {
    check_grid(ops, state.z.len())?;
    let c = mass.boundary_vector(state.z.len());
    let nonlinear = add(&squared(&state.q, 0.5), &squared(&state.q_prev(), 0.5));
    let next = advance(state, z_rhs(&state.z, &nonlinear, &c, ops, variant));
    check_blowup(&next.q)?;
    Ok(next)
}

/// Explicit z form with nonlinear term `(q^j/2)² + ((q^j + q^{j−1})/4)²`,
/// the modification reported to be unstable.
pub fn z_step_explicit_unstable(
    state: &ZState,
    mass: MassConstant,
    ops: &ReducedOperators,
    variant: OperatorVariant,
) -> Result<ZState> {
    check_grid(ops, state.z.len())?;
    let c = mass.boundary_vector(state.z.len());
    let nonlinear = add(&squared(&state.q, 0.5), &squared(&state.z, 0.25));
    let next = advance(state, z_rhs(&state.z, &nonlinear, &c, ops, variant));
    check_blowup(&next.q)?;
    Ok(next)
}

/// Fails unless `p` lies in the range of `B` to round-off.
pub fn check_reduced_state(state: &ReducedState) -> Result<()> {
    let sum: f64 = state.p.iter().sum();
    let magnitude: f64 = state.p.iter().map(|x| x.abs()).sum();
    if sum.abs() > 1e-10 * magnitude.max(1.0) {
        return Err(KdvError::IncompatibleRhs { sum });
    }
    Ok(())
}
