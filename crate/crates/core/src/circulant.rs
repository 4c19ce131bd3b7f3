//! The cyclic two-term matrices `A` (rows `(1, 1, 0, ..)`) and `B` (rows
//! `(−1, 1, 0, ..)`), their solves, general circulant operators, and the
//! constant operators of the reduced schemes.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{KdvError, Result};
use crate::model::{Discretization, KdVParams};

/// Default relative tolerance of [`rank_of`].
pub const RANK_TOL: f64 = 1e-10;

/// `(Au)_i = u_i + u_{i+1}`, indices modulo `n`.
pub fn apply_a(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n).map(|i| u[i] + u[(i + 1) % n]).collect()
}

/// `(Bφ)_i = φ_{i+1} − φ_i`, indices modulo `n`.
pub fn apply_b(phi: &[f64]) -> Vec<f64> {
    let n = phi.len();
    (0..n).map(|i| phi[(i + 1) % n] - phi[i]).collect()
}

/// Solves `Ax = rhs` in `O(n)`; `A` is invertible exactly when `n` is odd.
pub fn solve_a(rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    if n.is_multiple_of(2) {
        return Err(KdvError::SingularA { n });
    }
    // Alternating sum of the equations isolates x_1; the rest is a forward chain.
    let alternating: f64 = rhs
        .iter()
        .enumerate()
        .map(|(i, &r)| if i % 2 == 0 { r } else { -r })
        .sum();
    let mut x = Vec::with_capacity(n);
    x.push(0.5 * alternating);
    for i in 0..n - 1 {
        x.push(rhs[i] - x[i]);
    }
    Ok(x)
}

/// Solves `Bφ = rhs` with the extra condition `φ[anchor_index] = anchor_value`.
///
/// `anchor_index` is one-based. The right-hand side must sum to zero, the
/// condition for lying in the range of `B`.
pub fn solve_b_anchored(rhs: &[f64], anchor_index: usize, anchor_value: f64) -> Result<Vec<f64>> {
    let n = rhs.len();
    if anchor_index == 0 || anchor_index > n {
        return Err(KdvError::InvalidParameter(format!(
            "anchor index {anchor_index} outside 1..={n}"
        )));
    }
    let sum: f64 = rhs.iter().sum();
    let magnitude: f64 = rhs.iter().map(|r| r.abs()).sum();
    if sum.abs() > 1e-10 * magnitude.max(1.0) {
        return Err(KdvError::IncompatibleRhs { sum });
    }
    let start = anchor_index - 1;
    let mut phi = vec![0.0; n];
    phi[start] = anchor_value;
    let mut i = start;
    for _ in 0..n - 1 {
        let next = (i + 1) % n;
        phi[next] = phi[i] + rhs[i];
        i = next;
    }
    Ok(phi)
}

pub fn dense_a(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(
        n,
        n,
        |i, j| if j == i || j == (i + 1) % n { 1.0 } else { 0.0 },
    )
}

pub fn dense_b(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if j == (i + 1) % n {
            1.0
        } else if j == i {
            -1.0
        } else {
            0.0
        }
    })
}

/// Numerical rank by row reduction with partial pivoting. Pivots smaller than
/// `tol` times the largest entry of the matrix count as zero.
pub fn rank_of(matrix: &DMatrix<f64>, tol: f64) -> usize {
    let mut m = matrix.clone();
    let (rows, cols) = m.shape();
    let scale = m.amax();
    if scale == 0.0 {
        return 0;
    }
    let threshold = tol * scale;
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let (offset, pivot) = m
            .view((rank, col), (rows - rank, 1))
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |best, (k, v)| {
                if v.abs() > best.1 {
                    (k, v.abs())
                } else {
                    best
                }
            });
        if pivot <= threshold {
            continue;
        }
        m.swap_rows(rank, rank + offset);
        for row in rank + 1..rows {
            let factor = m[(row, col)] / m[(rank, col)];
            if factor != 0.0 {
                for k in col..cols {
                    let delta = factor * m[(rank, k)];
                    m[(row, k)] -= delta;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Forward and inverse FFT plans of one length, shared by every operator on a grid.
#[derive(Clone)]
pub struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn forward(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.into_iter().map(|c| c.re * scale).collect()
    }

    /// `ω_k = e^{2πik/n}` for every mode, with exact conjugate symmetry.
    fn roots(&self) -> Vec<Complex64> {
        mirrored(self.n, |k| {
            Complex64::from_polar(1.0, 2.0 * PI * k as f64 / self.n as f64)
        })
    }
}

/// Builds a symbol on `k ≤ n/2` and completes it by conjugate symmetry, so the
/// operator it defines is real to the last bit.
fn mirrored(n: usize, f: impl Fn(usize) -> Complex64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (k, slot) in out.iter_mut().enumerate().take(n / 2 + 1) {
        *slot = f(k);
    }
    for k in n / 2 + 1..n {
        out[k] = out[n - k].conj();
    }
    out[0].im = 0.0;
    if n.is_multiple_of(2) {
        out[n / 2].im = 0.0;
    }
    out
}

/// A real circulant matrix, stored by its first row and its eigenvalues.
///
/// `(Cx)_i = Σ_m first_row[m] x_{i+m}`; the eigenvalue on the Fourier mode
/// `ω_k^i` is `Σ_m first_row[m] ω_k^m`.
#[derive(Debug, Clone)]
pub struct Circulant {
    first_row: Vec<f64>,
    symbol: Vec<Complex64>,
    spectral: Spectral,
}

impl Circulant {
    pub fn from_first_row(first_row: Vec<f64>, spectral: &Spectral) -> Self {
        assert_eq!(first_row.len(), spectral.len());
        let n = first_row.len();
        let roots = spectral.roots();
        let symbol = mirrored(n, |k| {
            first_row
                .iter()
                .enumerate()
                .filter(|(_, &c)| c != 0.0)
                .map(|(m, &c)| c * roots[(m * k) % n])
                .sum()
        });
        Self {
            first_row,
            symbol,
            spectral: spectral.clone(),
        }
    }

    /// `symbol` must be conjugate-symmetric; only `k ≤ n/2` is read.
    pub fn from_symbol(symbol: Vec<Complex64>, spectral: &Spectral) -> Self {
        assert_eq!(symbol.len(), spectral.len());
        let symbol = mirrored(symbol.len(), |k| symbol[k]);
        let mut buf = symbol.clone();
        spectral.forward.process(&mut buf);
        let scale = 1.0 / spectral.len() as f64;
        let first_row = buf.into_iter().map(|c| c.re * scale).collect();
        Self {
            first_row,
            symbol,
            spectral: spectral.clone(),
        }
    }

    pub fn a(spectral: &Spectral) -> Self {
        let roots = spectral.roots();
        Self::from_symbol(roots.iter().map(|w| 1.0 + w).collect(), spectral)
    }

    pub fn b(spectral: &Spectral) -> Self {
        let roots = spectral.roots();
        Self::from_symbol(roots.iter().map(|w| w - 1.0).collect(), spectral)
    }

    pub fn len(&self) -> usize {
        self.first_row.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_row.is_empty()
    }

    pub fn first_row(&self) -> &[f64] {
        &self.first_row
    }

    pub fn symbol(&self) -> &[Complex64] {
        &self.symbol
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.len());
        let mut buf = self.spectral.forward(x);
        for (b, s) in buf.iter_mut().zip(&self.symbol) {
            *b *= s;
        }
        self.spectral.inverse_real(buf)
    }

    /// Smallest eigenvalue modulus divided by the largest.
    pub fn conditioning(&self) -> f64 {
        let (lo, hi) = self
            .symbol
            .iter()
            .map(|s| s.norm())
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        if hi == 0.0 {
            0.0
        } else {
            lo / hi
        }
    }

    /// Fails with [`KdvError::SingularLinearSystem`] when some eigenvalue
    /// vanishes relative to the largest one.
    pub fn check_invertible(&self) -> Result<()> {
        let min_symbol = self
            .symbol
            .iter()
            .map(|s| s.norm())
            .fold(f64::INFINITY, f64::min);
        if self.conditioning() <= 1e-13 {
            Err(KdvError::SingularLinearSystem { min_symbol })
        } else {
            Ok(())
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.check_invertible()?;
        Ok(self.solve_unchecked(rhs))
    }

    /// Division by the symbol without the singularity check; call
    /// [`Circulant::check_invertible`] once beforehand.
    pub fn solve_unchecked(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.len());
        let mut buf = self.spectral.forward(rhs);
        for (b, s) in buf.iter_mut().zip(&self.symbol) {
            *b /= s;
        }
        self.spectral.inverse_real(buf)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| self.first_row[(j + n - i) % n])
    }
}

/// Which second reduced operator a run uses: the one obtained by exact
/// elimination, or the formula as printed in the source derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum OperatorVariant {
    #[default]
    Exact,
    Printed,
}

impl OperatorVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Printed => "printed",
        }
    }
}

impl std::str::FromStr for OperatorVariant {
    type Err = KdvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "printed" => Ok(Self::Printed),
            other => Err(KdvError::InvalidParameter(format!(
                "unknown operator variant {other:?} (expected exact or printed)"
            ))),
        }
    }
}

/// Constant operators of the reduced schemes on one grid.
///
/// With `T = BA⁻¹` and `G = (8δ²r/h³)T³`:
/// `M1 = ((2/h)I + G)⁻¹`, `M2_exact = −M1 G = (2/h)M1 − I`,
/// `M2_printed = −(h/2)G − I`, `M3 = −2ηr M1 T`.
/// All are circulant, so they are stored by eigenvalues and applied by FFT.
#[derive(Debug, Clone)]
pub struct ReducedOperators {
    pub params: KdVParams,
    pub grid: Discretization,
    pub m1: Circulant,
    pub m2_exact: Circulant,
    pub m2_printed: Circulant,
    pub m3: Circulant,
    pub g: Circulant,
    /// `T = BA⁻¹`.
    pub t: Circulant,
    /// `M1 T`, the operator through which the nonlinear term enters.
    pub m1_t: Circulant,
    /// `M1 + (h/2)M2` of the two-level z form, per variant.
    pub z_linear_exact: Circulant,
    pub z_linear_printed: Circulant,
    /// Coefficient of the boundary vector in the z form. Exact elimination
    /// gives `I + M2 − (2/h)M1`, which vanishes for `M2_exact`; the printed
    /// form is `I + M2 − (1/h)M1`.
    pub z_boundary_exact: Circulant,
    pub z_boundary_printed: Circulant,
    pub spectral: Spectral,
}

impl ReducedOperators {
    pub fn m2(&self, variant: OperatorVariant) -> &Circulant {
        match variant {
            OperatorVariant::Exact => &self.m2_exact,
            OperatorVariant::Printed => &self.m2_printed,
        }
    }

    pub fn z_linear(&self, variant: OperatorVariant) -> &Circulant {
        match variant {
            OperatorVariant::Exact => &self.z_linear_exact,
            OperatorVariant::Printed => &self.z_linear_printed,
        }
    }

    pub fn z_boundary(&self, variant: OperatorVariant) -> &Circulant {
        match variant {
            OperatorVariant::Exact => &self.z_boundary_exact,
            OperatorVariant::Printed => &self.z_boundary_printed,
        }
    }

    /// Dense forms assembled the direct way: `T³` column by column through
    /// `solve_a` and `apply_b`, and `M1` by LU inversion.
    pub fn dense(&self) -> Result<DenseOperators> {
        dense_operators(&self.params, &self.grid)
    }
}

pub fn build_reduced_operators(
    params: &KdVParams,
    grid: &Discretization,
) -> Result<ReducedOperators> {
    grid.require_odd()?;
    let n = grid.n;
    let h = grid.h;
    let r = grid.r;
    let spectral = Spectral::new(n);
    // eigenvalue of BA⁻¹ on ω_k is (ω_k − 1)/(ω_k + 1) = i tan(πk/n)
    let t_sym = mirrored(n, |k| Complex64::new(0.0, (PI * k as f64 / n as f64).tan()));
    let gc = 8.0 * params.delta * params.delta * r / (h * h * h);
    let g_sym: Vec<Complex64> = t_sym.iter().map(|t| gc * t * t * t).collect();
    let m1_sym: Vec<Complex64> = g_sym.iter().map(|g| 1.0 / (2.0 / h + g)).collect();
    let m2e_sym: Vec<Complex64> = m1_sym.iter().zip(&g_sym).map(|(m, g)| -m * g).collect();
    let m2p_sym: Vec<Complex64> = g_sym.iter().map(|g| -0.5 * h * g - 1.0).collect();
    let m1t_sym: Vec<Complex64> = m1_sym.iter().zip(&t_sym).map(|(m, t)| m * t).collect();
    let m3_sym: Vec<Complex64> = m1t_sym.iter().map(|k| -2.0 * params.eta * r * k).collect();
    let combine =
        |m2: &[Complex64], f: &dyn Fn(Complex64, Complex64) -> Complex64| -> Vec<Complex64> {
            m1_sym.iter().zip(m2).map(|(&a, &b)| f(a, b)).collect()
        };
    let zl_exact = combine(&m2e_sym, &|m1, m2| m1 + 0.5 * h * m2);
    let zl_printed = combine(&m2p_sym, &|m1, m2| m1 + 0.5 * h * m2);
    let zb_exact = combine(&m2e_sym, &|m1, m2| 1.0 + m2 - 2.0 / h * m1);
    let zb_printed = combine(&m2p_sym, &|m1, m2| 1.0 + m2 - m1 / h);
    let make = |s: Vec<Complex64>| Circulant::from_symbol(s, &spectral);
    Ok(ReducedOperators {
        params: *params,
        grid: *grid,
        m1: make(m1_sym),
        m2_exact: make(m2e_sym),
        m2_printed: make(m2p_sym),
        m3: make(m3_sym),
        g: make(g_sym),
        t: make(t_sym),
        m1_t: make(m1t_sym),
        z_linear_exact: make(zl_exact),
        z_linear_printed: make(zl_printed),
        z_boundary_exact: make(zb_exact),
        z_boundary_printed: make(zb_printed),
        spectral: spectral.clone(),
    })
}

/// Dense counterparts of [`ReducedOperators`], used for invariant checks and
/// for the linear solves of the tangent scheme.
#[derive(Debug, Clone)]
pub struct DenseOperators {
    pub m1: DMatrix<f64>,
    pub m2_exact: DMatrix<f64>,
    pub m2_printed: DMatrix<f64>,
    pub m3: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub t: DMatrix<f64>,
}

/// `BA⁻¹` applied column by column.
fn dense_t(n: usize) -> Result<DMatrix<f64>> {
    let mut t = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = apply_b(&solve_a(&e)?);
        t.set_column(j, &nalgebra::DVector::from_vec(col));
    }
    Ok(t)
}

fn dense_operators(params: &KdVParams, grid: &Discretization) -> Result<DenseOperators> {
    grid.require_odd()?;
    let n = grid.n;
    let h = grid.h;
    let r = grid.r;
    let t = dense_t(n)?;
    let mut t3 = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut col: Vec<f64> = (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
        for _ in 0..3 {
            col = apply_b(&solve_a(&col)?);
        }
        t3.set_column(j, &nalgebra::DVector::from_vec(col));
    }
    let g = t3 * (8.0 * params.delta * params.delta * r / (h * h * h));
    let identity = DMatrix::<f64>::identity(n, n);
    let m1 = (&identity * (2.0 / h) + &g)
        .lu()
        .try_inverse()
        .ok_or(KdvError::SingularLinearSystem { min_symbol: 0.0 })?;
    let m2_exact = &m1 * (2.0 / h) - &identity;
    let m2_printed = &g * (-0.5 * h) - &identity;
    let m3 = &m1 * &t * (-2.0 * params.eta * r);
    Ok(DenseOperators {
        m1,
        m2_exact,
        m2_printed,
        m3,
        g,
        t,
    })
}
