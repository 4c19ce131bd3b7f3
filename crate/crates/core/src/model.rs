//! Physical parameters, the periodic grid, state containers and initial data
//! for `u_t + η u u_x + δ² u_xxx = 0`.

use std::path::Path;

use crate::error::{check_len, KdvError, Result};

/// Fields larger than this in max-norm, or non-finite, count as blown up.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

/// Fails with [`KdvError::Blowup`] when `field` exceeds [`BLOWUP_THRESHOLD`].
/// The step index is left at 0 for the caller to fill in with
/// [`KdvError::at_step`].
pub fn check_blowup(field: &[f64]) -> Result<()> {
    let max_abs = field
        .iter()
        .try_fold(0.0_f64, |m, x| {
            if x.is_finite() {
                Some(m.max(x.abs()))
            } else {
                None
            }
        })
        .unwrap_or(f64::INFINITY);
    if max_abs > BLOWUP_THRESHOLD {
        Err(KdvError::Blowup { step: 0, max_abs })
    } else {
        Ok(())
    }
}

/// Coefficients of the KdV equation and the periodic domain `[xmin, xmax)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdVParams {
    pub eta: f64,
    pub delta: f64,
    pub xmin: f64,
    pub xmax: f64,
}

impl KdVParams {
    pub fn new(eta: f64, delta: f64, xmin: f64, xmax: f64) -> Result<Self> {
        if !(eta.is_finite() && delta.is_finite() && xmin.is_finite() && xmax.is_finite()) {
            return Err(KdvError::InvalidParameter(
                "parameters must be finite".into(),
            ));
        }
        if delta == 0.0 {
            return Err(KdvError::InvalidParameter("delta must be nonzero".into()));
        }
        if xmax <= xmin {
            return Err(KdvError::InvalidParameter(format!(
                "xmax ({xmax}) must exceed xmin ({xmin})"
            )));
        }
        Ok(Self {
            eta,
            delta,
            xmin,
            xmax,
        })
    }

    pub fn length(&self) -> f64 {
        self.xmax - self.xmin
    }
}

/// Uniform periodic grid `x_i = xmin + i h`, `i = 0..n`, and the time step.
///
/// The point `xmax` is never stored; it is the periodic image of `xmin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    pub n: usize,
    pub h: f64,
    pub tau: f64,
    pub r: f64,
}

impl Discretization {
    pub fn new(params: &KdVParams, n: usize, tau: f64) -> Result<Self> {
        if n < 3 {
            return Err(KdvError::InvalidParameter(format!("need n >= 3, got {n}")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(KdvError::InvalidParameter(format!(
                "tau must be positive, got {tau}"
            )));
        }
        let h = params.length() / n as f64;
        Ok(Self {
            n,
            h,
            tau,
            r: tau / h,
        })
    }

    pub fn is_odd(&self) -> bool {
        self.n % 2 == 1
    }

    /// Fails with [`KdvError::SingularA`] unless `n` is odd.
    pub fn require_odd(&self) -> Result<()> {
        if self.is_odd() {
            Ok(())
        } else {
            Err(KdvError::SingularA { n: self.n })
        }
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        Self {
            tau,
            r: tau / self.h,
            ..*self
        }
    }

    pub fn x(&self, params: &KdVParams, i: usize) -> f64 {
        params.xmin + i as f64 * self.h
    }

    pub fn points(&self, params: &KdVParams) -> Vec<f64> {
        (0..self.n).map(|i| self.x(params, i)).collect()
    }
}

/// The four fields `z = (φ, u, v, w)` of the first-order system.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    pub phi: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl StateField {
    pub fn zeros(n: usize) -> Self {
        Self {
            phi: vec![0.0; n],
            u: vec![0.0; n],
            v: vec![0.0; n],
            w: vec![0.0; n],
        }
    }

    pub fn new(phi: Vec<f64>, u: Vec<f64>, v: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        let n = u.len();
        check_len(n, phi.len())?;
        check_len(n, v.len())?;
        check_len(n, w.len())?;
        let state = Self { phi, u, v, w };
        if !state.is_finite() {
            return Err(KdvError::InvalidParameter(
                "state contains non-finite entries".into(),
            ));
        }
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        [&self.phi, &self.u, &self.v, &self.w]
            .iter()
            .all(|f| f.iter().all(|x| x.is_finite()))
    }
}

/// The conserved integral `c = ∫ u dx`, fixed once from the initial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassConstant(pub f64);

impl MassConstant {
    /// Trapezoidal rule on periodic data, which reduces to `h Σ u`.
    pub fn from_field(u: &[f64], h: f64) -> Self {
        Self(discrete_mass(u, h))
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    /// The boundary vector `(0, .., 0, 2c)`.
    pub fn boundary_vector(&self, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; n];
        c[n - 1] = 2.0 * self.0;
        c
    }
}

pub fn discrete_mass(u: &[f64], h: f64) -> f64 {
    h * u.iter().sum::<f64>()
}

/// One diagnostic row per completed step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationRecord {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub linf: f64,
    pub l2: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Sampled u-fields and per-step diagnostics of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    pub diagnostics: Vec<ConservationRecord>,
}

impl Trajectory {
    pub fn push_snapshot(&mut self, t: f64, u: Vec<f64>) {
        debug_assert!(self.times.last().is_none_or(|&last| t > last));
        debug_assert!(self.snapshots.first().is_none_or(|s| s.len() == u.len()));
        self.times.push(t);
        self.snapshots.push(u);
    }
}

pub fn potential_v(u: f64, params: &KdVParams) -> f64 {
    params.eta * u * u * u / 6.0
}

pub fn potential_vprime(u: f64, params: &KdVParams) -> f64 {
    params.eta * u * u / 2.0
}

pub fn potential_vsecond(u: f64, params: &KdVParams) -> f64 {
    params.eta * u
}

/// `S(z) = v²/2 − u w + V(u)`; the potential φ does not enter.
pub fn hamiltonian_s(_phi: f64, u: f64, v: f64, w: f64, params: &KdVParams) -> f64 {
    0.5 * v * v - u * w + potential_v(u, params)
}

/// Travelling one-soliton `A sech²(k (x − c t − x0))`, `c = ηA/3`, `k = sqrt(ηA/12)/δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Soliton {
    pub amplitude: f64,
    pub center: f64,
}

impl Soliton {
    pub fn new(amplitude: f64, center: f64, params: &KdVParams) -> Result<Self> {
        if (params.eta * amplitude).is_nan() || params.eta * amplitude <= 0.0 {
            return Err(KdvError::InvalidParameter(format!(
                "soliton needs eta*A > 0 (eta = {}, A = {amplitude})",
                params.eta
            )));
        }
        Ok(Self { amplitude, center })
    }

    pub fn speed(&self, params: &KdVParams) -> f64 {
        params.eta * self.amplitude / 3.0
    }

    pub fn wavenumber(&self, params: &KdVParams) -> f64 {
        (params.eta * self.amplitude / 12.0).sqrt() / params.delta.abs()
    }

    /// Value at `(x, t)`, measured from the nearest periodic image of the crest.
    pub fn eval(&self, x: f64, t: f64, params: &KdVParams) -> f64 {
        let len = params.length();
        let s = x - self.center - self.speed(params) * t;
        let s = s - len * (s / len).round();
        let sech = 1.0 / (self.wavenumber(params) * s).cosh();
        self.amplitude * sech * sech
    }

    /// `∂u/∂x` of the same expression.
    pub fn eval_dx(&self, x: f64, t: f64, params: &KdVParams) -> f64 {
        let len = params.length();
        let s = x - self.center - self.speed(params) * t;
        let s = s - len * (s / len).round();
        let k = self.wavenumber(params);
        let sech = 1.0 / (k * s).cosh();
        -2.0 * k * self.amplitude * sech * sech * (k * s).tanh()
    }

    /// `∫ u dx` over the whole line, `2A/k`.
    pub fn mass(&self, params: &KdVParams) -> f64 {
        2.0 * self.amplitude / self.wavenumber(params)
    }

    pub fn sample(&self, params: &KdVParams, grid: &Discretization, t: f64) -> Vec<f64> {
        (0..grid.n)
            .map(|i| self.eval(grid.x(params, i), t, params))
            .collect()
    }
}

pub fn analytic_one_soliton(
    params: &KdVParams,
    amplitude: f64,
    center: f64,
    t: f64,
    grid: &Discretization,
) -> Result<Vec<f64>> {
    Ok(Soliton::new(amplitude, center, params)?.sample(params, grid, t))
}

/// Initial-condition families.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Soliton {
        amplitude: f64,
        center: f64,
    },
    TwoSoliton {
        first: (f64, f64),
        second: (f64, f64),
    },
    /// `cos(π x)`, the classical recurrence set-up on `[0, 2]`.
    Cosine,
    /// Explicit samples, one per grid point.
    Samples(Vec<f64>),
}

impl InitialCondition {
    /// Reads the plain-text format: exactly `n` lines, one real per line.
    pub fn from_file(path: &Path, n: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| KdvError::MalformedInput {
            line: 0,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse_samples(&text, n)
    }

    pub fn parse_samples(text: &str, n: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(n);
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            let value: f64 = trimmed.parse().map_err(|_| KdvError::MalformedInput {
                line: line_no,
                message: format!("expected a real number, found {trimmed:?}"),
            })?;
            if !value.is_finite() {
                return Err(KdvError::MalformedInput {
                    line: line_no,
                    message: format!("non-finite value {trimmed:?}"),
                });
            }
            if values.len() == n {
                return Err(KdvError::MalformedInput {
                    line: line_no,
                    message: format!("more than {n} records"),
                });
            }
            values.push(value);
        }
        if values.len() != n {
            return Err(KdvError::MalformedInput {
                line: values.len() + 1,
                message: format!("expected {n} records, found {}", values.len()),
            });
        }
        Ok(Self::Samples(values))
    }

    /// The analytic soliton this data was built from, if there is exactly one.
    pub fn soliton(&self, params: &KdVParams) -> Option<Soliton> {
        match *self {
            Self::Soliton { amplitude, center } => Soliton::new(amplitude, center, params).ok(),
            _ => None,
        }
    }
}

/// Samples `u0` on the grid and computes its mass constant.
pub fn make_initial(
    ic: &InitialCondition,
    params: &KdVParams,
    grid: &Discretization,
) -> Result<(Vec<f64>, MassConstant)> {
    let u0 = match ic {
        // the A -> 0 limit of the soliton family
        InitialCondition::Soliton { amplitude, .. } if *amplitude == 0.0 => vec![0.0; grid.n],
        InitialCondition::Soliton { amplitude, center } => {
            analytic_one_soliton(params, *amplitude, *center, 0.0, grid)?
        }
        InitialCondition::TwoSoliton { first, second } => {
            let a = Soliton::new(first.0, first.1, params)?;
            let b = Soliton::new(second.0, second.1, params)?;
            (0..grid.n)
                .map(|i| {
                    let x = grid.x(params, i);
                    a.eval(x, 0.0, params) + b.eval(x, 0.0, params)
                })
                .collect()
        }
        InitialCondition::Cosine => (0..grid.n)
            .map(|i| (std::f64::consts::PI * grid.x(params, i)).cos())
            .collect(),
        InitialCondition::Samples(values) => {
            check_len(grid.n, values.len())?;
            values.clone()
        }
    };
    let mass = MassConstant::from_field(&u0, grid.h);
    Ok((u0, mass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(eta: f64) -> KdVParams {
        KdVParams::new(eta, 1.0, -15.0, 15.0).unwrap()
    }

    #[test]
    fn potential_values() {
        assert_eq!(potential_v(2.0, &params(6.0)), 8.0);
        assert_eq!(potential_v(0.0, &params(3.0)), 0.0);
        assert_eq!(potential_v(-1.0, &params(3.0)), -0.5);
        assert_eq!(potential_vprime(2.0, &params(1.0)), 2.0);
        assert_eq!(potential_vprime(0.0, &params(1.0)), 0.0);
        assert_eq!(potential_vprime(3.0, &params(2.0)), 9.0);
    }

    #[test]
    fn hamiltonian_values() {
        assert_eq!(hamiltonian_s(9.0, 0.0, 2.0, 5.0, &params(1.0)), 2.0);
        assert_eq!(hamiltonian_s(0.0, 1.0, 0.0, 1.0, &params(6.0)), 0.0);
        assert_eq!(hamiltonian_s(0.0, 2.0, 1.0, 0.0, &params(3.0)), 4.5);
    }

    #[test]
    fn vprime_is_derivative_of_v() {
        let p = params(2.5);
        let eps = 1e-5;
        for k in 0..=100 {
            let u = -5.0 + 0.1 * k as f64;
            let fd = (potential_v(u + eps, &p) - potential_v(u - eps, &p)) / (2.0 * eps);
            let exact = potential_vprime(u, &p);
            assert!((fd - exact).abs() <= 1e-8 * exact.abs().max(1.0), "u = {u}");
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(KdVParams::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(KdVParams::new(1.0, 1.0, 1.0, 1.0).is_err());
        let p = params(1.0);
        assert!(Discretization::new(&p, 9, 0.0).is_err());
        let g = Discretization::new(&p, 10, 0.1).unwrap();
        assert_eq!(g.r, g.tau / g.h);
        assert_eq!(g.require_odd(), Err(KdvError::SingularA { n: 10 }));
    }

    #[test]
    fn soliton_peak_and_rejection() {
        let p = params(6.0);
        let s = Soliton::new(0.5, 1.3, &p).unwrap();
        assert_eq!(s.eval(1.3, 0.0, &p), 0.5);
        assert!(Soliton::new(-0.5, 0.0, &p).is_err());
        assert!(Soliton::new(0.5, 0.0, &params(-6.0)).is_err());
        assert!(Soliton::new(-0.5, 0.0, &params(-6.0)).is_ok());
    }

    #[test]
    fn soliton_derivative_matches_finite_difference() {
        let p = params(6.0);
        let s = Soliton::new(0.8, 0.0, &p).unwrap();
        for &x in &[-3.0, -0.4, 0.0, 0.7, 2.2] {
            let eps = 1e-6;
            let fd = (s.eval(x + eps, 0.3, &p) - s.eval(x - eps, 0.3, &p)) / (2.0 * eps);
            assert_relative_eq!(fd, s.eval_dx(x, 0.3, &p), epsilon = 1e-8);
        }
    }

    #[test]
    fn cosine_mass_vanishes_on_full_periods() {
        let p = KdVParams::new(1.0, 0.022, 0.0, 2.0).unwrap();
        let g = Discretization::new(&p, 64, 1e-3).unwrap();
        let (u0, c) = make_initial(&InitialCondition::Cosine, &p, &g).unwrap();
        assert_eq!(u0[0], 1.0);
        assert!(c.value().abs() < 1e-14);
    }

    #[test]
    fn vanishing_amplitude_gives_zero_field() {
        let p = params(6.0);
        let g = Discretization::new(&p, 33, 0.01).unwrap();
        let ic = InitialCondition::Soliton {
            amplitude: 0.0,
            center: 0.0,
        };
        let (u0, c) = make_initial(&ic, &p, &g).unwrap();
        assert!(u0.iter().all(|&x| x == 0.0));
        assert_eq!(c.value(), 0.0);
    }

    #[test]
    fn file_format_reports_first_bad_line() {
        let ok = InitialCondition::parse_samples("1.0\n2\n-3e-1\n", 3).unwrap();
        assert_eq!(ok, InitialCondition::Samples(vec![1.0, 2.0, -0.3]));

        match InitialCondition::parse_samples("1.0\nabc\n2.0\n", 3) {
            Err(KdvError::MalformedInput { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match InitialCondition::parse_samples("1.0\n2.0\n", 3) {
            Err(KdvError::MalformedInput { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match InitialCondition::parse_samples("1\n2\n3\n4\n", 3) {
            Err(KdvError::MalformedInput { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(InitialCondition::parse_samples("1\nNaN\n3\n", 3).is_err());
    }

    #[test]
    fn boundary_vector_layout() {
        let c = MassConstant(1.5).boundary_vector(4);
        assert_eq!(c, vec![0.0, 0.0, 0.0, 3.0]);
    }
}
