//! Continuous-time state-space blocks: exact zero-order-hold simulation,
//! frequency response, and gridded H-infinity norm.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signals::Signal;

/// Hurwitz threshold on the spectral abscissa.
pub const HURWITZ_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

/// ZOH-discretized realization at a fixed step, stored row-major for the
/// sample loop.
#[derive(Debug, Clone)]
struct Discrete {
    n: usize,
    m: usize,
    p: usize,
    ad: Vec<f64>,
    bd: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

pub(crate) fn spectral_norm_c(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

impl StateSpace {
    /// Validates dimensions and requires `A` to be Hurwitz.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension(format!("A must be square and nonempty, got {}x{}", n, a.ncols())));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension(format!("B must be {n}xm, got {}x{}", b.nrows(), b.ncols())));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::Dimension(format!("C must be px{n}, got {}x{}", c.nrows(), c.ncols())));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "D must be {}x{}, got {}x{}",
                c.nrows(),
                b.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).chain(d.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidOperator("non-finite state-space entry".into()));
        }
        let ss = Self { a, b, c, d };
        let abscissa = ss.spectral_abscissa();
        if abscissa >= -HURWITZ_TOL {
            return Err(Error::NotHurwitz { max_real_part: abscissa });
        }
        Ok(ss)
    }

    /// Builds from row-major nested lists.
    pub fn from_rows(a: &[Vec<f64>], b: &[Vec<f64>], c: &[Vec<f64>], d: &[Vec<f64>]) -> Result<Self> {
        fn mat(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
            let r = rows.len();
            let cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|row| row.len() != cols) {
                return Err(Error::Dimension(format!("{name} has ragged rows")));
            }
            Ok(DMatrix::from_fn(r, cols, |i, j| rows[i][j]))
        }
        Self::new(mat("A", a)?, mat("B", b)?, mat("C", c)?, mat("D", d)?)
    }

    /// First-order lag `k / (s + p)` realized as `(-p, 1, k, 0)`.
    pub fn first_order(k: f64, p: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, -p),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, k),
            DMatrix::zeros(1, 1),
        )
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Largest real part over the eigenvalues of `A`.
    pub fn spectral_abscissa(&self) -> f64 {
        self.a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn discretize(&self, dt: f64) -> Discrete {
        let n = self.states();
        let m = self.inputs();
        let mut blk = DMatrix::<f64>::zeros(n + m, n + m);
        blk.view_mut((0, 0), (n, n)).copy_from(&(&self.a * dt));
        blk.view_mut((0, n), (n, m)).copy_from(&(&self.b * dt));
        let e = blk.exp();
        Discrete {
            n,
            m,
            p: self.outputs(),
            ad: row_major(&e.view((0, 0), (n, n)).into_owned()),
            bd: row_major(&e.view((0, n), (n, m)).into_owned()),
            c: row_major(&self.c),
            d: row_major(&self.d),
        }
    }

    /// Exact ZOH response from zero initial state.
    pub fn simulate(&self, u: &Signal) -> Result<Signal> {
        if u.dim() != self.inputs() {
            return Err(Error::Dimension(format!(
                "LTI block expects {}-dimensional input, got {}",
                self.inputs(),
                u.dim()
            )));
        }
        let sys = self.discretize(u.dt());
        let (n, m, p) = (sys.n, sys.m, sys.p);
        let mut x = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut y = Vec::with_capacity(u.len() * p);
        // row-major dot products; summation order matches the textbook recurrence
        let dot = |row: &[f64], v: &[f64]| row.iter().zip(v).fold(0.0, |acc, (a, b)| acc + a * b);
        for k in 0..u.len() {
            let uk = u.sample(k);
            for i in 0..p {
                y.push(dot(&sys.d[i * m..(i + 1) * m], uk) + dot(&sys.c[i * n..(i + 1) * n], &x));
            }
            for (i, slot) in next.iter_mut().enumerate() {
                *slot = dot(&sys.bd[i * m..(i + 1) * m], uk) + dot(&sys.ad[i * n..(i + 1) * n], &x);
            }
            std::mem::swap(&mut x, &mut next);
        }
        Ok(Signal::reshaped(y, p, u.dt()))
    }

    /// `C (j omega I - A)^-1 B + D`
    pub fn freq_response(&self, omega: f64) -> DMatrix<Complex64> {
        let n = self.states();
        let resolvent = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let diag = if i == j { Complex64::new(0.0, omega) } else { Complex64::new(0.0, 0.0) };
            diag - self.a[(i, j)]
        });
        let bc = self.b.map(|x| Complex64::new(x, 0.0));
        let x = resolvent.lu().solve(&bc).expect("j omega I - A is invertible for Hurwitz A");
        self.c.map(|v| Complex64::new(v, 0.0)) * x + self.d.map(|v| Complex64::new(v, 0.0))
    }

    /// Smallest singular value of `j omega I - A`.
    pub fn resolvent_sigma_min(&self, omega: f64) -> f64 {
        let n = self.states();
        let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let diag = if i == j { Complex64::new(0.0, omega) } else { Complex64::new(0.0, 0.0) };
            diag - self.a[(i, j)]
        });
        m.svd(false, false).singular_values.min()
    }

    /// `{0} ∪ 512 log-spaced points in [1e-3, 1e3] * rho(A)`.
    pub fn default_grid(&self) -> Vec<f64> {
        let scale = self.spectral_radius().max(1e-12);
        log_grid(1e-3 * scale, 1e3 * scale, 512, true)
    }

    /// H-infinity norm estimated on [`Self::default_grid`] with golden-section
    /// refinement around the best grid point; the `omega -> inf` value `|D|`
    /// is included.
    pub fn hinf_norm(&self) -> f64 {
        let grid = self.default_grid();
        let gain = |w: f64| spectral_norm_c(&self.freq_response(w));
        let values: Vec<f64> = grid.iter().map(|&w| gain(w)).collect();
        let (best, &peak) = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty grid");
        let lo = grid[best.saturating_sub(1)];
        let hi = grid[(best + 1).min(grid.len() - 1)];
        let refined = golden_max(gain, lo, hi, 60);
        peak.max(refined).max(spectral_norm(&self.d))
    }

    /// Inverse realization `(A - B D^-1 C, B D^-1, -D^-1 C, D^-1)`. Not
    /// checked for stability.
    pub fn inverse(&self) -> Result<StateSpace> {
        if self.d.nrows() != self.d.ncols() {
            return Err(Error::NotInvertible("feedthrough D is not square".into()));
        }
        let d_inv = self
            .d
            .clone()
            .try_inverse()
            .filter(|m| m.iter().all(|x| x.is_finite()))
            .ok_or_else(|| Error::NotInvertible("feedthrough D is singular".into()))?;
        Ok(StateSpace {
            a: &self.a - &self.b * &d_inv * &self.c,
            b: &self.b * &d_inv,
            c: -(&d_inv * &self.c),
            d: d_inv,
        })
    }

    /// Exact left inverse of [`Self::simulate`]: runs the inverse realization
    /// of the ZOH-sampled quadruple, `x+ = (Ad - Bd D^-1 C) x + Bd D^-1 y`,
    /// `u = D^-1 (y - C x)`.
    pub fn simulate_inverse(&self, y: &Signal) -> Result<Signal> {
        let inv = self.inverse()?;
        if y.dim() != self.outputs() {
            return Err(Error::Dimension(format!(
                "inverse of LTI block expects {}-dimensional input, got {}",
                self.outputs(),
                y.dim()
            )));
        }
        let sys = self.discretize(y.dt());
        let n = sys.n;
        let d_inv = inv.d.clone();
        let ad = DMatrix::from_row_slice(n, n, &sys.ad);
        let bd = DMatrix::from_row_slice(n, sys.m, &sys.bd);
        let a_inv = &ad - &bd * &d_inv * &self.c;
        let b_inv = &bd * &d_inv;
        let mut x = nalgebra::DVector::<f64>::zeros(n);
        let mut u = Vec::with_capacity(y.len() * sys.m);
        for k in 0..y.len() {
            let yk = nalgebra::DVector::from_column_slice(y.sample(k));
            let uk = &d_inv * (&yk - &self.c * &x);
            u.extend(uk.iter());
            x = &a_inv * &x + &b_inv * &yk;
        }
        Ok(Signal::reshaped(u, sys.m, y.dt()))
    }
}

pub fn log_grid(lo: f64, hi: f64, points: usize, with_zero: bool) -> Vec<f64> {
    let mut grid = Vec::with_capacity(points + 1);
    if with_zero {
        grid.push(0.0);
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    for i in 0..points {
        let f = if points == 1 { 0.0 } else { i as f64 / (points - 1) as f64 };
        grid.push((llo + f * (lhi - llo)).exp());
    }
    grid
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    f1.max(f2)
}
