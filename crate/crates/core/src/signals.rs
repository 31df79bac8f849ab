//! Finite-horizon, uniformly sampled stand-ins for L2 trajectories.
//!
//! Integrals are left-endpoint rectangle sums, so `norm`, `inner` and the
//! Parseval bookkeeping of [`dft`] agree exactly up to rounding.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// A real vector-valued trajectory sampled at `t_k = k * dt`, `k = 0..len`.
///
/// Samples are stored sample-major: component `j` of sample `k` lives at
/// `data[k * dim + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    data: Vec<f64>,
    dim: usize,
    dt: f64,
}

impl Signal {
    pub fn new(data: Vec<f64>, dim: usize, dt: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSignal("dimension must be >= 1".into()));
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidSignal(format!(
                "{} values do not form a whole number (>= 1) of {dim}-vectors",
                data.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidSignal(format!("dt must be positive, got {dt}")));
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidSignal(format!("non-finite value at flat index {k}")));
        }
        Ok(Self { data, dim, dt })
    }

    pub fn zeros(len: usize, dim: usize, dt: f64) -> Result<Self> {
        Self::new(vec![0.0; len * dim], dim, dt)
    }

    /// Scalar signal `x(t_k) = f(t_k)`.
    pub fn from_fn(len: usize, dt: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..len).map(|k| f(k as f64 * dt)).collect(), 1, dt)
    }

    /// Builds a signal of the same shape from a closure on the flat sample buffer.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self { data, dim: self.dim, dt: self.dt }
    }

    /// Same length and `dt`, different dimension. Used by operators whose
    /// output dimension differs from their input.
    pub(crate) fn reshaped(data: Vec<f64>, dim: usize, dt: f64) -> Self {
        debug_assert!(dim > 0 && data.len().is_multiple_of(dim));
        Self { data, dim, dt }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// End of the sampled window, `len * dt`.
    pub fn horizon(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| k as f64 * self.dt)
    }

    /// Largest absolute sample component.
    pub fn peak(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn same_shape(&self, other: &Signal) -> bool {
        self.dim == other.dim && self.data.len() == other.data.len() && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }

    pub(crate) fn check_shape(&self, other: &Signal) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "(N={}, n={}, dt={}) vs (N={}, n={}, dt={})",
                self.len(),
                self.dim,
                self.dt,
                other.len(),
                other.dim,
                other.dt
            )))
        }
    }

    pub fn scaled(&self, c: f64) -> Signal {
        self.with_data(self.data.iter().map(|x| c * x).collect())
    }

    pub fn try_add(&self, other: &Signal) -> Result<Signal> {
        self.check_shape(other)?;
        Ok(self.with_data(self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect()))
    }

    pub fn try_sub(&self, other: &Signal) -> Result<Signal> {
        self.check_shape(other)?;
        Ok(self.with_data(self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect()))
    }

    /// `self + c * other`
    pub fn try_axpy(&self, c: f64, other: &Signal) -> Result<Signal> {
        self.check_shape(other)?;
        Ok(self.with_data(self.data.iter().zip(&other.data).map(|(a, b)| a + c * b).collect()))
    }

    /// Stacks the components of `self` on top of those of `other`.
    pub fn stack(&self, other: &Signal) -> Result<Signal> {
        if self.len() != other.len() || (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return Err(Error::ShapeMismatch("stacked signals need equal N and dt".into()));
        }
        let dim = self.dim + other.dim;
        let mut data = Vec::with_capacity(self.len() * dim);
        for k in 0..self.len() {
            data.extend_from_slice(self.sample(k));
            data.extend_from_slice(other.sample(k));
        }
        Ok(Signal::reshaped(data, dim, self.dt))
    }

    pub fn norm(&self) -> f64 {
        norm(self)
    }

    /// Reads `t,x1,...,xn` CSV. The time column must be uniformly spaced.
    pub fn read_csv<R: Read>(reader: R) -> Result<Signal> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || headers.get(0).map(str::trim) != Some("t") {
            return Err(Error::InvalidSignal("header must be `t,x1,...,xn`".into()));
        }
        let dim = headers.len() - 1;
        let mut times = Vec::new();
        let mut data = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut vals = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::InvalidSignal(format!("row {}: {e}", row + 1))));
            times.push(vals.next().transpose()?.unwrap_or(f64::NAN));
            for v in vals {
                data.push(v?);
            }
        }
        if times.len() < 2 {
            return Err(Error::InvalidSignal("need at least two rows to infer dt".into()));
        }
        let dt = times[1] - times[0];
        for (k, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.abs() {
                return Err(Error::InvalidSignal(format!("non-uniform time spacing at row {}", k + 2)));
            }
        }
        if data.len() != times.len() * dim {
            return Err(Error::InvalidSignal("ragged rows".into()));
        }
        Signal::new(data, dim, dt)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|j| format!("x{j}")));
        wtr.write_record(&header)?;
        for (k, t) in self.times().enumerate() {
            let mut row = vec![format!("{t}")];
            row.extend(self.sample(k).iter().map(|x| format!("{x}")));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `(sum_k s_k^T s_k dt)^(1/2)`.
pub fn norm(s: &Signal) -> f64 {
    (s.data.iter().map(|x| x * x).sum::<f64>() * s.dt).sqrt()
}

pub fn inner(s1: &Signal, s2: &Signal) -> Result<f64> {
    s1.check_shape(s2)?;
    Ok(s1.data.iter().zip(&s2.data).map(|(a, b)| a * b).sum::<f64>() * s1.dt)
}

/// Angle between two signals, `arccos(<u,y> / (|u| |y|))` in `[0, pi]`.
///
/// Evaluated as `2 atan2(|u/|u| - y/|y||, |u/|u| + y/|y||)`, which stays
/// accurate near `0` and `pi` where `arccos` loses half the digits.
pub fn angle(u: &Signal, y: &Signal) -> Result<f64> {
    u.check_shape(y)?;
    let nu = norm(u);
    let ny = norm(y);
    if nu == 0.0 {
        return Err(Error::ZeroNorm("angle: first argument"));
    }
    if ny == 0.0 {
        return Err(Error::ZeroNorm("angle: second argument"));
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in u.data.iter().zip(&y.data) {
        let (a, b) = (a / nu, b / ny);
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

/// `P_T`: keeps samples with `t < T`, zeroes the rest.
pub fn truncate(s: &Signal, horizon: f64) -> Signal {
    let mut data = s.data.clone();
    for k in 0..s.len() {
        if (k as f64) * s.dt >= horizon {
            data[k * s.dim..].fill(0.0);
            break;
        }
    }
    s.with_data(data)
}

/// Frequency-domain representation on a two-sided grid centred at zero.
///
/// `bins[m * dim + j]` is component `j` at `frequencies[m]`; bins are
/// scaled by `dt` so that `|s|^2 = (1/2pi) sum |bin|^2 d_omega`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    bins: Vec<Complex64>,
    dim: usize,
    d_omega: f64,
    frequencies: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn d_omega(&self) -> f64 {
        self.d_omega
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn bin(&self, m: usize) -> &[Complex64] {
        &self.bins[m * self.dim..(m + 1) * self.dim]
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    /// `(1/2pi) sum_m |bin_m|^2 d_omega`
    pub fn energy(&self) -> f64 {
        self.bins.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.d_omega / (2.0 * PI)
    }
}

// Shifted position m <-> unshifted FFT index.
fn unshifted_index(m: usize, n: usize) -> usize {
    (m + n - n / 2) % n
}

fn frequency_grid(n: usize, d_omega: f64) -> Vec<f64> {
    (0..n).map(|m| (m as f64 - (n / 2) as f64) * d_omega).collect()
}

pub fn dft(s: &Signal) -> Spectrum {
    let n = s.len();
    let dim = s.dim;
    let d_omega = 2.0 * PI / (n as f64 * s.dt);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut bins = vec![Complex64::new(0.0, 0.0); n * dim];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..dim {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(s.data[k * dim + j], 0.0);
        }
        fft.process(&mut buf);
        for m in 0..n {
            bins[m * dim + j] = buf[unshifted_index(m, n)] * s.dt;
        }
    }
    Spectrum { bins, dim, d_omega, frequencies: frequency_grid(n, d_omega) }
}

/// Inverse of [`dft`]; the imaginary residue of non-Hermitian input is discarded.
pub fn idft(sp: &Spectrum) -> Signal {
    let n = sp.len();
    let dim = sp.dim;
    let dt = 2.0 * PI / (n as f64 * sp.d_omega);
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let mut data = vec![0.0; n * dim];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..dim {
        for m in 0..n {
            buf[unshifted_index(m, n)] = sp.bins[m * dim + j];
        }
        ifft.process(&mut buf);
        let scale = 1.0 / (n as f64 * dt);
        for (k, b) in buf.iter().enumerate() {
            data[k * dim + j] = b.re * scale;
        }
    }
    Signal::reshaped(data, dim, dt)
}
