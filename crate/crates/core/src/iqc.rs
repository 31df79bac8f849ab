//! Incremental IQC route: multipliers, the frequency-domain condition on the
//! LTI block (gridded, with a certified Lipschitz slack), the sampled
//! trajectory condition on the nonlinearity, quadratic-continuity constants
//! and the resulting closed-loop incremental gain bound.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::certify::{build_schedule, Certificate, HomotopySchedule, Refusal, Route, Verdict, Witness};
use crate::error::{Error, Result};
use crate::lti::{log_grid, spectral_norm, spectral_norm_c, StateSpace};
use crate::operators::{check_pairs, Node, Operator, OperatorSpec};
use crate::signals::{dft, norm, Signal};

/// Hermitian tolerance for user-supplied multiplier matrices.
pub const HERMITIAN_TOL: f64 = 1e-9;

/// The `tau` values at which the nonlinearity condition is sampled.
pub const TAU_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, PartialEq)]
pub enum MultiplierKind {
    Constant(CMatrix),
    /// `diag(gamma^2 I, -I)`.
    SmallGain {
        gamma: f64,
    },
    /// `[[0, I], [I, 0]]`.
    Passivity,
    /// Entrywise linear interpolation between `(omega, matrix)` entries with
    /// strictly increasing `omega >= 0`; `Pi(-omega) = conj(Pi(omega))`.
    TableInterp(Vec<(f64, CMatrix)>),
}

/// A Hermitian-valued multiplier `Pi(j omega)` acting on `[y; w]` with
/// `y` of dimension `n_y` and `w` of dimension `n_w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Multiplier {
    kind: MultiplierKind,
    n_y: usize,
    n_w: usize,
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).map(|z| z * 0.5)
}

fn check_hermitian(m: &CMatrix, size: usize, what: &str) -> Result<()> {
    if m.nrows() != size || m.ncols() != size {
        return Err(Error::Multiplier(format!(
            "{what}: expected a {size}x{size} matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Multiplier(format!("{what}: non-finite entry")));
    }
    let skew = spectral_norm_c(&(m - m.adjoint()));
    if skew > HERMITIAN_TOL * (1.0 + spectral_norm_c(m)) {
        return Err(Error::Multiplier(format!("{what}: not Hermitian (|Pi - Pi*| = {skew:e})")));
    }
    Ok(())
}

impl Multiplier {
    pub fn small_gain(gamma: f64, n: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Multiplier(format!("small-gain gamma must be positive, got {gamma}")));
        }
        if n == 0 {
            return Err(Error::Multiplier("block dimension must be >= 1".into()));
        }
        Ok(Multiplier { kind: MultiplierKind::SmallGain { gamma }, n_y: n, n_w: n })
    }

    pub fn passivity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Multiplier("block dimension must be >= 1".into()));
        }
        Ok(Multiplier { kind: MultiplierKind::Passivity, n_y: n, n_w: n })
    }

    pub fn constant(matrix: CMatrix, n_y: usize, n_w: usize) -> Result<Self> {
        if n_y == 0 || n_w == 0 {
            return Err(Error::Multiplier("block dimensions must be >= 1".into()));
        }
        check_hermitian(&matrix, n_y + n_w, "constant multiplier")?;
        Ok(Multiplier { kind: MultiplierKind::Constant(hermitian_part(&matrix)), n_y, n_w })
    }

    pub fn table(entries: Vec<(f64, CMatrix)>, n_y: usize, n_w: usize) -> Result<Self> {
        if n_y == 0 || n_w == 0 {
            return Err(Error::Multiplier("block dimensions must be >= 1".into()));
        }
        if entries.is_empty() {
            return Err(Error::Multiplier("table multiplier needs at least one entry".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        let mut clean = Vec::with_capacity(entries.len());
        for (i, (w, m)) in entries.into_iter().enumerate() {
            if !(w >= 0.0 && w.is_finite() && w > prev) {
                return Err(Error::Multiplier(format!(
                    "table frequencies must be finite, >= 0 and strictly increasing (entry {i}: {w})"
                )));
            }
            prev = w;
            check_hermitian(&m, n_y + n_w, &format!("table entry {i}"))?;
            clean.push((w, hermitian_part(&m)));
        }
        Ok(Multiplier { kind: MultiplierKind::TableInterp(clean), n_y, n_w })
    }

    pub fn kind(&self) -> &MultiplierKind {
        &self.kind
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    pub fn size(&self) -> usize {
        self.n_y + self.n_w
    }

    fn block_diag(&self, top: f64, bottom: f64) -> CMatrix {
        let n = self.size();
        CMatrix::from_fn(n, n, |i, j| {
            if i != j {
                Complex64::new(0.0, 0.0)
            } else if i < self.n_y {
                Complex64::new(top, 0.0)
            } else {
                Complex64::new(bottom, 0.0)
            }
        })
    }

    /// `Pi(j omega)`; the flag reports whether a table query was clamped.
    fn eval_inner(&self, omega: f64) -> (CMatrix, bool) {
        match &self.kind {
            MultiplierKind::Constant(m) => (m.clone(), false),
            MultiplierKind::SmallGain { gamma } => (self.block_diag(gamma * gamma, -1.0), false),
            MultiplierKind::Passivity => {
                let (ny, n) = (self.n_y, self.size());
                let m = CMatrix::from_fn(n, n, |i, j| {
                    let one = (i < ny && j == i + ny) || (j < ny && i == j + ny);
                    Complex64::new(if one { 1.0 } else { 0.0 }, 0.0)
                });
                (m, false)
            }
            MultiplierKind::TableInterp(entries) => {
                let w = omega.abs();
                let (lo, hi) = (entries[0].0, entries[entries.len() - 1].0);
                let clamped = w < lo || w > hi;
                let m = if w <= lo {
                    entries[0].1.clone()
                } else if w >= hi {
                    entries[entries.len() - 1].1.clone()
                } else {
                    let k = entries.partition_point(|(x, _)| *x <= w) - 1;
                    let ((w0, m0), (w1, m1)) = (&entries[k], &entries[k + 1]);
                    let f = (w - w0) / (w1 - w0);
                    hermitian_part(&(m0.map(|z| z * (1.0 - f)) + m1.map(|z| z * f)))
                };
                (if omega < 0.0 { m.map(|z| z.conj()) } else { m }, clamped)
            }
        }
    }

    /// Bound on `|d Pi / d omega|` (zero except for tables).
    fn slope_bound(&self) -> f64 {
        match &self.kind {
            MultiplierKind::TableInterp(e) => {
                e.windows(2).map(|p| spectral_norm_c(&(&p[1].1 - &p[0].1)) / (p[1].0 - p[0].0)).fold(0.0, f64::max)
            }
            _ => 0.0,
        }
    }
}

/// `Pi(j omega)` (Hermitian). Table queries outside the table's range are an error.
pub fn eval_multiplier(m: &Multiplier, omega: f64) -> Result<CMatrix> {
    if !omega.is_finite() {
        return Err(Error::InvalidArgument(format!("omega must be finite, got {omega}")));
    }
    let (pi, clamped) = m.eval_inner(omega);
    if clamped {
        let MultiplierKind::TableInterp(e) = &m.kind else { unreachable!() };
        return Err(Error::OutOfRange { target: omega.abs(), lo: e[0].0, hi: e[e.len() - 1].0 });
    }
    Ok(pi)
}

/// `M = sup_omega |Pi(j omega)|` (exact: tables interpolate linearly, and the
/// norm is convex).
pub fn form_bound(m: &Multiplier) -> f64 {
    match &m.kind {
        MultiplierKind::Constant(p) => spectral_norm_c(p),
        MultiplierKind::SmallGain { gamma } => (gamma * gamma).max(1.0),
        MultiplierKind::Passivity => 1.0,
        MultiplierKind::TableInterp(e) => e.iter().map(|(_, p)| spectral_norm_c(p)).fold(0.0, f64::max),
    }
}

/// Quadratic-continuity constant `C(eps) = M + M^2 / eps`.
pub fn quad_constant(m_bound: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    Ok(m_bound + m_bound * m_bound / eps)
}

/// `(1/2pi) sum_omega x^* Pi x d omega`, and the number of clamped table
/// queries.
fn sigma_counted(m: &Multiplier, x: &Signal) -> Result<(f64, usize)> {
    if x.dim() != m.size() {
        return Err(Error::Dimension(format!(
            "stacked signal has dimension {}, multiplier expects {}",
            x.dim(),
            m.size()
        )));
    }
    let sp = dft(x);
    let n = m.size();
    let constant = !matches!(m.kind, MultiplierKind::TableInterp(_));
    let fixed = if constant { Some(m.eval_inner(0.0).0) } else { None };
    let mut total = 0.0;
    let mut clamped = 0usize;
    for (k, &w) in sp.frequencies().iter().enumerate() {
        let pi = match &fixed {
            Some(p) => p.clone(),
            None => {
                let (p, c) = m.eval_inner(w);
                clamped += c as usize;
                p
            }
        };
        let v = sp.bin(k);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += v[i].conj() * pi[(i, j)] * v[j];
            }
        }
        total += acc.re;
    }
    Ok((total * sp.d_omega() / (2.0 * PI), clamped))
}

/// `sigma(x) = <x, x>_Pi` with the `1/2pi` normalization, so that
/// `Pi = I` gives `|x|^2`.
pub fn sigma_form(m: &Multiplier, x: &Signal) -> Result<f64> {
    Ok(sigma_counted(m, x)?.0)
}

/// Outcome of the gridded LTI frequency condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LtiConditionReport {
    /// `-max lambda_max(M(omega))` over the sampled frequencies (including `omega -> inf`).
    pub eps: f64,
    /// Certified margin `-sup lambda_max(M(omega))` over all frequencies.
    pub eps_certified: f64,
    /// `eps - eps_certified`: allowance for the unsampled frequencies.
    pub slack: f64,
    pub passed: bool,
    pub worst_omega: f64,
    /// `lambda_max` of the `omega -> inf` limit `[D; I]^* Pi [D; I]`.
    pub limit_value: f64,
    pub grid_points: usize,
    pub clamped_queries: usize,
}

const LTI_EVAL_BUDGET: usize = 200_000;

struct LtiForm<'a> {
    ss: &'a StateSpace,
    m: &'a Multiplier,
}

impl LtiForm<'_> {
    fn stack(&self, h: &CMatrix) -> CMatrix {
        let (ny, nw) = (self.m.n_y, self.m.n_w);
        CMatrix::from_fn(ny + nw, nw, |i, j| {
            if i < ny {
                h[(i, j)]
            } else if i - ny == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    fn lambda_max(&self, g: &CMatrix, pi: &CMatrix) -> f64 {
        let form = hermitian_part(&(g.adjoint() * pi * g));
        form.symmetric_eigen().eigenvalues.max()
    }

    /// `(lambda_max(M(omega)), sigma_min(j omega I - A), clamped)`.
    fn eval(&self, omega: f64) -> (f64, f64, bool) {
        let (pi, clamped) = self.m.eval_inner(omega);
        let g = self.stack(&self.ss.freq_response(omega));
        let sigma = if self.ss.states() == 0 { f64::INFINITY } else { self.ss.resolvent_sigma_min(omega) };
        (self.lambda_max(&g, &pi), sigma, clamped)
    }
}

#[derive(Clone, Copy)]
struct Sample {
    omega: f64,
    lambda: f64,
    sigma: f64,
}

/// Checks `[H(jw); I]^* Pi(jw) [H(jw); I] <= -eps I` for all `w`.
///
/// The form is sampled on `grid` (default: the block's frequency grid,
/// mirrored to negative frequencies) and on the `omega -> inf` limit. Between
/// neighbouring samples, `lambda_max` is bounded using a Lipschitz constant
/// built from `sigma_min(j omega I - A)`, which is 1-Lipschitz in `omega`;
/// intervals whose bound exceeds the sampled maximum are bisected. Beyond
/// the last sample, `|H - D| <= |C||B| / (omega - |A|)` bounds the tail.
pub fn check_lti_condition(h1: &OperatorSpec, m: &Multiplier, grid: Option<&[f64]>) -> Result<LtiConditionReport> {
    let Node::Lti(ss) = h1.node() else {
        return Err(Error::InvalidOperator("the LTI frequency condition needs an LTI h1".into()));
    };
    if ss.outputs() != m.n_y || ss.inputs() != m.n_w {
        return Err(Error::Dimension(format!(
            "multiplier blocks ({}, {}) do not match h1 outputs/inputs ({}, {})",
            m.n_y,
            m.n_w,
            ss.outputs(),
            ss.inputs()
        )));
    }
    let form = LtiForm { ss, m };
    let base: Vec<f64> = match grid {
        Some(g) => {
            if g.is_empty() || g.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::InvalidArgument("frequency grid must be nonempty, finite, >= 0".into()));
            }
            g.to_vec()
        }
        None => ss.default_grid(),
    };
    let mut omegas: Vec<f64> = base.iter().flat_map(|&w| [w, -w]).collect();
    omegas.sort_by(f64::total_cmp);
    omegas.dedup();

    let cb = spectral_norm(ss.c()) * spectral_norm(ss.b());
    let a_norm = spectral_norm(ss.a());
    let d_norm = spectral_norm(ss.d());
    let pi_bound = form_bound(m);
    let pi_slope = m.slope_bound();

    let mut clamped = 0usize;
    let mut samples: Vec<Sample> = omegas
        .par_iter()
        .map(|&w| {
            let (lambda, sigma, c) = form.eval(w);
            (Sample { omega: w, lambda, sigma }, c)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|(s, c)| {
            clamped += c as usize;
            s
        })
        .collect();

    // omega -> inf limit: Pi at +/- infinity, H replaced by D
    let pi_inf = m.eval_inner(f64::MAX).0;
    let g_inf = form.stack(&ss.d().map(|v| Complex64::new(v, 0.0)));
    let limit_value = form.lambda_max(&g_inf, &pi_inf).max(form.lambda_max(&g_inf, &pi_inf.map(|z| z.conj())));
    let g_inf_norm = spectral_norm_c(&g_inf);

    let interval_bound = |a: &Sample, b: &Sample| -> f64 {
        let h = b.omega - a.omega;
        let s = (a.sigma + b.sigma - h) / 2.0;
        if s <= 0.0 {
            return f64::INFINITY;
        }
        let hn = cb / s + d_norm;
        let gn2 = 1.0 + hn * hn;
        let dh = cb / (s * s);
        let lip = 2.0 * pi_bound * gn2.sqrt() * dh + gn2 * pi_slope;
        (a.lambda + b.lambda + lip * h) / 2.0
    };
    // variation of Pi beyond omega_n (tables only)
    let table_tail = |wn: f64| -> f64 {
        match &m.kind {
            MultiplierKind::TableInterp(e) => {
                let last = &e[e.len() - 1].1;
                let near = m.eval_inner(wn).0;
                e.iter()
                    .filter(|(w, _)| *w >= wn)
                    .map(|(_, p)| spectral_norm_c(&(p - last)))
                    .fold(spectral_norm_c(&(&near - last)), f64::max)
            }
            _ => 0.0,
        }
    };
    let tail_bound = |wn: f64| -> f64 {
        if wn <= a_norm {
            return f64::INFINITY;
        }
        let delta = cb / (wn - a_norm);
        let g = g_inf_norm + delta;
        limit_value + pi_bound * (2.0 * g_inf_norm * delta + delta * delta) + table_tail(wn) * g * g
    };

    let mut evaluations = samples.len();
    let sampled_max = |samples: &[Sample]| samples.iter().map(|s| s.lambda).fold(limit_value, f64::max);
    loop {
        let target = sampled_max(&samples);
        let tol = 1e-6 * (1.0 + target.abs());
        let mut mids = Vec::new();
        for pair in samples.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let h = b.omega - a.omega;
            if interval_bound(a, b) > target + tol && h > 1e-12 * (1.0 + a.omega.abs().max(b.omega.abs())) {
                mids.push(0.5 * (a.omega + b.omega));
            }
        }
        let wn = samples[samples.len() - 1].omega;
        let extend_tail = tail_bound(wn) > target + tol && wn < 1e12;
        if extend_tail {
            let top = (10.0 * wn).max(10.0 * a_norm).max(1.0);
            for w in log_grid(wn.max(1e-12), top, 64, false).into_iter().skip(1) {
                mids.push(w);
                mids.push(-w);
            }
        }
        if mids.is_empty() || evaluations + mids.len() > LTI_EVAL_BUDGET {
            break;
        }
        evaluations += mids.len();
        let fresh: Vec<(Sample, bool)> = mids
            .par_iter()
            .map(|&w| {
                let (lambda, sigma, c) = form.eval(w);
                (Sample { omega: w, lambda, sigma }, c)
            })
            .collect();
        for (s, c) in fresh {
            clamped += c as usize;
            samples.push(s);
        }
        samples.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    }

    let (worst_omega, worst) = samples
        .iter()
        .map(|s| (s.omega, s.lambda))
        .fold((f64::INFINITY, limit_value), |acc, (w, l)| if l > acc.1 { (w, l) } else { acc });
    let worst_omega = if worst_omega.is_infinite() { worst_omega } else { worst_omega.abs() };
    let wn = samples[samples.len() - 1].omega;
    let certified_sup =
        samples.windows(2).map(|p| interval_bound(&p[0], &p[1])).fold(worst.max(tail_bound(wn)), f64::max);
    let eps = -worst;
    let eps_certified = -certified_sup;
    Ok(LtiConditionReport {
        eps,
        eps_certified,
        slack: eps - eps_certified,
        passed: eps_certified > 0.0,
        worst_omega,
        limit_value,
        grid_points: samples.len() + 1,
        clamped_queries: clamped,
    })
}

/// Minimum of the sampled nonlinearity condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalIqcReport {
    pub min_value: f64,
    /// `min_value` divided by the pair's `|dy|^2 + |tau dH2(y)|^2`.
    pub min_normalized: f64,
    pub worst_pair: usize,
    pub worst_tau: f64,
    pub passed: bool,
    pub evaluations: usize,
    pub clamped_queries: usize,
}

/// Samples `sigma([dy; tau dH2(y)]) >= 0` over pairs and `tau_grid`. A
/// falsification test: passing is evidence, not proof.
pub fn check_inc_iqc_empirical(
    h2: &OperatorSpec,
    m: &Multiplier,
    y_pairs: &[(Signal, Signal)],
    tau_grid: &[f64],
) -> Result<EmpiricalIqcReport> {
    check_pairs(y_pairs)?;
    if tau_grid.is_empty() || tau_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidArgument("tau grid must be nonempty within [0, 1]".into()));
    }
    let rows = y_pairs
        .par_iter()
        .enumerate()
        .map(|(i, (y1, y2))| {
            let dy = y1.try_sub(y2)?;
            if dy.dim() != m.n_y {
                return Err(Error::Dimension(format!(
                    "pair {i}: y has dimension {}, multiplier n_y = {}",
                    dy.dim(),
                    m.n_y
                )));
            }
            let dw = h2.apply(y1)?.try_sub(&h2.apply(y2)?)?;
            if dw.dim() != m.n_w {
                return Err(Error::Dimension(format!(
                    "pair {i}: H2(y) has dimension {}, multiplier n_w = {}",
                    dw.dim(),
                    m.n_w
                )));
            }
            let mut out = Vec::with_capacity(tau_grid.len());
            for &tau in tau_grid {
                let w = dw.scaled(tau);
                let (v, c) = sigma_counted(m, &dy.stack(&w)?)?;
                let scale = norm(&dy).powi(2) + norm(&w).powi(2);
                out.push((i, tau, v, scale, c));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = EmpiricalIqcReport {
        min_value: f64::INFINITY,
        min_normalized: f64::INFINITY,
        worst_pair: 0,
        worst_tau: 0.0,
        passed: true,
        evaluations: 0,
        clamped_queries: 0,
    };
    for (i, tau, v, scale, c) in rows.into_iter().flatten() {
        report.evaluations += 1;
        report.clamped_queries += c;
        if v < report.min_value {
            report.min_value = v;
            report.worst_pair = i;
            report.worst_tau = tau;
        }
        report.min_normalized = report.min_normalized.min(v / scale);
        if v < -1e-9 * scale {
            report.passed = false;
        }
    }
    Ok(report)
}

/// Constants and bound of the IQC route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IqcReport {
    /// Margin of the LTI condition used in the bound.
    pub eps: f64,
    /// Converted margin `eps / (2 (1 + alpha))`.
    pub eps_bar: f64,
    /// Form bound `M = sup |Pi|`.
    pub m_bound: f64,
    /// Quadratic-continuity constant `C(eps_bar)`.
    pub c: f64,
    /// Incremental gain of H1.
    pub lambda: f64,
    /// Gain-with-offset bound of H1.
    pub alpha: f64,
    /// `sqrt((C / eps_bar) lambda^2 / (1 + lambda^2))`.
    pub bound: f64,
    pub lti_slack: Option<f64>,
    pub empirical_min: Option<f64>,
    pub clamped_queries: usize,
}

/// Closed-loop incremental gain bound from an LTI margin `eps`.
pub fn iqc_gain_bound(eps: f64, m: &Multiplier, h1: &OperatorSpec) -> Result<IqcReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let hinf = match h1.node() {
        Node::Lti(ss) => Some(ss.hinf_norm()),
        _ => None,
    };
    let lambda = h1
        .declared_inc_gain()
        .or(hinf)
        .ok_or_else(|| Error::MissingDeclaration("h1 has no declared or computable incremental gain".into()))?;
    let alpha = hinf.unwrap_or(lambda);
    let eps_bar = eps / (2.0 * (1.0 + alpha));
    let m_bound = form_bound(m);
    let c = quad_constant(m_bound, eps_bar)?;
    let l2 = lambda * lambda;
    let bound = ((c / eps_bar) * l2 / (1.0 + l2)).sqrt();
    Ok(IqcReport {
        eps,
        eps_bar,
        m_bound,
        c,
        lambda,
        alpha,
        bound,
        lti_slack: None,
        empirical_min: None,
        clamped_queries: 0,
    })
}

/// IQC route end to end; the nonlinearity condition is sampled on `pairs`
/// over [`TAU_GRID`].
pub fn certify_iqc(
    h1: &OperatorSpec,
    h2: &OperatorSpec,
    m: &Multiplier,
    grid: Option<&[f64]>,
    pairs: &[(Signal, Signal)],
) -> Result<Verdict> {
    let gamma2 = h2
        .declared_inc_gain()
        .ok_or_else(|| Error::MissingDeclaration("h2 has no declared incremental gain".into()))?;
    let lti = check_lti_condition(h1, m, grid)?;
    if !lti.passed {
        return Ok(Verdict::Refused(Refusal {
            route: Route::Iqc,
            reason: format!(
                "LTI frequency condition not certified: eps = {:e} does not exceed the grid slack {:e}",
                lti.eps, lti.slack
            ),
            witness: Witness::LtiCondition { eps: lti.eps, slack: lti.slack, worst_omega: lti.worst_omega },
        }));
    }
    let emp = check_inc_iqc_empirical(h2, m, pairs, &TAU_GRID)?;
    if !emp.passed {
        return Ok(Verdict::Refused(Refusal {
            route: Route::Iqc,
            reason: format!(
                "nonlinearity IQC falsified: quadratic form {} < 0 on pair {} at tau = {}",
                emp.min_value, emp.worst_pair, emp.worst_tau
            ),
            witness: Witness::Falsified { min_value: emp.min_value, pair: emp.worst_pair, tau: emp.worst_tau },
        }));
    }
    let mut report = iqc_gain_bound(lti.eps_certified, m, h1)?;
    report.lti_slack = Some(lti.slack);
    report.empirical_min = Some(emp.min_value);
    report.clamped_queries = lti.clamped_queries + emp.clamped_queries;
    let gamma = report.bound;
    let schedule = if report.lambda > 0.0 && gamma2 > 0.0 && gamma > 0.0 {
        build_schedule(report.lambda, gamma2, gamma)?
    } else {
        HomotopySchedule { nu: 1.0, tau_step: 1.0, steps: 0, gamma1: report.lambda, gamma2, gamma }
    };
    let mut premises = vec![
        format!("incremental gain of H1: {} (also the lambda of the gain bound)", report.lambda),
        format!("declared incremental gain of H2: {gamma2}"),
        format!(
            "LTI frequency condition proven on a {}-point grid with Lipschitz slack {:e} and tail bound",
            lti.grid_points, lti.slack
        ),
        format!(
            "nonlinearity IQC only sampled on {} pairs x {} tau values (falsification test, not a proof)",
            pairs.len(),
            TAU_GRID.len()
        ),
    ];
    if report.clamped_queries > 0 {
        premises.push(format!("table multiplier clamped at {} out-of-range frequencies", report.clamped_queries));
    }
    let mut cert = Certificate::new(Route::Iqc, lti.eps_certified, gamma, schedule, premises);
    cert.iqc = Some(report);
    Ok(Verdict::Certified(cert))
}
