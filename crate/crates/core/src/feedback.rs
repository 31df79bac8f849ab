//! Fixed-point solution of the negative-feedback loop
//! `e = u - tau H2(y)`, `y = H1(e)` by plain Picard iteration, plus the
//! empirical closed-loop gain and the arctan counterexample experiment.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::{check_pairs, GainEstimate, OperatorSpec};
use crate::signals::{norm, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Stop when `|e_{k+1} - e_k| <= rel_tol * (1 + |u|)`.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Divergence is declared when the residual has not decreased once over
    /// this many consecutive iterations.
    pub divergence_window: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { rel_tol: 1e-8, max_iter: 10_000, divergence_window: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveTrace {
    pub iterates: usize,
    /// `|e_{k+1} - e_k|` per iteration.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// Geometric-mean residual ratio after burn-in.
    pub contraction_estimate: f64,
    /// `|e + tau H2(y) - u|` at the returned point, computed independently
    /// of the iteration.
    pub equation_residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct FeedbackSolution {
    pub e: Signal,
    pub y: Signal,
    pub trace: SolveTrace,
}

/// Fraction of the residual history discarded before estimating the rate.
const BURN_IN: f64 = 0.2;

fn contraction_estimate(residuals: &[f64]) -> f64 {
    let positive: Vec<f64> = residuals.iter().copied().take_while(|&r| r > 0.0).collect();
    if positive.len() < 2 {
        return 0.0;
    }
    let start = ((positive.len() as f64 * BURN_IN) as usize).min(positive.len() - 2);
    let steps = (positive.len() - 1 - start) as f64;
    (positive[positive.len() - 1] / positive[start]).powf(1.0 / steps)
}

/// Picard iteration `e_{k+1} = u - tau H2(H1(e_k))` from `e_0 = u`.
pub fn solve_feedback(
    u: &Signal,
    h1: &OperatorSpec,
    h2: &OperatorSpec,
    tau: f64,
    opts: &SolveOptions,
) -> Result<FeedbackSolution> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau must lie in [0, 1], got {tau}")));
    }
    let tol = opts.rel_tol * (1.0 + norm(u));
    let step = |e: &Signal| -> Result<Signal> {
        if tau == 0.0 {
            return Ok(u.clone());
        }
        let y = h1.apply_with(e, opts)?;
        u.try_axpy(-tau, &h2.apply_with(&y, opts)?)
    };

    let mut e = u.clone();
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut non_decreasing = 0usize;
    while residuals.len() < opts.max_iter {
        let next = step(&e)?;
        let r = norm(&next.try_sub(&e)?);
        e = next;
        if let Some(&prev) = residuals.last() {
            if r >= prev {
                non_decreasing += 1;
            } else {
                non_decreasing = 0;
            }
        }
        residuals.push(r);
        if r <= tol {
            converged = true;
            break;
        }
        if !r.is_finite() || non_decreasing >= opts.divergence_window {
            break;
        }
    }

    let iterates = residuals.len();
    let mut trace = SolveTrace {
        iterates,
        contraction_estimate: contraction_estimate(&residuals),
        residuals,
        converged,
        equation_residual: f64::NAN,
        tolerance: tol,
    };
    if !converged {
        return Err(Error::Divergence { trace: Box::new(trace) });
    }
    let y = h1.apply_with(&e, opts)?;
    let check = if tau == 0.0 { e.try_sub(u)? } else { e.try_axpy(tau, &h2.apply_with(&y, opts)?)?.try_sub(u)? };
    trace.equation_residual = norm(&check);
    Ok(FeedbackSolution { e, y, trace })
}

/// `max |y1 - y2| / |u1 - u2|` over closed-loop solves of the pairs.
pub fn closed_loop_gain_estimate(
    h1: &OperatorSpec,
    h2: &OperatorSpec,
    tau: f64,
    pairs: &[(Signal, Signal)],
    opts: &SolveOptions,
) -> Result<GainEstimate> {
    check_pairs(pairs)?;
    let ratios = pairs
        .par_iter()
        .map(|(u1, u2)| {
            let y1 = solve_feedback(u1, h1, h2, tau, opts)?.y;
            let y2 = solve_feedback(u2, h1, h2, tau, opts)?.y;
            Ok(norm(&y1.try_sub(&y2)?) / norm(&u1.try_sub(u2)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(GainEstimate {
        gamma: ratios.into_iter().fold(0.0, f64::max),
        beta: 0.0,
        incremental: true,
        empirical: true,
        sample_count: pairs.len(),
        declaration_violated: false,
    })
}

/// `psi(x) = x - tan(x)`: unity negative feedback around `x -> -arctan(x)`
/// maps `u` to `psi^-1(u)` samplewise.
pub fn psi(x: f64) -> f64 {
    x - x.tan()
}

/// Bracket for [`psi_inverse`]; `psi` is decreasing on it.
pub const PSI_BRACKET: (f64, f64) = (-FRAC_PI_2 + 1e-6, FRAC_PI_2 - 1e-6);

/// Solves `psi(y) = u` by bisection to `|psi(y) - u| <= 1e-12`.
pub fn psi_inverse(u: f64) -> Result<f64> {
    if u == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = PSI_BRACKET;
    // psi(lo) > 0 > psi(hi)
    if !(psi(hi) <= u && u <= psi(lo)) {
        return Err(Error::Bracket(format!("u = {u} outside [{}, {}]", psi(hi), psi(lo))));
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if psi(mid) > u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y = if (psi(lo) - u).abs() < (psi(hi) - u).abs() { lo } else { hi };
    if (psi(y) - u).abs() > 1e-12 {
        return Err(Error::Bracket(format!("bisection residual {} for u = {u}", (psi(y) - u).abs())));
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArctanRow {
    pub a: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArctanTable {
    pub rows: Vec<ArctanRow>,
    /// Least-squares slope of `ln ratio` against `ln a`.
    pub slope: f64,
    /// Ratios increase as `a` decreases.
    pub monotone: bool,
    pub method: &'static str,
}

/// Step input `a` on `[0, 1)`, zero afterwards, on a `2 s` window.
pub fn arctan_probe(a: f64, dt: f64) -> Result<Signal> {
    let len = (2.0 / dt).round() as usize;
    Signal::from_fn(len, dt, |t| if t < 1.0 - 0.5 * dt { a } else { 0.0 })
}

/// Unity-feedback blow-up of `x -> -arctan(x)`: for each amplitude `a`,
/// compares `u1 = a * 1_[0,1]` with `u2 = 0` through the exact closed-loop
/// relation `y = psi^-1(u)`.
pub fn arctan_experiment(amplitudes: &[f64], dt: f64) -> Result<ArctanTable> {
    if amplitudes.is_empty() {
        return Err(Error::Empty("amplitudes"));
    }
    if let Some(a) = amplitudes.iter().find(|&&a| !(a > 0.0 && a <= 0.1)) {
        return Err(Error::InvalidArgument(format!("amplitude {a} outside (0, 0.1]")));
    }
    let mut rows = Vec::with_capacity(amplitudes.len());
    for &a in amplitudes {
        let u1 = arctan_probe(a, dt)?;
        let y1 = u1.as_slice().iter().map(|&v| psi_inverse(v)).collect::<Result<Vec<_>>>()?;
        let y1 = Signal::new(y1, 1, dt)?;
        // u2 = 0 gives y2 = psi^-1(0) = 0
        rows.push(ArctanRow { a, ratio: norm(&y1) / norm(&u1) });
    }
    let slope = loglog_slope(&rows);
    let mut by_a = rows.clone();
    by_a.sort_by(|p, q| q.a.total_cmp(&p.a));
    let monotone = by_a.windows(2).all(|w| w[1].ratio > w[0].ratio);
    Ok(ArctanTable {
        rows,
        slope,
        monotone,
        method: "exact samplewise inverse of psi(x) = x - tan(x) by bisection (Picard is not contractive here); \
                 pairs u1 = a * step, u2 = 0",
    })
}

fn loglog_slope(rows: &[ArctanRow]) -> f64 {
    let n = rows.len() as f64;
    if rows.len() < 2 {
        return f64::NAN;
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.a.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.ratio.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::StateSpace;
    use crate::operators::StaticFn;

    fn gain(k: f64) -> OperatorSpec {
        OperatorSpec::static_nl(StaticFn::Gain { k }).unwrap()
    }

    fn sig(a: f64) -> Signal {
        Signal::from_fn(200, 0.01, |t| a * (3.0 * t).sin() * (-t).exp()).unwrap()
    }

    #[test]
    fn open_loop_takes_one_iterate() {
        let u = sig(1.0);
        let h1 = OperatorSpec::lti(StateSpace::first_order(1.0, 1.0).unwrap());
        let s = solve_feedback(&u, &h1, &gain(5.0), 0.0, &SolveOptions::default()).unwrap();
        assert_eq!(s.trace.iterates, 1);
        assert_eq!(s.e, u);
        assert_eq!(s.y, h1.apply_with(&u, &SolveOptions::default()).unwrap());
    }

    #[test]
    fn static_loop_matches_closed_form() {
        let u = sig(1.0);
        let s = solve_feedback(&u, &gain(1.0), &gain(0.5), 1.0, &SolveOptions::default()).unwrap();
        let expect = u.scaled(1.0 / 1.5);
        assert!(s.y.try_sub(&expect).unwrap().norm() < 1e-7);
        assert!((s.trace.contraction_estimate - 0.5).abs() < 1e-6);
        assert!(s.trace.equation_residual <= 10.0 * s.trace.tolerance);
    }

    #[test]
    fn arctan_loop_matches_psi_inverse() {
        let u = arctan_probe(1e-3, 1e-2).unwrap();
        let phi = OperatorSpec::static_nl(StaticFn::NegArctan).unwrap();
        let s = solve_feedback(&u, &phi, &OperatorSpec::identity(), 1.0, &SolveOptions::default()).unwrap();
        let target = psi_inverse(1e-3).unwrap();
        assert!((target + (3e-3f64).cbrt()).abs() < 0.01 * (3e-3f64).cbrt());
        for (k, &y) in s.y.as_slice().iter().enumerate() {
            let want = if u.as_slice()[k] > 0.0 { target } else { 0.0 };
            assert!((y - want).abs() < 5e-6, "sample {k}: {y} vs {want}");
        }
    }

    #[test]
    fn divergence_is_reported_with_trace() {
        let u = sig(1.0);
        let err = solve_feedback(&u, &gain(2.0), &gain(1.0), 1.0, &SolveOptions::default()).unwrap_err();
        match err {
            Error::Divergence { trace } => {
                assert!(!trace.converged);
                assert_eq!(trace.iterates, 51);
            }
            other => panic!("{other:?}"),
        }
        let capped = SolveOptions { max_iter: 3, ..SolveOptions::default() };
        assert!(matches!(solve_feedback(&u, &gain(0.99), &gain(1.0), 1.0, &capped), Err(Error::Divergence { .. })));
    }

    #[test]
    fn psi_inverse_residual_and_bracket() {
        for u in [1e-9, 1e-6, 1e-3, 0.1, -0.05, 10.0] {
            let y = psi_inverse(u).unwrap();
            assert!((psi(y) - u).abs() <= 1e-12);
        }
        assert!(matches!(psi_inverse(1e9), Err(Error::Bracket(_))));
    }

    #[test]
    fn arctan_experiment_rejects_bad_amplitudes() {
        assert!(arctan_experiment(&[], 1e-3).is_err());
        assert!(arctan_experiment(&[0.5], 1e-3).is_err());
        assert!(arctan_experiment(&[0.0], 1e-3).is_err());
    }
}
