//! Incremental-stability certificates: the small-gain check, the homotopy
//! schedule, the SRG-separation route, the relaxed (extended-space) mode and
//! the empirical cross-check every emitted certificate must survive.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feedback::{closed_loop_gain_estimate, solve_feedback, SolveOptions};
use crate::iqc::IqcReport;
use crate::operators::{causality_check, OperatorSpec};
use crate::probes::ProbeFamily;
use crate::signals::{norm, Signal};
use crate::srg::{separation_margin, Region, SeparationReport, TAU_FLOOR};

/// Safety factor applied to the strict inequalities of the schedule.
pub const SCHEDULE_SAFETY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Route {
    #[serde(rename = "SRG")]
    Srg,
    #[serde(rename = "IQC")]
    Iqc,
    SmallGain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Strict,
    Relaxed,
}

/// Homotopy from the open loop (`tau = 0`) to full feedback: the first
/// fraction `nu` is covered by small gain, then `steps` increments of
/// `tau_step` each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomotopySchedule {
    pub nu: f64,
    pub tau_step: f64,
    pub steps: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma: f64,
}

/// `nu = min(1, 0.9/(g1 g2))`, `tau_step = 0.9/(g g2)`,
/// `steps = ceil(max(0, 1 - nu) / tau_step)`.
pub fn build_schedule(gamma1: f64, gamma2: f64, gamma: f64) -> Result<HomotopySchedule> {
    for (name, v) in [("gamma1", gamma1), ("gamma2", gamma2), ("gamma", gamma)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let nu = (SCHEDULE_SAFETY / (gamma1 * gamma2)).min(1.0);
    let tau_step = SCHEDULE_SAFETY / (gamma * gamma2);
    let steps = ((1.0 - nu).max(0.0) / tau_step).ceil() as usize;
    Ok(HomotopySchedule { nu, tau_step, steps, gamma1, gamma2, gamma })
}

/// [`build_schedule`], or the single-stage schedule `nu = 1` when a gain is
/// zero (the loop is then open and small gain covers all of `[0, 1]`).
fn schedule_or_trivial(gamma1: f64, gamma2: f64, gamma: f64) -> Result<HomotopySchedule> {
    if gamma1 == 0.0 || gamma2 == 0.0 || gamma == 0.0 {
        return Ok(HomotopySchedule { nu: 1.0, tau_step: 1.0, steps: 0, gamma1, gamma2, gamma });
    }
    build_schedule(gamma1, gamma2, gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalSummary {
    /// Largest closed-loop `|y1 - y2| / |u1 - u2|` observed.
    pub max_ratio: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timestamps {
    /// Caller-supplied generation stamp; `None` keeps reruns byte-identical.
    pub generated: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub route: Route,
    pub mode: Mode,
    pub r_min: f64,
    pub gamma: f64,
    pub schedule: HomotopySchedule,
    pub premises: Vec<String>,
    pub empirical: Option<EmpiricalSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separation: Option<SeparationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iqc: Option<IqcReport>,
    pub seed: Option<u64>,
    pub timestamps: Timestamps,
}

impl Certificate {
    pub(crate) fn new(route: Route, r_min: f64, gamma: f64, schedule: HomotopySchedule, premises: Vec<String>) -> Self {
        Certificate {
            route,
            mode: Mode::Strict,
            r_min,
            gamma,
            schedule,
            premises,
            empirical: None,
            separation: None,
            iqc: None,
            seed: None,
            timestamps: Timestamps { generated: None },
        }
    }
}

/// Evidence attached to a refusal.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// `gamma1 * gamma2 >= 1`.
    GainProduct { product: f64 },
    /// The separation sweep reached distance 0 (or below its slack) at `tau_star`.
    Separation { tau_star: f64, min_distance: f64, slack: f64 },
    /// The LTI frequency condition is not certified.
    LtiCondition { eps: f64, slack: f64, worst_omega: f64 },
    /// A sampled pair made the nonlinearity's quadratic form negative.
    Falsified { min_value: f64, pair: usize, tau: f64 },
    /// Well-posedness on the extended space was not asserted.
    WellPosednessNotAssumed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refusal {
    pub route: Route,
    pub reason: String,
    pub witness: Witness,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)] // one verdict per run; boxing buys nothing
pub enum Verdict {
    Certified(Certificate),
    Refused(Refusal),
}

impl Verdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, Verdict::Certified(_))
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Verdict::Certified(c) => Some(c),
            Verdict::Refused(_) => None,
        }
    }

    pub fn certificate_mut(&mut self) -> Option<&mut Certificate> {
        match self {
            Verdict::Certified(c) => Some(c),
            Verdict::Refused(_) => None,
        }
    }

    pub fn refusal(&self) -> Option<&Refusal> {
        match self {
            Verdict::Certified(_) => None,
            Verdict::Refused(r) => Some(r),
        }
    }
}

/// Incremental small gain: certified iff `gamma1 gamma2 < 1`, with the
/// closed-loop bound `gamma1 / (1 - gamma1 gamma2)` derived from the
/// contraction `e -> u - H2(H1(e))`.
pub fn check_small_gain(gamma1: f64, gamma2: f64) -> Result<Verdict> {
    for (name, v) in [("gamma1", gamma1), ("gamma2", gamma2)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    let product = gamma1 * gamma2;
    if product >= 1.0 {
        return Ok(Verdict::Refused(Refusal {
            route: Route::SmallGain,
            reason: format!("gain product {product} is not < 1"),
            witness: Witness::GainProduct { product },
        }));
    }
    let gamma = gamma1 / (1.0 - product);
    let schedule = schedule_or_trivial(gamma1, gamma2, gamma)?;
    let premises = vec![
        format!("declared incremental gain of H1: {gamma1}"),
        format!("declared incremental gain of H2: {gamma2}"),
        "closed-loop bound gamma1/(1 - gamma1*gamma2) derived from contraction".to_string(),
    ];
    Ok(Verdict::Certified(Certificate::new(Route::SmallGain, 1.0 - product, gamma, schedule, premises)))
}

fn declared_gain(op: &OperatorSpec, name: &str) -> Result<f64> {
    op.declared_inc_gain().ok_or_else(|| Error::MissingDeclaration(format!("{name} has no declared incremental gain")))
}

fn declared_region(op: &OperatorSpec, name: &str) -> Result<Region> {
    op.declared_srg()
        .map(|r| r.conjugate_closure())
        .ok_or_else(|| Error::MissingDeclaration(format!("{name} has no declared SRG region")))
}

/// SRG route: certified iff `inverse(SRG(h1))` and `-tau chord(SRG(h2))` are
/// separated by `r_min > 0` for all `tau` in `(0, 1]`; then `gamma = 1/r_min`.
pub fn certify_srg(h1: &OperatorSpec, h2: &OperatorSpec) -> Result<Verdict> {
    let gamma1 = declared_gain(h1, "h1")?;
    let gamma2 = declared_gain(h2, "h2")?;
    let s1_inv = declared_region(h1, "h1")?.invert()?;
    let s2 = declared_region(h2, "h2")?.chord_closure()?;
    let sweep = separation_margin(&s1_inv, &s2, TAU_FLOOR, 1.0)?;
    if sweep.margin <= 0.0 {
        return Ok(Verdict::Refused(Refusal {
            route: Route::Srg,
            reason: format!(
                "regions are not strictly separated: distance {} at tau* = {} (slack {})",
                sweep.min_distance, sweep.tau_star, sweep.slack
            ),
            witness: Witness::Separation {
                tau_star: sweep.tau_star,
                min_distance: sweep.min_distance,
                slack: sweep.slack,
            },
        }));
    }
    let gamma = 1.0 / sweep.margin;
    let schedule = schedule_or_trivial(gamma1, gamma2, gamma)?;
    let mut premises = vec![
        format!("declared incremental gain of H1: {gamma1}"),
        format!("declared incremental gain of H2: {gamma2}"),
        format!(
            "separation certified on [{TAU_FLOOR:e}, 1] with {} grid points, residual slack {:e}",
            sweep.grid_points, sweep.slack
        ),
        format!("tau = 0 check gamma >= gamma1: {}", gamma >= gamma1),
        "separation measured between inv(SRG(H1)) and -tau chord(SRG(H2)): H2's region is chord-closed \
         before scaling"
            .to_string(),
    ];
    for (name, op) in [("H1", h1), ("H2", h2)] {
        if op.srg_is_heuristic() {
            premises.push(format!("declared SRG of {name} is a heuristic Nyquist cover (not a proven bound)"));
        }
    }
    let mut cert = Certificate::new(Route::Srg, sweep.margin, gamma, schedule, premises);
    cert.separation = Some(sweep);
    Ok(Verdict::Certified(cert))
}

/// Extended-space mode: the SRG computation, with well-posedness asserted by
/// the caller and causality probed empirically on the light probe family.
pub fn certify_relaxed(h1: &OperatorSpec, h2: &OperatorSpec, well_posedness_assumed: bool) -> Result<Verdict> {
    if !well_posedness_assumed {
        return Ok(Verdict::Refused(Refusal {
            route: Route::Srg,
            reason: "relaxed mode requires well-posedness on the extended space to be asserted; \
                     it cannot be verified numerically"
                .to_string(),
            witness: Witness::WellPosednessNotAssumed,
        }));
    }
    for op in [h1, h2] {
        let family = ProbeFamily::light().with_dim(op.in_dim().unwrap_or(1));
        for u in family.signals()? {
            let t_end = u.horizon();
            let times = [0.125, 0.25, 0.375, 0.5, 0.75].map(|f| f * t_end);
            let report = causality_check(op, &u, &times)?;
            if !report.passed {
                return Err(Error::CausalityViolation { violation: report.max_violation, at: report.worst_t });
            }
        }
    }
    let mut verdict = certify_srg(h1, h2)?;
    if let Verdict::Certified(cert) = &mut verdict {
        cert.mode = Mode::Relaxed;
        cert.premises.push("H1 and H2 declared with finite gain and zero offset on the extended space".into());
        cert.premises
            .push("well-posedness of [H1, tau H2] for all tau in (0, 1] assumed externally (not verified)".into());
        cert.premises.push("causality of H1 and H2 checked empirically on probe signals".into());
    }
    Ok(verdict)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityReport {
    pub max_discrepancy: f64,
    /// Largest solver tolerance `rel_tol (1 + |u|)` over the inputs.
    pub tolerance: f64,
}

/// Compares `[H1, (tau + nu) H2]` with the nested loop `[[H1, tau H2], nu H2]`.
pub fn verify_feedback_identity(
    h1: &OperatorSpec,
    h2: &OperatorSpec,
    tau: f64,
    nu: f64,
    u_list: &[Signal],
    opts: &SolveOptions,
) -> Result<IdentityReport> {
    if !(tau >= 0.0 && nu >= 0.0 && tau + nu <= 1.0) {
        return Err(Error::InvalidArgument(format!("need tau, nu >= 0 and tau + nu <= 1, got {tau}, {nu}")));
    }
    if u_list.is_empty() {
        return Err(Error::Empty("input list"));
    }
    let inner = OperatorSpec::feedback(h1.clone(), h2.clone(), tau)?;
    let mut report = IdentityReport { max_discrepancy: 0.0, tolerance: 0.0 };
    for u in u_list {
        let direct = solve_feedback(u, h1, h2, tau + nu, opts)?;
        let nested = solve_feedback(u, &inner, h2, nu, opts)?;
        report.max_discrepancy = report.max_discrepancy.max(norm(&direct.y.try_sub(&nested.y)?));
        report.tolerance = report.tolerance.max(direct.trace.tolerance);
    }
    Ok(report)
}

/// Runs the closed loop at `tau = 1` on `pairs`, records the result on the
/// certificate, and fails if the empirical gain exceeds the certified one.
pub fn empirical_cross_check(
    cert: &mut Certificate,
    h1: &OperatorSpec,
    h2: &OperatorSpec,
    pairs: &[(Signal, Signal)],
    opts: &SolveOptions,
) -> Result<EmpiricalSummary> {
    let est = closed_loop_gain_estimate(h1, h2, 1.0, pairs, opts)?;
    let summary = EmpiricalSummary { max_ratio: est.gamma, pairs: est.sample_count };
    cert.empirical = Some(summary);
    if est.gamma > cert.gamma * (1.0 + 1e-9) {
        return Err(Error::EmpiricalViolation { empirical: est.gamma, certified: cert.gamma });
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::StateSpace;
    use crate::operators::StaticFn;
    use crate::srg::Primitive;
    use num_complex::Complex64;

    #[test]
    fn small_gain_examples() {
        let v = check_small_gain(0.5, 1.0).unwrap();
        let c = v.certificate().unwrap();
        assert!((c.gamma - 1.0).abs() < 1e-15);
        assert_eq!(c.schedule.steps, 0);
        assert!(!check_small_gain(1.0, 1.0).unwrap().is_certified());
        let z = check_small_gain(0.0, 7.0).unwrap();
        assert_eq!(z.certificate().unwrap().gamma, 0.0);
        assert!(check_small_gain(-1.0, 1.0).is_err());
    }

    #[test]
    fn schedule_examples() {
        let s = build_schedule(2.0, 2.0, 5.0).unwrap();
        assert!((s.nu - 0.225).abs() < 1e-15 && (s.tau_step - 0.09).abs() < 1e-15 && s.steps == 9);
        let s = build_schedule(0.5, 1.0, 10.0).unwrap();
        assert_eq!((s.nu, s.steps), (1.0, 0));
        let s = build_schedule(1.0, 1.0, 1.0).unwrap();
        assert!((s.nu - 0.9).abs() < 1e-15 && (s.tau_step - 0.9).abs() < 1e-15 && s.steps == 1);
        assert!(build_schedule(0.0, 1.0, 1.0).is_err());
        assert!(build_schedule(1.0, f64::INFINITY, 1.0).is_err());
    }

    fn arctan_pair() -> (OperatorSpec, OperatorSpec) {
        let h1 = OperatorSpec::lti(StateSpace::first_order(0.25, 1.0).unwrap())
            .with_declared_gain(0.25)
            .unwrap()
            .with_declared_srg(Region::single(Primitive::real_disc(0.125, 0.13)));
        let h2 = OperatorSpec::static_nl(StaticFn::NegArctan)
            .unwrap()
            .with_declared_srg(Region::single(Primitive::real_disc(0.0, 1.0)));
        (h1, h2)
    }

    #[test]
    fn srg_route_certifies_lti_arctan() {
        let (h1, h2) = arctan_pair();
        let v = certify_srg(&h1, &h2).unwrap();
        let c = v.certificate().expect("certified");
        // inverse of Disc(0.125, 0.13) is the exterior of Disc(-0.125/d, 0.13/d), d = 0.13^2 - 0.125^2
        let d = 0.13f64.powi(2) - 0.125f64.powi(2);
        let (c0, r0) = (-0.125 / d, 0.13 / d);
        let oracle = (r0 - c0.abs()) - 1.0; // nearest approach to Disc(0, tau) is at tau = 1
        assert!(c.r_min <= oracle + 1e-12 && c.r_min > oracle - 1e-3, "{} vs {oracle}", c.r_min);
        assert!((c.gamma * c.r_min - 1.0).abs() < 1e-12);
        assert_eq!(c.route, Route::Srg);
    }

    #[test]
    fn srg_route_refuses_with_witness() {
        let h1 = OperatorSpec::identity()
            .with_declared_gain(2.5)
            .unwrap()
            .with_declared_srg(Region::single(Primitive::real_disc(2.0, 0.5)));
        let h2 = OperatorSpec::static_nl(StaticFn::NegArctan).unwrap();
        let v = certify_srg(&h1, &h2).unwrap();
        let r = v.refusal().expect("refused");
        let Witness::Separation { tau_star, min_distance, .. } = r.witness else { panic!() };
        assert_eq!(min_distance, 0.0);
        // inverse Disc(2/3.75, 0.5/3.75) meets -tau Disc(0,1) = Disc(0, tau) once tau >= 1.5/3.75 = 0.4
        assert!((tau_star - 0.4).abs() < 0.02, "{tau_star}");
    }

    #[test]
    fn srg_zero_operator_reduces_to_origin_distance() {
        let h1 = OperatorSpec::identity().with_declared_srg(Region::single(Primitive::real_disc(2.0, 0.5)));
        let h2 = OperatorSpec::scale(0.0, OperatorSpec::identity()).unwrap();
        let c = certify_srg(&h1, &h2).unwrap();
        let c = c.certificate().unwrap();
        let s1_inv = h1.declared_srg().unwrap().invert().unwrap();
        let origin = Region::single(Primitive::point(Complex64::new(0.0, 0.0)));
        assert!((c.r_min - s1_inv.distance(&origin)).abs() < 1e-12);
    }

    #[test]
    fn srg_missing_declaration() {
        let h1 = OperatorSpec::lti(StateSpace::first_order(1.0, 1.0).unwrap());
        let h2 = OperatorSpec::identity();
        assert!(matches!(certify_srg(&h1, &h2), Err(Error::MissingDeclaration(_))));
    }

    #[test]
    fn relaxed_mode() {
        let (h1, h2) = arctan_pair();
        let strict = certify_srg(&h1, &h2).unwrap();
        let relaxed = certify_relaxed(&h1, &h2, true).unwrap();
        let (s, r) = (strict.certificate().unwrap(), relaxed.certificate().unwrap());
        assert_eq!(s.r_min, r.r_min);
        assert_eq!(r.mode, Mode::Relaxed);
        assert_eq!(r.premises.len(), s.premises.len() + 3);
        assert!(!certify_relaxed(&h1, &h2, false).unwrap().is_certified());
    }

    #[test]
    fn identity_static_case() {
        let h1 = OperatorSpec::identity();
        let h2 = OperatorSpec::static_nl(StaticFn::Gain { k: 0.5 }).unwrap();
        let u = vec![Signal::from_fn(100, 0.01, |t| (3.0 * t).sin()).unwrap()];
        let opts = SolveOptions::default();
        let r = verify_feedback_identity(&h1, &h2, 0.5, 0.5, &u, &opts).unwrap();
        assert!(r.max_discrepancy <= 1e-8, "{r:?}");
        let direct = solve_feedback(&u[0], &h1, &h2, 1.0, &opts).unwrap();
        let exact = u[0].scaled(1.0 / 1.5);
        assert!(norm(&direct.y.try_sub(&exact).unwrap()) <= 1e-8);
        assert!(verify_feedback_identity(&h1, &h2, 0.7, 0.5, &u, &opts).is_err());
    }

    #[test]
    fn cross_check_flags_overclaims() {
        let h1 = OperatorSpec::identity();
        let h2 = OperatorSpec::static_nl(StaticFn::Gain { k: 0.5 }).unwrap();
        let pairs = ProbeFamily::light().pairs().unwrap();
        let mut cert = check_small_gain(1.0, 0.5).unwrap().certificate().unwrap().clone();
        let s = empirical_cross_check(&mut cert, &h1, &h2, &pairs, &SolveOptions::default()).unwrap();
        assert!((s.max_ratio - 1.0 / 1.5).abs() < 1e-6);
        cert.gamma = 0.5;
        assert!(matches!(
            empirical_cross_check(&mut cert, &h1, &h2, &pairs, &SolveOptions::default()),
            Err(Error::EmpiricalViolation { .. })
        ));
    }
}
