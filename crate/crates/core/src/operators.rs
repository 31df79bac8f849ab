//! Composable operator descriptions, their evaluation on signals, and
//! empirical gain / causality probes.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::feedback::{solve_feedback, SolveOptions};
use crate::lti::StateSpace;
use crate::signals::{norm, truncate, Signal};
use crate::srg::region::{Primitive, Region};

/// Signal pairs closer than this are rejected as degenerate.
pub const DISTINCT_PAIR_TOL: f64 = 1e-12;

/// Anything that maps signals to signals.
pub trait Operator: Sync {
    fn apply(&self, u: &Signal) -> Result<Signal>;
}

/// Built-in memoryless nonlinearities, applied componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "fn", rename_all = "snake_case")]
pub enum StaticFn {
    Identity,
    Gain {
        k: f64,
    },
    Saturation {
        limit: f64,
    },
    Deadzone {
        width: f64,
    },
    /// `x -> -arctan(x)`
    NegArctan,
    Tanh,
}

impl StaticFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            StaticFn::Identity => x,
            StaticFn::Gain { k } => k * x,
            StaticFn::Saturation { limit } => x.clamp(-limit, limit),
            StaticFn::Deadzone { width } => {
                if x > width {
                    x - width
                } else if x < -width {
                    x + width
                } else {
                    0.0
                }
            }
            StaticFn::NegArctan => -x.atan(),
            StaticFn::Tanh => x.tanh(),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            StaticFn::Identity => "identity",
            StaticFn::Gain { .. } => "gain",
            StaticFn::Saturation { .. } => "saturation",
            StaticFn::Deadzone { .. } => "deadzone",
            StaticFn::NegArctan => "neg_arctan",
            StaticFn::Tanh => "tanh",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StaticFn::Gain { k } if !k.is_finite() => Err(Error::InvalidOperator("gain must be finite".into())),
            StaticFn::Saturation { limit } if !(limit > 0.0 && limit.is_finite()) => {
                Err(Error::InvalidOperator("saturation limit must be positive".into()))
            }
            StaticFn::Deadzone { width } if !(width >= 0.0 && width.is_finite()) => {
                Err(Error::InvalidOperator("deadzone width must be nonnegative".into()))
            }
            _ => Ok(()),
        }
    }

    /// Closed-form Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            StaticFn::Gain { k } => k.abs(),
            _ => 1.0,
        }
    }

    /// Incremental sector `[k1, k2]`: all difference quotients lie in it.
    pub fn sector(&self) -> (f64, f64) {
        match *self {
            StaticFn::Identity => (1.0, 1.0),
            StaticFn::Gain { k } => (k, k),
            StaticFn::Saturation { .. } | StaticFn::Deadzone { .. } | StaticFn::Tanh => (0.0, 1.0),
            StaticFn::NegArctan => (-1.0, 0.0),
        }
    }

    /// Disc `((k1 + k2)/2, (k2 - k1)/2)` containing the SRG of the sector.
    pub fn sector_disc(&self) -> Primitive {
        let (k1, k2) = self.sector();
        Primitive::real_disc(0.5 * (k1 + k2), 0.5 * (k2 - k1))
    }

    /// Interval on which the function is strictly monotone and invertible by
    /// bisection, or `None`.
    pub fn inversion_bracket(&self) -> Option<(f64, f64)> {
        match *self {
            StaticFn::Identity | StaticFn::NegArctan => Some((-1e9, 1e9)),
            StaticFn::Gain { k } if k != 0.0 => Some((-1e9, 1e9)),
            StaticFn::Tanh => Some((-18.0, 18.0)),
            _ => None,
        }
    }

    /// Samplewise inverse by bisection on [`Self::inversion_bracket`].
    pub fn invert(&self, y: f64) -> Result<f64> {
        let (mut lo, mut hi) = self
            .inversion_bracket()
            .ok_or_else(|| Error::NotInvertible(format!("{} is not strictly monotone", self.id())))?;
        let (flo, fhi) = (self.eval(lo), self.eval(hi));
        let increasing = fhi > flo;
        let (rlo, rhi) = if increasing { (flo, fhi) } else { (fhi, flo) };
        if !(rlo..=rhi).contains(&y) {
            return Err(Error::OutOfRange { target: y, lo: rlo, hi: rhi });
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if (self.eval(mid) < y) == increasing {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Largest finite-difference quotient on a uniform grid over `[lo, hi]`.
    pub fn max_difference_quotient(&self, lo: f64, hi: f64, samples: usize) -> f64 {
        let h = (hi - lo) / (samples.max(2) - 1) as f64;
        (0..samples.max(2) - 1)
            .map(|i| {
                let x = lo + i as f64 * h;
                ((self.eval(x + h) - self.eval(x)) / h).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub enum Node {
    Lti(StateSpace),
    StaticNl(StaticFn),
    Scale {
        c: f64,
        inner: Box<OperatorSpec>,
    },
    Sum {
        left: Box<OperatorSpec>,
        right: Box<OperatorSpec>,
    },
    /// `[forward, tau * backward]`: `e = u - tau backward(y)`, `y = forward(e)`.
    Feedback {
        forward: Box<OperatorSpec>,
        backward: Box<OperatorSpec>,
        tau: f64,
    },
}

/// An operator description plus its declared (certified) gain data.
#[derive(Debug, Clone)]
pub struct OperatorSpec {
    node: Node,
    declared_inc_gain: Option<f64>,
    declared_srg: Option<Region>,
    srg_heuristic: bool,
    solve: SolveOptions,
}

impl OperatorSpec {
    fn from_node(node: Node) -> Self {
        OperatorSpec {
            node,
            declared_inc_gain: None,
            declared_srg: None,
            srg_heuristic: false,
            solve: SolveOptions::default(),
        }
    }

    /// LTI block; no gain or SRG is declared automatically.
    pub fn lti(ss: StateSpace) -> Self {
        Self::from_node(Node::Lti(ss))
    }

    /// Static nonlinearity, declared with its closed-form Lipschitz constant
    /// and sector disc.
    pub fn static_nl(f: StaticFn) -> Result<Self> {
        f.validate()?;
        let mut op = Self::from_node(Node::StaticNl(f));
        op.declared_inc_gain = Some(f.lipschitz());
        op.declared_srg = Some(Region::single(f.sector_disc()));
        Ok(op)
    }

    pub fn identity() -> Self {
        Self::static_nl(StaticFn::Identity).expect("identity is valid")
    }

    /// `c * inner`; declarations scale with `|c|`.
    pub fn scale(c: f64, inner: OperatorSpec) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::InvalidOperator("scale factor must be finite".into()));
        }
        let mut op = Self::from_node(Node::Scale { c, inner: Box::new(inner) });
        if let Node::Scale { inner, .. } = &op.node {
            op.declared_inc_gain = inner.declared_inc_gain.map(|g| c.abs() * g);
            op.declared_srg = inner.declared_srg.as_ref().map(|r| r.scale(c));
            op.srg_heuristic = inner.srg_heuristic;
        }
        Ok(op)
    }

    /// `left + right`. The declared SRG, when both sides have one, is
    /// `chord(left) + right`.
    pub fn sum(left: OperatorSpec, right: OperatorSpec) -> Result<Self> {
        check_compatible("sum", left.in_dim(), right.in_dim())?;
        check_compatible("sum", left.out_dim(), right.out_dim())?;
        let declared_inc_gain = match (left.declared_inc_gain, right.declared_inc_gain) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        let declared_srg = match (&left.declared_srg, &right.declared_srg) {
            (Some(a), Some(b)) => a.chord_closure().and_then(|a| a.minkowski_sum(b)).ok(),
            _ => None,
        };
        let srg_heuristic = left.srg_heuristic || right.srg_heuristic;
        let mut op = Self::from_node(Node::Sum { left: Box::new(left), right: Box::new(right) });
        op.declared_inc_gain = declared_inc_gain;
        op.declared_srg = declared_srg;
        op.srg_heuristic = srg_heuristic;
        Ok(op)
    }

    pub fn feedback(forward: OperatorSpec, backward: OperatorSpec, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidArgument(format!("feedback tau must lie in [0, 1], got {tau}")));
        }
        check_compatible("feedback (backward input vs forward output)", backward.in_dim(), forward.out_dim())?;
        check_compatible("feedback (backward output vs forward input)", backward.out_dim(), forward.in_dim())?;
        Ok(Self::from_node(Node::Feedback { forward: Box::new(forward), backward: Box::new(backward), tau }))
    }

    pub fn with_declared_gain(mut self, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("declared gain must be finite and >= 0, got {gamma}")));
        }
        self.declared_inc_gain = Some(gamma);
        Ok(self)
    }

    pub fn with_declared_srg(mut self, region: Region) -> Self {
        self.declared_srg = Some(region);
        self.srg_heuristic = false;
        self
    }

    /// Declares a heuristic SRG cover built from the Nyquist curve (SISO LTI only).
    pub fn with_nyquist_cover(mut self, padding: f64) -> Result<Self> {
        let Node::Lti(ss) = &self.node else {
            return Err(Error::InvalidOperator("Nyquist cover requires an LTI node".into()));
        };
        self.declared_srg = Some(nyquist_cover(ss, padding)?);
        self.srg_heuristic = true;
        Ok(self)
    }

    pub fn with_solve_options(mut self, solve: SolveOptions) -> Self {
        self.solve = solve;
        self
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn declared_inc_gain(&self) -> Option<f64> {
        self.declared_inc_gain
    }

    pub fn declared_srg(&self) -> Option<&Region> {
        self.declared_srg.as_ref()
    }

    /// True when the declared SRG comes from a heuristic cover.
    pub fn srg_is_heuristic(&self) -> bool {
        self.srg_heuristic
    }

    /// Input dimension, `None` when the operator accepts any dimension.
    pub fn in_dim(&self) -> Option<usize> {
        match &self.node {
            Node::Lti(ss) => Some(ss.inputs()),
            Node::StaticNl(_) => None,
            Node::Scale { inner, .. } => inner.in_dim(),
            Node::Sum { left, right } => left.in_dim().or(right.in_dim()),
            Node::Feedback { forward, backward, .. } => forward.in_dim().or(backward.out_dim()),
        }
    }

    pub fn out_dim(&self) -> Option<usize> {
        match &self.node {
            Node::Lti(ss) => Some(ss.outputs()),
            Node::StaticNl(_) => None,
            Node::Scale { inner, .. } => inner.out_dim(),
            Node::Sum { left, right } => left.out_dim().or(right.out_dim()),
            Node::Feedback { forward, backward, .. } => forward.out_dim().or(backward.in_dim()),
        }
    }

    /// True for nodes built only from static nonlinearities and linear combinators.
    pub fn is_memoryless(&self) -> bool {
        match &self.node {
            Node::Lti(_) => false,
            Node::StaticNl(_) => true,
            Node::Scale { inner, .. } => inner.is_memoryless(),
            Node::Sum { left, right } => left.is_memoryless() && right.is_memoryless(),
            Node::Feedback { forward, backward, .. } => forward.is_memoryless() && backward.is_memoryless(),
        }
    }

    /// Evaluates with explicit solver options for nested feedback nodes.
    pub fn apply_with(&self, u: &Signal, opts: &SolveOptions) -> Result<Signal> {
        match &self.node {
            Node::Lti(ss) => ss.simulate(u),
            Node::StaticNl(f) => Ok(u.with_data(u.as_slice().iter().map(|&x| f.eval(x)).collect())),
            Node::Scale { c, inner } => Ok(inner.apply_with(u, opts)?.scaled(*c)),
            Node::Sum { left, right } => left.apply_with(u, opts)?.try_add(&right.apply_with(u, opts)?),
            Node::Feedback { forward, backward, tau } => Ok(solve_feedback(u, forward, backward, *tau, opts)?.y),
        }
    }
}

impl Operator for OperatorSpec {
    fn apply(&self, u: &Signal) -> Result<Signal> {
        self.apply_with(u, &self.solve)
    }
}

fn check_compatible(what: &str, a: Option<usize>, b: Option<usize>) -> Result<()> {
    match (a, b) {
        (Some(x), Some(y)) if x != y => Err(Error::Dimension(format!("{what}: {x} vs {y}"))),
        _ => Ok(()),
    }
}

/// Heuristic SRG cover of a SISO LTI block: discs on the Nyquist curve over
/// the default grid (plus `omega -> inf`), each with radius equal to the gap
/// to the next sample plus `padding`, closed under conjugation.
pub fn nyquist_cover(ss: &StateSpace, padding: f64) -> Result<Region> {
    if ss.inputs() != 1 || ss.outputs() != 1 {
        return Err(Error::Dimension("Nyquist cover is defined for SISO blocks only".into()));
    }
    if !(padding >= 0.0 && padding.is_finite()) {
        return Err(Error::InvalidArgument("padding must be >= 0".into()));
    }
    let mut pts: Vec<Complex64> = ss.default_grid().iter().map(|&w| ss.freq_response(w)[(0, 0)]).collect();
    pts.push(Complex64::new(ss.d()[(0, 0)], 0.0));
    let mut prims = Vec::with_capacity(2 * pts.len());
    for (i, &z) in pts.iter().enumerate() {
        let gap = match (i.checked_sub(1).map(|j| pts[j]), pts.get(i + 1)) {
            (Some(prev), Some(&next)) => (z - prev).norm().max((next - z).norm()),
            (Some(prev), None) => (z - prev).norm(),
            (None, Some(&next)) => (next - z).norm(),
            (None, None) => 0.0,
        };
        let r = gap + padding;
        prims.push(Primitive::Disc { center: z, radius: r });
        if z.im != 0.0 {
            prims.push(Primitive::Disc { center: z.conj(), radius: r });
        }
    }
    Ok(Region::new(prims))
}

/// Gain estimate `|H u| <= gamma |u| + beta`, or its incremental counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainEstimate {
    pub gamma: f64,
    pub beta: f64,
    pub incremental: bool,
    /// Empirical estimates are lower bounds on the true gain.
    pub empirical: bool,
    pub sample_count: usize,
    /// Set when an empirical estimate exceeds the operator's declared gain
    /// by more than `1e-6` relative.
    pub declaration_violated: bool,
}

pub(crate) fn check_pairs(pairs: &[(Signal, Signal)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair list"));
    }
    for (i, (a, b)) in pairs.iter().enumerate() {
        let d = norm(&a.try_sub(b)?);
        if d <= DISTINCT_PAIR_TOL {
            return Err(Error::DegeneratePair { index: i, norm: d });
        }
    }
    Ok(())
}

/// `max |H u1 - H u2| / |u1 - u2|` over the pairs.
pub fn estimate_incremental_gain(op: &OperatorSpec, pairs: &[(Signal, Signal)]) -> Result<GainEstimate> {
    check_pairs(pairs)?;
    let ratios = pairs
        .par_iter()
        .map(|(u1, u2)| {
            let dy = op.apply(u1)?.try_sub(&op.apply(u2)?)?;
            Ok(norm(&dy) / norm(&u1.try_sub(u2)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    let gamma = ratios.into_iter().fold(0.0, f64::max);
    let declaration_violated = op.declared_inc_gain.is_some_and(|g| gamma > g * (1.0 + 1e-6) + 1e-300);
    Ok(GainEstimate {
        gamma,
        beta: 0.0,
        incremental: true,
        empirical: true,
        sample_count: pairs.len(),
        declaration_violated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CausalityReport {
    pub passed: bool,
    pub max_violation: f64,
    /// Truncation time of the largest violation.
    pub worst_t: f64,
}

/// Checks `P_T H P_T u = P_T H u` for each `T`.
pub fn causality_check(op: &dyn Operator, u: &Signal, t_list: &[f64]) -> Result<CausalityReport> {
    let full = op.apply(u)?;
    let threshold = 1e-6 * (1.0 + norm(u));
    let mut report = CausalityReport { passed: true, max_violation: 0.0, worst_t: 0.0 };
    for &t in t_list {
        let lhs = truncate(&op.apply(&truncate(u, t))?, t);
        let rhs = truncate(&full, t);
        let v = norm(&lhs.try_sub(&rhs)?);
        if v > report.max_violation {
            report.max_violation = v;
            report.worst_t = t;
        }
    }
    report.passed = report.max_violation <= threshold;
    Ok(report)
}

/// Applies the relational inverse `H^-1` to `y`.
pub fn relational_inverse_apply(op: &OperatorSpec, y: &Signal) -> Result<Signal> {
    match &op.node {
        Node::StaticNl(f) => {
            let data = y.as_slice().iter().map(|&v| f.invert(v)).collect::<Result<Vec<_>>>()?;
            Ok(y.with_data(data))
        }
        Node::Lti(ss) => ss.simulate_inverse(y),
        Node::Scale { c, inner } => {
            if *c == 0.0 {
                return Err(Error::NotInvertible("scale by zero".into()));
            }
            relational_inverse_apply(inner, &y.scaled(1.0 / c))
        }
        // [H1, tau H2]^-1 = H1^-1 + tau H2
        Node::Feedback { forward, backward, tau } => {
            let e = relational_inverse_apply(forward, y)?;
            if *tau == 0.0 {
                return Ok(e);
            }
            e.try_axpy(*tau, &backward.apply(y)?)
        }
        Node::Sum { .. } => Err(Error::NotInvertible("sum nodes have no closed-form inverse".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn step(len: usize, dt: f64) -> Signal {
        Signal::from_fn(len, dt, |_| 1.0).unwrap()
    }

    fn sine(len: usize, dt: f64, w: f64, a: f64) -> Signal {
        Signal::from_fn(len, dt, |t| a * (w * t).sin()).unwrap()
    }

    #[test]
    fn apply_examples() {
        let u = sine(200, 0.01, 3.0, 1.0);
        assert_eq!(OperatorSpec::identity().apply(&u).unwrap(), u);

        let phi = OperatorSpec::static_nl(StaticFn::NegArctan).unwrap();
        let y = phi.apply(&step(10, 0.1)).unwrap();
        assert!(y.as_slice().iter().all(|&v| (v + PI / 4.0).abs() < 1e-15));

        let lag = OperatorSpec::lti(StateSpace::first_order(1.0, 1.0).unwrap());
        let y = lag.apply(&step(10_000, 1e-3)).unwrap();
        for (k, v) in y.as_slice().iter().enumerate() {
            assert!((v - (1.0 - (-(k as f64) * 1e-3).exp())).abs() < 1e-3);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let lag = OperatorSpec::lti(StateSpace::first_order(1.0, 1.0).unwrap());
        let u = Signal::zeros(10, 2, 0.1).unwrap();
        assert!(matches!(lag.apply(&u), Err(Error::Dimension(_))));
        let two_in = OperatorSpec::lti(
            StateSpace::from_rows(&[vec![-1.0]], &[vec![1.0, 1.0]], &[vec![1.0]], &[vec![0.0, 0.0]]).unwrap(),
        );
        assert!(OperatorSpec::sum(lag.clone(), two_in.clone()).is_err());
        assert!(OperatorSpec::feedback(lag, two_in, 1.0).is_err());
    }

    #[test]
    fn registry_lipschitz_constants_dominate_difference_quotients() {
        let fns = [
            StaticFn::Identity,
            StaticFn::Gain { k: -2.5 },
            StaticFn::Saturation { limit: 0.7 },
            StaticFn::Deadzone { width: 0.3 },
            StaticFn::NegArctan,
            StaticFn::Tanh,
        ];
        for f in fns {
            let q = f.max_difference_quotient(-5.0, 5.0, 20_001);
            assert!(q <= f.lipschitz() * (1.0 + 1e-9), "{}: {q}", f.id());
        }
    }

    #[test]
    fn invalid_static_parameters() {
        assert!(OperatorSpec::static_nl(StaticFn::Saturation { limit: 0.0 }).is_err());
        assert!(OperatorSpec::static_nl(StaticFn::Deadzone { width: -1.0 }).is_err());
        assert!(OperatorSpec::static_nl(StaticFn::Gain { k: f64::NAN }).is_err());
    }

    #[test]
    fn incremental_gain_examples() {
        let pairs: Vec<_> =
            (1..6).map(|i| (sine(400, 0.01, i as f64, 1.0), sine(400, 0.01, 0.5 * i as f64, 0.3))).collect();
        let two = OperatorSpec::scale(2.0, OperatorSpec::identity()).unwrap();
        let g = estimate_incremental_gain(&two, &pairs).unwrap();
        assert!((g.gamma - 2.0).abs() < 1e-9);
        assert!(g.empirical && g.incremental && !g.declaration_violated);

        // small-amplitude pairs: ratio below 1, approaching 1
        let phi = OperatorSpec::static_nl(StaticFn::NegArctan).unwrap();
        let mut last = 0.0;
        for a in [1.0, 0.1, 0.01] {
            let p = vec![(sine(400, 0.01, 2.0, a), Signal::zeros(400, 1, 0.01).unwrap())];
            let g = estimate_incremental_gain(&phi, &p).unwrap().gamma;
            assert!(g < 1.0 && g > last);
            last = g;
        }
        assert!(last > 0.99);

        let lag = OperatorSpec::lti(StateSpace::first_order(1.0, 1.0).unwrap());
        let slow = |w: f64| {
            let u = Signal::from_fn(20_000, 0.01, |t| {
                let win = (PI * t / 200.0).sin().powi(2);
                win * (w * t).sin()
            })
            .unwrap();
            estimate_incremental_gain(&lag, &[(u, Signal::zeros(20_000, 1, 0.01).unwrap())]).unwrap().gamma
        };
        let (g1, g2) = (slow(1.0), slow(0.1));
        assert!(g1 < g2 && g2 < 1.0 && g2 > 0.99, "{g1} {g2}");

        assert!(matches!(estimate_incremental_gain(&two, &[]), Err(Error::Empty(_))));
        let u = sine(10, 0.1, 1.0, 1.0);
        assert!(matches!(
            estimate_incremental_gain(&two, &[(u.clone(), u)]),
            Err(Error::DegeneratePair { index: 0, .. })
        ));
    }

    #[test]
    fn declaration_violation_is_flagged() {
        let lying = OperatorSpec::scale(3.0, OperatorSpec::identity()).unwrap().with_declared_gain(1.0).unwrap();
        let p = vec![(sine(100, 0.01, 1.0, 1.0), Signal::zeros(100, 1, 0.01).unwrap())];
        assert!(estimate_incremental_gain(&lying, &p).unwrap().declaration_violated);
    }

    struct TimeReversal;

    impl Operator for TimeReversal {
        fn apply(&self, u: &Signal) -> Result<Signal> {
            let n = u.len();
            let data = (0..n).map(|k| u.as_slice()[n - 1 - k]).collect();
            Signal::new(data, 1, u.dt())
        }
    }

    #[test]
    fn causality_examples() {
        let u = sine(500, 0.01, 2.0, 1.0);
        let ts: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        let phi = OperatorSpec::static_nl(StaticFn::Tanh).unwrap();
        let r = causality_check(&phi, &u, &ts).unwrap();
        assert!(r.passed && r.max_violation == 0.0);
        let lag = OperatorSpec::lti(StateSpace::first_order(2.0, 1.0).unwrap());
        let r = causality_check(&lag, &u, &ts).unwrap();
        assert!(r.passed && r.max_violation <= 1e-9);
        let r = causality_check(&TimeReversal, &step(500, 0.01), &ts).unwrap();
        assert!(!r.passed);
        // P_T R P_T 1 vanishes on [0, T) for T < horizon/2, while P_T R 1 = 1 there
        assert!((r.max_violation - (2.5f64).sqrt()).abs() < 1e-9, "{}", r.max_violation);
    }

    #[test]
    fn relational_inverse_examples() {
        let y = sine(100, 0.01, 1.0, 0.5);
        let id = OperatorSpec::identity();
        assert!(relational_inverse_apply(&id, &y).unwrap().try_sub(&y).unwrap().norm() < 1e-12);

        let phi = OperatorSpec::static_nl(StaticFn::NegArctan).unwrap();
        let e = relational_inverse_apply(&phi, &Signal::from_fn(10, 0.1, |_| -PI / 4.0).unwrap()).unwrap();
        assert!(e.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-9));

        let two = OperatorSpec::scale(2.0, OperatorSpec::identity()).unwrap();
        let half = relational_inverse_apply(&two, &y).unwrap();
        assert!(half.try_sub(&y.scaled(0.5)).unwrap().norm() < 1e-12);

        let sat = OperatorSpec::static_nl(StaticFn::Saturation { limit: 1.0 }).unwrap();
        assert!(matches!(relational_inverse_apply(&sat, &y), Err(Error::NotInvertible(_))));
        let tanh = OperatorSpec::static_nl(StaticFn::Tanh).unwrap();
        let big = Signal::from_fn(3, 0.1, |_| 2.0).unwrap();
        assert!(matches!(relational_inverse_apply(&tanh, &big), Err(Error::OutOfRange { .. })));
        let lag = OperatorSpec::lti(StateSpace::first_order(1.0, 1.0).unwrap());
        assert!(matches!(relational_inverse_apply(&lag, &y), Err(Error::NotInvertible(_))));
    }

    #[test]
    fn feedback_inverse_is_inverse_plus_backward() {
        // [k1, tau k2]^-1 (y) = y/k1 + tau k2 y
        let fwd = OperatorSpec::scale(2.0, OperatorSpec::identity()).unwrap();
        let bwd = OperatorSpec::static_nl(StaticFn::Gain { k: 0.25 }).unwrap();
        let fb = OperatorSpec::feedback(fwd, bwd, 0.5).unwrap();
        let u = sine(100, 0.01, 1.0, 1.0);
        let y = fb.apply(&u).unwrap();
        let back = relational_inverse_apply(&fb, &y).unwrap();
        assert!(back.try_sub(&u).unwrap().norm() < 1e-7 * u.norm());
    }

    #[test]
    fn nyquist_cover_contains_the_curve() {
        let ss = StateSpace::first_order(0.25, 1.0).unwrap();
        let cover = nyquist_cover(&ss, 1e-3).unwrap();
        assert!(cover.is_conjugate_symmetric());
        for i in 0..2000 {
            let w = 10f64.powf(-4.0 + 8.0 * i as f64 / 2000.0);
            let z = ss.freq_response(w)[(0, 0)];
            assert!(cover.contains(z) && cover.contains(z.conj()), "omega {w}");
        }
    }
}
