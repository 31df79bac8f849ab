//! Scaled relative graphs: sampled point clouds and the region algebra used
//! to over-approximate them.

pub mod region;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::{Operator, DISTINCT_PAIR_TOL};
use crate::signals::{angle, norm, Signal};

pub use region::{Primitive, PrimitiveLiteral, Region};

/// Sampled SRG: for every input pair, the point
/// `|dy|/|du| * exp(+-j angle(du, dy))` and its conjugate.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SrgCloud {
    pub points: Vec<Complex64>,
    /// Index of the input pair each point came from.
    pub pair_ids: Vec<usize>,
}

impl SrgCloud {
    pub fn max_radius(&self) -> f64 {
        self.points.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points outside `region` by more than `tol`.
    pub fn outside<'a>(&'a self, region: &'a Region, tol: f64) -> impl Iterator<Item = Complex64> + 'a {
        self.points.iter().copied().filter(move |&z| !region.contains_tol(z, tol))
    }
}

/// The SRG point of one pair, upper half-plane representative.
pub fn srg_point(du: &Signal, dy: &Signal) -> Result<Complex64> {
    let nu = norm(du);
    if nu <= DISTINCT_PAIR_TOL {
        return Err(Error::DegeneratePair { index: 0, norm: nu });
    }
    let ny = norm(dy);
    if ny == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(Complex64::from_polar(ny / nu, angle(du, dy)?))
}

pub fn sample_srg(op: &dyn Operator, pairs: &[(Signal, Signal)]) -> Result<SrgCloud> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair list"));
    }
    let points = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (u1, u2))| {
            let du = u1.try_sub(u2)?;
            let nu = norm(&du);
            if nu <= DISTINCT_PAIR_TOL {
                return Err(Error::DegeneratePair { index: i, norm: nu });
            }
            let dy = op.apply(u1)?.try_sub(&op.apply(u2)?)?;
            srg_point(&du, &dy)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cloud = SrgCloud::default();
    for (i, z) in points.into_iter().enumerate() {
        cloud.points.push(z);
        cloud.points.push(z.conj());
        cloud.pair_ids.extend([i, i]);
    }
    Ok(cloud)
}

/// Lower end of the default separation sweep; `tau = 0` itself is excluded.
pub const TAU_FLOOR: f64 = 1e-9;

/// Outcome of a certified sweep of `d(tau) = dist(s1_inv, -tau s2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationReport {
    /// Certified lower bound on `inf_tau d(tau)`, clamped at 0.
    pub margin: f64,
    /// Smallest sampled distance.
    pub min_distance: f64,
    /// Grid point attaining `min_distance` (first one on ties).
    pub tau_star: f64,
    /// Lipschitz slack `R2 h / 2` subtracted from `min_distance`.
    pub slack: f64,
    pub grid_points: usize,
    pub evaluations: usize,
}

/// Total distance evaluations allowed across refinements.
pub const MAX_EVALUATIONS: usize = 1_000_000;

/// Certified infimum over `tau in [tau_lo, tau_hi]` of
/// `dist(s1_inv, scale(s2, -tau))`.
///
/// `d` is `R2`-Lipschitz in `tau` with `R2 = max_radius(s2)`, so between grid
/// points spaced `h` apart it cannot dip more than `R2 h / 2` below the
/// sampled values. The grid doubles until the slack falls below `1e-4` of the
/// margin or the evaluation budget is exhausted.
pub fn separation_margin(s1_inv: &Region, s2: &Region, tau_lo: f64, tau_hi: f64) -> Result<SeparationReport> {
    if !(tau_lo > 0.0 && tau_lo <= tau_hi && tau_hi <= 1.0) {
        return Err(Error::InvalidArgument(format!("need 0 < tau_lo <= tau_hi <= 1, got [{tau_lo}, {tau_hi}]")));
    }
    let r2 = s2.max_radius();
    if !r2.is_finite() {
        return Err(Error::Unbounded("s2 (the tau-Lipschitz constant is infinite)"));
    }
    let d = |tau: f64| s1_inv.distance(&s2.scale(-tau));
    let mut intervals = if tau_hi > tau_lo { 64usize } else { 0 };
    let mut evaluations = 0usize;
    loop {
        let h = if intervals == 0 { 0.0 } else { (tau_hi - tau_lo) / intervals as f64 };
        let taus: Vec<f64> =
            (0..=intervals).map(|i| if i == intervals { tau_hi } else { tau_lo + i as f64 * h }).collect();
        let values: Vec<f64> = taus.par_iter().map(|&t| d(t)).collect();
        evaluations += taus.len();
        let (idx, &min_distance) =
            values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("grid is nonempty");
        let slack = r2 * h / 2.0;
        let margin = (min_distance - slack).max(0.0);
        let report =
            SeparationReport { margin, min_distance, tau_star: taus[idx], slack, grid_points: taus.len(), evaluations };
        let done = min_distance == 0.0
            || slack < 1e-4 * margin
            || slack == 0.0
            || evaluations + 2 * intervals + 1 > MAX_EVALUATIONS;
        if done {
            return Ok(report);
        }
        intervals *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{OperatorSpec, StaticFn};

    fn pairs() -> Vec<(Signal, Signal)> {
        (1..8)
            .map(|i| {
                let w = i as f64;
                (
                    Signal::from_fn(300, 0.01, |t| (w * t).sin() * (-t).exp()).unwrap(),
                    Signal::from_fn(300, 0.01, |t| 0.3 * (2.0 * w * t).cos() * (-t).exp()).unwrap(),
                )
            })
            .collect()
    }

    #[test]
    fn sample_srg_examples() {
        let p = pairs();
        let c = 2.5;
        let cloud = sample_srg(&OperatorSpec::scale(c, OperatorSpec::identity()).unwrap(), &p).unwrap();
        assert_eq!(cloud.len(), 2 * p.len());
        assert!(cloud.points.iter().all(|z| (z - Complex64::new(c, 0.0)).norm() < 1e-12));
        assert!((cloud.max_radius() - 2.5).abs() < 1e-12);

        let neg = sample_srg(&OperatorSpec::scale(-1.0, OperatorSpec::identity()).unwrap(), &p).unwrap();
        assert!(neg.points.iter().all(|z| (z - Complex64::new(-1.0, 0.0)).norm() < 1e-7));

        let phi = OperatorSpec::static_nl(StaticFn::NegArctan).unwrap();
        let cloud = sample_srg(&phi, &p).unwrap();
        assert!(cloud.points.iter().all(|z| z.norm() < 1.0));
        let declared = phi.declared_srg().unwrap();
        assert_eq!(cloud.outside(declared, 1e-12).count(), 0);
        // conjugate closure
        for pair in cloud.points.chunks(2) {
            assert_eq!(pair[0], pair[1].conj());
        }
    }

    #[test]
    fn degenerate_pair_rejected() {
        let u = Signal::from_fn(10, 0.1, |t| t).unwrap();
        let r = sample_srg(&OperatorSpec::identity(), &[(u.clone(), u)]);
        assert!(matches!(r, Err(Error::DegeneratePair { .. })));
    }

    #[test]
    fn margin_examples() {
        let s1 = Region::single(Primitive::real_disc(2.0, 0.5));
        let s2 = Region::single(Primitive::real_disc(1.0, 0.25));
        let r = separation_margin(&s1, &s2, TAU_FLOOR, 1.0).unwrap();
        assert!((r.margin - 1.5).abs() < 1e-3, "{r:?}");
        assert!(r.margin <= 1.5);

        let zero = Region::single(Primitive::point(Complex64::new(0.0, 0.0)));
        let r = separation_margin(&s1, &zero, TAU_FLOOR, 1.0).unwrap();
        assert_eq!(r.margin, s1.distance(&zero));

        // -tau * Disc(-1, 0.5) = Disc(tau, 0.5 tau) touches Disc(2, 0.5) exactly at tau = 1
        let touching = Region::single(Primitive::real_disc(-1.0, 0.5));
        let r = separation_margin(&s1, &touching, TAU_FLOOR, 1.0).unwrap();
        assert_eq!(r.margin, 0.0);
        assert_eq!(r.tau_star, 1.0);

        let unbounded = Region::single(Primitive::half_plane(Complex64::new(1.0, 0.0), 0.0).unwrap());
        assert!(matches!(separation_margin(&s1, &unbounded, TAU_FLOOR, 1.0), Err(Error::Unbounded(_))));
        assert!(separation_margin(&s1, &s2, 0.0, 1.0).is_err());
    }
}
