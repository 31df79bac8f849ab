//! Finite unions of closed planar primitives used as sound over-approximations
//! of scaled relative graphs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to classify a disc boundary as passing through 0.
const ORIGIN_TOL: f64 = 1e-12;

/// Vertical spacing of a chord-closure stack, as a fraction of the disc radius.
pub const CHORD_SPACING: f64 = 0.25;

/// Upper bound on the number of discs in one chord-closure stack.
pub const CHORD_MAX_STACK: usize = 4096;

/// A closed planar set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PrimitiveLiteral", into = "PrimitiveLiteral")]
pub enum Primitive {
    /// `{z : |z - center| <= radius}`
    Disc { center: Complex64, radius: f64 },
    /// `{z : Re(conj(normal) z) >= offset}` with `|normal| = 1`.
    HalfPlane { normal: Complex64, offset: f64 },
    /// `{z : |z - center| >= radius}`; radius 0 is the whole plane.
    DiscExterior { center: Complex64, radius: f64 },
}

/// Configuration-document form of a primitive.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PrimitiveLiteral {
    Disc { re: f64, im: f64, r: f64 },
    Halfplane { nre: f64, nim: f64, offset: f64 },
    Discext { re: f64, im: f64, r: f64 },
}

impl TryFrom<PrimitiveLiteral> for Primitive {
    type Error = Error;

    fn try_from(lit: PrimitiveLiteral) -> Result<Self> {
        match lit {
            PrimitiveLiteral::Disc { re, im, r } => Primitive::disc(Complex64::new(re, im), r),
            PrimitiveLiteral::Halfplane { nre, nim, offset } => Primitive::half_plane(Complex64::new(nre, nim), offset),
            PrimitiveLiteral::Discext { re, im, r } => Primitive::disc_exterior(Complex64::new(re, im), r),
        }
    }
}

impl From<Primitive> for PrimitiveLiteral {
    fn from(p: Primitive) -> Self {
        match p {
            Primitive::Disc { center, radius } => PrimitiveLiteral::Disc { re: center.re, im: center.im, r: radius },
            Primitive::HalfPlane { normal, offset } => {
                PrimitiveLiteral::Halfplane { nre: normal.re, nim: normal.im, offset }
            }
            Primitive::DiscExterior { center, radius } => {
                PrimitiveLiteral::Discext { re: center.re, im: center.im, r: radius }
            }
        }
    }
}

fn finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

impl Primitive {
    pub fn disc(center: Complex64, radius: f64) -> Result<Self> {
        if !finite(center) || !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("disc({center}, {radius})")));
        }
        Ok(Primitive::Disc { center, radius })
    }

    /// Normalizes `normal` to unit length, rescaling `offset` to match.
    pub fn half_plane(normal: Complex64, offset: f64) -> Result<Self> {
        let len = normal.norm();
        if !finite(normal) || len == 0.0 || !offset.is_finite() {
            return Err(Error::InvalidArgument(format!("halfplane({normal}, {offset})")));
        }
        Ok(Primitive::HalfPlane { normal: normal / len, offset: offset / len })
    }

    pub fn disc_exterior(center: Complex64, radius: f64) -> Result<Self> {
        if !finite(center) || !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("discext({center}, {radius})")));
        }
        Ok(Primitive::DiscExterior { center, radius })
    }

    /// `Disc(re + 0j, r)`, for tests and examples.
    pub fn real_disc(re: f64, r: f64) -> Self {
        Primitive::Disc { center: Complex64::new(re, 0.0), radius: r }
    }

    pub fn point(z: Complex64) -> Self {
        Primitive::Disc { center: z, radius: 0.0 }
    }

    pub fn whole_plane() -> Self {
        Primitive::DiscExterior { center: Complex64::new(0.0, 0.0), radius: 0.0 }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        self.contains_tol(z, 0.0)
    }

    /// Membership with an absolute slack `tol` on the defining inequality.
    pub fn contains_tol(&self, z: Complex64, tol: f64) -> bool {
        match *self {
            Primitive::Disc { center, radius } => (z - center).norm() <= radius + tol,
            Primitive::HalfPlane { normal, offset } => (normal.conj() * z).re >= offset - tol,
            Primitive::DiscExterior { center, radius } => (z - center).norm() >= radius - tol,
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, Primitive::Disc { .. })
    }

    pub fn conj(&self) -> Self {
        match *self {
            Primitive::Disc { center, radius } => Primitive::Disc { center: center.conj(), radius },
            Primitive::HalfPlane { normal, offset } => Primitive::HalfPlane { normal: normal.conj(), offset },
            Primitive::DiscExterior { center, radius } => Primitive::DiscExterior { center: center.conj(), radius },
        }
    }

    fn approx_eq(&self, other: &Primitive, tol: f64) -> bool {
        match (*self, *other) {
            (Primitive::Disc { center: a, radius: r }, Primitive::Disc { center: b, radius: s })
            | (Primitive::DiscExterior { center: a, radius: r }, Primitive::DiscExterior { center: b, radius: s }) => {
                (a - b).norm() <= tol && (r - s).abs() <= tol
            }
            (Primitive::HalfPlane { normal: a, offset: r }, Primitive::HalfPlane { normal: b, offset: s }) => {
                (a - b).norm() <= tol && (r - s).abs() <= tol
            }
            _ => false,
        }
    }

    /// Image under `z -> 1/z` (closed over-approximation; the images of 0 and
    /// infinity are dropped).
    pub fn invert(&self) -> Result<Primitive> {
        match *self {
            Primitive::Disc { center, radius } => {
                let c = center.norm();
                let scale = c.max(radius);
                if scale == 0.0 {
                    return Err(Error::Unrepresentable("inverse of the point 0 is the point at infinity".into()));
                }
                if (c - radius).abs() <= ORIGIN_TOL * scale {
                    // boundary through 0: image is a half-plane
                    return Primitive::half_plane(center.conj() / c, 1.0 / (2.0 * c));
                }
                let den = c * c - radius * radius;
                let image_center = center.conj() / den;
                let image_radius = radius / den.abs();
                if c > radius {
                    Primitive::disc(image_center, image_radius)
                } else {
                    Primitive::disc_exterior(image_center, image_radius)
                }
            }
            Primitive::HalfPlane { normal, offset } => {
                if offset > 0.0 {
                    Primitive::disc(normal.conj() / (2.0 * offset), 1.0 / (2.0 * offset))
                } else if offset == 0.0 {
                    Primitive::half_plane(normal.conj(), 0.0)
                } else {
                    Primitive::disc_exterior(normal.conj() / (2.0 * offset), 1.0 / (2.0 * offset.abs()))
                }
            }
            Primitive::DiscExterior { center, radius } => {
                let c = center.norm();
                if radius == 0.0 {
                    return Ok(Primitive::whole_plane());
                }
                if (c - radius).abs() <= ORIGIN_TOL * c.max(radius) {
                    return Primitive::half_plane(-(center.conj() / c), -1.0 / (2.0 * c));
                }
                let den = c * c - radius * radius;
                let image_center = center.conj() / den;
                let image_radius = radius / den.abs();
                if c < radius {
                    Primitive::disc(image_center, image_radius)
                } else {
                    Primitive::disc_exterior(image_center, image_radius)
                }
            }
        }
    }

    pub fn scale(&self, c: f64) -> Primitive {
        if c == 0.0 {
            return Primitive::point(Complex64::new(0.0, 0.0));
        }
        match *self {
            Primitive::Disc { center, radius } => Primitive::Disc { center: center * c, radius: radius * c.abs() },
            Primitive::HalfPlane { normal, offset } => {
                if c > 0.0 {
                    Primitive::HalfPlane { normal, offset: offset * c }
                } else {
                    Primitive::HalfPlane { normal: -normal, offset: offset * c.abs() }
                }
            }
            Primitive::DiscExterior { center, radius } => {
                Primitive::DiscExterior { center: center * c, radius: radius * c.abs() }
            }
        }
    }

    /// Exact Minkowski sum for the supported pairs.
    pub fn minkowski(&self, other: &Primitive) -> Result<Primitive> {
        use Primitive::*;
        match (*self, *other) {
            (Disc { center: c1, radius: r1 }, Disc { center: c2, radius: r2 }) => {
                Ok(Disc { center: c1 + c2, radius: r1 + r2 })
            }
            (HalfPlane { normal, offset }, Disc { center, radius })
            | (Disc { center, radius }, HalfPlane { normal, offset }) => {
                Ok(HalfPlane { normal, offset: offset + (normal.conj() * center).re - radius })
            }
            (Disc { center: c1, radius: r1 }, DiscExterior { center: c2, radius: r2 })
            | (DiscExterior { center: c2, radius: r2 }, Disc { center: c1, radius: r1 }) => {
                Ok(DiscExterior { center: c1 + c2, radius: (r2 - r1).max(0.0) })
            }
            (HalfPlane { normal: n1, offset: o1 }, HalfPlane { normal: n2, offset: o2 })
                if (n1 - n2).norm() <= 1e-12 =>
            {
                Ok(HalfPlane { normal: n1, offset: o1 + o2 })
            }
            (a, b) => Err(Error::Unsupported(format!("Minkowski sum of {a:?} and {b:?}"))),
        }
    }

    /// Closed-form Euclidean distance between two primitives.
    pub fn distance(&self, other: &Primitive) -> f64 {
        use Primitive::*;
        match (*self, *other) {
            (Disc { center: c1, radius: r1 }, Disc { center: c2, radius: r2 }) => ((c1 - c2).norm() - r1 - r2).max(0.0),
            (Disc { center, radius }, HalfPlane { normal, offset })
            | (HalfPlane { normal, offset }, Disc { center, radius }) => {
                (offset - (normal.conj() * center).re - radius).max(0.0)
            }
            (Disc { center: c1, radius: r1 }, DiscExterior { center: c2, radius: r2 })
            | (DiscExterior { center: c2, radius: r2 }, Disc { center: c1, radius: r1 }) => {
                (r2 - ((c1 - c2).norm() + r1)).max(0.0)
            }
            (HalfPlane { normal: n1, offset: o1 }, HalfPlane { normal: n2, offset: o2 }) => {
                if (n1 + n2).norm() <= 1e-12 {
                    (o1 + o2).max(0.0)
                } else {
                    0.0
                }
            }
            // unbounded complements always meet half-planes and each other
            (HalfPlane { .. }, DiscExterior { .. })
            | (DiscExterior { .. }, HalfPlane { .. })
            | (DiscExterior { .. }, DiscExterior { .. }) => 0.0,
        }
    }
}

/// Union of primitives. The empty union is the empty set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Region {
    primitives: Vec<Primitive>,
    /// Set on the output of [`Region::chord_closure`]: the region contains the
    /// chord closure of the set it covers, so closing it again is the identity.
    #[serde(skip)]
    chord_closed: bool,
}

impl From<Vec<Primitive>> for Region {
    fn from(primitives: Vec<Primitive>) -> Self {
        Region::new(primitives)
    }
}

impl Region {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        Region { primitives, chord_closed: false }
    }

    pub fn empty() -> Self {
        Region::default()
    }

    pub fn single(p: Primitive) -> Self {
        Region::new(vec![p])
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn is_chord_closed(&self) -> bool {
        self.chord_closed
    }

    pub fn contains(&self, z: Complex64) -> bool {
        self.primitives.iter().any(|p| p.contains(z))
    }

    pub fn contains_tol(&self, z: Complex64, tol: f64) -> bool {
        self.primitives.iter().any(|p| p.contains_tol(z, tol))
    }

    pub fn is_bounded(&self) -> bool {
        self.primitives.iter().all(Primitive::is_bounded)
    }

    /// `sup |z|` over the region; infinite if any primitive is unbounded.
    pub fn max_radius(&self) -> f64 {
        self.primitives
            .iter()
            .map(|p| match *p {
                Primitive::Disc { center, radius } => center.norm() + radius,
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }

    /// Every primitive's conjugate is present (up to `1e-12`).
    pub fn is_conjugate_symmetric(&self) -> bool {
        self.primitives.iter().all(|p| {
            let q = p.conj();
            self.primitives.iter().any(|r| r.approx_eq(&q, 1e-12))
        })
    }

    /// Adds the conjugate of every primitive that lacks one.
    pub fn conjugate_closure(&self) -> Region {
        let mut out = self.primitives.clone();
        for p in &self.primitives {
            let q = p.conj();
            if !out.iter().any(|r| r.approx_eq(&q, 1e-12)) {
                out.push(q);
            }
        }
        Region::new(out)
    }

    /// Pointwise image under `z -> 1/z`.
    pub fn invert(&self) -> Result<Region> {
        Ok(Region::new(self.primitives.iter().map(Primitive::invert).collect::<Result<_>>()?))
    }

    pub fn scale(&self, c: f64) -> Region {
        if c == 0.0 && !self.is_empty() {
            return Region::single(Primitive::point(Complex64::new(0.0, 0.0)));
        }
        Region { primitives: self.primitives.iter().map(|p| p.scale(c)).collect(), chord_closed: self.chord_closed }
    }

    pub fn negate(&self) -> Region {
        self.scale(-1.0)
    }

    /// Pairwise Minkowski sum over both unions.
    pub fn minkowski_sum(&self, other: &Region) -> Result<Region> {
        let mut out = Vec::with_capacity(self.primitives.len() * other.primitives.len());
        for a in &self.primitives {
            for b in &other.primitives {
                out.push(a.minkowski(b)?);
            }
        }
        Ok(Region::new(out))
    }

    /// `inf |x1 - x2|` over the two unions; `+inf` if either is empty.
    pub fn distance(&self, other: &Region) -> f64 {
        let mut best = f64::INFINITY;
        for a in &self.primitives {
            for b in &other.primitives {
                best = best.min(a.distance(b));
                if best == 0.0 {
                    return 0.0;
                }
            }
        }
        best
    }

    /// Over-approximates the chord closure: every `lambda z + (1 - lambda) conj(z)`
    /// with `z` in the region and `lambda` in `[0, 1]` is a member of the output.
    ///
    /// Discs off the real axis are covered by a vertical stack of discs whose
    /// centres run from `a + bj` to `a - bj` with spacing `h <= CHORD_SPACING * r`
    /// and radius `sqrt(r^2 + h^2 / 4)`. Half-planes with a real normal and
    /// on-axis discs are already closed; any other unbounded primitive closes
    /// to the whole plane.
    pub fn chord_closure(&self) -> Result<Region> {
        if self.chord_closed {
            return Ok(self.clone());
        }
        if !self.is_conjugate_symmetric() {
            return Err(Error::NotSymmetric);
        }
        let mut out = self.primitives.clone();
        for p in &self.primitives {
            match *p {
                Primitive::Disc { center, radius } => {
                    let b = center.im;
                    if b <= 0.0 {
                        // on-axis discs are closed; b < 0 is handled by its conjugate
                        continue;
                    }
                    let span = 2.0 * b;
                    let m = if radius > 0.0 {
                        ((span / (CHORD_SPACING * radius)).ceil() as usize + 1).min(CHORD_MAX_STACK)
                    } else {
                        CHORD_MAX_STACK
                    };
                    let h = span / (m - 1) as f64;
                    let r = (radius * radius + h * h / 4.0).sqrt();
                    for k in 0..m {
                        let im = b - k as f64 * h;
                        out.push(Primitive::Disc { center: Complex64::new(center.re, im), radius: r });
                    }
                }
                Primitive::HalfPlane { normal, .. } => {
                    if normal.im.abs() > 1e-12 {
                        return Ok(Region { primitives: vec![Primitive::whole_plane()], chord_closed: true });
                    }
                }
                Primitive::DiscExterior { .. } => {
                    return Ok(Region { primitives: vec![Primitive::whole_plane()], chord_closed: true });
                }
            }
        }
        Ok(Region { primitives: out, chord_closed: true })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn literal_round_trip() {
        let json = r#"[{"disc":{"re":1.0,"im":0.5,"r":0.25}},{"halfplane":{"nre":0.0,"nim":2.0,"offset":1.0}},{"discext":{"re":0.0,"im":0.0,"r":1.0}}]"#;
        let r: Region = serde_json::from_str(json).unwrap();
        assert_eq!(r.primitives()[0], Primitive::Disc { center: c(1.0, 0.5), radius: 0.25 });
        // normal normalized, offset rescaled
        assert_eq!(r.primitives()[1], Primitive::HalfPlane { normal: c(0.0, 1.0), offset: 0.5 });
        let back: Region = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(serde_json::from_str::<Region>(r#"[{"disc":{"re":0,"im":0,"r":-1}}]"#).is_err());
    }

    #[test]
    fn max_radius_examples() {
        assert_eq!(Region::single(Primitive::real_disc(3.0, 1.0)).max_radius(), 4.0);
        let hp = Region::single(Primitive::half_plane(c(1.0, 0.0), 0.0).unwrap());
        assert_eq!(hp.max_radius(), f64::INFINITY);
        assert_eq!(Region::empty().max_radius(), 0.0);
    }

    #[test]
    fn invert_examples() {
        let r = Region::single(Primitive::real_disc(3.0, 1.0)).invert().unwrap();
        match r.primitives()[0] {
            Primitive::Disc { center, radius } => {
                assert!((center - c(0.375, 0.0)).norm() < 1e-12);
                assert!((radius - 0.125).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let unit = Primitive::real_disc(0.0, 1.0).invert().unwrap();
        assert_eq!(unit, Primitive::DiscExterior { center: c(0.0, 0.0), radius: 1.0 });
        let pt = Primitive::real_disc(2.0, 0.0).invert().unwrap();
        assert_eq!(pt, Primitive::real_disc(0.5, 0.0));
        assert!(matches!(Primitive::point(c(0.0, 0.0)).invert(), Err(Error::Unrepresentable(_))));
        // disc through the origin maps to a half-plane
        let through = Primitive::real_disc(1.0, 1.0).invert().unwrap();
        assert_eq!(through, Primitive::HalfPlane { normal: c(1.0, 0.0), offset: 0.5 });
    }

    #[test]
    fn scale_examples() {
        assert_eq!(Primitive::real_disc(1.0, 0.5).scale(-1.0), Primitive::real_disc(-1.0, 0.5));
        let hp = Primitive::half_plane(c(1.0, 0.0), 2.0).unwrap();
        assert_eq!(hp.scale(0.5), Primitive::HalfPlane { normal: c(1.0, 0.0), offset: 1.0 });
        let r = Region::new(vec![hp, Primitive::real_disc(4.0, 1.0)]).scale(0.0);
        assert_eq!(r.primitives(), &[Primitive::point(c(0.0, 0.0))]);
    }

    #[test]
    fn minkowski_examples() {
        let s = Primitive::real_disc(1.0, 1.0).minkowski(&Primitive::real_disc(-1.0, 1.0)).unwrap();
        assert_eq!(s, Primitive::real_disc(0.0, 2.0));
        let id = Primitive::real_disc(0.0, 1.0).minkowski(&Primitive::point(c(0.0, 0.0))).unwrap();
        assert_eq!(id, Primitive::real_disc(0.0, 1.0));
        let hp = Primitive::half_plane(c(1.0, 0.0), 3.0).unwrap();
        let s = hp.minkowski(&Primitive::real_disc(0.0, 1.0)).unwrap();
        assert_eq!(s, Primitive::HalfPlane { normal: c(1.0, 0.0), offset: 2.0 });
        let ext = Primitive::disc_exterior(c(0.0, 0.0), 1.0).unwrap();
        assert!(matches!(ext.minkowski(&hp), Err(Error::Unsupported(_))));
    }

    #[test]
    fn distance_examples() {
        let a = Primitive::real_disc(0.0, 1.0);
        assert_eq!(a.distance(&Primitive::real_disc(5.0, 1.0)), 3.0);
        assert_eq!(a.distance(&Primitive::real_disc(1.5, 1.0)), 0.0);
        let hp = Primitive::half_plane(c(-1.0, 0.0), 1.0).unwrap();
        assert!((Primitive::real_disc(2.0, 0.5).distance(&hp) - 2.5).abs() < 1e-15);
        let ext = Primitive::disc_exterior(c(0.0, 0.0), 3.0).unwrap();
        assert!((Primitive::real_disc(0.5, 1.0).distance(&ext) - 1.5).abs() < 1e-15);
        let h1 = Primitive::half_plane(c(1.0, 0.0), 1.0).unwrap(); // Re z >= 1
        let h2 = Primitive::half_plane(c(-1.0, 0.0), 2.0).unwrap(); // Re z <= -2
        assert_eq!(h1.distance(&h2), 3.0);
        assert_eq!(Region::empty().distance(&Region::single(a)), f64::INFINITY);
    }

    #[test]
    fn chord_closure_examples() {
        let on_axis = Region::single(Primitive::real_disc(1.0, 0.5));
        assert_eq!(on_axis.chord_closure().unwrap().primitives(), on_axis.primitives());
        assert!(Region::empty().chord_closure().unwrap().is_empty());
        let lopsided = Region::single(Primitive::disc(c(0.0, 1.0), 0.1).unwrap());
        assert!(matches!(lopsided.chord_closure(), Err(Error::NotSymmetric)));
        let pair = lopsided.conjugate_closure();
        let closed = pair.chord_closure().unwrap();
        assert!(closed.contains(c(0.0, 0.0)));
        assert!(closed.contains(c(0.1, 0.5)));
        assert!(!closed.contains(c(0.2, 0.0)));
        let ext = Region::single(Primitive::disc_exterior(c(0.0, 0.0), 1.0).unwrap());
        assert_eq!(ext.chord_closure().unwrap().primitives(), &[Primitive::whole_plane()]);
    }
}
