//! Property tests of the signal, region and multiplier invariants.

use incstab::iqc::{form_bound, quad_constant, sigma_form, Multiplier};
use incstab::signals::{angle, dft, idft, inner, norm};
use incstab::srg::{Primitive, Region};
use incstab::Signal;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::TAU;

fn signal(dim: usize) -> impl Strategy<Value = Signal> {
    (2usize..96, 0.001f64..0.5).prop_flat_map(move |(len, dt)| {
        prop::collection::vec(-10.0f64..10.0, len * dim).prop_map(move |data| Signal::new(data, dim, dt).unwrap())
    })
}

fn signal_pair(dim: usize) -> impl Strategy<Value = (Signal, Signal)> {
    (2usize..96, 0.001f64..0.5).prop_flat_map(move |(len, dt)| {
        (prop::collection::vec(-10.0f64..10.0, len * dim), prop::collection::vec(-10.0f64..10.0, len * dim))
            .prop_map(move |(a, b)| (Signal::new(a, dim, dt).unwrap(), Signal::new(b, dim, dt).unwrap()))
    })
}

fn complex(r: f64) -> impl Strategy<Value = Complex64> {
    (-r..r, -r..r).prop_map(|(re, im)| Complex64::new(re, im))
}

fn disc() -> impl Strategy<Value = Primitive> {
    (complex(4.0), 0.0f64..2.0).prop_map(|(c, r)| Primitive::disc(c, r).unwrap())
}

/// A point of the disc given by polar coordinates relative to its radius.
fn in_disc(p: &Primitive, s: f64, theta: f64) -> Complex64 {
    let Primitive::Disc { center, radius } = *p else { unreachable!() };
    center + Complex64::from_polar(radius * s.sqrt(), theta)
}

fn tol(z: Complex64) -> f64 {
    1e-9 * (1.0 + z.norm())
}

proptest! {
    #[test]
    fn parseval_holds(x in signal(2)) {
        let sp = dft(&x);
        let lhs = norm(&x).powi(2);
        prop_assert!((sp.energy() - lhs).abs() <= 1e-9 * (1.0 + lhs));
    }

    #[test]
    fn idft_inverts_dft(x in signal(1)) {
        let back = idft(&dft(&x));
        prop_assert!(back.try_sub(&x).unwrap().norm() <= 1e-9 * (1.0 + x.norm()));
    }

    #[test]
    fn cauchy_schwarz((x, y) in signal_pair(2)) {
        let ip = inner(&x, &y).unwrap();
        prop_assert!(ip.abs() <= norm(&x) * norm(&y) * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn angle_in_range_and_symmetric((x, y) in signal_pair(1)) {
        prop_assume!(x.norm() > 1e-9 && y.norm() > 1e-9);
        let a = angle(&x, &y).unwrap();
        prop_assert!((0.0..=std::f64::consts::PI).contains(&a));
        prop_assert!((a - angle(&y, &x).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn inversion_is_sound(p in disc(), s in 0.0f64..1.0, th in 0.0f64..TAU) {
        let z = in_disc(&p, s, th);
        prop_assume!(z.norm() > 1e-6);
        let inv = Region::single(p).invert().unwrap();
        prop_assert!(inv.contains_tol(z.inv(), tol(z.inv())), "{} not in {:?}", z.inv(), inv);
    }

    #[test]
    fn scaling_is_sound(p in disc(), c in -3.0f64..3.0, s in 0.0f64..1.0, th in 0.0f64..TAU) {
        let z = in_disc(&p, s, th) * c;
        prop_assert!(Region::single(p).scale(c).contains_tol(z, tol(z)));
    }

    #[test]
    fn minkowski_is_sound(a in disc(), b in disc(), s in 0.0f64..1.0, t in 0.0f64..1.0, th in 0.0f64..TAU) {
        let z = in_disc(&a, s, th) + in_disc(&b, t, th * 1.7);
        let sum = Region::single(a).minkowski_sum(&Region::single(b)).unwrap();
        prop_assert!(sum.contains_tol(z, tol(z)));
    }

    #[test]
    fn chord_closure_is_sound(p in disc(), s in 0.0f64..1.0, th in 0.0f64..TAU, t in 0.0f64..1.0) {
        let z = in_disc(&p, s, th);
        let w = Complex64::new(z.re, z.im * (1.0 - 2.0 * t));
        let closed = Region::single(p).conjugate_closure().chord_closure().unwrap();
        prop_assert!(closed.contains_tol(w, tol(w)));
    }

    #[test]
    fn distance_is_symmetric_and_zero_on_overlap(a in disc(), b in disc(), s in 0.0f64..1.0, th in 0.0f64..TAU) {
        let (ra, rb) = (Region::single(a), Region::single(b));
        prop_assert!((ra.distance(&rb) - rb.distance(&ra)).abs() <= 1e-12);
        let z = in_disc(&a, s, th);
        let point = Region::single(Primitive::point(z));
        prop_assert!(ra.distance(&point) <= tol(z));
    }

    #[test]
    fn quadratic_continuity(
        (x, d) in signal_pair(2),
        step in -3.0f64..1.0,
        eps in -3.0f64..1.0,
        gamma in 0.1f64..3.0,
        which in 0usize..2,
    ) {
        let m = if which == 0 { Multiplier::small_gain(gamma, 1).unwrap() } else { Multiplier::passivity(1).unwrap() };
        let y = x.try_axpy(10f64.powf(step), &d).unwrap();
        let eps = 10f64.powf(eps);
        let c = quad_constant(form_bound(&m), eps).unwrap();
        let rhs = sigma_form(&m, &x).unwrap() + eps * x.norm().powi(2) + c * x.try_sub(&y).unwrap().norm().powi(2);
        let lhs = sigma_form(&m, &y).unwrap();
        prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()), "{lhs} > {rhs}");
    }
}
