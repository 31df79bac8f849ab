//! Deterministic SVG rendering of SRG clouds/regions and of the arctan
//! log-log table. Coordinates are printed with fixed precision, so equal
//! inputs give byte-identical files.

use std::fmt::Write;

use incstab::srg::Primitive;
use num_complex::Complex64;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 24.0;

fn header(out: &mut String, seed: Option<u64>, title: &str) {
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    if let Some(seed) = seed {
        let _ = writeln!(out, "<!-- seed={seed} -->");
    }
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">"
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    out.push_str(
        "<style>.axis{stroke:#888;stroke-width:1}.guide{fill:none;stroke:#bbb;stroke-dasharray:4 3}\
         .region{fill:none;stroke:#c03;stroke-width:1.2}.exterior{stroke-dasharray:6 3}\
         .point{fill:#036}.data{fill:none;stroke:#036;stroke-width:1.5}\
         .ref{stroke:#c03;stroke-dasharray:6 3}text{font:11px sans-serif}</style>\n",
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Square, vertically centred view of the complex plane.
struct View {
    cx: f64,
    half: f64,
}

impl View {
    fn scale(&self) -> f64 {
        (SIZE - 2.0 * MARGIN) / (2.0 * self.half)
    }

    fn x(&self, re: f64) -> f64 {
        SIZE / 2.0 + (re - self.cx) * self.scale()
    }

    fn y(&self, im: f64) -> f64 {
        SIZE / 2.0 - im * self.scale()
    }
}

/// Plot of an SRG point cloud with region primitives, the unit circle and
/// the axes as guides.
pub fn srg_plot(cloud: &[Complex64], regions: &[Primitive], seed: Option<u64>, title: &str) -> String {
    // extent: unit circle, cloud, bounded primitives, anchors of unbounded ones
    let (mut lo, mut hi, mut top) = (-1.0f64, 1.0f64, 1.0f64);
    let mut include = |z: Complex64, r: f64| {
        lo = lo.min(z.re - r);
        hi = hi.max(z.re + r);
        top = top.max(z.im.abs() + r);
    };
    for z in cloud {
        include(*z, 0.0);
    }
    for p in regions {
        match *p {
            Primitive::Disc { center, radius } | Primitive::DiscExterior { center, radius } => include(center, radius),
            Primitive::HalfPlane { normal, offset } => include(normal * offset, 0.0),
        }
    }
    let cx = 0.5 * (lo + hi);
    let half = (0.5 * (hi - lo)).max(top) * 1.1;
    let v = View { cx, half };
    let s = v.scale();

    let mut out = String::new();
    header(&mut out, seed, title);
    let _ = writeln!(
        out,
        "<line class=\"axis\" x1=\"{:.3}\" y1=\"{:.3}\" x2=\"{:.3}\" y2=\"{:.3}\"/>",
        MARGIN / 2.0,
        v.y(0.0),
        SIZE - MARGIN / 2.0,
        v.y(0.0)
    );
    let _ = writeln!(
        out,
        "<line class=\"axis\" x1=\"{:.3}\" y1=\"{:.3}\" x2=\"{:.3}\" y2=\"{:.3}\"/>",
        v.x(0.0),
        MARGIN / 2.0,
        v.x(0.0),
        SIZE - MARGIN / 2.0
    );
    let _ = writeln!(out, "<circle class=\"guide\" cx=\"{:.3}\" cy=\"{:.3}\" r=\"{:.3}\"/>", v.x(0.0), v.y(0.0), s);
    for p in regions {
        match *p {
            Primitive::Disc { center, radius } => {
                let _ = writeln!(
                    out,
                    "<circle class=\"region\" cx=\"{:.3}\" cy=\"{:.3}\" r=\"{:.3}\"/>",
                    v.x(center.re),
                    v.y(center.im),
                    radius * s
                );
            }
            Primitive::DiscExterior { center, radius } => {
                let _ = writeln!(
                    out,
                    "<circle class=\"region exterior\" cx=\"{:.3}\" cy=\"{:.3}\" r=\"{:.3}\"/>",
                    v.x(center.re),
                    v.y(center.im),
                    radius * s
                );
            }
            Primitive::HalfPlane { normal, offset } => {
                // boundary {offset * normal + t * j normal}, long enough to cross the view
                let base = normal * offset;
                let dir = normal * Complex64::new(0.0, 1.0);
                let reach = 4.0 * half + base.norm();
                let (a, b) = (base - dir * reach, base + dir * reach);
                let _ = writeln!(
                    out,
                    "<line class=\"region\" x1=\"{:.3}\" y1=\"{:.3}\" x2=\"{:.3}\" y2=\"{:.3}\"/>",
                    v.x(a.re),
                    v.y(a.im),
                    v.x(b.re),
                    v.y(b.im)
                );
            }
        }
    }
    for z in cloud {
        let _ = writeln!(out, "<circle class=\"point\" cx=\"{:.3}\" cy=\"{:.3}\" r=\"1.5\"/>", v.x(z.re), v.y(z.im));
    }
    out.push_str("</svg>\n");
    out
}

/// Log-log plot of `(a, ratio)` rows with a reference line of the given
/// slope through the geometric centre of the data.
pub fn loglog_plot(rows: &[(f64, f64)], ref_slope: f64, seed: Option<u64>, title: &str) -> String {
    let logs: Vec<(f64, f64)> =
        rows.iter().filter(|(a, r)| *a > 0.0 && *r > 0.0).map(|(a, r)| (a.log10(), r.log10())).collect();
    let mut out = String::new();
    header(&mut out, seed, title);
    if logs.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let fold = |f: fn(&(f64, f64)) -> f64| {
        logs.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x0, x1) = fold(|p| p.0);
    let (y0, y1) = fold(|p| p.1);
    let (x0, x1) = (x0.floor() - 0.5, x1.ceil() + 0.5);
    let (y0, y1) = (y0.floor() - 0.5, y1.ceil() + 0.5);
    let left = MARGIN * 2.5;
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (SIZE - left - MARGIN);
    let py = |y: f64| SIZE - left - (y - y0) / (y1 - y0) * (SIZE - left - MARGIN);

    let _ = writeln!(
        out,
        "<rect class=\"guide\" x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\"/>",
        px(x0),
        py(y1),
        px(x1) - px(x0),
        py(y0) - py(y1)
    );
    let mut d = (x0 + 0.5).ceil() as i32;
    while f64::from(d) <= x1 {
        let x = px(f64::from(d));
        let _ = writeln!(out, "<text x=\"{x:.3}\" y=\"{:.3}\" text-anchor=\"middle\">1e{d}</text>", py(y0) + 14.0);
        d += 1;
    }
    let mut d = (y0 + 0.5).ceil() as i32;
    while f64::from(d) <= y1 {
        let y = py(f64::from(d));
        let _ = writeln!(out, "<text x=\"{:.3}\" y=\"{y:.3}\" text-anchor=\"end\">1e{d}</text>", px(x0) - 4.0);
        d += 1;
    }
    // reference slope through the centroid in log coordinates
    let (mx, my) = (
        logs.iter().map(|p| p.0).sum::<f64>() / logs.len() as f64,
        logs.iter().map(|p| p.1).sum::<f64>() / logs.len() as f64,
    );
    let (ra, rb) = (x0 + 0.25, x1 - 0.25);
    let _ = writeln!(
        out,
        "<line class=\"ref\" x1=\"{:.3}\" y1=\"{:.3}\" x2=\"{:.3}\" y2=\"{:.3}\"/>",
        px(ra),
        py(my + ref_slope * (ra - mx)),
        px(rb),
        py(my + ref_slope * (rb - mx))
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.3}\" y=\"{:.3}\">reference slope {ref_slope:.4}</text>",
        px(x0) + 6.0,
        py(y1) + 14.0
    );
    let pts: Vec<String> = logs.iter().map(|&(x, y)| format!("{:.3},{:.3}", px(x), py(y))).collect();
    let _ = writeln!(out, "<polyline class=\"data\" points=\"{}\"/>", pts.join(" "));
    for &(x, y) in &logs {
        let _ = writeln!(out, "<circle class=\"point\" cx=\"{:.3}\" cy=\"{:.3}\" r=\"3\"/>", px(x), py(y));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_cloud_with_unit_disc() {
        let svg = srg_plot(&[], &[Primitive::real_disc(0.0, 1.0)], Some(0), "t");
        assert_eq!(svg.matches("class=\"region\"").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 2); // region + unit-circle guide
        assert!(svg.contains("<!-- seed=0 -->"));
    }

    #[test]
    fn cloud_plot_is_mirror_symmetric_and_deterministic() {
        let cloud = [Complex64::new(0.3, 0.2), Complex64::new(0.3, -0.2)];
        let a = srg_plot(&cloud, &[], None, "t");
        assert_eq!(a, srg_plot(&cloud, &[], None, "t"));
        let ys: Vec<f64> = a
            .lines()
            .filter(|l| l.contains("class=\"point\""))
            .map(|l| {
                let i = l.find("cy=\"").unwrap() + 4;
                l[i..].split('"').next().unwrap().parse().unwrap()
            })
            .collect();
        assert!((ys[0] + ys[1] - SIZE).abs() < 1e-3);
    }

    #[test]
    fn loglog_has_reference_line() {
        let rows = [(1e-2, 31.0), (1e-3, 144.0), (1e-4, 670.0)];
        let svg = loglog_plot(&rows, -2.0 / 3.0, Some(3), "arctan");
        assert_eq!(svg.matches("class=\"ref\"").count(), 1);
        assert_eq!(svg.matches("class=\"point\"").count(), 3);
    }
}
