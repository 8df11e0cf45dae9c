//! Static SVG rendering of an inertia curve.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

pub fn inertia_svg(curve: &[(usize, f64)], k_star: usize) -> String {
    let (kmin, kmax) = match (curve.first(), curve.last()) {
        (Some(a), Some(b)) => (a.0 as f64, b.0 as f64),
        _ => (0.0, 1.0),
    };
    let ymax = curve.iter().map(|p| p.1).fold(0.0, f64::max);
    let ymax = if ymax > 0.0 { ymax } else { 1.0 };
    let kspan = if kmax > kmin { kmax - kmin } else { 1.0 };
    let x = |k: usize| MARGIN + (k as f64 - kmin) / kspan * (W - 2.0 * MARGIN);
    let y = |v: f64| H - MARGIN - v / ymax * (H - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{m} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    let points: Vec<String> = curve.iter().map(|&(k, v)| format!("{:.2},{:.2}", x(k), y(v))).collect();
    let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, points.join(" "));
    for &(k, v) in curve {
        let (fill, r) = if k == k_star { ("crimson", 5) } else { ("steelblue", 3) };
        let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="{r}" fill="{fill}"/>"#, x(k), y(v));
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{}" text-anchor="middle">{k}</text>"#, x(k), H - MARGIN + 16.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">k</text>"#, W / 2.0, H - 10.0);
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">inertia</text>"#,
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(svg, r#"<text x="{}" y="30">elbow k* = {k_star}</text>"#, W - MARGIN - 100.0);
    svg.push_str("</svg>\n");
    svg
}
