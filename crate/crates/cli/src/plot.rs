//! Static SVG plots.

use std::fmt::Write;

use mfcn::harness::ConvergenceReport;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Series {
    name: String,
    points: Vec<(f64, f64, f64, f64)>,
}

/// Log-log chart of median error against n, one median polyline and one
/// 25-75% band polygon per report.
pub fn convergence_svg(reports: &[ConvergenceReport]) -> String {
    let series: Vec<Series> = reports
        .iter()
        .map(|r| Series {
            name: format!("{:?}", r.experiment).to_lowercase(),
            points: r
                .summary
                .iter()
                .filter_map(|s| s.error.map(|q| (s.n as f64, q.q25, q.median, q.q75)))
                .filter(|p| p.1 > 0.0 && p.3 > 0.0)
                .collect(),
        })
        .collect();
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(n, lo, _, hi) in all {
        x0 = x0.min(n.log10());
        x1 = x1.max(n.log10());
        y0 = y0.min(lo.log10());
        y1 = y1.max(hi.log10());
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    y0 = y0.floor();
    y1 = y1.ceil().max(y0 + 1.0);
    let sx = |n: f64| MARGIN + (n.log10() - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |v: f64| HEIGHT - MARGIN - (v.log10() - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" stroke="black" fill="none"/>"#
    );
    for e in (y0 as i32)..=(y1 as i32) {
        let y = sy(10f64.powi(e));
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">1e{e}</text>"#, left - 6.0, y + 4.0);
        let _ = writeln!(svg, r##"<line x1="{left}" y1="{y}" x2="{right}" y2="{y}" stroke="#ddd"/>"##);
    }
    let mut ns: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    ns.sort_by(f64::total_cmp);
    ns.dedup();
    for n in ns {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{n}</text>"#, sx(n), bottom + 18.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">n</text>"#, (left + right) / 2.0, bottom + 40.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">error</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let upper = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.3)));
        let lower = s.points.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            svg,
            r#"<polygon class="band" data-experiment="{}" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            s.name,
            band.join(" ")
        );
        let median: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.2))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="median" data-experiment="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            s.name,
            median.join(" ")
        );
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, right - 110.0, s.name);
    }
    svg.push_str("</svg>\n");
    svg
}
