//! Minimal SVG rendering of densities, predictive-check panels and the
//! variance bound surface.

use std::fmt::Write;

use crate::analysis::kde::DensityGrid;
use crate::analysis::ppc::PpcReport;

const W: f64 = 480.0;
const H: f64 = 300.0;
const MARGIN: f64 = 44.0;

struct Frame {
    x0: f64,
    y0: f64,
    x_lo: f64,
    x_hi: f64,
    y_hi: f64,
}

impl Frame {
    fn new(x0: f64, y0: f64, xs: &[f64], y_hi: f64) -> Self {
        let x_lo = xs.first().copied().unwrap_or(0.0);
        let x_hi = xs.last().copied().unwrap_or(1.0);
        Self { x0, y0, x_lo, x_hi: if x_hi > x_lo { x_hi } else { x_lo + 1.0 }, y_hi: if y_hi > 0.0 { y_hi } else { 1.0 } }
    }

    fn px(&self, x: f64) -> f64 {
        self.x0 + MARGIN + (x - self.x_lo) / (self.x_hi - self.x_lo) * (W - 1.5 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + H - MARGIN - y / self.y_hi * (H - 1.5 * MARGIN)
    }

    fn path(&self, xs: &[f64], ys: &[f64]) -> String {
        let mut d = String::new();
        for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { 'M' } else { 'L' }, self.px(*x), self.py(*y));
        }
        d
    }

    fn band(&self, xs: &[f64], lo: &[f64], hi: &[f64]) -> String {
        let mut d = self.path(xs, hi);
        for (x, y) in xs.iter().zip(lo).rev() {
            let _ = write!(d, "L{:.2},{:.2} ", self.px(*x), self.py(*y));
        }
        d + "Z"
    }

    fn axes(&self, out: &mut String, title: &str, x_label: &str) {
        let (l, r) = (self.px(self.x_lo), self.px(self.x_hi));
        let (b, t) = (self.py(0.0), self.py(self.y_hi));
        let _ = write!(
            out,
            r##"<g font-family="sans-serif" font-size="11"><path d="M{l:.2},{t:.2} L{l:.2},{b:.2} L{r:.2},{b:.2}" stroke="#333" fill="none"/>"##
        );
        for k in 0..=4 {
            let x = self.x_lo + (self.x_hi - self.x_lo) * k as f64 / 4.0;
            let px = self.px(x);
            let _ = write!(
                out,
                r##"<line x1="{px:.2}" y1="{b:.2}" x2="{px:.2}" y2="{:.2}" stroke="#333"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                b + 4.0,
                b + 16.0,
                tick(x)
            );
        }
        let _ = write!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text><text x="{:.2}" y="{:.2}" font-size="13">{}</text></g>"##,
            (l + r) / 2.0,
            b + 32.0,
            l,
            self.y0 + 18.0,
            escape(title)
        );
    }
}

fn tick(x: f64) -> String {
    if x.abs() >= 100.0 || x == x.round() {
        format!("{x:.0}")
    } else {
        format!("{x:.1}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn document(width: f64, height: f64, body: &str) -> String {
    format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">
<rect width="100%" height="100%" fill="white"/>
{body}</svg>
"#
    )
}

/// Density curve with its pointwise band; `truth` adds a reference curve.
pub fn density_svg(d: &DensityGrid, title: &str, truth: Option<&[f64]>) -> String {
    let top = d
        .density
        .iter()
        .chain(&d.hi)
        .chain(truth.unwrap_or(&[]))
        .copied()
        .fold(0.0, f64::max)
        * 1.05;
    let f = Frame::new(0.0, 0.0, &d.y, top);
    let mut body = String::new();
    let _ = writeln!(body, r##"<path d="{}" fill="#9ab" fill-opacity="0.45" stroke="none"/>"##, f.band(&d.y, &d.lo, &d.hi));
    if let Some(t) = truth {
        let _ = writeln!(body, r##"<path d="{}" fill="none" stroke="#d9a400" stroke-width="2"/>"##, f.path(&d.y, t));
    }
    let _ = writeln!(body, r##"<path d="{}" fill="none" stroke="#123" stroke-width="1.6"/>"##, f.path(&d.y, &d.density));
    f.axes(&mut body, title, "individual causal effect");
    document(W, H, &body)
}

/// One panel per stratum: observed KDE against the replicate band.
pub fn ppc_svg(report: &PpcReport) -> String {
    let cols = 2usize;
    let rows = report.strata.len().div_ceil(cols).max(1);
    let mut body = String::new();
    for (k, s) in report.strata.iter().enumerate() {
        let (x0, y0) = ((k % cols) as f64 * W, (k / cols) as f64 * H);
        let top = s.observed.iter().chain(&s.band_hi).copied().fold(0.0, f64::max) * 1.05;
        let f = Frame::new(x0, y0, &s.grid, top);
        let _ = writeln!(body, r##"<path d="{}" fill="#9ab" fill-opacity="0.45"/>"##, f.band(&s.grid, &s.band_lo, &s.band_hi));
        let _ = writeln!(body, r##"<path d="{}" fill="none" stroke="#567" stroke-dasharray="4 3"/>"##, f.path(&s.grid, &s.predictive_mean));
        let _ = writeln!(body, r##"<path d="{}" fill="none" stroke="#b22" stroke-width="1.6"/>"##, f.path(&s.grid, &s.observed));
        let title = format!("{} (n = {}, {:.0}% inside)", s.label, s.n, 100.0 * s.inside_fraction);
        f.axes(&mut body, &title, "outcome");
    }
    document(W * cols as f64, H * rows as f64, &body)
}

/// Heat map of the lower bound on the ICE variance over a grid of
/// unexposed variance and variance difference.
pub fn bound_surface_svg(points: &[[f64; 3]]) -> String {
    let steps = (points.len() as f64).sqrt().round() as usize;
    let v0_max = points.iter().map(|p| p[0]).fold(0.0, f64::max);
    let d_max = points.iter().map(|p| p[1]).fold(0.0, f64::max);
    let b_max = points.iter().map(|p| p[2]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let f = Frame { x0: 0.0, y0: 0.0, x_lo: 0.0, x_hi: v0_max.max(1e-12), y_hi: d_max.max(1e-12) };
    let cw = (W - 1.5 * MARGIN) / steps.max(1) as f64;
    let ch = (H - 1.5 * MARGIN) / steps.max(1) as f64;
    let mut body = String::new();
    for p in points {
        let shade = (p[2] / b_max).sqrt();
        let (r, g, b) = ((255.0 * (1.0 - 0.8 * shade)) as u8, (255.0 * (1.0 - 0.6 * shade)) as u8, (255.0 * (1.0 - 0.2 * shade)) as u8);
        let _ = writeln!(
            body,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({r},{g},{b})"/>"##,
            f.px(p[0]) - cw / 2.0,
            f.py(p[1]) - ch / 2.0,
            cw + 0.5,
            ch + 0.5
        );
    }
    f.axes(&mut body, &format!("lower bound on var(ICE), max {b_max:.3}"), "var(Y | A = 0)");
    document(W, H, &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_plot_is_well_formed() {
        let d = DensityGrid { y: vec![-1.0, 0.0, 1.0], density: vec![0.1, 0.4, 0.1], lo: vec![0.0, 0.3, 0.0], hi: vec![0.2, 0.5, 0.2] };
        let svg = density_svg(&d, "a < b", Some(&[0.2, 0.4, 0.2]));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<path").count(), 4);
    }

    #[test]
    fn bound_surface_has_one_cell_per_point() {
        let pts = crate::variance::bound_surface(4.0, 2.0, 5);
        assert_eq!(bound_surface_svg(&pts).matches("<rect").count(), 1 + 25);
    }
}
