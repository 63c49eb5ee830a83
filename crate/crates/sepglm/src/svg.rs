//! Minimal hand-rolled SVG plots for run reports.
//!
//! Two figures: the time-rescaling KS plot (empirical CDF of rescaled
//! inter-spike intervals against the uniform diagonal, with the 95%
//! acceptance band), and bootstrap confidence bands for exponentiated
//! coefficients (per-spike rate multipliers). Coordinates are formatted to
//! fixed precision so identical inputs produce identical bytes.

use std::fmt::Write as _;

use crate::gof::{BootstrapParam, KsAnalysis};

const W: f64 = 480.0;
const H: f64 = 360.0;
const ML: f64 = 56.0; // left margin
const MR: f64 = 16.0;
const MT: f64 = 28.0;
const MB: f64 = 64.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="monospace" font-size="11">"#
        )
        .unwrap();
        writeln!(body, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
        writeln!(
            body,
            r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
            px(W / 2.0),
            xml_escape(title)
        )
        .unwrap();
        // Plot frame.
        writeln!(
            body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            px(ML),
            px(MT),
            px(W - ML - MR),
            px(H - MT - MB)
        )
        .unwrap();
        Canvas { body }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" {style}/>"#,
            px(x1),
            px(y1),
            px(x2),
            px(y2)
        )
        .unwrap();
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, extra: &str, s: &str) {
        writeln!(
            self.body,
            r#"<text x="{}" y="{}" text-anchor="{anchor}"{extra}>{}</text>"#,
            px(x),
            px(y),
            xml_escape(s)
        )
        .unwrap();
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

/// Pixel transforms for a unit-square plot area.
fn unit_x(u: f64) -> f64 {
    ML + u * (W - ML - MR)
}

fn unit_y(v: f64) -> f64 {
    H - MB - v * (H - MT - MB)
}

/// KS plot: the empirical CDF of `u` (rescaled inter-spike intervals,
/// any order) as a staircase against the uniform diagonal, with dashed 95%
/// acceptance bounds at `diagonal +- analysis.bound`.
pub fn ks_plot(u: &[f64], analysis: &KsAnalysis, title: &str) -> String {
    let mut c = Canvas::new(title);

    // Axis ticks at 0, 0.5, 1 on both axes.
    for t in [0.0, 0.5, 1.0] {
        c.text(unit_x(t), H - MB + 16.0, "middle", "", &format!("{t}"));
        c.text(ML - 6.0, unit_y(t) + 4.0, "end", "", &format!("{t}"));
    }
    c.text(
        unit_x(0.5),
        H - MB + 34.0,
        "middle",
        "",
        "uniform quantile",
    );
    c.text(
        14.0,
        unit_y(0.5),
        "middle",
        &format!(r#" transform="rotate(-90 14 {})""#, px(unit_y(0.5))),
        "empirical CDF",
    );

    // Diagonal.
    c.line(
        unit_x(0.0),
        unit_y(0.0),
        unit_x(1.0),
        unit_y(1.0),
        r#"stroke="gray""#,
    );
    // 95% band, clipped to the unit square: the upper bound runs from
    // (0, b) to (1-b, 1), the lower from (b, 0) to (1, 1-b).
    let b = analysis.bound;
    if b < 1.0 {
        let dash = r#"stroke="gray" stroke-dasharray="5,4""#;
        c.line(unit_x(0.0), unit_y(b), unit_x(1.0 - b), unit_y(1.0), dash);
        c.line(unit_x(b), unit_y(0.0), unit_x(1.0), unit_y(1.0 - b), dash);
    }

    // Empirical CDF staircase over sorted u.
    let mut sorted: Vec<f64> = u.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n > 0 {
        let mut path = format!("M {} {}", px(unit_x(0.0)), px(unit_y(0.0)));
        for (i, ui) in sorted.iter().enumerate() {
            let x = unit_x(ui.clamp(0.0, 1.0));
            write!(path, " L {} {}", px(x), px(unit_y(i as f64 / n as f64))).unwrap();
            write!(
                path,
                " L {} {}",
                px(x),
                px(unit_y((i + 1) as f64 / n as f64))
            )
            .unwrap();
        }
        write!(path, " L {} {}", px(unit_x(1.0)), px(unit_y(1.0))).unwrap();
        writeln!(
            c.body,
            r#"<path d="{path}" fill="none" stroke="black" stroke-width="1.5"/>"#
        )
        .unwrap();
    }

    c.text(
        unit_x(0.02),
        MT + 14.0,
        "start",
        "",
        &format!(
            "D = {:.4}, 95% bound = {:.4} ({}), n = {}",
            analysis.statistic,
            analysis.bound,
            if analysis.pass { "pass" } else { "fail" },
            analysis.n
        ),
    );
    c.finish()
}

/// Bootstrap confidence bands for exponentiated coefficients. Each parameter
/// gets a vertical 95% interval for its rate multiplier `exp(beta_j)`; the
/// y axis is logarithmic (linear in the coefficient). Parameters whose
/// replicates all diverged are marked at the bottom instead of drawn.
pub fn ci_plot(params: &[BootstrapParam], title: &str) -> String {
    let mut c = Canvas::new(title);

    // Work in coefficient space; axis labels show the multiplier.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in params {
        if let (Some(l), Some(u)) = (p.lower, p.upper) {
            lo = lo.min(l);
            hi = hi.max(u);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = -1.0;
        hi = 1.0;
    }
    lo = lo.min(0.0);
    hi = hi.max(0.0);
    let pad = 0.05 * (hi - lo).max(1e-6);
    lo -= pad;
    hi += pad;
    let y_of = |v: f64| unit_y((v - lo) / (hi - lo));

    // Reference line at multiplier 1 (coefficient 0).
    c.line(
        unit_x(0.0),
        y_of(0.0),
        unit_x(1.0),
        y_of(0.0),
        r#"stroke="gray" stroke-dasharray="2,3""#,
    );
    // Five y ticks, labeled with the multiplier.
    for k in 0..5 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        c.text(
            ML - 6.0,
            y_of(v) + 4.0,
            "end",
            "",
            &format!("{:.3}", v.exp()),
        );
    }
    c.text(
        14.0,
        unit_y(0.5),
        "middle",
        &format!(r#" transform="rotate(-90 14 {})""#, px(unit_y(0.5))),
        "rate multiplier exp(beta)",
    );

    let n = params.len().max(1);
    for (i, p) in params.iter().enumerate() {
        let x = unit_x((i as f64 + 0.5) / n as f64);
        match (p.lower, p.upper) {
            (Some(l), Some(u)) => {
                c.line(x, y_of(l), x, y_of(u), r#"stroke="black" stroke-width="2""#);
                for v in [l, u] {
                    c.line(x - 4.0, y_of(v), x + 4.0, y_of(v), r#"stroke="black""#);
                }
            }
            _ => {
                c.text(x, y_of(lo + pad) - 4.0, "middle", "", "!");
            }
        }
        let y_label = H - MB + 12.0;
        c.text(
            x,
            y_label,
            "end",
            &format!(r#" transform="rotate(-45 {} {})""#, px(x), px(y_label)),
            &p.name,
        );
        if p.divergence_fraction > 0.0 {
            c.text(
                x,
                MT + 14.0,
                "middle",
                "",
                &format!("{:.0}%", 100.0 * p.divergence_fraction),
            );
        }
    }
    c.text(
        unit_x(0.5),
        H - 8.0,
        "middle",
        "",
        "vertical bars: 95% bootstrap interval; ! = every replicate diverged",
    );
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ks() -> KsAnalysis {
        KsAnalysis { statistic: 0.08, bound: 0.136, pass: true, n: 100 }
    }

    #[test]
    fn ks_plot_is_well_formed_and_deterministic() {
        let u: Vec<f64> = (0..50).map(|i| (i as f64 + 0.5) / 50.0).collect();
        let a = ks_plot(&u, &ks(), "time-rescaling KS");
        let b = ks_plot(&u, &ks(), "time-rescaling KS");
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<svg").count(), 1);
        assert!(a.contains("stroke-dasharray"), "acceptance band present");
        assert!(a.contains("<path"), "staircase present");
        assert!(a.contains("D = 0.0800"));
        assert!(a.contains("pass"));
        assert!(a.contains("time-rescaling KS"));
    }

    #[test]
    fn ks_plot_handles_empty_samples() {
        let a = ks_plot(&[], &KsAnalysis { statistic: 0.0, bound: 1.36, pass: true, n: 0 }, "t");
        assert!(a.starts_with("<svg"));
        assert!(!a.contains("<path"), "no staircase without samples");
    }

    #[test]
    fn ci_plot_draws_intervals_and_divergence_markers() {
        let params = vec![
            BootstrapParam {
                name: "intercept".into(),
                finite: 60,
                divergence_fraction: 0.0,
                lower: Some(-0.4),
                upper: Some(0.2),
            },
            BootstrapParam {
                name: "hist_lag_1".into(),
                finite: 60,
                divergence_fraction: 0.0,
                lower: Some(-2.0),
                upper: Some(-0.5),
            },
            BootstrapParam {
                name: "stim_band_1".into(),
                finite: 0,
                divergence_fraction: 1.0,
                lower: None,
                upper: None,
            },
        ];
        let a = ci_plot(&params, "rate multipliers");
        assert_eq!(a, ci_plot(&params, "rate multipliers"));
        assert!(a.contains("intercept"));
        assert!(a.contains("stim_band_1"));
        assert!(a.contains(">!<"), "divergence marker present");
        assert!(a.contains("100%"), "divergence fraction labeled");
        assert!(a.contains("exp(beta)"));
        // The multiplier-1 reference line and two interval bars with caps.
        assert!(a.matches("stroke-width=\"2\"").count() >= 2);
    }

    #[test]
    fn text_is_escaped() {
        let a = ci_plot(&[], "a < b & c");
        assert!(a.contains("a &lt; b &amp; c"));
    }
}
