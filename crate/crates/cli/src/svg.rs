//! Hand-written SVG for the trade-off curves.
//!
//! Two panels share an 800×500 canvas: stopping time and stop-time
//! confidence on the left (confidence on a right-hand 0..1 axis), and the
//! useful and secret accuracies on the right. Trained-policy series are solid,
//! the random baseline dashed.

use std::fmt::Write;

use aput_core::a2c::EvalMetrics;
use aput_core::sweep::{PolicyKind, PrivacyKind, PutCurve};

const W: f64 = 800.0;
const H: f64 = 500.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 390.0;

struct Panel {
    x0: f64,
    x1: f64,
}

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    policy: PolicyKind,
    right_axis: bool,
    value: fn(&EvalMetrics) -> f64,
}

fn fmt(x: f64) -> String {
    let s = format!("{x:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        (a + b) / 2.0
    }
}

/// Renders the two-panel chart for `curve`.
pub fn put_curve_svg(curve: &PutCurve, kind: PrivacyKind) -> String {
    let mut xs: Vec<f64> = curve.rows.iter().map(|r| r.threshold).collect();
    xs.dedup();
    let (xlo, xhi) = (
        xs.first().copied().unwrap_or(0.0),
        xs.last().copied().unwrap_or(1.0),
    );
    let tau_hi = curve
        .rows
        .iter()
        .map(|r| r.metrics.mean_tau)
        .fold(1.0, f64::max)
        .ceil();

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);

    let left = Panel {
        x0: 60.0,
        x1: 350.0,
    };
    let right = Panel {
        x0: 470.0,
        x1: 760.0,
    };
    let label = kind.label();

    let first = [
        Series {
            label: "tau (a2c)",
            color: "#1f77b4",
            policy: PolicyKind::A2c,
            right_axis: false,
            value: |m| m.mean_tau,
        },
        Series {
            label: "tau (random)",
            color: "#1f77b4",
            policy: PolicyKind::Random,
            right_axis: false,
            value: |m| m.mean_tau,
        },
        Series {
            label: "conf_u (a2c)",
            color: "#ff7f0e",
            policy: PolicyKind::A2c,
            right_axis: true,
            value: |m| m.mean_conf_u,
        },
        Series {
            label: "conf_u (random)",
            color: "#ff7f0e",
            policy: PolicyKind::Random,
            right_axis: true,
            value: |m| m.mean_conf_u,
        },
    ];
    let second = [
        Series {
            label: "acc_u (a2c)",
            color: "#2ca02c",
            policy: PolicyKind::A2c,
            right_axis: false,
            value: |m| m.acc_u,
        },
        Series {
            label: "acc_u (random)",
            color: "#2ca02c",
            policy: PolicyKind::Random,
            right_axis: false,
            value: |m| m.acc_u,
        },
        Series {
            label: "acc_s (a2c)",
            color: "#d62728",
            policy: PolicyKind::A2c,
            right_axis: false,
            value: |m| m.acc_s,
        },
        Series {
            label: "acc_s (random)",
            color: "#d62728",
            policy: PolicyKind::Random,
            right_axis: false,
            value: |m| m.acc_s,
        },
    ];

    panel(
        &mut out,
        curve,
        &left,
        &first,
        (xlo, xhi),
        (0.0, tau_hi),
        Some((0.0, 1.0)),
        "stopping time and confidence",
        "tau",
        label,
        &xs,
    );
    panel(
        &mut out,
        curve,
        &right,
        &second,
        (xlo, xhi),
        (0.0, 1.0),
        None,
        "accuracy",
        "accuracy",
        label,
        &xs,
    );
    out.push_str("</svg>\n");
    out
}

#[allow(clippy::too_many_arguments)]
fn panel(
    out: &mut String,
    curve: &PutCurve,
    p: &Panel,
    series: &[Series<'_>],
    (xlo, xhi): (f64, f64),
    (ylo, yhi): (f64, f64),
    right_axis: Option<(f64, f64)>,
    title: &str,
    ylabel: &str,
    xlabel: &str,
    xs: &[f64],
) {
    let mid = (p.x0 + p.x1) / 2.0;
    let _ = writeln!(
        out,
        r#"<text x="{mid}" y="{}" text-anchor="middle" font-size="14">{title}</text>"#,
        TOP - 20.0
    );
    let _ = writeln!(
        out,
        r#"<path d="M{x0} {TOP} V{BOTTOM} H{x1}" fill="none" stroke="black"/>"#,
        x0 = p.x0,
        x1 = p.x1
    );
    for &x in xs {
        let px = scale(x, xlo, xhi, p.x0 + 10.0, p.x1 - 10.0);
        let _ = writeln!(
            out,
            r#"<line x1="{px:.1}" y1="{BOTTOM}" x2="{px:.1}" y2="{}" stroke="black"/>"#,
            BOTTOM + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#,
            BOTTOM + 18.0,
            fmt(x)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{mid}" y="{}" text-anchor="middle">{xlabel}</text>"#,
        BOTTOM + 36.0
    );
    for k in 0..=4 {
        let v = ylo + (yhi - ylo) * k as f64 / 4.0;
        let py = scale(v, ylo, yhi, BOTTOM, TOP);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{py:.1}" x2="{}" y2="{py:.1}" stroke="black"/>"#,
            p.x0 - 5.0,
            p.x0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            p.x0 - 8.0,
            py + 4.0,
            fmt(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{x}" y="{y}" text-anchor="middle" transform="rotate(-90 {x} {y})">{ylabel}</text>"#,
        x = p.x0 - 40.0,
        y = (TOP + BOTTOM) / 2.0
    );
    if let Some((rlo, rhi)) = right_axis {
        let _ = writeln!(
            out,
            r#"<path d="M{x1} {TOP} V{BOTTOM}" fill="none" stroke="black"/>"#,
            x1 = p.x1
        );
        for k in 0..=4 {
            let v = rlo + (rhi - rlo) * k as f64 / 4.0;
            let py = scale(v, rlo, rhi, BOTTOM, TOP);
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{py:.1}" x2="{}" y2="{py:.1}" stroke="black"/>"#,
                p.x1,
                p.x1 + 5.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{:.1}">{}</text>"#,
                p.x1 + 8.0,
                py + 4.0,
                fmt(v)
            );
        }
    }

    for (i, s) in series.iter().enumerate() {
        let (lo, hi) = if s.right_axis {
            right_axis.unwrap_or((ylo, yhi))
        } else {
            (ylo, yhi)
        };
        let pts: Vec<(f64, f64)> = curve
            .rows
            .iter()
            .filter(|r| r.policy == s.policy)
            .map(|r| {
                (
                    scale(r.threshold, xlo, xhi, p.x0 + 10.0, p.x1 - 10.0),
                    scale((s.value)(&r.metrics), lo, hi, BOTTOM, TOP),
                )
            })
            .collect();
        let dash = if s.policy == PolicyKind::Random {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#,
            path.join(" "),
            s.color
        );
        for (x, y) in &pts {
            let _ = writeln!(
                out,
                r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{}"/>"#,
                s.color
            );
        }
        // legend, two columns under the panel
        let lx = p.x0 + (i % 2) as f64 * 150.0;
        let ly = BOTTOM + 60.0 + (i / 2) as f64 * 18.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/>"#,
            lx + 24.0,
            s.color
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            s.label
        );
    }
}
