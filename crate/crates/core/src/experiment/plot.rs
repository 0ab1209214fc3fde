use std::fmt::Write as _;
use std::path::Path;

use crate::eval::{select_model, ParsimonyCurve};
use crate::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// Ψ_m as bars over m; the selected size is drawn in a second colour and the
/// plateau threshold Ψ* − ε as a dashed line. Output depends only on the
/// curve, so identical curves give identical bytes.
pub fn plot_parsimony(curve: &ParsimonyCurve) -> Result<String> {
    let sel = select_model(curve)?;
    let slots = curve
        .d_max
        .max(curve.points.iter().map(|p| p.m).max().unwrap_or(1))
        .max(1);
    let psis = curve.points.iter().map(|p| p.psi);
    let (min, max) = psis.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let mut lo = (((min - 0.01) * 50.0).floor() / 50.0).clamp(0.0, 1.0);
    let mut hi = (((max + 0.01) * 50.0).ceil() / 50.0).clamp(0.0, 1.0);
    if hi - lo < 0.04 {
        lo = (lo - 0.02).max(0.0);
        hi = (lo + 0.04).min(1.0);
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let y_of = |v: f64| TOP + plot_h * (1.0 - (v - lo) / (hi - lo));
    let slot = plot_w / slots as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{HEIGHT:.0}" viewBox="0 0 {WIDTH:.0} {HEIGHT:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">Parsimony plot (selected m = {})</text>"#,
        WIDTH / 2.0,
        sel.d
    );
    // axes and y ticks
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{:.2}" stroke="black"/>"#,
        TOP + plot_h
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT:.2}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * f64::from(i) / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
    }
    // bars
    for m in 1..=slots {
        let cx = LEFT + slot * (m as f64 - 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{m}</text>"#,
            TOP + plot_h + 18.0
        );
        match curve.points.iter().find(|p| p.m == m) {
            Some(p) => {
                let y = y_of(p.psi);
                let fill = if m == sel.d { "#c0392b" } else { "#7f9db9" };
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/><text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10">{:.3}</text>"#,
                    cx - slot * 0.3,
                    slot * 0.6,
                    TOP + plot_h - y,
                    y - 4.0,
                    p.psi
                );
            }
            None if curve.skipped.iter().any(|k| k.m == m) => {
                let _ = writeln!(
                    s,
                    r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10">skipped</text>"#,
                    TOP + plot_h - 6.0
                );
            }
            None => {}
        }
    }
    let threshold = sel.psi_star - curve.epsilon;
    if curve.epsilon > 0.0 && threshold > lo {
        let y = y_of(threshold);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#333333" stroke-dasharray="5,4"/>"##,
            LEFT + plot_w
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Number of variables (m)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0:.2}" text-anchor="middle" transform="rotate(-90 18 {0:.2})">Weighted validation AUC</text>"#,
        TOP + plot_h / 2.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_parsimony_svg(curve: &ParsimonyCurve, path: &Path) -> Result<()> {
    let svg = plot_parsimony(curve)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
