//! SVG line charts of mean F1 agreement against budget.
//!
//! One line per setting with a ±1 sd ribbon, plus a dashed horizontal line
//! at the setting's UC mean. Numbers are printed with fixed precision so the
//! same input always yields the same bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{read_aggregate, AggregateRow, Scenario, Setting};
use crate::io::write_atomic;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

fn colour(setting: Setting) -> &'static str {
    match setting {
        Setting::Baseline => "#1b9e77",
        Setting::Limited => "#d95f02",
        Setting::Shifted => "#7570b3",
    }
}

fn px(budget: f64) -> f64 {
    LEFT + budget.clamp(0.0, 1.0) * (WIDTH - LEFT - RIGHT)
}

fn py(f1: f64) -> f64 {
    HEIGHT - BOTTOM - f1.clamp(0.0, 1.0) * (HEIGHT - TOP - BOTTOM)
}

fn point(x: f64, y: f64) -> String {
    format!("{:.2},{:.2}", px(x), py(y))
}

/// Renders the chart for a budgeted scenario.
pub fn render_svg(rows: &[AggregateRow], scenario: Scenario) -> Result<String> {
    if scenario == Scenario::Uc {
        return Err(Error::invalid("UC has no budget axis; plot TOPK or CE"));
    }
    if rows.is_empty() {
        return Err(Error::invalid("aggregate file has no data rows"));
    }
    let mut series: Vec<(Setting, Vec<&AggregateRow>, Option<f64>)> = Vec::new();
    for setting in Setting::ALL {
        let mut pts: Vec<&AggregateRow> = rows
            .iter()
            .filter(|r| r.setting == setting && r.scenario == scenario)
            .collect();
        pts.sort_by(|a, b| a.budget_fraction.total_cmp(&b.budget_fraction));
        let uc = rows
            .iter()
            .find(|r| r.setting == setting && r.scenario == Scenario::Uc)
            .map(|r| r.f1_mean);
        if !pts.is_empty() || uc.is_some() {
            series.push((setting, pts, uc));
        }
    }
    if series.iter().all(|(_, pts, _)| pts.is_empty()) {
        return Err(Error::invalid(format!("no rows for scenario {scenario}")));
    }

    let mut s = String::new();
    let w = &mut s;
    // writes into a String cannot fail
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">F1 agreement with oracle allocation ({scenario})</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0
    );

    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            w,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#dddddd"/>"##,
            px(0.0),
            py(v),
            px(1.0),
            py(v)
        );
        let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, px(0.0) - 6.0, py(v) + 4.0);
        let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v:.1}</text>"#, px(v), py(0.0) + 18.0);
    }
    let _ = writeln!(
        w,
        r#"<polyline points="{} {} {}" fill="none" stroke="black"/>"#,
        point(0.0, 1.0),
        point(0.0, 0.0),
        point(1.0, 0.0)
    );
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">budget fraction</text>"#,
        (px(0.0) + px(1.0)) / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        w,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">F1</text>"#,
        (py(0.0) + py(1.0)) / 2.0,
        (py(0.0) + py(1.0)) / 2.0
    );

    for (k, (setting, pts, uc)) in series.iter().enumerate() {
        let c = colour(*setting);
        if !pts.is_empty() {
            let upper = pts.iter().map(|r| point(r.budget_fraction, r.f1_mean + r.f1_sd));
            let lower = pts.iter().rev().map(|r| point(r.budget_fraction, r.f1_mean - r.f1_sd));
            let ribbon: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(w, r#"<polygon points="{}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#, ribbon.join(" "));
            let line: Vec<String> = pts.iter().map(|r| point(r.budget_fraction, r.f1_mean)).collect();
            let _ = writeln!(w, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, line.join(" "));
            for r in pts {
                let _ = writeln!(
                    w,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{c}"/>"#,
                    px(r.budget_fraction),
                    py(r.f1_mean)
                );
            }
        }
        if let Some(m) = uc {
            let _ = writeln!(
                w,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{c}" stroke-dasharray="6 4"/>"#,
                px(0.0),
                py(*m),
                px(1.0),
                py(*m)
            );
        }
        let ly = TOP + 20.0 + 22.0 * k as f64;
        let lx = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            w,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{c}" stroke-width="2"/>"#,
            lx + 24.0
        );
        let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}">{setting}</text>"#, lx + 30.0, ly + 4.0);
    }
    let ly = TOP + 20.0 + 22.0 * series.len() as f64;
    let lx = WIDTH - RIGHT + 16.0;
    let _ = writeln!(
        w,
        r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="black" stroke-dasharray="6 4"/>"#,
        lx + 24.0
    );
    let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}">UC</text>"#, lx + 30.0, ly + 4.0);
    s.push_str("</svg>\n");
    Ok(s)
}

/// Reads an aggregate CSV and writes the chart for `scenario` to `out`.
/// Nothing is written when the input is malformed or empty.
pub fn emit_plot(aggregate_csv: &Path, scenario: Scenario, out: &Path) -> Result<()> {
    let file = std::fs::File::open(aggregate_csv).map_err(|e| Error::io(aggregate_csv, e))?;
    let rows = read_aggregate(file)?;
    let svg = render_svg(&rows, scenario)?;
    write_atomic(out, svg.as_bytes())
}
