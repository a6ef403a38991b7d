//! Hand-written SVG 1.1. Coordinates are printed with two decimals so the
//! output bytes depend only on the inputs.

use std::fmt::Write as _;
use std::path::Path;

use super::EffectSummary;
use crate::data::{asfr, tfr, ApcTable};
use crate::error::{ApcError, Result};

/// Ends of the single-hue fill ramp (light to dark blue), linear in sRGB.
pub const RAMP_LOW: (u8, u8, u8) = (239, 243, 255);
pub const RAMP_HIGH: (u8, u8, u8) = (8, 48, 107);

const SERIES: [&str; 2] = ["#1f4e9a", "#c8553d"];

const REPLACEMENT_TFR: f64 = 2.1;

fn write_file(path: &Path, body: String) -> Result<()> {
    std::fs::write(path, body).map_err(|e| ApcError::io(path, e))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="white"/>"#);
}

/// Short decimal label for an axis tick.
fn tick_label(v: f64, span: f64) -> String {
    let decimals = if span >= 10.0 {
        0
    } else if span >= 1.0 {
        1
    } else if span >= 0.1 {
        2
    } else {
        4
    };
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Linear map from a data interval onto a pixel interval.
#[derive(Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn new(d0: f64, d1: f64, p0: f64, p1: f64) -> Self {
        let (d0, d1) = if d1 > d0 { (d0, d1) } else { (d0 - 0.5, d0 + 0.5) };
        Scale { d0, d1, p0, p1 }
    }

    fn at(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }
}

const PANEL_W: f64 = 340.0;
const PANEL_H: f64 = 260.0;
const PAD_L: f64 = 52.0;
const PAD_R: f64 = 14.0;
const PAD_T: f64 = 30.0;
const PAD_B: f64 = 70.0;

/// One panel at horizontal offset `x0` with all series drawn over a shared range.
fn effect_panel(out: &mut String, x0: f64, series: &[(&EffectSummary, &str)]) {
    let first = series[0].0;
    let n = first.levels();
    let lo = series.iter().flat_map(|(s, _)| s.q2_5.iter().chain(&s.mean)).copied().fold(f64::INFINITY, f64::min);
    let hi = series.iter().flat_map(|(s, _)| s.q97_5.iter().chain(&s.mean)).copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.05 * (hi - lo).max(1e-9);
    let y = Scale::new(lo - pad, hi + pad, PANEL_H - PAD_B, PAD_T);
    let x = Scale::new(0.0, (n.max(2) - 1) as f64, x0 + PAD_L, x0 + PANEL_W - PAD_R);

    let _ = writeln!(out, r#"<g class="panel" data-block="{}">"#, first.block.name());
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="18" font-size="13" text-anchor="middle">{} effect</text>"#,
        x0 + PANEL_W / 2.0,
        capitalize(first.block.name())
    );
    // frame and y ticks
    let _ = writeln!(
        out,
        r##"<rect x="{:.2}" y="{PAD_T:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#888" stroke-width="0.8"/>"##,
        x0 + PAD_L,
        PANEL_W - PAD_L - PAD_R,
        PANEL_H - PAD_T - PAD_B
    );
    for i in 0..5 {
        let v = y.d0 + (y.d1 - y.d0) * i as f64 / 4.0;
        let py = y.at(v);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#888" stroke-width="0.8"/><text x="{:.2}" y="{:.2}" font-size="9" text-anchor="end">{}</text>"##,
            x0 + PAD_L - 4.0,
            x0 + PAD_L,
            x0 + PAD_L - 6.0,
            py + 3.0,
            tick_label(v, y.d1 - y.d0)
        );
    }
    if y.d0 < 0.0 && y.d1 > 0.0 {
        let _ = writeln!(
            out,
            r##"<line class="zero" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#aaa" stroke-dasharray="3,3"/>"##,
            x.p0,
            y.at(0.0),
            x.p1,
            y.at(0.0)
        );
    }
    for (i, label) in first.level_labels.iter().enumerate() {
        let px = x.at(i as f64);
        let py = PANEL_H - PAD_B + 10.0;
        let _ = writeln!(
            out,
            r#"<text x="{px:.2}" y="{py:.2}" font-size="8" text-anchor="end" transform="rotate(-45 {px:.2} {py:.2})">{}</text>"#,
            escape(label)
        );
    }
    for (s, color) in series {
        let mut band = String::new();
        for i in 0..n {
            let _ = write!(band, "{:.2},{:.2} ", x.at(i as f64), y.at(s.q97_5[i]));
        }
        for i in (0..n).rev() {
            let _ = write!(band, "{:.2},{:.2} ", x.at(i as f64), y.at(s.q2_5[i]));
        }
        let _ = writeln!(
            out,
            r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let line: Vec<String> = (0..n).map(|i| format!("{:.2},{:.2}", x.at(i as f64), y.at(s.mean[i]))).collect();
        let _ = writeln!(
            out,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
            line.join(" ")
        );
    }
    out.push_str("</g>\n");
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn check_nonempty(summaries: &[EffectSummary]) -> Result<()> {
    if summaries.is_empty() {
        return Err(ApcError::domain("no effect summaries to plot"));
    }
    Ok(())
}

/// One panel per block: posterior mean line over a shaded 95% band.
pub fn effects_svg(summaries: &[EffectSummary]) -> Result<String> {
    check_nonempty(summaries)?;
    let mut out = String::new();
    header(&mut out, PANEL_W * summaries.len() as f64, PANEL_H);
    for (i, s) in summaries.iter().enumerate() {
        effect_panel(&mut out, PANEL_W * i as f64, &[(s, SERIES[0])]);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn render_effects_svg(summaries: &[EffectSummary], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), effects_svg(summaries)?)
}

/// Two models' summaries drawn over each other, matched by block. Blocks
/// present in only one model are skipped.
pub fn effects_overlay_svg(
    first: &[EffectSummary],
    second: &[EffectSummary],
    names: (&str, &str),
) -> Result<String> {
    check_nonempty(first)?;
    check_nonempty(second)?;
    let pairs: Vec<(&EffectSummary, &EffectSummary)> = first
        .iter()
        .filter_map(|a| second.iter().find(|b| b.block == a.block).map(|b| (a, b)))
        .collect();
    if pairs.is_empty() {
        return Err(ApcError::domain("the two models share no effect block"));
    }
    for (a, b) in &pairs {
        if a.levels() != b.levels() {
            return Err(ApcError::domain(format!(
                "{} effect has {} levels in one model and {} in the other",
                a.block.name(),
                a.levels(),
                b.levels()
            )));
        }
    }
    let mut out = String::new();
    let width = PANEL_W * pairs.len() as f64;
    header(&mut out, width, PANEL_H + 24.0);
    for (i, (a, b)) in pairs.iter().enumerate() {
        effect_panel(&mut out, PANEL_W * i as f64, &[(a, SERIES[0]), (b, SERIES[1])]);
    }
    for (i, (name, color)) in [names.0, names.1].iter().zip(SERIES).enumerate() {
        let lx = PAD_L + 150.0 * i as f64;
        let ly = PANEL_H + 10.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn render_effects_overlay_svg(
    first: &[EffectSummary],
    second: &[EffectSummary],
    names: (&str, &str),
    path: impl AsRef<Path>,
) -> Result<()> {
    write_file(path.as_ref(), effects_overlay_svg(first, second, names)?)
}

fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(RAMP_LOW.0, RAMP_HIGH.0),
        mix(RAMP_LOW.1, RAMP_HIGH.1),
        mix(RAMP_LOW.2, RAMP_HIGH.2)
    )
}

/// Hexagonal heat map of the rates. Rows are age groups (youngest at the
/// bottom), and each row is shifted half a hexagon left of the one below, so
/// the cells of one cohort touch along a diagonal running up and to the
/// right. Fill is the single-hue ramp from the smallest to the largest rate.
pub fn hexamap_svg(table: &ApcTable) -> String {
    let rates = asfr(table);
    let (n_age, n_period) = (table.n_age(), table.n_period());
    let lo = rates.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rates.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let r = 16.0; // circumradius of a pointy-top hexagon
    let w = 3f64.sqrt() * r;
    let left = 90.0;
    let top = 70.0;
    // row index 0 is the oldest age group at the top
    let center = |a: usize, t: usize| -> (f64, f64) {
        let row = (n_age - a) as f64;
        let x = left + w * ((t - 1) as f64 + 0.5 * (n_age - a) as f64);
        let y = top + 1.5 * r * row;
        (x, y)
    };
    let grid_w = w * (n_period as f64 + 0.5 * (n_age - 1) as f64);
    let grid_h = 1.5 * r * (n_age - 1) as f64 + 2.0 * r;
    let legend_w = 140.0;
    let width = left + grid_w + legend_w;
    let height = top + grid_h + 90.0;

    let mut out = String::new();
    header(&mut out, width, height);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" font-size="14" text-anchor="middle">Age-specific fertility rates</text>"#,
        width / 2.0
    );
    let _ = writeln!(out, r#"<g class="cells" stroke="white" stroke-width="1">"#);
    for a in 1..=n_age {
        for t in 1..=n_period {
            let (cx, cy) = center(a, t);
            let v = rates.get(a - 1, t - 1);
            let frac = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            let pts: Vec<String> = (0..6)
                .map(|k| {
                    let ang = std::f64::consts::PI / 180.0 * (60.0 * k as f64 - 30.0);
                    format!("{:.2},{:.2}", cx + r * ang.cos(), cy + r * ang.sin())
                })
                .collect();
            let _ = writeln!(
                out,
                r#"<polygon class="hex" data-age="{a}" data-period="{t}" data-cohort="{}" points="{}" fill="{}"><title>{}</title></polygon>"#,
                table.cohort_of(a, t),
                pts.join(" "),
                ramp(frac),
                format_args!("{} {}: {:.5}", escape(&table.age_labels()[a - 1]), escape(&table.period_labels()[t - 1]), v)
            );
        }
    }
    out.push_str("</g>\n");

    // age labels on the left of each row
    for a in 1..=n_age {
        let (cx, cy) = center(a, 1);
        let _ = writeln!(
            out,
            r#"<text class="age-label" x="{:.2}" y="{:.2}" font-size="9" text-anchor="end">{}</text>"#,
            cx - w / 2.0 - 4.0,
            cy + 3.0,
            escape(&table.age_labels()[a - 1])
        );
    }
    // period labels under the youngest row
    for t in 1..=n_period {
        let (cx, cy) = center(1, t);
        let py = cy + r + 8.0;
        let _ = writeln!(
            out,
            r#"<text class="period-label" x="{cx:.2}" y="{py:.2}" font-size="8" text-anchor="end" transform="rotate(-45 {cx:.2} {py:.2})">{}</text>"#,
            escape(&table.period_labels()[t - 1])
        );
    }
    // cohort labels at the top end of each diagonal
    let cohort_labels = table.cohort_labels();
    for (ci, label) in cohort_labels.iter().enumerate() {
        let c = ci + 1;
        let t = c.min(n_period);
        let a = n_age + t - c;
        let (cx, cy) = center(a, t);
        let (px, py) = (cx + 0.25 * w, cy - r - 2.0);
        let _ = writeln!(
            out,
            r##"<text class="cohort-label" x="{px:.2}" y="{py:.2}" font-size="7" fill="#555" transform="rotate(-60 {px:.2} {py:.2})">{}</text>"##,
            escape(label)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" font-size="11" transform="rotate(-90 16 {:.2})" text-anchor="middle">Age</text>"#,
        top + grid_h / 2.0,
        top + grid_h / 2.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">Period</text>"#,
        left + grid_w / 2.0,
        height - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="44" font-size="11" text-anchor="middle">Cohort (diagonals)</text>"#,
        left + grid_w / 2.0
    );

    // legend: vertical ramp with five ticks
    let lx = left + grid_w + 40.0;
    let (ly0, ly1) = (top, top + grid_h);
    let steps = 40;
    let _ = writeln!(out, r#"<g class="legend">"#);
    for i in 0..steps {
        let t0 = i as f64 / steps as f64;
        let y0 = ly1 - (ly1 - ly0) * (i + 1) as f64 / steps as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{lx:.2}" y="{y0:.2}" width="14" height="{:.2}" fill="{}"/>"#,
            (ly1 - ly0) / steps as f64 + 0.3,
            ramp(t0 + 0.5 / steps as f64)
        );
    }
    for i in 0..5 {
        let f = i as f64 / 4.0;
        let v = lo + (hi - lo) * f;
        let py = ly1 - (ly1 - ly0) * f;
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="black" stroke-width="0.8"/><text class="legend-tick" x="{:.2}" y="{:.2}" font-size="9">{v:.4}</text>"#,
            lx + 14.0,
            lx + 18.0,
            lx + 20.0,
            py + 3.0
        );
    }
    let _ = writeln!(out, r#"<text x="{lx:.2}" y="{:.2}" font-size="10">ASFR</text>"#, ly0 - 8.0);
    out.push_str("</g>\n</svg>\n");
    out
}

pub fn render_hexamap_svg(table: &ApcTable, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), hexamap_svg(table))
}

/// Total fertility rate by period with the replacement level marked.
pub fn tfr_svg(table: &ApcTable) -> String {
    let values = tfr(table);
    let labels = table.period_labels();
    let (width, height) = (560.0, 340.0);
    let (pl, pr, pt, pb) = (52.0, 20.0, 34.0, 70.0);
    let hi = values.iter().copied().fold(REPLACEMENT_TFR, f64::max) * 1.1;
    let y = Scale::new(0.0, hi, height - pb, pt);
    let x = Scale::new(0.0, (values.len() - 1) as f64, pl, width - pr);

    let mut out = String::new();
    header(&mut out, width, height);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="20" font-size="14" text-anchor="middle">Total fertility rate</text>"#,
        width / 2.0
    );
    let _ = writeln!(
        out,
        r##"<rect x="{pl:.2}" y="{pt:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#888" stroke-width="0.8"/>"##,
        width - pl - pr,
        height - pt - pb
    );
    for i in 0..5 {
        let v = hi * i as f64 / 4.0;
        let py = y.at(v);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{pl:.2}" y2="{py:.2}" stroke="#888" stroke-width="0.8"/><text x="{:.2}" y="{:.2}" font-size="9" text-anchor="end">{}</text>"##,
            pl - 4.0,
            pl - 6.0,
            py + 3.0,
            tick_label(v, hi)
        );
    }
    let ry = y.at(REPLACEMENT_TFR);
    let _ = writeln!(
        out,
        r##"<line class="reference" data-value="{REPLACEMENT_TFR}" x1="{pl:.2}" y1="{ry:.2}" x2="{:.2}" y2="{ry:.2}" stroke="#c8553d" stroke-dasharray="5,4"/><text x="{:.2}" y="{:.2}" font-size="9" fill="#c8553d" text-anchor="end">replacement {REPLACEMENT_TFR}</text>"##,
        width - pr,
        width - pr - 4.0,
        ry - 4.0
    );
    let pts: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, v)| format!("{:.2},{:.2}", x.at(i as f64), y.at(*v)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline class="tfr" points="{}" fill="none" stroke="{}" stroke-width="1.8"/>"#,
        pts.join(" "),
        SERIES[0]
    );
    for (i, label) in labels.iter().enumerate() {
        let px = x.at(i as f64);
        let py = height - pb + 10.0;
        let _ = writeln!(
            out,
            r#"<circle cx="{px:.2}" cy="{:.2}" r="2.5" fill="{}"/><text x="{px:.2}" y="{py:.2}" font-size="8" text-anchor="end" transform="rotate(-45 {px:.2} {py:.2})">{}</text>"#,
            y.at(values[i]),
            SERIES[0],
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn render_tfr_svg(table: &ApcTable, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), tfr_svg(table))
}
