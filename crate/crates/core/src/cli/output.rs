//! CSV and SVG writers for bound sweeps.

use std::fmt::Write as _;
use std::path::Path;

use crate::bounds::BoundsReport;
use crate::error::{Error, Result};
use crate::model::{Bits, ChannelParams};
use crate::scalar::Real;

pub const CSV_HEADER: &str = "p,b_bar,n_tilde,causal_upper_bits,causal_lower_bits,noncausal_upper_bits,\
noncausal_lower_analytic_bits,noncausal_lower_smith_bits,infinite_battery_bits";

/// CSV text: the header, one row per report, then `metadata` as `# ` lines.
///
/// Values use the shortest representation that parses back to the same
/// number.
pub fn csv_string<T: Real>(reports: &[BoundsReport<T>], metadata: &[String]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Config("no reports to write".into()));
    }
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.params.p(),
            r.params.b_bar(),
            r.n_tilde,
            r.causal_upper.value(),
            r.causal_lower.value(),
            r.noncausal_upper.value(),
            r.noncausal_lower_analytic.value(),
            r.noncausal_lower_smith.value(),
            r.infinite_battery_upper.value(),
        );
    }
    for line in metadata {
        for part in line.lines() {
            let _ = writeln!(s, "# {part}");
        }
    }
    Ok(s)
}

/// Writes header and rows only.
pub fn write_csv<T: Real>(reports: &[BoundsReport<T>], path: &Path) -> Result<()> {
    write_csv_with_metadata(reports, &[], path)
}

pub fn write_csv_with_metadata<T: Real>(reports: &[BoundsReport<T>], metadata: &[String], path: &Path) -> Result<()> {
    let text = csv_string(reports, metadata)?;
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Parses CSV text produced by [`csv_string`]; returns the reports and the
/// metadata lines without their `# ` prefix.
pub fn parse_csv<T: Real>(text: &str) -> Result<(Vec<BoundsReport<T>>, Vec<String>)> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(Error::Config("missing or unexpected CSV header".into())),
    }
    let mut reports = Vec::new();
    let mut metadata = Vec::new();
    for (n, line) in lines.enumerate() {
        if let Some(rest) = line.strip_prefix('#') {
            metadata.push(rest.strip_prefix(' ').unwrap_or(rest).to_string());
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Config(format!("CSV row {}: {what}", n + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(bad("expected 9 fields"));
        }
        let num = |i: usize| -> Result<T> {
            fields[i].parse::<f64>().map(T::lit).map_err(|_| bad(&format!("bad number {:?}", fields[i])))
        };
        let params = ChannelParams::new(num(0)?, num(1)?).map_err(|e| bad(&e.to_string()))?;
        reports.push(BoundsReport {
            params,
            n_tilde: fields[2].parse().map_err(|_| bad("bad n_tilde"))?,
            causal_upper: Bits(num(3)?),
            causal_lower: Bits(num(4)?),
            noncausal_upper: Bits(num(5)?),
            noncausal_lower_analytic: Bits(num(6)?),
            noncausal_lower_smith: Bits(num(7)?),
            infinite_battery_upper: Bits(num(8)?),
        });
    }
    if reports.is_empty() {
        return Err(Error::Config("CSV holds no rows".into()));
    }
    Ok((reports, metadata))
}

pub fn read_csv<T: Real>(path: &Path) -> Result<(Vec<BoundsReport<T>>, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_csv(&text)
}

/// A curve that can be drawn from a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    CausalUpper,
    CausalLower,
    NoncausalUpper,
    NoncausalLowerAnalytic,
    NoncausalLowerSmith,
    InfiniteBattery,
}

impl Series {
    pub fn key(self) -> &'static str {
        match self {
            Series::CausalUpper => "causal_upper",
            Series::CausalLower => "causal_lower",
            Series::NoncausalUpper => "noncausal_upper",
            Series::NoncausalLowerAnalytic => "noncausal_lower_analytic",
            Series::NoncausalLowerSmith => "noncausal_lower_smith",
            Series::InfiniteBattery => "infinite_battery",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Series::CausalUpper => "causal upper",
            Series::CausalLower => "causal lower",
            Series::NoncausalUpper => "noncausal upper",
            Series::NoncausalLowerAnalytic => "noncausal lower (analytic)",
            Series::NoncausalLowerSmith => "noncausal lower (Smith)",
            Series::InfiniteBattery => "infinite battery",
        }
    }

    fn style(self) -> (&'static str, &'static str) {
        match self {
            Series::CausalUpper => ("#1f4e9c", ""),
            Series::CausalLower => ("#1f4e9c", "6 4"),
            Series::NoncausalUpper => ("#c4661f", ""),
            Series::NoncausalLowerAnalytic => ("#c4661f", "6 4"),
            Series::NoncausalLowerSmith => ("#b0202e", ""),
            Series::InfiniteBattery => ("#555555", "2 3"),
        }
    }

    pub fn value<T: Real>(self, r: &BoundsReport<T>) -> f64 {
        let v = match self {
            Series::CausalUpper => r.causal_upper,
            Series::CausalLower => r.causal_lower,
            Series::NoncausalUpper => r.noncausal_upper,
            Series::NoncausalLowerAnalytic => r.noncausal_lower_analytic,
            Series::NoncausalLowerSmith => r.noncausal_lower_smith,
            Series::InfiniteBattery => r.infinite_battery_upper,
        };
        v.value().as_f64()
    }
}

/// Preset series selections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotStyle {
    /// Causal bounds with the shaded capacity band and the unlimited-battery
    /// ceiling.
    Gap,
    /// Smith-based noncausal lower bound against the causal bounds.
    Crossing,
}

impl PlotStyle {
    pub fn series(self) -> Vec<Series> {
        match self {
            PlotStyle::Gap => vec![Series::InfiniteBattery, Series::CausalUpper, Series::CausalLower],
            PlotStyle::Crossing => vec![Series::CausalUpper, Series::CausalLower, Series::NoncausalLowerSmith],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub title: String,
    pub series: Vec<Series>,
    /// Shade the region between the causal upper and lower bounds.
    pub band: bool,
    /// `None` chooses a log axis when the battery grid is geometric.
    pub log_x: Option<bool>,
    /// Written into the SVG so that the figure can be regenerated.
    pub metadata: Vec<String>,
}

impl PlotOptions {
    pub fn preset(style: PlotStyle, title: impl Into<String>, metadata: Vec<String>) -> Self {
        Self { title: title.into(), series: style.series(), band: true, log_x: None, metadata }
    }
}

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

fn is_geometric(xs: &[f64]) -> bool {
    xs.len() >= 3 && xs[0] > 0.0 && {
        let r = (xs[1] / xs[0]).ln();
        xs.windows(2).all(|w| ((w[1] / w[0]).ln() - r).abs() <= 1e-6 * r.abs().max(1e-300))
    }
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Pixel scale of the y axis: `(bits at the bottom edge, pixels per bit)`.
struct YAxis {
    top_bits: f64,
    px_per_bit: f64,
}

impl YAxis {
    fn pixel(&self, bits: f64) -> f64 {
        TOP + (self.top_bits - bits) * self.px_per_bit
    }
}

/// Self-contained SVG text. Lower bounds are clamped at zero for display.
pub fn svg_string<T: Real>(reports: &[BoundsReport<T>], options: &PlotOptions) -> Result<String> {
    if reports.len() < 2 {
        return Err(Error::Config("a plot needs at least two grid points".into()));
    }
    if options.series.is_empty() {
        return Err(Error::Config("no series selected for the plot".into()));
    }
    let xs: Vec<f64> = reports.iter().map(|r| r.params.b_bar().as_f64()).collect();
    let log_x = options.log_x.unwrap_or_else(|| is_geometric(&xs)) && xs[0] > 0.0;
    let fx = |x: f64| if log_x { x.log10() } else { x };
    let (x0, x1) = (fx(xs[0]), fx(xs[xs.len() - 1]));
    if !(x1 > x0) {
        return Err(Error::Config("battery grid must be increasing".into()));
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (fx(x) - x0) / (x1 - x0) * plot_w;

    let clamp = |v: f64| v.max(0.0);
    let mut y_max = 0.0f64;
    for s in &options.series {
        for r in reports {
            y_max = y_max.max(clamp(s.value(r)));
        }
    }
    if options.band {
        for r in reports {
            y_max = y_max.max(r.causal_upper.value().as_f64());
        }
    }
    let step = nice_step(y_max.max(1e-3));
    let top_bits = (y_max / step).ceil().max(1.0) * step;
    let y = YAxis { top_bits, px_per_bit: plot_h / top_bits };

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<!-- generated by rbrcap {}; run configuration in <metadata> -->", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "<metadata>");
    for line in &options.metadata {
        let _ = writeln!(s, "{}", escape(line));
    }
    let _ = writeln!(
        s,
        "y-scale: top={} bits, {} px per bit; x-scale: {}",
        top_bits,
        y.px_per_bit,
        if log_x { "log10" } else { "linear" }
    );
    let _ = writeln!(s, "</metadata>");
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="28" font-size="15" text-anchor="middle">{}</text>"#, LEFT + plot_w / 2.0, escape(&options.title));

    // Grid and ticks.
    let mut ticks = Vec::new();
    if log_x {
        let mut k = x0.ceil() as i32;
        while (k as f64) <= x1 + 1e-9 {
            ticks.push((10f64.powi(k), format!("1e{k}")));
            k += 1;
        }
    } else {
        let st = nice_step(x1 - x0);
        let mut t = (x0 / st).ceil() * st;
        while t <= x1 + 1e-9 * st {
            ticks.push((t, format!("{}", (t / st).round() * st)));
            t += st;
        }
    }
    for (t, label) in &ticks {
        let x = px(*t);
        let _ = writeln!(s, r##"<line x1="{x:.3}" y1="{TOP:.3}" x2="{x:.3}" y2="{:.3}" stroke="#e2e2e2"/>"##, TOP + plot_h);
        let _ = writeln!(s, r#"<text x="{x:.3}" y="{:.3}" text-anchor="middle">{label}</text>"#, TOP + plot_h + 18.0);
    }
    let mut v = 0.0;
    while v <= top_bits + 1e-9 * step {
        let yy = y.pixel(v);
        let _ = writeln!(s, r##"<line x1="{LEFT:.3}" y1="{yy:.3}" x2="{:.3}" y2="{yy:.3}" stroke="#e2e2e2"/>"##, LEFT + plot_w);
        let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{}</text>"#, LEFT - 6.0, yy + 4.0, (v / step).round() * step);
        v += step;
    }
    let _ = writeln!(s, r##"<rect x="{LEFT:.3}" y="{TOP:.3}" width="{plot_w:.3}" height="{plot_h:.3}" fill="none" stroke="#333333"/>"##);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">battery size B (noise units){}</text>"#, LEFT + plot_w / 2.0, HEIGHT - 16.0, if log_x { ", log scale" } else { "" });
    let _ = writeln!(s, r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">bits per channel use</text>"#, TOP + plot_h / 2.0, TOP + plot_h / 2.0);

    if options.band {
        let mut pts = Vec::with_capacity(2 * reports.len());
        for r in reports {
            pts.push(format!("{:.3},{:.3}", px(r.params.b_bar().as_f64()), y.pixel(r.causal_upper.value().as_f64())));
        }
        for r in reports.iter().rev() {
            pts.push(format!("{:.3},{:.3}", px(r.params.b_bar().as_f64()), y.pixel(clamp(r.causal_lower.value().as_f64()))));
        }
        let _ = writeln!(s, r##"<polygon id="band" points="{}" fill="#1f4e9c" fill-opacity="0.15" stroke="none"/>"##, pts.join(" "));
    }
    for series in &options.series {
        let (color, dash) = series.style();
        let pts: Vec<String> = reports
            .iter()
            .map(|r| format!("{:.3},{:.3}", px(r.params.b_bar().as_f64()), y.pixel(clamp(series.value(r)))))
            .collect();
        let dash_attr = if dash.is_empty() { String::new() } else { format!(r#" stroke-dasharray="{dash}""#) };
        let _ = writeln!(
            s,
            r#"<polyline data-series="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash_attr}/>"#,
            series.key(),
            pts.join(" ")
        );
    }

    // Legend.
    let lx = LEFT + plot_w + 16.0;
    let mut ly = TOP + 10.0;
    for series in &options.series {
        let (color, dash) = series.style();
        let dash_attr = if dash.is_empty() { String::new() } else { format!(r#" stroke-dasharray="{dash}""#) };
        let _ = writeln!(s, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="1.8"{dash_attr}/>"#, lx + 28.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 34.0, ly + 4.0, series.label());
        ly += 20.0;
    }
    if options.band {
        let _ = writeln!(s, r##"<rect x="{lx:.1}" y="{:.1}" width="28" height="10" fill="#1f4e9c" fill-opacity="0.15"/>"##, ly - 5.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">capacity region (causal)</text>"#, lx + 34.0, ly + 4.0);
        ly += 20.0;
    }
    let p = reports[0].params.p().as_f64();
    let _ = writeln!(s, r#"<text x="{lx:.1}" y="{:.1}">p = {p}</text>"#, ly + 10.0);
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

pub fn write_svg_plot<T: Real>(reports: &[BoundsReport<T>], path: &Path, options: &PlotOptions) -> Result<()> {
    let text = svg_string(reports, options)?;
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Parses the polygon and polylines of an SVG written by [`svg_string`]:
/// `(band vertices, [(series key, vertices)])`.
pub fn parse_svg_shapes(svg: &str) -> (Vec<(f64, f64)>, Vec<(String, Vec<(f64, f64)>)>) {
    let points = |line: &str| -> Vec<(f64, f64)> {
        let start = line.find("points=\"").map(|i| i + 8).unwrap_or(0);
        let end = line[start..].find('"').map(|i| start + i).unwrap_or(start);
        line[start..end]
            .split_whitespace()
            .filter_map(|pair| {
                let (a, b) = pair.split_once(',')?;
                Some((a.parse().ok()?, b.parse().ok()?))
            })
            .collect()
    };
    let mut band = Vec::new();
    let mut lines = Vec::new();
    for line in svg.lines() {
        if line.starts_with("<polygon id=\"band\"") {
            band = points(line);
        } else if let Some(rest) = line.strip_prefix("<polyline data-series=\"") {
            let key = rest.split('"').next().unwrap_or_default().to_string();
            lines.push((key, points(line)));
        }
    }
    (band, lines)
}
