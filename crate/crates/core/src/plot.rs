//! Static SVG figures. Coordinates are printed with three decimals so the
//! output is byte-stable for fixed inputs.

use std::f64::consts::PI;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::fpca::TrendCurve;
use crate::phenodates::{Phase, PhenoDates, DAYS_PER_YEAR};
use crate::series::CurveMatrix;

/// First day of each month in a non-leap year.
const MONTH_STARTS: [u32; 12] = [1, 32, 60, 91, 121, 152, 182, 213, 244, 274, 305, 335];
const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SpiralStyle {
    pub size: f64,
    /// Radius at which the first loop starts.
    pub r0: f64,
    /// Radial growth per loop; `None` fits all loops into the canvas.
    pub growth: Option<f64>,
    pub marker_radius: f64,
    pub colors: [&'static str; 6],
}

impl Default for SpiralStyle {
    fn default() -> Self {
        Self {
            size: 600.0,
            r0: 40.0,
            growth: None,
            marker_radius: 3.0,
            colors: ["#1b9e77", "#66a61e", "#e6ab02", "#d95f02", "#7570b3", "#e7298a"],
        }
    }
}

/// Polar position of a day of year on the spiral: angle in radians
/// measured clockwise from the top, and radius.
pub fn spiral_position(loop_index: usize, doy: f64, r0: f64, growth: f64) -> (f64, f64) {
    let frac = doy / DAYS_PER_YEAR;
    (2.0 * PI * frac, r0 + growth * (loop_index as f64 + frac))
}

fn header(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="{w:.0}" height="{h:.0}" fill="white"/>"#);
}

/// Archimedean spiral with one loop per pixel and the six dates as markers.
pub fn render_spiral(dates: &[PhenoDates], style: &SpiralStyle) -> Result<String> {
    if dates.is_empty() {
        return Err(Error::Contract("no dates to plot".into()));
    }
    let legend_w = 110.0;
    let size = style.size;
    let (cx, cy) = (size / 2.0, size / 2.0);
    let outer = size / 2.0 - 30.0;
    let growth = style
        .growth
        .unwrap_or((outer - style.r0) / (dates.len() as f64 + 1.0));
    let to_xy = |theta: f64, r: f64| (cx + r * theta.sin(), cy - r * theta.cos());

    let mut out = String::new();
    header(&mut out, size + legend_w, size);

    // month ticks and labels around the outermost loop
    let r_tick = style.r0 + growth * (dates.len() as f64 + 0.5);
    for (day, name) in MONTH_STARTS.iter().zip(MONTHS) {
        let theta = 2.0 * PI * f64::from(*day) / DAYS_PER_YEAR;
        let (x1, y1) = to_xy(theta, style.r0 * 0.5);
        let (x2, y2) = to_xy(theta, r_tick);
        let (lx, ly) = to_xy(theta, r_tick + 14.0);
        let _ = writeln!(
            out,
            r##"<line x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="#dddddd" stroke-width="1"/>"##
        );
        let _ = writeln!(
            out,
            r##"<text x="{lx:.3}" y="{ly:.3}" font-size="11" text-anchor="middle" dominant-baseline="middle" fill="#555555">{name}</text>"##
        );
    }

    // the spiral itself
    let steps_per_loop = 180;
    let total = steps_per_loop * dates.len();
    let mut path = String::new();
    for s in 0..=total {
        let k = s / steps_per_loop;
        let doy = (s % steps_per_loop) as f64 / steps_per_loop as f64 * DAYS_PER_YEAR;
        let (k, doy) = if s == total { (dates.len() - 1, DAYS_PER_YEAR) } else { (k, doy) };
        let (theta, r) = spiral_position(k, doy, style.r0, growth);
        let (x, y) = to_xy(theta, r);
        let _ = write!(path, "{}{x:.3},{y:.3}", if s == 0 { "M" } else { " L" });
    }
    let _ = writeln!(out, r##"<path d="{path}" fill="none" stroke="#999999" stroke-width="0.8"/>"##);

    for (k, d) in dates.iter().enumerate() {
        for phase in Phase::ALL {
            let Some(doy) = d.doy(phase) else { continue };
            let (theta, r) = spiral_position(k, f64::from(doy), style.r0, growth);
            let (x, y) = to_xy(theta, r);
            let _ = writeln!(
                out,
                r#"<circle cx="{x:.3}" cy="{y:.3}" r="{:.3}" fill="{}"><title>pixel {} {}: DoY {doy}</title></circle>"#,
                style.marker_radius,
                style.colors[phase.index()],
                k + 1,
                phase.abbrev()
            );
        }
    }

    for phase in Phase::ALL {
        let y = 30.0 + 22.0 * phase.index() as f64;
        let x = size + 10.0;
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.3}" cy="{y:.3}" r="5.000" fill="{}"/>"#,
            style.colors[phase.index()]
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.3}" y="{:.3}" font-size="12">{}</text>"#,
            x + 12.0,
            y + 4.0,
            phase.abbrev()
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileStyle {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub curve_color: &'static str,
    pub trend_color: &'static str,
}

impl Default for ProfileStyle {
    fn default() -> Self {
        Self {
            width: 720.0,
            height: 420.0,
            margin: 50.0,
            curve_color: "#9e9e9e",
            trend_color: "#c62828",
        }
    }
}

/// Annual curves as thin lines with the trend drawn thick on top, against
/// day of year.
pub fn render_profile(curves: &CurveMatrix, trend: &TrendCurve, style: &ProfileStyle) -> Result<String> {
    if trend.values.len() != curves.grid_n() {
        return Err(Error::Contract(format!(
            "trend has {} points but curves have {}",
            trend.values.len(),
            curves.grid_n()
        )));
    }
    let n = curves.grid_n();
    let all = curves.samples().iter().chain(trend.values.iter());
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let m = style.margin;
    let (pw, ph) = (style.width - 2.0 * m, style.height - 2.0 * m);
    let px = |i: usize| m + pw * i as f64 / (n - 1).max(1) as f64;
    let py = |v: f64| m + ph * (hi - v) / (hi - lo);
    let polyline = |vals: &mut dyn Iterator<Item = f64>| {
        let mut s = String::new();
        for (i, v) in vals.enumerate() {
            let _ = write!(s, "{}{:.3},{:.3}", if i == 0 { "" } else { " " }, px(i), py(v));
        }
        s
    };

    let mut out = String::new();
    header(&mut out, style.width, style.height);
    let _ = writeln!(
        out,
        r##"<rect x="{m:.3}" y="{m:.3}" width="{pw:.3}" height="{ph:.3}" fill="none" stroke="#333333"/>"##
    );
    for (day, name) in MONTH_STARTS.iter().zip(MONTHS) {
        let x = m + pw * (f64::from(*day) - 1.0) / (DAYS_PER_YEAR - 1.0);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.3}" y1="{:.3}" x2="{x:.3}" y2="{:.3}" stroke="#333333"/>"##,
            m + ph,
            m + ph + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.3}" y="{:.3}" font-size="11" text-anchor="middle">{name}</text>"#,
            m + ph + 18.0
        );
    }
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = py(v);
        let _ = writeln!(
            out,
            r##"<text x="{:.3}" y="{:.3}" font-size="11" text-anchor="end">{v:.3}</text>"##,
            m - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.3}" y="{:.3}" font-size="12" text-anchor="middle">day of year</text>"#,
        m + pw / 2.0,
        style.height - 8.0
    );
    for j in 0..curves.num_curves() {
        let pts = polyline(&mut curves.samples().column(j).iter().copied());
        let _ = writeln!(
            out,
            r#"<polyline points="{pts}" fill="none" stroke="{}" stroke-width="0.8" stroke-opacity="0.7"/>"#,
            style.curve_color
        );
    }
    let pts = polyline(&mut trend.values.iter().copied());
    let _ = writeln!(
        out,
        r#"<polyline points="{pts}" fill="none" stroke="{}" stroke-width="3"/>"#,
        style.trend_color
    );
    out.push_str("</svg>\n");
    Ok(out)
}
