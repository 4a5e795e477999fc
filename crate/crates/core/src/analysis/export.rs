use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{PositionProfile, SuppressionProfile};
use crate::{Result, WasError};

/// Profile data as `(x, fraction)` points for export.
pub trait ProfileSeries {
    /// CSV header key for the x column.
    fn x_label(&self) -> &'static str;
    fn points(&self) -> Vec<(i64, f64)>;
    fn title(&self) -> String;
}

impl ProfileSeries for SuppressionProfile {
    fn x_label(&self) -> &'static str {
        "position"
    }

    fn points(&self) -> Vec<(i64, f64)> {
        self.values.iter().enumerate().map(|(j, &v)| (j as i64, v)).collect()
    }

    fn title(&self) -> String {
        format!("layer {} suppression by key position", self.layer)
    }
}

impl ProfileSeries for PositionProfile {
    fn x_label(&self) -> &'static str {
        "offset"
    }

    fn points(&self) -> Vec<(i64, f64)> {
        self.offsets.iter().copied().zip(self.values.iter().copied()).collect()
    }

    fn title(&self) -> String {
        format!("layer {} suppression around query {}", self.layer, self.position)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileFormat {
    Csv,
    Svg,
}

/// CSV text: header `<x>,fraction`, one point per line. Fractions use the
/// shortest representation that parses back to the same `f64`.
pub fn profile_csv(profile: &impl ProfileSeries) -> String {
    points_csv(profile.x_label(), &profile.points())
}

pub fn points_csv(x_label: &str, points: &[(i64, f64)]) -> String {
    let mut out = format!("{x_label},fraction\n");
    for (x, y) in points {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

/// Parses CSV written by [`profile_csv`]; returns the x label and points.
pub fn parse_profile_csv(text: &str) -> Result<(String, Vec<(i64, f64)>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| WasError::format("profile CSV", "empty file"))?;
    let x_label = match header.split_once(',') {
        Some((x, "fraction")) => x.to_string(),
        _ => return Err(WasError::format("profile CSV", format!("unexpected header {header:?}"))),
    };
    let points = lines
        .enumerate()
        .map(|(n, line)| {
            let bad = || WasError::format("profile CSV", format!("bad line {}: {line:?}", n + 2));
            let (x, y) = line.split_once(',').ok_or_else(bad)?;
            Ok((x.parse().map_err(|_| bad())?, y.parse().map_err(|_| bad())?))
        })
        .collect::<Result<_>>()?;
    Ok((x_label, points))
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Self-contained SVG line plot with one polyline per series. The y axis
/// spans `[0, 1]`.
pub fn profile_svg(title: &str, series: &[(&str, Vec<(i64, f64)>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 260.0;
    const PAD: f64 = 40.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

    let xs = series.iter().flat_map(|(_, p)| p.iter().map(|&(x, _)| x));
    let (lo, hi) = xs.fold((i64::MAX, i64::MIN), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let (lo, hi) = if lo > hi { (0, 1) } else { (lo, hi.max(lo + 1)) };
    let sx = |x: i64| PAD + (x - lo) as f64 / (hi - lo) as f64 * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - y.clamp(0.0, 1.0) * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{PAD}" y="20" font-family="sans-serif" font-size="13">{}</text>"#,
        escape_xml(title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{PAD} {top} V{bottom} H{right}" stroke="black" fill="none"/>"#,
        top = PAD,
        bottom = H - PAD,
        right = W - PAD
    );
    let _ = writeln!(
        svg,
        r#"<text x="{PAD}" y="{}" font-family="sans-serif" font-size="10">{lo}</text>"#,
        H - PAD + 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{hi}</text>"#,
        W - PAD,
        H - PAD + 14.0
    );
    for (k, (label, points)) in series.iter().enumerate() {
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"><title>{}</title></polyline>"#,
            COLORS[k % COLORS.len()],
            coords.join(" "),
            escape_xml(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes a profile as CSV or as a single-series SVG.
pub fn export_profile(profile: &impl ProfileSeries, format: ProfileFormat, path: &Path) -> Result<()> {
    let text = match format {
        ProfileFormat::Csv => profile_csv(profile),
        ProfileFormat::Svg => {
            let title = profile.title();
            profile_svg(&title, &[(title.as_str(), profile.points())])
        }
    };
    fs::write(path, text)?;
    Ok(())
}
