//! Minimal self-contained SVG charts: line plots (optionally log-y) and
//! grouped bar grids of per-scenario sample sizes.
//!
//! On a log axis, values `<= 0` are drawn as hollow markers at the declared
//! floor and the floor is written under the plot.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.to_string(),
            points,
            dashed: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    /// Where nonpositive values go on a log axis.
    pub floor: Option<f64>,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>
"#,
        WIDTH / 2.0,
        escape(title)
    );
}

/// Up to 6 round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

pub fn line_plot(plot: &LinePlot) -> String {
    let floor = plot.floor.unwrap_or(f64::MIN_POSITIVE);
    let shown = |y: f64| if plot.log_y && y <= 0.0 { floor } else { y };
    let all: Vec<(f64, f64)> = plot.series.iter().flat_map(|s| s.points.iter().map(|&(x, y)| (x, shown(y)))).collect();
    let (mut x0, mut x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if all.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let map_y: Box<dyn Fn(f64) -> f64>;
    let y_ticks: Vec<f64>;
    if plot.log_y {
        let lo = y0.log10().floor();
        let hi = y1.log10().ceil().max(lo + 1.0);
        y_ticks = (lo as i32..=hi as i32).map(|e| 10f64.powi(e)).collect();
        map_y = Box::new(move |y: f64| (y.log10() - lo) / (hi - lo));
    } else {
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        let (lo, hi) = (y0 - pad, y1 + pad);
        y_ticks = ticks(lo, hi);
        map_y = Box::new(move |y: f64| (y - lo) / (hi - lo));
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + ph - map_y(y) * ph;

    let mut out = String::new();
    header(&mut out, &plot.title);
    let _ = writeln!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for t in ticks(x0, x1) {
        let x = px(t);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            fmt_tick(t)
        );
    }
    for t in y_ticks {
        let y = py(t);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{LEFT}" y2="{y:.1}" stroke="black"/><line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            LEFT - 5.0,
            LEFT + pw,
            LEFT - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - BOTTOM + 38.0,
        escape(&plot.x_label)
    );
    let y_label = if plot.log_y { format!("{} (log scale)", plot.y_label) } else { plot.y_label.clone() };
    let _ = writeln!(
        out,
        r#"<text transform="translate(20,{:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        escape(&y_label)
    );
    let mut floored = false;
    for (idx, s) in plot.series.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(shown(y)))).collect();
        let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        if path.len() > 1 {
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
                path.join(" ")
            );
        }
        for &(x, y) in &s.points {
            let hollow = plot.log_y && y <= 0.0;
            floored |= hollow;
            let fill = if hollow { "white" } else { color };
            let _ = writeln!(
                out,
                r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{fill}" stroke="{color}" stroke-width="1.5"/>"#,
                px(x),
                py(shown(y))
            );
        }
        let ly = TOP + 14.0 + 20.0 * idx as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    if floored {
        let _ = writeln!(
            out,
            r#"<text x="{LEFT}" y="{:.1}" font-size="11">hollow markers: estimate 0, drawn at the floor 1/(10R) = {}</text>"#,
            HEIGHT - 10.0,
            fmt_tick(floor)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One panel of grouped bars: `groups[i][j]` is the height of bar `j` in group `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct BarPanel {
    pub title: String,
    pub groups: Vec<Vec<f64>>,
    /// Horizontal reference line, e.g. the heavy-scenario cut.
    pub cut: Option<f64>,
}

/// Panels stacked vertically, sharing the group and bar labels.
pub fn bar_grid(title: &str, y_label: &str, panels: &[BarPanel]) -> String {
    let panel_h = 220.0;
    let height = TOP + panels.len() as f64 * (panel_h + 40.0) + 30.0;
    let mut out = String::new();
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>
"#,
        WIDTH / 2.0,
        escape(title)
    );
    let pw = WIDTH - LEFT - 40.0;
    for (p, panel) in panels.iter().enumerate() {
        let top = TOP + p as f64 * (panel_h + 40.0) + 20.0;
        let ymax = panel
            .groups
            .iter()
            .flatten()
            .copied()
            .chain(panel.cut)
            .fold(0.0f64, f64::max)
            .max(1.0)
            * 1.05;
        let py = |v: f64| top + panel_h - v / ymax * panel_h;
        let _ = writeln!(
            out,
            r#"<text x="{LEFT}" y="{:.1}" font-size="13">{}</text><rect x="{LEFT}" y="{top:.1}" width="{pw}" height="{panel_h}" fill="none" stroke="black"/>"#,
            top - 6.0,
            escape(&panel.title)
        );
        for t in ticks(0.0, ymax) {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                py(t) + 4.0,
                fmt_tick(t)
            );
        }
        let k = panel.groups.len().max(1);
        let gw = pw / k as f64;
        for (i, group) in panel.groups.iter().enumerate() {
            let m = group.len().max(1);
            let bw = gw * 0.8 / m as f64;
            for (j, &v) in group.iter().enumerate() {
                let x = LEFT + i as f64 * gw + gw * 0.1 + j as f64 * bw;
                let _ = writeln!(
                    out,
                    r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"><title>({},{}) {v}</title></rect>"#,
                    py(v),
                    bw * 0.9,
                    top + panel_h - py(v),
                    COLORS[j % COLORS.len()],
                    i + 1,
                    j + 1
                );
            }
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                LEFT + (i as f64 + 0.5) * gw,
                top + panel_h + 16.0,
                i + 1
            );
        }
        if let Some(c) = panel.cut {
            let _ = writeln!(
                out,
                r#"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="black" stroke-dasharray="4,3"/>"#,
                LEFT + pw,
                y = py(c)
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text transform="translate(20,{:.1}) rotate(-90)" text-anchor="middle">{}</text><text x="{:.1}" y="{:.1}" text-anchor="middle">alternative (bars: distributions 1..m; dashed line: heavy cut)</text>"#,
        height / 2.0,
        escape(y_label),
        LEFT + pw / 2.0,
        height - 8.0
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plot(series: Vec<Series>, log_y: bool) -> LinePlot {
        LinePlot {
            title: "t".into(),
            x_label: "N".into(),
            y_label: "PICS".into(),
            log_y,
            floor: Some(1e-4),
            series,
        }
    }

    #[test]
    fn single_point_gives_single_marker() {
        let svg = line_plot(&plot(vec![Series::new("AA", vec![(10.0, 0.5)])], false));
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(!svg.contains("<polyline"));
        assert!(svg.contains("PICS") && svg.contains(">N<"));
    }

    #[test]
    fn zero_on_log_axis_sits_at_floor_with_note() {
        let svg = line_plot(&plot(vec![Series::new("AA", vec![(1.0, 0.1), (2.0, 0.0)])], true));
        assert!(svg.contains("fill=\"white\" stroke"));
        assert!(svg.contains("floor 1/(10R) = 1e-4"));
        assert!(svg.contains("log scale"));
    }

    #[test]
    fn two_series_two_legend_entries() {
        let svg = line_plot(&plot(
            vec![Series::new("AA", vec![(1.0, 0.1), (2.0, 0.05)]), Series::new("GAA", vec![(1.0, 0.2), (2.0, 0.1)])],
            true,
        ));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">AA<") && svg.contains(">GAA<"));
    }

    #[test]
    fn bar_grid_draws_every_bar() {
        let panel = BarPanel {
            title: "path 1".into(),
            groups: vec![vec![5.0, 1.0], vec![3.0, 0.0], vec![2.0, 0.0]],
            cut: Some(0.5),
        };
        let svg = bar_grid("sizes", "n", &[panel.clone(), panel]);
        assert_eq!(svg.matches("<title>").count(), 12);
        assert_eq!(svg.matches("stroke-dasharray").count(), 2);
    }

    #[test]
    fn tick_values_are_round() {
        let labels: Vec<String> = ticks(0.0, 1.0).into_iter().map(fmt_tick).collect();
        assert_eq!(labels, ["0", "0.2", "0.4", "0.6", "0.8", "1"]);
        assert_eq!(fmt_tick(1e-5), "1e-5");
    }
}
