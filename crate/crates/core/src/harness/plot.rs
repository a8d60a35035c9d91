//! Hand-emitted SVG line chart of mean latency against user count.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::csv::{LatencyRow, Source};

pub const X_LABEL: &str = "Number of users";
pub const Y_LABEL: &str = "Mean response time (ms)";

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;
/// Sum and count of latencies per user count.
type Means = BTreeMap<u64, (f64, u64)>;

const PALETTE: [&str; 6] = [
    "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

/// Mean latency per user count for one architecture (and source).
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    pub architecture: String,
    pub points: Vec<(u64, f64)>,
}

impl PlotSeries {
    pub fn means(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }
}

/// Groups rows by architecture and averages over trials. The source is added to
/// the label only when rows from both sources are present.
pub fn series_from_rows(rows: &[LatencyRow]) -> Vec<PlotSeries> {
    let mixed = rows.iter().any(|r| r.source == Source::Analytic)
        && rows.iter().any(|r| r.source == Source::Desim);
    let mut groups: BTreeMap<(&str, &str), Means> = BTreeMap::new();
    for r in rows {
        let acc = groups
            .entry((r.architecture.as_str(), r.source.as_str()))
            .or_default()
            .entry(r.n)
            .or_insert((0.0, 0));
        acc.0 += r.latency_ms;
        acc.1 += 1;
    }
    groups
        .into_iter()
        .map(|((arch, source), by_n)| PlotSeries {
            label: if mixed {
                format!("{arch} ({source})")
            } else {
                arch.to_owned()
            },
            architecture: arch.to_owned(),
            points: by_n
                .into_iter()
                .map(|(n, (sum, count))| (n, sum / count as f64))
                .collect(),
        })
        .collect()
}

/// Round `raw` up to 1, 2 or 5 times a power of ten.
fn nice_ceiling(raw: f64) -> f64 {
    if raw <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|&v| v >= raw)
        .unwrap_or(10.0 * mag)
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn render_svg(series: &[PlotSeries], title: &str) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let all = series.iter().flat_map(|s| s.points.iter());
    let x_max_data = all.clone().map(|p| p.0).max().unwrap_or(1) as f64;
    let y_max_data = all.map(|p| p.1).fold(0.0, f64::max);
    let x_step = nice_ceiling(x_max_data / 5.0);
    let x_max = (x_max_data / x_step).ceil().max(1.0) * x_step;
    let y_step = nice_ceiling(y_max_data * 1.1 / 5.0);
    let y_max = (y_max_data * 1.1 / y_step).ceil().max(1.0) * y_step;
    let sx = |x: f64| LEFT + x / x_max * plot_w;
    let sy = |y: f64| TOP + plot_h - y / y_max * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    // Grid and ticks.
    let x_ticks = (x_max / x_step).round() as usize;
    for i in 0..=x_ticks {
        let v = i as f64 * x_step;
        let x = sx(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}" stroke="#e5e5e5"/>"##,
            TOP + plot_h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 18.0,
            fmt_tick(v)
        );
    }
    let y_ticks = (y_max / y_step).round() as usize;
    for i in 0..=y_ticks {
        let v = i as f64 * y_step;
        let y = sy(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e5e5e5"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            y + 4.0,
            fmt_tick(v)
        );
    }

    // Axes and labels.
    let _ = writeln!(
        svg,
        r##"<polyline points="{LEFT:.2},{TOP:.2} {LEFT:.2},{:.2} {:.2},{:.2}" fill="none" stroke="#333"/>"##,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{X_LABEL}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{Y_LABEL}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    // Series.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(n, y)| format!("{:.2},{:.2}", sx(n as f64), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-label="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(&s.label),
            pts.join(" ")
        );
        for &(n, y) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(n as f64),
                sy(y)
            );
        }
    }

    // Legend.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = TOP + 12.0 + 18.0 * i as f64;
        let x = LEFT + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"#,
            x + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 26.0,
            y + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(source: Source, arch: &str, n: u64, trial: u32, latency_ms: f64) -> LatencyRow {
        LatencyRow {
            source,
            architecture: arch.into(),
            n,
            trial,
            latency_ms,
        }
    }

    #[test]
    fn nice_steps() {
        assert_eq!(nice_ceiling(0.0), 1.0);
        assert_eq!(nice_ceiling(1.3), 2.0);
        assert_eq!(nice_ceiling(2000.0), 2000.0);
        assert_eq!(nice_ceiling(2100.0), 5000.0);
        assert_eq!(nice_ceiling(0.07), 0.1);
    }

    #[test]
    fn tick_format() {
        assert_eq!(fmt_tick(0.0), "0");
        assert_eq!(fmt_tick(2000.0), "2000");
        assert_eq!(fmt_tick(0.5), "0.5");
    }

    #[test]
    fn series_means() {
        let rows = vec![
            row(Source::Analytic, "monolith", 100, 0, 6.0),
            row(Source::Analytic, "monolith", 100, 1, 8.0),
            row(Source::Analytic, "monolith", 200, 0, 9.0),
            row(Source::Analytic, "microservice", 100, 0, 7.0),
        ];
        let s = series_from_rows(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].label, "microservice");
        assert_eq!(s[1].points, vec![(100, 7.0), (200, 9.0)]);
    }

    #[test]
    fn mixed_sources_are_labelled() {
        let rows = vec![
            row(Source::Analytic, "monolith", 100, 0, 6.0),
            row(Source::Desim, "monolith", 100, 0, 6.0),
        ];
        let labels: Vec<_> = series_from_rows(&rows)
            .into_iter()
            .map(|s| s.label)
            .collect();
        assert_eq!(labels, vec!["monolith (analytic)", "monolith (desim)"]);
    }

    #[test]
    fn svg_has_axes_legend_and_lines() {
        let rows = vec![
            row(Source::Analytic, "monolith", 100, 0, 7.0),
            row(Source::Analytic, "monolith", 1000, 0, 25.0),
            row(Source::Analytic, "microservice", 100, 0, 7.0),
            row(Source::Analytic, "microservice", 1000, 0, 7.0),
        ];
        let svg = render_svg(&series_from_rows(&rows), "t & <t>");
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(X_LABEL));
        assert!(svg.contains(Y_LABEL));
        assert!(svg.contains("t &amp; &lt;t&gt;"));
        assert_eq!(svg.matches(r#"class="series""#).count(), 2);
        assert_eq!(svg, render_svg(&series_from_rows(&rows), "t & <t>"));
    }
}
