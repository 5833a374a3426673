//! Dependency-free SVG line charts of trace series over epochs.
//!
//! Fixed 800×500 viewBox. The plot area spans x ∈ [70, 610] and
//! y ∈ [40, 440]; ten horizontal gridlines sit at 1/10 … 10/10 of the y
//! range, so the top gridline is y = 40. Dependence series always use the
//! range [0, 1]; the loss series uses [0, max train loss].
//! A value v maps to `y = 40 + 400 · (1 − v / y_max)`.

use std::fmt::Write as _;
use std::str::FromStr;

use super::TrainingTrace;
use crate::error::{Error, Result};

pub const CHART_WIDTH: f64 = 800.0;
pub const CHART_HEIGHT: f64 = 500.0;
pub const MARGIN_TOP: f64 = 40.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_BOTTOM: f64 = 60.0;
const LEGEND_WIDTH: f64 = 190.0;
const PLOT_WIDTH: f64 = CHART_WIDTH - MARGIN_LEFT - LEGEND_WIDTH;
pub const PLOT_HEIGHT: f64 = CHART_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
const GRIDLINES: usize = 10;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    HsicXz,
    HsicZy,
    Loss,
}

impl Series {
    pub fn name(&self) -> &'static str {
        match self {
            Series::HsicXz => "hsic_xz",
            Series::HsicZy => "hsic_zy",
            Series::Loss => "loss",
        }
    }

    fn axis_label(&self) -> &'static str {
        match self {
            Series::HsicXz => "normalized HSIC(X, Z)",
            Series::HsicZy => "normalized HSIC(Z, Y)",
            Series::Loss => "training loss (MSE)",
        }
    }

    fn points(&self, trace: &TrainingTrace) -> Vec<(u32, f64)> {
        trace
            .records()
            .iter()
            .filter_map(|r| {
                let v = match self {
                    Series::HsicXz => r.hsic_xz.value(),
                    Series::HsicZy => r.hsic_zy.value(),
                    Series::Loss => Some(r.train_loss),
                };
                v.map(|v| (r.epoch, v))
            })
            .collect()
    }
}

impl FromStr for Series {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hsic_xz" => Ok(Series::HsicXz),
            "hsic_zy" => Ok(Series::HsicZy),
            "loss" => Ok(Series::Loss),
            other => Err(Error::InvalidInput(format!(
                "unknown series `{other}`; expected hsic_xz, hsic_zy or loss"
            ))),
        }
    }
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn legend_label(trace: &TrainingTrace) -> String {
    let short: String = trace.fingerprint.chars().take(8).collect();
    if trace.label.is_empty() { short } else { format!("{} ({short})", trace.label) }
}

/// Renders one polyline per trace. Degenerate epochs are skipped; a trace
/// with no usable point for `series` is an error naming the trace.
pub fn render_plane_svg(traces: &[TrainingTrace], series: Series) -> Result<String> {
    if traces.is_empty() {
        return Err(Error::EmptyTrace("no traces to plot".into()));
    }
    let mut lines = Vec::with_capacity(traces.len());
    for t in traces {
        if t.records().is_empty() {
            return Err(Error::EmptyTrace(legend_label(t)));
        }
        let pts = series.points(t);
        if pts.is_empty() {
            return Err(Error::MissingSeries { series: series.name().into(), trace: legend_label(t) });
        }
        lines.push(pts);
    }
    let max_epoch = traces.iter().map(TrainingTrace::last_epoch).max().unwrap_or(1);
    let y_max = match series {
        Series::Loss => {
            let m = lines.iter().flatten().map(|p| p.1).fold(0.0, f64::max);
            if m > 0.0 { m } else { 1.0 }
        }
        _ => 1.0,
    };
    let x_of = |epoch: u32| {
        if max_epoch <= 1 {
            MARGIN_LEFT + PLOT_WIDTH / 2.0
        } else {
            MARGIN_LEFT + PLOT_WIDTH * f64::from(epoch - 1) / f64::from(max_epoch - 1)
        }
    };
    let y_of = |v: f64| MARGIN_TOP + PLOT_HEIGHT * (1.0 - v / y_max);
    let bottom = MARGIN_TOP + PLOT_HEIGHT;
    let right = MARGIN_LEFT + PLOT_WIDTH;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {CHART_WIDTH} {CHART_HEIGHT}" width="{CHART_WIDTH}" height="{CHART_HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="{CHART_WIDTH}" height="{CHART_HEIGHT}" fill="white"/>"#);

    for i in 1..=GRIDLINES {
        let v = y_max * i as f64 / GRIDLINES as f64;
        let y = y_of(v);
        let _ = writeln!(
            svg,
            r##"<line class="grid" x1="{MARGIN_LEFT:.2}" y1="{y:.2}" x2="{right:.2}" y2="{y:.2}" stroke="#dddddd" stroke-width="1"/>"##
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11" fill="#333333">{}</text>"##,
            MARGIN_LEFT - 6.0,
            y + 4.0,
            format_tick(v)
        );
    }
    let _ = writeln!(
        svg,
        r##"<line class="axis" x1="{MARGIN_LEFT:.2}" y1="{bottom:.2}" x2="{right:.2}" y2="{bottom:.2}" stroke="#333333" stroke-width="1.5"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<line class="axis" x1="{MARGIN_LEFT:.2}" y1="{MARGIN_TOP:.2}" x2="{MARGIN_LEFT:.2}" y2="{bottom:.2}" stroke="#333333" stroke-width="1.5"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<text x="{MARGIN_LEFT:.2}" y="{:.2}" font-size="11" fill="#333333">1</text>"##,
        bottom + 16.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="{right:.2}" y="{:.2}" text-anchor="end" font-size="11" fill="#333333">{max_epoch}</text>"##,
        bottom + 16.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13" fill="#333333">epoch</text>"##,
        MARGIN_LEFT + PLOT_WIDTH / 2.0,
        bottom + 40.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="18" y="{:.2}" text-anchor="middle" font-size="13" fill="#333333" transform="rotate(-90 18 {:.2})">{}</text>"##,
        MARGIN_TOP + PLOT_HEIGHT / 2.0,
        MARGIN_TOP + PLOT_HEIGHT / 2.0,
        series.axis_label()
    );

    for (idx, (trace, pts)) in traces.iter().zip(&lines).enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let coords: Vec<String> =
            pts.iter().map(|&(e, v)| format!("{:.2},{:.2}", x_of(e), y_of(v))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = MARGIN_TOP + 10.0 + 22.0 * idx as f64;
        let lx = right + 15.0;
        let _ = writeln!(
            svg,
            r##"<g class="legend-entry"><line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/><text x="{:.2}" y="{:.2}" font-size="12" fill="#333333">{}</text></g>"##,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape_xml(&legend_label(trace))
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn format_tick(v: f64) -> String {
    if v >= 0.01 { format!("{v:.2}") } else { format!("{v:.1e}") }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Dependence, EpochRecord};

    fn trace(label: &str, values: &[f64]) -> TrainingTrace {
        let mut t = TrainingTrace::new(format!("{label}-fingerprint"), label);
        for (i, &v) in values.iter().enumerate() {
            t.append(EpochRecord {
                epoch: i as u32 + 1,
                train_loss: 0.1 * (i + 1) as f64,
                val_loss: 0.2,
                hsic_xz: Dependence::Value(v),
                hsic_zy: Dependence::Degenerate,
                smi_xz: None,
                wall_ms: 0,
            })
            .unwrap();
        }
        t
    }

    fn polyline_points(svg: &str) -> Vec<Vec<(f64, f64)>> {
        svg.lines()
            .filter(|l| l.starts_with("<polyline"))
            .map(|l| {
                let start = l.find("points=\"").unwrap() + 8;
                let end = start + l[start..].find('"').unwrap();
                l[start..end]
                    .split(' ')
                    .map(|p| {
                        let (x, y) = p.split_once(',').unwrap();
                        (x.parse().unwrap(), y.parse().unwrap())
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn single_trace_single_polyline() {
        let svg = render_plane_svg(&[trace("a", &[0.2, 0.4, 0.3])], Series::HsicXz).unwrap();
        let lines = polyline_points(&svg);
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].len(), 3);
        assert!(svg.contains(r#"viewBox="0 0 800 500""#));
        assert_eq!(svg.matches(r#"class="grid""#).count(), 10);
    }

    #[test]
    fn two_traces_two_legend_entries() {
        let svg = render_plane_svg(&[trace("a", &[0.2, 0.4]), trace("b", &[0.5, 0.1])], Series::HsicXz)
            .unwrap();
        assert_eq!(polyline_points(&svg).len(), 2);
        assert_eq!(svg.matches(r#"class="legend-entry""#).count(), 2);
        assert!(svg.contains("a (a-finger)"));
    }

    #[test]
    fn unit_value_sits_on_top_gridline() {
        let svg = render_plane_svg(&[trace("a", &[1.0, 0.0])], Series::HsicXz).unwrap();
        let top_grid: f64 = svg
            .lines()
            .filter(|l| l.contains(r#"class="grid""#))
            .map(|l| {
                let s = l.find("y1=\"").unwrap() + 4;
                l[s..s + l[s..].find('"').unwrap()].parse::<f64>().unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(top_grid, MARGIN_TOP);
        let pts = &polyline_points(&svg)[0];
        assert_eq!(pts[0].1, top_grid);
        assert_eq!(pts[1].1, MARGIN_TOP + PLOT_HEIGHT);
    }

    #[test]
    fn deterministic_output() {
        let ts = [trace("a", &[0.2, 0.4, 0.3])];
        assert_eq!(render_plane_svg(&ts, Series::Loss).unwrap(), render_plane_svg(&ts, Series::Loss).unwrap());
    }

    #[test]
    fn errors_on_empty_and_missing() {
        assert!(matches!(render_plane_svg(&[], Series::Loss), Err(Error::EmptyTrace(_))));
        assert!(matches!(
            render_plane_svg(&[TrainingTrace::new("f", "x")], Series::Loss),
            Err(Error::EmptyTrace(_))
        ));
        match render_plane_svg(&[trace("a", &[0.1])], Series::HsicZy) {
            Err(Error::MissingSeries { trace, .. }) => assert!(trace.contains('a')),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn series_names_parse() {
        for s in [Series::HsicXz, Series::HsicZy, Series::Loss] {
            assert_eq!(s.name().parse::<Series>().unwrap(), s);
        }
        assert!("bogus".parse::<Series>().is_err());
    }
}
