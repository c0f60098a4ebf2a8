//! Static SVG line charts drawn from a sweep CSV.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{LabError, LabResult};
use crate::output::{read_csv, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureStyle {
    Lines,
    /// Lines plus circles where the first QFI series touches the envelope.
    PeakMarkers,
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 5] = ["#1f5fa8", "#c0392b", "#2e8b57", "#7d3c98", "#d68910"];
const REFERENCE: &str = "#7f7f7f";

/// Bookkeeping columns never drawn as series.
const NOT_PLOTTED: [&str; 7] = ["t", "segments", "t_opt", "t_opt_numeric", "gamma_threshold", "qfi_rate", "n_probes"];

fn is_reference(name: &str) -> bool {
    name.contains("envelope") || name.contains("single_shot") || name.starts_with("f_env")
}

/// Touch tolerance for peak markers.
const TOUCH: f64 = 0.01;

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        let pad = 0.5 * lo.abs().max(1.0);
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn label(v: f64, step: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if v.abs() >= 1e5 || v.abs() < 1e-3 {
        return format!("{v:.1e}");
    }
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

/// Renders the table; the first column is the horizontal axis.
pub fn render_svg(table: &Table, style: FigureStyle) -> LabResult<String> {
    if table.rows.is_empty() {
        return Err(LabError::config("figure", "cannot plot an empty result"));
    }
    let xs: Vec<Option<f64>> = table.rows.iter().map(|r| r[0]).collect();
    let series: Vec<(usize, &str)> = table
        .columns
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, c)| !NOT_PLOTTED.contains(&c.as_str()))
        .map(|(i, c)| (i, c.as_str()))
        .collect();

    let x = bounds(xs.iter().flatten().copied());
    let y_raw = bounds(
        series
            .iter()
            .flat_map(|&(i, _)| table.rows.iter().filter_map(move |r| r[i])),
    );
    let y = (y_raw.0.min(0.0), y_raw.1 + 0.05 * (y_raw.1 - y_raw.0.min(0.0)));
    let f = Frame { x, y };

    let mut svg = String::new();
    let w = &mut svg;
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(w, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, escape(&table.title)).unwrap();

    // axes and ticks
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    writeln!(w, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#).unwrap();
    for (axis_lo, axis_hi, horizontal) in [(f.x.0, f.x.1, true), (f.y.0, f.y.1, false)] {
        let step = nice_step(axis_hi - axis_lo);
        let mut v = (axis_lo / step).ceil() * step;
        while v <= axis_hi + 1e-9 * step {
            let text = label(v, step);
            if horizontal {
                let p = f.px(v);
                writeln!(w, r#"<line x1="{p:.2}" y1="{y0}" x2="{p:.2}" y2="{}" stroke="black"/><text x="{p:.2}" y="{}" text-anchor="middle">{text}</text>"#, y0 + 5.0, y0 + 19.0).unwrap();
            } else {
                let p = f.py(v);
                writeln!(w, r#"<line x1="{}" y1="{p:.2}" x2="{x0}" y2="{p:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{text}</text>"#, x0 - 5.0, x0 - 8.0, p + 4.0).unwrap();
            }
            v += step;
        }
    }
    writeln!(w, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 18.0, escape(&table.columns[0])).unwrap();
    writeln!(w, r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">QFI</text>"#, (y0 + y1) / 2.0, (y0 + y1) / 2.0).unwrap();

    // segment boundaries as dotted verticals
    if let Some(seg) = table.column("segments") {
        for i in 1..seg.len() {
            if let (Some(a), Some(b), Some(xv)) = (seg[i - 1], seg[i], xs[i]) {
                if b > a {
                    let p = f.px(xv);
                    writeln!(w, r#"<line x1="{p:.2}" y1="{y0}" x2="{p:.2}" y2="{y1}" stroke="{REFERENCE}" stroke-dasharray="2,3"/>"#).unwrap();
                }
            }
        }
    }

    let mut colour = 0;
    for (k, &(i, name)) in series.iter().enumerate() {
        let reference = is_reference(name);
        let stroke = if reference {
            REFERENCE
        } else {
            colour += 1;
            PALETTE[(colour - 1) % PALETTE.len()]
        };
        let dash = if reference { r#" stroke-dasharray="6,4""# } else { "" };
        let mut d = String::new();
        let mut pen_down = false;
        let mut points = 0;
        for (row, xv) in table.rows.iter().zip(&xs) {
            match (xv, row[i]) {
                (Some(xv), Some(yv)) => {
                    let cmd = if pen_down { 'L' } else { 'M' };
                    write!(d, "{cmd}{:.2},{:.2} ", f.px(*xv), f.py(yv)).unwrap();
                    pen_down = true;
                    points += 1;
                }
                _ => pen_down = false,
            }
        }
        if points == 1 {
            let (xv, yv) = table.rows.iter().zip(&xs).find_map(|(r, xv)| Some((xv.as_ref()?, r[i]?))).unwrap();
            writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{stroke}"/>"#, f.px(*xv), f.py(yv)).unwrap();
        } else if points > 1 {
            writeln!(w, r#"<path d="{}" fill="none" stroke="{stroke}" stroke-width="1.5"{dash}/>"#, d.trim_end()).unwrap();
        }
        let ly = TOP + 10.0 + 20.0 * k as f64;
        writeln!(w, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{stroke}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#, x1 + 15.0, x1 + 40.0, x1 + 46.0, ly + 4.0, escape(name)).unwrap();
    }

    if style == FigureStyle::PeakMarkers {
        let qfi = series.iter().find(|(_, n)| n.starts_with("qfi") && !is_reference(n));
        let env = table.column("envelope");
        if let (Some(&(i, _)), Some(env)) = (qfi, env) {
            let y: Vec<Option<f64>> = table.rows.iter().map(|r| r[i]).collect();
            for j in 1..y.len().saturating_sub(1) {
                if let (Some(a), Some(b), Some(c), Some(e), Some(xv)) = (y[j - 1], y[j], y[j + 1], env[j], xs[j]) {
                    if b >= a && b >= c && e > 0.0 && (b - e).abs() <= TOUCH * e {
                        writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="none" stroke="black"/>"#, f.px(xv), f.py(b)).unwrap();
                    }
                }
            }
        }
    }
    writeln!(w, "</svg>").unwrap();
    Ok(svg)
}

/// Reads `csv_path` and writes the figure to `svg_path`.
pub fn emit_figure(csv_path: &Path, svg_path: &Path, style: FigureStyle) -> LabResult<()> {
    let table = read_csv(csv_path)?;
    let svg = render_svg(&table, style)?;
    if let Some(dir) = svg_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    std::fs::write(svg_path, svg).map_err(|e| LabError::io(svg_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::Status;

    fn table(rows: Vec<Vec<Option<f64>>>) -> Table {
        let n = rows.len();
        Table {
            title: "demo <1>".into(),
            columns: vec!["t".into(), "qfi_analytic".into(), "envelope".into()],
            rows,
            status: vec![Status::Ok; n],
        }
    }

    #[test]
    fn ticks() {
        assert_eq!(nice_step(10.0), 2.0);
        assert_eq!(nice_step(177.0), 50.0);
        assert!((nice_step(0.03) - 0.01).abs() < 1e-15);
        assert!((nice_step(0.02) - 0.005).abs() < 1e-15);
        assert_eq!(label(0.0, 1.0), "0");
        assert_eq!(label(2.5, 0.5), "2.5");
        assert_eq!(label(2e5, 1e5), "2.0e5");
    }

    #[test]
    fn peaks_are_marked() {
        let rows: Vec<Vec<Option<f64>>> = (0..50)
            .map(|i| {
                let t = i as f64 * std::f64::consts::PI / 20.0;
                let env = t * t;
                Some(vec![Some(t), Some(env * (t * 2.0).cos().powi(2)), Some(env)])
            })
            .map(Option::unwrap)
            .collect();
        let svg = render_svg(&table(rows.clone()), FigureStyle::PeakMarkers).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("stroke-dasharray=\"6,4\""));
        assert!(svg.contains("demo &lt;1&gt;"));
        assert!(svg.matches("r=\"4\"").count() >= 2);
        let plain = render_svg(&table(rows), FigureStyle::Lines).unwrap();
        assert_eq!(plain.matches("r=\"4\"").count(), 0);
    }

    #[test]
    fn single_row_and_gaps() {
        let svg = render_svg(&table(vec![vec![Some(1.0), Some(2.0), Some(3.0)]]), FigureStyle::PeakMarkers).unwrap();
        assert!(svg.contains("<circle"));
        assert!(!svg.contains("NaN"));
        let gap = render_svg(
            &table(vec![
                vec![Some(0.0), Some(1.0), Some(1.0)],
                vec![Some(1.0), None, Some(2.0)],
                vec![Some(2.0), Some(3.0), Some(3.0)],
            ]),
            FigureStyle::Lines,
        )
        .unwrap();
        assert!(!gap.contains("NaN"));
        assert!(render_svg(&table(vec![]), FigureStyle::Lines).is_err());
    }
}
