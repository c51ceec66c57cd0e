//! Minimal SVG line charts for training logs and interval fixtures.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use trustbayes::eval::FixtureRow;
use trustbayes::Error;

use crate::io::{fixture_rows, Table, FIXTURE_HEADER, LOG_HEADER};

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#7f7f7f"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub dashed: bool,
}

/// Axis-aligned drawing area mapping data ranges to pixels.
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = self.xr.1 - self.xr.0;
        self.x0 + if span > 0.0 { (x - self.xr.0) / span * self.w } else { 0.5 * self.w }
    }

    fn py(&self, y: f64) -> f64 {
        let span = self.yr.1 - self.yr.0;
        self.y0 + self.h - if span > 0.0 { (y - self.yr.0) / span * self.h } else { 0.5 * self.h }
    }

    fn axes(&self, s: &mut String, title: &str) {
        writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333" stroke-width="1"/>"##,
            self.x0, self.y0, self.w, self.h
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" font-family="sans-serif">{}</text>"#,
            self.x0,
            self.y0 - 6.0,
            escape(title)
        )
        .unwrap();
        for (v, anchor_y) in [(self.yr.0, self.y0 + self.h), (self.yr.1, self.y0 + 10.0)] {
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" font-family="sans-serif" text-anchor="end">{}</text>"#,
                self.x0 - 4.0,
                anchor_y,
                tick(v)
            )
            .unwrap();
        }
        for (v, anchor, x) in [(self.xr.0, "start", self.x0), (self.xr.1, "end", self.x0 + self.w)] {
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" font-family="sans-serif" text-anchor="{anchor}">{}</text>"#,
                x,
                self.y0 + self.h + 14.0,
                tick(v)
            )
            .unwrap();
        }
    }

    fn polyline(&self, s: &mut String, points: &[(f64, f64)], color: &str, dashed: bool, width: f64) {
        if points.is_empty() {
            return;
        }
        let mut pts = String::new();
        for (i, &(x, y)) in points.iter().enumerate() {
            if i > 0 {
                pts.push(' ');
            }
            write!(pts, "{:.2},{:.2}", self.px(x), self.py(y.clamp(self.yr.0, self.yr.1))).unwrap();
        }
        let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
        writeln!(
            s,
            r#"<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{dash}/>"#
        )
        .unwrap();
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(s: &mut String, w: f64, h: f64) {
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
}

fn legend(s: &mut String, x: f64, y: f64, series: &[(&str, &str, bool)]) {
    for (i, (name, color, dashed)) in series.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { "" };
        writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="{color}" stroke-width="2"{dash}/>"#,
            x + 24.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" font-family="sans-serif">{}</text>"#,
            x + 30.0,
            yy + 4.0,
            escape(name)
        )
        .unwrap();
    }
}

/// Single chart of several series sharing axes, plus a horizontal reference
/// line at `threshold` when given.
pub fn line_chart(title: &str, series: &[Series], threshold: Option<(f64, &str)>) -> String {
    let (w, h) = (860.0, 480.0);
    let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
    let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
    for p in series.iter().flat_map(|s| s.points.iter()) {
        if p.0.is_finite() && p.1.is_finite() {
            xr = (xr.0.min(p.0), xr.1.max(p.0));
            yr = (yr.0.min(p.1), yr.1.max(p.1));
        }
    }
    if let Some((t, _)) = threshold {
        yr = (yr.0.min(t), yr.1.max(t));
    }
    if !xr.0.is_finite() {
        xr = (0.0, 1.0);
        yr = (0.0, 1.0);
    }
    let frame = Frame {
        x0: 70.0,
        y0: 40.0,
        w: 560.0,
        h: 380.0,
        xr,
        yr,
    };
    let mut s = String::new();
    header(&mut s, w, h);
    frame.axes(&mut s, title);
    for se in series {
        frame.polyline(&mut s, &se.points, se.color, se.dashed, 1.5);
    }
    let mut keys: Vec<(&str, &str, bool)> = series.iter().map(|se| (se.name.as_str(), se.color, se.dashed)).collect();
    if let Some((t, name)) = threshold {
        frame.polyline(&mut s, &[(xr.0, t), (xr.1, t)], "#000", true, 1.0);
        keys.push((name, "#000", true));
    }
    legend(&mut s, 650.0, 60.0, &keys);
    s.push_str("</svg>\n");
    s
}

/// Inclusion-versus-step chart of a training log CSV.
pub fn plot_log(table: &Table, delta: Option<f64>) -> Result<String, Error> {
    if !table.has_header(&LOG_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("training log header must be {}", LOG_HEADER.join(",")),
        });
    }
    let col = |name: &str| LOG_HEADER.iter().position(|h| *h == name).unwrap();
    let pick = |name: &str, color: &'static str, dashed: bool| Series {
        name: name.to_string(),
        points: table.rows.iter().map(|(_, v)| (v[0], v[col(name)])).collect(),
        color,
        dashed,
    };
    let series = vec![
        pick("exact_prior_incl", PALETTE[0], false),
        pick("exact_post_incl", PALETTE[1], false),
        pick("p1_star", PALETTE[0], true),
        pick("p2_star", PALETTE[1], true),
    ];
    let title = match table.comment("method") {
        Some(m) => format!("{m}: inclusion during training"),
        None => "inclusion during training".to_string(),
    };
    Ok(line_chart(&title, &series, delta.map(|d| (1.0 - d, "1 - delta"))))
}

/// One panel per fixture function: truth, and prior/posterior bands of both
/// hyperparameter sets.
pub fn plot_fixture(table: &Table, label_a: &str, label_b: &str) -> Result<String, Error> {
    if !table.has_header(&FIXTURE_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("fixture header must be {}", FIXTURE_HEADER.join(",")),
        });
    }
    let mut funcs: BTreeMap<u64, Vec<FixtureRow>> = BTreeMap::new();
    for r in fixture_rows(table) {
        funcs.entry(r.func_id).or_default().push(r);
    }
    let cols = 2usize;
    let rows = funcs.len().div_ceil(cols);
    let (pw, ph) = (420.0, 220.0);
    let w = 40.0 + cols as f64 * (pw + 40.0);
    let h = 70.0 + rows as f64 * (ph + 50.0);
    let mut s = String::new();
    header(&mut s, w, h);
    legend(
        &mut s,
        40.0,
        16.0,
        &[("f", "#000", false), (label_a, PALETTE[0], false), (label_b, PALETTE[3], false)],
    );
    writeln!(
        &mut s,
        r#"<text x="{:.2}" y="20" font-size="11" font-family="sans-serif">solid: posterior, dashed: prior</text>"#,
        w * 0.5
    )
    .unwrap();
    for (k, (id, pts)) in funcs.iter().enumerate() {
        let (r, c) = (k / cols, k % cols);
        let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
        for p in pts {
            for v in [p.f, p.a_post.lo, p.a_post.hi, p.b_post.lo, p.b_post.hi] {
                if v.is_finite() {
                    yr = (yr.0.min(v), yr.1.max(v));
                }
            }
        }
        // Prior bands can be far wider than the functions; keep the panel
        // on the data and let them clip.
        let pad = 0.25 * (yr.1 - yr.0).max(1.0);
        let frame = Frame {
            x0: 60.0 + c as f64 * (pw + 40.0),
            y0: 80.0 + r as f64 * (ph + 50.0),
            w: pw,
            h: ph,
            xr: (0.0, 1.0),
            yr: (yr.0 - pad, yr.1 + pad),
        };
        frame.axes(&mut s, &format!("function {id}"));
        let line = |get: fn(&FixtureRow) -> f64| -> Vec<(f64, f64)> { pts.iter().map(|p| (p.x, get(p))).collect() };
        frame.polyline(&mut s, &line(|p| p.a_prior.lo), PALETTE[0], true, 1.0);
        frame.polyline(&mut s, &line(|p| p.a_prior.hi), PALETTE[0], true, 1.0);
        frame.polyline(&mut s, &line(|p| p.b_prior.lo), PALETTE[3], true, 1.0);
        frame.polyline(&mut s, &line(|p| p.b_prior.hi), PALETTE[3], true, 1.0);
        frame.polyline(&mut s, &line(|p| p.a_post.lo), PALETTE[0], false, 1.2);
        frame.polyline(&mut s, &line(|p| p.a_post.hi), PALETTE[0], false, 1.2);
        frame.polyline(&mut s, &line(|p| p.b_post.lo), PALETTE[3], false, 1.2);
        frame.polyline(&mut s, &line(|p| p.b_post.hi), PALETTE[3], false, 1.2);
        frame.polyline(&mut s, &line(|p| p.f), "#000", false, 1.6);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Number of `<polyline` elements, for shape checks.
pub fn count_polylines(svg: &str) -> usize {
    svg.matches("<polyline").count()
}
