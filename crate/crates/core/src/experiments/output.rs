//! CSV and SVG writers for bound curves.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{BoundCurve, CurvePoint};

pub const CSV_HEADER: [&str; 9] = [
    "theta",
    "bound",
    "input_fisher",
    "loss_db",
    "crlb",
    "nrmse",
    "effective_rank",
    "cond",
    "error",
];

/// Formats `x` with nine significant digits, `%g` style.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exponent) = sci.split_once('e').expect("exponent");
    let exponent: i32 = exponent.parse().expect("exponent digits");
    if (-5..9).contains(&exponent) {
        let fixed = format!("{:.*}", (8 - exponent) as usize, x);
        trim_fraction(&fixed).to_string()
    } else {
        format!("{}e{exponent}", trim_fraction(mantissa))
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn cell(value: Option<f64>) -> String {
    value.map(format_sig).unwrap_or_default()
}

fn row(p: &CurvePoint) -> Vec<String> {
    let bound = p.bound.as_ref();
    vec![
        format_sig(p.theta),
        cell(bound.map(|b| b.value)),
        cell(p.input_fisher),
        cell(p.loss_db),
        cell(p.crlb),
        cell(p.nrmse),
        bound
            .map(|b| b.effective_rank.to_string())
            .unwrap_or_default(),
        cell(bound.map(|b| b.cond)),
        p.error.clone().unwrap_or_default(),
    ]
}

/// Renders the curve as CSV text.
pub fn csv_string(curve: &BoundCurve) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Validation(format!("csv encoding failed: {e}"));
    writer.write_record(CSV_HEADER).map_err(csv_err)?;
    for p in &curve.points {
        writer.write_record(row(p)).map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Validation(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn emit_csv(curve: &BoundCurve, path: &Path) -> Result<()> {
    fs::write(path, csv_string(curve)?).map_err(|e| Error::io(path, e))
}

/// One parsed CSV row; empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub theta: f64,
    pub bound: Option<f64>,
    pub input_fisher: Option<f64>,
    pub loss_db: Option<f64>,
    pub crlb: Option<f64>,
    pub nrmse: Option<f64>,
    pub effective_rank: Option<usize>,
    pub cond: Option<f64>,
    pub error: Option<String>,
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse(format!("unexpected header {:?}", header)));
    }
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("bad number '{s}'")))
        }
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| Error::Parse(e.to_string()))?;
        if r.len() != CSV_HEADER.len() {
            return Err(Error::Parse(format!(
                "expected {} fields, got {}",
                CSV_HEADER.len(),
                r.len()
            )));
        }
        rows.push(CsvRow {
            theta: num(&r[0])?.ok_or_else(|| Error::Parse("missing theta".into()))?,
            bound: num(&r[1])?,
            input_fisher: num(&r[2])?,
            loss_db: num(&r[3])?,
            crlb: num(&r[4])?,
            nrmse: num(&r[5])?,
            effective_rank: if r[6].is_empty() {
                None
            } else {
                Some(
                    r[6].parse()
                        .map_err(|_| Error::Parse(format!("bad rank '{}'", &r[6])))?,
                )
            },
            cond: num(&r[7])?,
            error: (!r[8].is_empty()).then(|| r[8].to_string()),
        });
    }
    Ok(rows)
}

/// Quantity plotted on the vertical axis of the SVG.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Bound,
    LossDb,
    Crlb,
    Nrmse,
}

impl Column {
    /// Loss when the input information is known, NRMSE otherwise.
    pub fn default_for(curve: &BoundCurve) -> Self {
        if curve.points.iter().any(|p| p.input_fisher.is_some()) {
            Column::LossDb
        } else {
            Column::Nrmse
        }
    }

    fn label(self) -> &'static str {
        match self {
            Column::Bound => "matched bound",
            Column::LossDb => "information loss [dB]",
            Column::Crlb => "CRLB",
            Column::Nrmse => "NRMSE",
        }
    }

    fn get(self, p: &CurvePoint) -> Option<f64> {
        match self {
            Column::Bound => p.value(),
            Column::LossDb => p.loss_db,
            Column::Crlb => p.crlb,
            Column::Nrmse => p.nrmse,
        }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if hi > lo {
        (lo, hi)
    } else {
        let pad = lo.abs().max(1.0) * 0.5;
        (lo - pad, hi + pad)
    }
}

fn short(x: f64) -> String {
    let s = format!("{x:.3}");
    trim_fraction(&s).to_string()
}

/// Renders `column` against theta as an SVG line plot.
pub fn svg_string(curve: &BoundCurve, column: Column) -> Result<String> {
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter_map(|p| {
            column
                .get(p)
                .filter(|v| v.is_finite())
                .map(|v| (p.theta, v))
        })
        .collect();
    if pts.is_empty() {
        return Err(Error::EmptyCurve);
    }
    let (x0, x1) = span(pts.iter().map(|p| p.0));
    let (y0, y1) = span(pts.iter().map(|p| p.1));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(&curve.label)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT},{TOP} V{} H{}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    for i in 0..TICKS {
        let t = i as f64 / (TICKS - 1) as f64;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{0}" x2="{px:.2}" y2="{1}" stroke="black"/><text x="{px:.2}" y="{2}" text-anchor="middle">{3}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 20.0,
            short(xv)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{1}" y="{2:.2}" text-anchor="end">{3}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            short(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">theta</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{0}" text-anchor="middle" transform="rotate(-90 15 {0})">{1}</text>"#,
        TOP + plot_h / 2.0,
        column.label()
    );
    let coords: Vec<String> = pts
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        coords.join(" ")
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn emit_svg(curve: &BoundCurve, path: &Path, column: Column) -> Result<()> {
    fs::write(path, svg_string(curve, column)?).map_err(|e| Error::io(path, e))
}
