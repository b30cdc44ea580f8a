//! CSV rows and SVG line plots.

use std::fmt::Write as _;

use mmsc_core::allocation::RateTable;

/// One evaluation row. Metrics that could not be computed stay `None` and
/// are written as empty fields.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub image_id: String,
    pub budget: u64,
    pub rate: f64,
    pub counts: Vec<usize>,
    pub masked_mse: Option<f64>,
    pub relevance_l1: Option<f64>,
    pub embedding_score: Option<f64>,
    pub psnr: f64,
}

fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.6}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn eval_header(table: &RateTable) -> String {
    let mut h = String::from("image_id,budget,rate");
    for r in table.rates() {
        write!(h, ",count_{r}").unwrap();
    }
    h.push_str(",masked_mse,masked_mse_unit,relevance_l1,embedding_score,psnr");
    h
}

impl EvalRecord {
    pub fn csv_row(&self) -> String {
        let mut row = format!("{},{},{}", field(&self.image_id), self.budget, self.rate);
        for c in &self.counts {
            write!(row, ",{c}").unwrap();
        }
        write!(
            row,
            ",{},{},{},{},{}",
            opt(self.masked_mse),
            opt(self.masked_mse.map(|m| m / (255.0 * 255.0))),
            opt(self.relevance_l1),
            opt(self.embedding_score),
            num(self.psnr)
        )
        .unwrap();
        row
    }
}

pub fn eval_csv(table: &RateTable, records: &[EvalRecord]) -> String {
    let mut out = eval_header(table);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Per-rate means across images.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub rate: f64,
    pub images: usize,
    pub masked_mse: Option<f64>,
    pub relevance_l1: Option<f64>,
    pub embedding_score: Option<f64>,
    pub psnr: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0f64, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Groups records by rate, in the order the rates first appear.
pub fn aggregate(records: &[EvalRecord], rates: &[f64]) -> Vec<SweepPoint> {
    rates
        .iter()
        .map(|&rate| {
            let rows: Vec<&EvalRecord> = records.iter().filter(|r| r.rate == rate).collect();
            SweepPoint {
                rate,
                images: rows.len(),
                masked_mse: mean(rows.iter().filter_map(|r| r.masked_mse)),
                relevance_l1: mean(rows.iter().filter_map(|r| r.relevance_l1)),
                embedding_score: mean(rows.iter().filter_map(|r| r.embedding_score)),
                psnr: mean(rows.iter().map(|r| r.psnr)).unwrap_or(f64::NAN),
            }
        })
        .collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out =
        String::from("rate,images,masked_mse,masked_mse_unit,relevance_l1,embedding_score,psnr\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.rate,
            p.images,
            opt(p.masked_mse),
            opt(p.masked_mse.map(|m| m / (255.0 * 255.0))),
            opt(p.relevance_l1),
            opt(p.embedding_score),
            num(p.psnr)
        )
        .unwrap();
    }
    out
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;

/// A single-series line plot. Non-finite points are dropped.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (0.0f64, 1.0f64, 0.0f64, 1.0f64);
    if !pts.is_empty() {
        x0 = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        x1 = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        y0 = pts
            .iter()
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min)
            .min(0.0);
        y1 = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#, W / 2.0, escape(title)).unwrap();
    writeln!(
        s,
        r#"<path d="M{m} {t} L{m} {b} L{r} {b}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    )
    .unwrap();
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            sx(fx),
            H - MARGIN + 16.0,
            tick(fx)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
            MARGIN - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        )
        .unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#, W / 2.0, H - 16.0, escape(x_label)).unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{y}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {y})">{}</text>"#,
        escape(y_label),
        y = H / 2.0
    )
    .unwrap();
    if !pts.is_empty() {
        let line: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#1f5fa8" stroke-width="2"/>"##,
            line.join(" ")
        )
        .unwrap();
        for &(x, y) in &pts {
            writeln!(
                s,
                r##"<circle cx="{:.1}" cy="{:.1}" r="3" fill="#1f5fa8"/>"##,
                sx(x),
                sy(y)
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let t = format!("{v:.3}");
    let t = t.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".into()
    } else {
        t.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
