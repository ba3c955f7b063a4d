//! CSV and SVG output for sweep records and check tables. Output bytes
//! depend only on the input values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{CheckTable, SweepRecord};

/// A table that can be written as CSV and plotted.
pub trait Tabular {
    fn header(&self) -> Vec<&'static str>;
    /// Rows already formatted as CSV fields.
    fn csv_rows(&self) -> Vec<Vec<String>>;
    /// (label, points) for the plot; y is drawn on a log scale.
    fn series(&self) -> Vec<(String, Vec<(f64, f64)>)>;
    fn axis_labels(&self) -> (&'static str, &'static str);
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

impl Tabular for [SweepRecord] {
    fn header(&self) -> Vec<&'static str> {
        vec!["s", "eps", "p", "lambda", "reference", "abs_err", "rel_err", "dofs", "strip_cells", "tail_mass"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|r| {
                vec![
                    num(r.s),
                    num(r.eps),
                    num(r.p),
                    num(r.lambda),
                    num(r.reference),
                    num(r.abs_err),
                    num(r.rel_err),
                    r.dofs.to_string(),
                    r.strip_cells.to_string(),
                    num(r.tail_mass),
                ]
            })
            .collect()
    }

    fn series(&self) -> Vec<(String, Vec<(f64, f64)>)> {
        let mut by_p: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
        for r in self {
            match by_p.iter_mut().find(|(p, _)| *p == r.p) {
                Some((_, pts)) => pts.push((r.s, r.rel_err)),
                None => by_p.push((r.p, vec![(r.s, r.rel_err)])),
            }
        }
        by_p.into_iter().map(|(p, pts)| (format!("p = {p}"), pts)).collect()
    }

    fn axis_labels(&self) -> (&'static str, &'static str) {
        ("s", "relative error")
    }
}

impl Tabular for CheckTable {
    fn header(&self) -> Vec<&'static str> {
        vec!["param", "value", "target", "deviation"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows.iter().map(|r| vec![num(r.param), num(r.value), num(r.target), num(r.deviation)]).collect()
    }

    fn series(&self) -> Vec<(String, Vec<(f64, f64)>)> {
        vec![("deviation".to_string(), self.rows.iter().map(|r| (r.param, r.deviation)).collect())]
    }

    fn axis_labels(&self) -> (&'static str, &'static str) {
        ("parameter", "deviation")
    }
}

pub fn to_csv<T: Tabular + ?Sized>(table: &T) -> String {
    let mut out = table.header().join(",");
    out.push('\n');
    for row in table.csv_rows() {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 80.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line plot with a log-scaled y axis. Nonpositive y values are skipped.
pub fn to_svg<T: Tabular + ?Sized>(table: &T) -> String {
    let series = table.series();
    let (xlabel, ylabel) = table.axis_labels();
    let pts = series.iter().flat_map(|(_, p)| p.iter()).filter(|(_, y)| *y > 0.0 && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, -1.0, 0.0);
    }
    if x1 - x0 < 1e-300 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |ly: f64| HEIGHT - MARGIN - (ly - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="600" viewBox="0 0 800 600">"#);
    let _ = writeln!(s, r#"<rect width="800" height="600" fill="white"/>"#);
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<path d="M{l:.1} {t:.1} L{l:.1} {b:.1} L{r:.1} {b:.1}" stroke="black" fill="none"/>"#);
    for k in 0..=4 {
        let x = x0 + (x1 - x0) * k as f64 / 4.0;
        let px = sx(x);
        let _ = writeln!(s, r#"<line x1="{px:.1}" y1="{b:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/>"#, b + 5.0);
        let _ =
            writeln!(s, r#"<text x="{px:.1}" y="{:.1}" font-size="12" text-anchor="middle">{x:.3}</text>"#, b + 20.0);
    }
    let mut e = y0 as i32;
    while e as f64 <= y1 {
        let py = sy(e as f64);
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{py:.1}" x2="{l:.1}" y2="{py:.1}" stroke="black"/>"#, l - 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="end">1e{e}</text>"#,
            l - 8.0,
            py + 4.0
        );
        e += 1;
    }
    let _ =
        writeln!(s, r#"<text x="400.0" y="{:.1}" font-size="14" text-anchor="middle">{xlabel}</text>"#, HEIGHT - 25.0);
    let _ = writeln!(
        s,
        r#"<text x="20.0" y="300.0" font-size="14" text-anchor="middle" transform="rotate(-90 20.0 300.0)">{ylabel} (log scale)</text>"#
    );
    for (i, (label, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = points
            .iter()
            .filter(|(_, y)| *y > 0.0 && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y.log10())))
            .collect();
        let _ =
            writeln!(s, r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="2"/>"#, coords.join(" "));
        let ly = MARGIN + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="12" fill="{color}">{label}</text>"#,
            WIDTH - MARGIN - 100.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Paths written by [`emit_report`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub svg: PathBuf,
}

/// Writes `<stem>.csv` and `<stem>.svg`.
pub fn emit_report<T: Tabular + ?Sized>(table: &T, stem: &Path) -> Result<ReportFiles> {
    if table.csv_rows().is_empty() {
        return Err(Error::EmptyRecords);
    }
    if let Some(dir) = stem.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let csv = stem.with_extension("csv");
    let svg = stem.with_extension("svg");
    std::fs::write(&csv, to_csv(table))?;
    std::fs::write(&svg, to_svg(table))?;
    Ok(ReportFiles { csv, svg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::CheckRow;

    fn record(s: f64) -> SweepRecord {
        SweepRecord {
            s,
            eps: 1.0 - s,
            p: 2.0,
            lambda: 0.47,
            reference: 0.5f64.tanh(),
            abs_err: 0.008,
            rel_err: 0.017,
            dofs: 81,
            strip_cells: 36,
            tail_mass: 0.5,
            upper_bound: 0.5,
            sign_constant: true,
            normalized: true,
            gap: Some(1.9),
            monotone: true,
            residual: 1e-12,
        }
    }

    #[test]
    fn empty_table_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let empty: Vec<SweepRecord> = vec![];
        assert!(matches!(emit_report(empty.as_slice(), &dir.path().join("x")), Err(Error::EmptyRecords)));
    }

    #[test]
    fn single_record_gives_two_lines() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report([record(0.9)].as_slice(), &dir.path().join("sweep")).unwrap();
        let csv = std::fs::read_to_string(files.csv).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next().unwrap(), "s,eps,p,lambda,reference,abs_err,rel_err,dofs,strip_cells,tail_mass");
        let fields: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(fields.len(), 10);
        assert_eq!(fields[0].parse::<f64>().unwrap(), 0.9);
    }

    #[test]
    fn svg_is_deterministic() {
        let recs = vec![record(0.6), record(0.8), record(0.95)];
        let a = to_svg(recs.as_slice());
        let b = to_svg(recs.as_slice());
        assert_eq!(a, b);
        assert!(a.contains(r#"viewBox="0 0 800 600""#));
        assert_eq!(a.matches("<polyline").count(), 1);
    }

    #[test]
    fn check_table_csv() {
        let t = CheckTable { rows: vec![CheckRow { param: 0.5, value: 0.5, target: 1.0, deviation: 0.5 }] };
        let csv = to_csv(&t);
        assert_eq!(csv, "param,value,target,deviation\n5.0000000000000000e-1,5.0000000000000000e-1,1.0000000000000000e0,5.0000000000000000e-1\n");
    }
}
