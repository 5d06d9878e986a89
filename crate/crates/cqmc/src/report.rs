//! Convergence-study reports: per-n error summaries, log-log slope fits,
//! and CSV / SVG emission.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Error summary for one sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: u64,
    /// Mean absolute deviation of the replicate estimates from the
    /// reference value (the primary metric).
    pub mean_abs_error: f64,
    /// Root mean square of the same deviations.
    pub rmse: f64,
    /// Standard error of the mean-absolute-error estimate.
    pub std_err: f64,
}

/// Number of leading rows excluded from the slope fit to reduce
/// preasymptotic bias.
pub const FIT_SKIP: usize = 2;

/// A replicated error study against a fixed reference value.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of log2(mean error) against log2(n).
    pub slope: f64,
    pub slope_std_err: f64,
    pub reference: f64,
    pub reference_provenance: String,
    /// Rows actually skipped by the fit (smaller when the study is short).
    pub fit_skip: usize,
}

impl ConvergenceReport {
    /// Builds a report from per-n rows, fitting the slope on all but the
    /// first [`FIT_SKIP`] rows (kept if fewer than two would remain).
    pub fn from_rows(rows: Vec<ConvergenceRow>, reference: f64, provenance: String) -> Self {
        let skip = if rows.len() >= FIT_SKIP + 2 { FIT_SKIP } else { 0 };
        let (slope, slope_std_err) = fit_slope(&rows[skip..]);
        Self {
            rows,
            slope,
            slope_std_err,
            reference,
            reference_provenance: provenance,
            fit_skip: skip,
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("n,mean_abs_error,rmse,stderr\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.n, r.mean_abs_error, r.rmse, r.std_err);
        }
        out
    }

    pub fn emit_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), ReportError> {
        write_file(path, self.to_csv_string().as_bytes())
    }

    pub fn to_svg_string(&self) -> String {
        render_svg(self)
    }

    pub fn emit_svg<P: AsRef<Path>>(&self, path: P) -> Result<(), ReportError> {
        write_file(path, self.to_svg_string().as_bytes())
    }
}

fn write_file<P: AsRef<Path>>(path: P, bytes: &[u8]) -> Result<(), ReportError> {
    let wrap = |source: std::io::Error| ReportError::Io {
        path: path.as_ref().display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(path.as_ref()).map_err(wrap)?;
    file.write_all(bytes).map_err(wrap)
}

/// Ordinary least squares of log2(error) on log2(n); returns the slope
/// and its standard error. Rows with zero error are dropped (they carry
/// no log information).
fn fit_slope(rows: &[ConvergenceRow]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.mean_abs_error > 0.0)
        .map(|r| ((r.n as f64).log2(), r.mean_abs_error.log2()))
        .collect();
    if pts.len() < 2 {
        return (0.0, 0.0);
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    if pts.len() == 2 {
        return (slope, 0.0);
    }
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let fit = mean_y + slope * (p.0 - mean_x);
            (p.1 - fit).powi(2)
        })
        .sum();
    let std_err = (ss_res / (n - 2.0) / sxx).sqrt();
    (slope, std_err)
}

const SVG_W: f64 = 720.0;
const SVG_H: f64 = 540.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 56.0;

fn render_svg(report: &ConvergenceReport) -> String {
    let rows: Vec<&ConvergenceRow> = report.rows.iter().filter(|r| r.mean_abs_error > 0.0).collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{SVG_W}" height="{SVG_H}" fill="white"/>"#);

    if rows.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="20" y="40" font-family="sans-serif">no nonzero errors to plot</text>"#
        );
        svg.push_str("</svg>\n");
        return svg;
    }

    let x_min = (rows[0].n as f64).log2();
    let x_max = (rows[rows.len() - 1].n as f64).log2().max(x_min + 1.0);
    // y range covers the data and both reference lines anchored at the
    // first plotted point.
    let anchor = (x_min, rows[0].mean_abs_error.log10());
    let span = x_max - x_min;
    let ref_half_end = anchor.1 - 0.5 * span * 2f64.log10();
    let ref_one_end = anchor.1 - span * 2f64.log10();
    let mut y_min = ref_one_end.min(ref_half_end);
    let mut y_max = anchor.1;
    for r in &rows {
        y_min = y_min.min(r.mean_abs_error.log10());
        y_max = y_max.max(r.mean_abs_error.log10());
    }
    let y_lo = y_min.floor();
    let y_hi = y_max.ceil().max(y_lo + 1.0);

    let px = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * (SVG_W - MARGIN_L - MARGIN_R);
    let py = |y: f64| SVG_H - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (SVG_H - MARGIN_T - MARGIN_B);

    // Axes and ticks.
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        px(x_min),
        py(y_lo),
        px(x_max),
        py(y_lo)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        px(x_min),
        py(y_lo),
        px(x_min),
        py(y_hi)
    );
    let mut e = x_min.ceil() as i64;
    while e as f64 <= x_max {
        let x = px(e as f64);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            py(y_lo),
            py(y_lo) + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">2^{e}</text>"#,
            py(y_lo) + 20.0
        );
        e += 1;
    }
    let mut dec = y_lo as i64;
    while dec as f64 <= y_hi {
        let y = py(dec as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#cccccc"/>"##,
            px(x_min),
            px(x_max)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">1e{dec}</text>"#,
            px(x_min) - 8.0,
            y + 4.0
        );
        dec += 1;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">n</text>"#,
        0.5 * (px(x_min) + px(x_max)),
        SVG_H - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" font-family="sans-serif" font-size="13" transform="rotate(-90 18 {:.2})" text-anchor="middle">mean absolute error</text>"#,
        0.5 * (py(y_lo) + py(y_hi)),
        0.5 * (py(y_lo) + py(y_hi))
    );

    // Reference lines anchored at the first plotted point.
    for (rate, dash, label) in [(0.5, "6 3", "n^-1/2"), (1.0, "2 3", "n^-1")] {
        let y_end = anchor.1 - rate * span * 2f64.log10();
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="{dash}"/>"#,
            px(x_min),
            py(anchor.1),
            px(x_max),
            py(y_end)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="gray">{label}</text>"#,
            px(x_max) - 46.0,
            py(y_end) - 5.0
        );
    }

    // The error series.
    let mut path = String::new();
    for (k, r) in rows.iter().enumerate() {
        let cmd = if k == 0 { 'M' } else { 'L' };
        let _ = write!(
            path,
            "{cmd}{:.2} {:.2} ",
            px((r.n as f64).log2()),
            py(r.mean_abs_error.log10())
        );
    }
    let _ = writeln!(
        svg,
        r##"<path d="{}" fill="none" stroke="#1f77b4" stroke-width="1.8"/>"##,
        path.trim_end()
    );
    for r in &rows {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"/>"##,
            px((r.n as f64).log2()),
            py(r.mean_abs_error.log10())
        );
    }

    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">slope {:.3} (ref: {})</text>"#,
        MARGIN_L + 4.0,
        MARGIN_T - 10.0,
        report.slope,
        xml_escape(&report.reference_provenance)
    );
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
