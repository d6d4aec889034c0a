//! Artifact emission: RFC-4180 CSV, JSONL run records, and static SVG
//! plots.
//!
//! Every number written to CSV round-trips: floats are printed with the
//! shortest representation that parses back to the identical bits. Files
//! are written to a temporary name in the target directory and renamed into
//! place, so a crash never leaves a half-written artifact behind, and every
//! write reports the SHA-256 of the final bytes.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::concentration::TailPoint;
use crate::error::Result;
use crate::ids::{ConvergenceRow, IdsCurve, IdsPoint};
use crate::lifshitz::ExponentFit;
use crate::perturbation::PathRow;

/// Round-trip float formatting: positional where it is short, scientific
/// where positional would sprawl. Both forms parse back bit-exactly.
pub fn format_float(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return v.to_string();
    }
    let a = v.abs();
    if (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

/// A CSV-representable row: fixed headers plus one stringified record.
pub trait CsvRow {
    fn headers() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

impl CsvRow for IdsPoint {
    fn headers() -> &'static [&'static str] {
        &["energy", "lower", "lower_stderr", "upper", "upper_stderr", "censored"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            format_float(self.energy),
            format_float(self.lower),
            format_float(self.lower_stderr),
            format_float(self.upper),
            format_float(self.upper_stderr),
            self.censored.to_string(),
        ]
    }
}

impl CsvRow for TailPoint {
    fn headers() -> &'static [&'static str] {
        &["lambda", "empirical", "ci_low", "ci_high", "bound"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            format_float(self.lambda),
            format_float(self.empirical),
            format_float(self.ci_low),
            format_float(self.ci_high),
            format_float(self.bound),
        ]
    }
}

impl CsvRow for PathRow {
    fn headers() -> &'static [&'static str] {
        &["t", "energy", "tangent", "remainder"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            format_float(self.t),
            format_float(self.energy),
            format_float(self.tangent),
            format_float(self.remainder),
        ]
    }
}

impl CsvRow for ConvergenceRow {
    fn headers() -> &'static [&'static str] {
        &["side_length", "band_sup", "band_at_median", "distance_to_previous"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            format_float(self.side_length),
            format_float(self.band_sup),
            format_float(self.band_at_median),
            format_float(self.distance_to_previous),
        ]
    }
}

/// One persisted file with its integrity digest.
#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    pub rows: usize,
}

fn persist_bytes(dir: &Path, name: &str, bytes: &[u8], rows: usize) -> Result<Artifact> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| e.error)?;
    Ok(Artifact { file: name.to_string(), sha256: hex::encode(Sha256::digest(bytes)), rows })
}

/// Writes `rows` as an RFC-4180 CSV (header always present, even for an
/// empty row set) via temp-file + rename, returning the digest record.
pub fn write_csv_atomic<R: CsvRow>(dir: &Path, name: &str, rows: &[R]) -> Result<Artifact> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(R::headers()).map_err(std::io::Error::other)?;
    for row in rows {
        writer.write_record(row.fields()).map_err(std::io::Error::other)?;
    }
    let bytes = writer.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    persist_bytes(dir, name, &bytes, rows.len())
}

/// Writes an SVG document atomically, same contract as the CSV writer.
pub fn write_svg_atomic(dir: &Path, name: &str, svg: &str) -> Result<Artifact> {
    persist_bytes(dir, name, svg.as_bytes(), 0)
}

/// Appends one schema-versioned record to a JSONL log (one object per
/// line). The log is append-only by construction.
pub fn append_jsonl<T: Serialize>(path: &Path, record: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(line.as_bytes())?;
    Ok(())
}

/// Reads the SHA-256 of a file on disk (used by determinism checks).
pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

// ---------------------------------------------------------------------------
// static SVG plots

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

/// Minimal data-space → pixel-space plotting surface. Axes are linear in
/// whatever transform the caller applied to the data first.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    body: String,
}

impl Frame {
    fn new(points: impl Iterator<Item = (f64, f64)>) -> Option<Frame> {
        let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points {
            if x.is_finite() && y.is_finite() {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
        if !(x0.is_finite() && y0.is_finite()) {
            return None;
        }
        // degenerate spans still deserve a visible box
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let (px, py) = (0.04 * (x1 - x0), 0.06 * (y1 - y0));
        Some(Frame { x0: x0 - px, x1: x1 + px, y0: y0 - py, y1: y1 + py, body: String::new() })
    }

    fn mx(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (PLOT_W - MARGIN_L - MARGIN_R)
    }

    fn my(&self, y: f64) -> f64 {
        PLOT_H - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (PLOT_H - MARGIN_T - MARGIN_B)
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, dashed: bool) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", self.mx(x), self.my(y)))
            .collect();
        let dash = if dashed { " stroke-dasharray=\"6,4\"" } else { "" };
        self.body.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>\n",
            coords.join(" ")
        ));
    }

    fn circles(&mut self, pts: &[(f64, f64)], color: &str) {
        for &(x, y) in pts.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            self.body.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>\n",
                self.mx(x),
                self.my(y)
            ));
        }
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (idx, (label, color)) in entries.iter().enumerate() {
            let y = MARGIN_T + 14.0 * idx as f64;
            self.body.push_str(&format!(
                "<rect x=\"{:.0}\" y=\"{:.0}\" width=\"10\" height=\"3\" fill=\"{color}\"/>\
                 <text x=\"{:.0}\" y=\"{:.0}\" font-size=\"11\">{label}</text>\n",
                PLOT_W - MARGIN_R - 150.0,
                y,
                PLOT_W - MARGIN_R - 135.0,
                y + 5.0,
            ));
        }
    }

    fn finish(self, title: &str, x_label: &str, y_label: &str) -> String {
        let mut ticks = String::new();
        for frac in [0.0_f64, 0.5, 1.0] {
            let x = self.x0 + frac * (self.x1 - self.x0);
            let y = self.y0 + frac * (self.y1 - self.y0);
            ticks.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{:.3}</text>\n",
                self.mx(x),
                PLOT_H - MARGIN_B + 16.0,
                x
            ));
            ticks.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{:.3}</text>\n",
                MARGIN_L - 6.0,
                self.my(y) + 3.0,
                y
            ));
        }
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W:.0}\" height=\"{PLOT_H:.0}\" \
             viewBox=\"0 0 {PLOT_W:.0} {PLOT_H:.0}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <rect x=\"{MARGIN_L:.0}\" y=\"{MARGIN_T:.0}\" width=\"{:.0}\" height=\"{:.0}\" \
             fill=\"none\" stroke=\"black\"/>\n\
             <text x=\"{:.0}\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n\
             <text x=\"{:.0}\" y=\"{:.0}\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>\n\
             <text x=\"16\" y=\"{:.0}\" font-size=\"12\" text-anchor=\"middle\" \
             transform=\"rotate(-90 16 {:.0})\">{y_label}</text>\n\
             {ticks}{}\
             </svg>\n",
            PLOT_W - MARGIN_L - MARGIN_R,
            PLOT_H - MARGIN_T - MARGIN_B,
            PLOT_W / 2.0,
            (MARGIN_L + PLOT_W - MARGIN_R) / 2.0,
            PLOT_H - 12.0,
            (MARGIN_T + PLOT_H - MARGIN_B) / 2.0,
            (MARGIN_T + PLOT_H - MARGIN_B) / 2.0,
            self.body,
        )
    }
}

/// Bracketed IDS in log10–log10 axes: the Dirichlet and Neumann edges of
/// the band. Censored or zero points are skipped (there is no log of an
/// unresolved zero). Returns None when nothing is plottable.
pub fn ids_band_svg(curve: &IdsCurve) -> Option<String> {
    let edge = |pick: fn(&IdsPoint) -> f64| -> Vec<(f64, f64)> {
        curve
            .points
            .iter()
            .filter(|p| !p.censored && pick(p) > 0.0)
            .map(|p| (p.energy.log10(), pick(p).log10()))
            .collect()
    };
    let lower = edge(|p| p.lower);
    let upper = edge(|p| p.upper);
    let mut frame = Frame::new(lower.iter().chain(&upper).copied())?;
    frame.polyline(&upper, "#1f77b4", false);
    frame.circles(&upper, "#1f77b4");
    frame.polyline(&lower, "#d62728", false);
    frame.circles(&lower, "#d62728");
    frame.legend(&[("band ceiling", "#1f77b4"), ("band floor", "#d62728")]);
    Some(frame.finish(
        &format!("spectral counting band, L = {}, d = {}", curve.side_length, curve.dim),
        "log10 E",
        "log10 N(E)",
    ))
}

/// Double-log exponent plot: ln|ln N| against ln E with the weighted fit
/// line overlaid. `points` are the admissible (ln E, ln|ln N|) pairs.
pub fn double_log_fit_svg(points: &[(f64, f64)], fit: &ExponentFit) -> Option<String> {
    let mut frame = Frame::new(points.iter().copied())?;
    let line: Vec<(f64, f64)> = [frame.x0, frame.x1]
        .iter()
        .map(|&x| (x, fit.ln_c - fit.gamma_hat * x))
        .collect();
    frame.polyline(&line, "#2ca02c", true);
    frame.circles(points, "#1f77b4");
    frame.legend(&[("data", "#1f77b4"), ("weighted fit", "#2ca02c")]);
    Some(frame.finish(
        &format!("tail exponent fit: gamma = {:.3} +/- {:.3}", fit.gamma_hat, fit.stderr),
        "ln E",
        "ln |ln N|",
    ))
}

/// Deviation tails against the sub-Gaussian bound, log10 probability axis.
/// Zero-probability empirical points are pinned to the floor of the frame.
pub fn tail_bound_svg(points: &[TailPoint], title: &str) -> Option<String> {
    if points.is_empty() {
        return None;
    }
    let floor = points
        .iter()
        .flat_map(|p| [p.empirical, p.bound])
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min)
        .max(1e-300);
    let logv = |v: f64| if v > 0.0 { v.log10() } else { floor.log10() - 0.5 };
    let bound: Vec<(f64, f64)> = points.iter().map(|p| (p.lambda, logv(p.bound))).collect();
    let emp: Vec<(f64, f64)> = points.iter().map(|p| (p.lambda, logv(p.empirical))).collect();
    let ci: Vec<(f64, f64)> = points.iter().map(|p| (p.lambda, logv(p.ci_high))).collect();
    let mut frame = Frame::new(bound.iter().chain(&emp).chain(&ci).copied())?;
    frame.polyline(&bound, "#2ca02c", false);
    frame.polyline(&ci, "#9467bd", true);
    frame.circles(&emp, "#1f77b4");
    frame.legend(&[
        ("analytic bound", "#2ca02c"),
        ("empirical", "#1f77b4"),
        ("99% CI ceiling", "#9467bd"),
    ]);
    Some(frame.finish(title, "deviation lambda", "log10 probability"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_in_both_regimes() {
        for v in [
            0.0,
            -0.0,
            1.0 / 3.0,
            6.02e23,
            -1.7e-308,
            2.2250738585072014e-308,
            f64::MAX,
            f64::MIN_POSITIVE,
            std::f64::consts::PI,
            1e-4,
            9.999e-5,
        ] {
            let s = format_float(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} → {s} → {back}");
        }
        assert_eq!(format_float(f64::NAN), "NaN");
    }

    #[test]
    fn csv_is_rfc4180_with_headers_even_when_empty() {
        let dir = tempfile::tempdir().unwrap();
        let artifact = write_csv_atomic::<IdsPoint>(dir.path(), "empty.csv", &[]).unwrap();
        assert_eq!(artifact.rows, 0);
        let text = std::fs::read_to_string(dir.path().join("empty.csv")).unwrap();
        assert_eq!(text, "energy,lower,lower_stderr,upper,upper_stderr,censored\n");

        let rows = vec![IdsPoint {
            energy: 0.125,
            lower: 1.0 / 3.0,
            lower_stderr: 1e-9,
            upper: 0.5,
            upper_stderr: 2e-9,
            censored: false,
        }];
        let artifact = write_csv_atomic(dir.path(), "one.csv", &rows).unwrap();
        assert_eq!(artifact.rows, 1);
        let text = std::fs::read_to_string(dir.path().join("one.csv")).unwrap();
        let mut lines = text.lines();
        lines.next().unwrap();
        let data = lines.next().unwrap();
        let energy: f64 = data.split(',').next().unwrap().parse().unwrap();
        assert_eq!(energy, 0.125);
        assert!(data.ends_with("false"));
    }

    #[test]
    fn rewriting_identical_rows_gives_identical_digests() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![IdsPoint {
            energy: 0.1,
            lower: 0.25,
            lower_stderr: 0.0,
            upper: 0.5,
            upper_stderr: 0.0,
            censored: true,
        }];
        let a = write_csv_atomic(dir.path(), "a.csv", &rows).unwrap();
        let b = write_csv_atomic(dir.path(), "b.csv", &rows).unwrap();
        assert_eq!(a.sha256, b.sha256);
        assert_eq!(a.sha256, file_sha256(&dir.path().join("a.csv")).unwrap());
    }

    #[test]
    fn jsonl_appends_one_line_per_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        append_jsonl(&path, &serde_json::json!({"schema": 1, "idx": 0})).unwrap();
        append_jsonl(&path, &serde_json::json!({"schema": 1, "idx": 1})).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        for (idx, line) in lines.iter().enumerate() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["idx"], idx);
        }
    }

    #[test]
    fn svg_emitters_produce_wellformed_documents() {
        let curve = IdsCurve {
            points: (1..=20)
                .map(|k| {
                    let e = 0.05 * k as f64;
                    IdsPoint {
                        energy: e,
                        lower: (0.01 * k as f64).min(0.9),
                        lower_stderr: 1e-3,
                        upper: (0.02 * k as f64).min(0.95),
                        upper_stderr: 1e-3,
                        censored: k == 1,
                    }
                })
                .collect(),
            dim: 1,
            side_length: 8.0,
            points_per_side: 32,
            samples: 100,
            skipped: 0,
            seed: 0,
        };
        let svg = ids_band_svg(&curve).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("polyline"));

        let fit = ExponentFit {
            gamma_hat: 0.5,
            stderr: 0.01,
            ln_c: 0.0,
            window: (0.05, 0.5),
            points_used: 19,
            censored_dropped: 1,
        };
        let pts: Vec<(f64, f64)> = (1..10).map(|k| (k as f64 * 0.1, 1.0 - k as f64 * 0.05)).collect();
        let svg = double_log_fit_svg(&pts, &fit).unwrap();
        assert!(svg.contains("gamma = 0.500"));

        let tails: Vec<TailPoint> = (0..8)
            .map(|k| TailPoint {
                lambda: k as f64 * 0.1,
                empirical: if k < 6 { 0.5_f64.powi(k) } else { 0.0 },
                ci_low: 0.0,
                ci_high: 0.6_f64.powi(k),
                bound: 2.0 * (-0.5 * k as f64).exp(),
            })
            .collect();
        let svg = tail_bound_svg(&tails, "deviation tails").unwrap();
        assert!(svg.contains("analytic bound"));

        // nothing plottable → no document
        let empty = IdsCurve { points: vec![], ..curve };
        assert!(ids_band_svg(&empty).is_none());
    }

    #[test]
    fn temp_files_do_not_linger() {
        let dir = tempfile::tempdir().unwrap();
        write_csv_atomic::<IdsPoint>(dir.path(), "x.csv", &[]).unwrap();
        write_svg_atomic(dir.path(), "y.svg", "<svg xmlns=\"http://www.w3.org/2000/svg\"/>")
            .unwrap();
        let names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(sorted, vec!["x.csv", "y.svg"]);
    }
}
