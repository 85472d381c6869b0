use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::report::EvalReport;
use crate::error::{Error, Result};

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// Index of the smallest finite value; the first one on ties.
fn best_index(values: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = v.filter(|v| v.is_finite()) {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Models × horizons table of normalized MSE with the best value of each
/// column in bold.
pub fn markdown_table(report: &EvalReport) -> String {
    let labels = report.labels();
    let horizons = report.horizons();
    let mut s = String::from("| Model |");
    for h in &horizons {
        let _ = write!(s, " {h} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---:|".repeat(horizons.len()));
    s.push('\n');
    let cells: Vec<Vec<Option<f64>>> = labels
        .iter()
        .map(|l| {
            horizons
                .iter()
                .map(|&h| report.find(l, h).filter(|r| !r.skipped).map(|r| r.mse))
                .collect()
        })
        .collect();
    let best: Vec<Option<usize>> = (0..horizons.len())
        .map(|j| best_index(&cells.iter().map(|row| row[j]).collect::<Vec<_>>()))
        .collect();
    for (i, label) in labels.iter().enumerate() {
        let _ = write!(s, "| {label} |");
        for (j, &h) in horizons.iter().enumerate() {
            let cell = match (cells[i][j], report.find(label, h)) {
                (Some(v), _) if best[j] == Some(i) => format!("**{v:.4}**"),
                (Some(v), _) => format!("{v:.4}"),
                (None, Some(_)) => "skipped".to_string(),
                (None, None) => "-".to_string(),
            };
            let _ = write!(s, " {cell} |");
        }
        s.push('\n');
    }
    s
}

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
    dashed: bool,
}

fn line_plot(title: &str, x_label: &str, x_ticks: &[(f64, String)], series: &[Series]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (70.0, 180.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let xs: Vec<f64> = x_ticks.iter().map(|t| t.0).chain(series.iter().flat_map(|s| s.points.iter().map(|p| p.0))).collect();
    let (x0, x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let (x0, x1) = if x0.is_finite() && x1 > x0 { (x0, x1) } else { (0.0, 1.0) };
    let y1 = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let y1 = if y1 > 0.0 { y1 * 1.1 } else { 1.0 };
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + ph - y / y1 * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{title}</text>"#, left + pw / 2.0);
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for (x, label) in x_ticks {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{label}</text>"#, px(*x), top + ph + 18.0);
    }
    for k in 0..=4 {
        let v = y1 * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, left - 6.0, py(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, left + pw / 2.0, h - 10.0);
    let _ = writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">MSE</text>"#, top + ph / 2.0, top + ph / 2.0);
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#, pts.join(" "));
        let ly = top + 14.0 + 18.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>"#, left + pw + 12.0, left + pw + 32.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, left + pw + 38.0, ly + 4.0, xml_escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// MSE against horizon, one line per table row. Horizons are evenly spaced.
pub fn horizon_plot(report: &EvalReport) -> String {
    let horizons = report.horizons();
    let ticks: Vec<(f64, String)> = horizons.iter().enumerate().map(|(i, h)| (i as f64, h.to_string())).collect();
    let series: Vec<Series> = report
        .labels()
        .into_iter()
        .map(|l| Series {
            points: horizons
                .iter()
                .enumerate()
                .filter_map(|(i, &h)| report.find(&l, h).filter(|r| !r.skipped).map(|r| (i as f64, r.mse)))
                .collect(),
            dashed: false,
            name: l,
        })
        .collect();
    line_plot("MSE vs horizon", "horizon (steps)", &ticks, &series)
}

fn distinct_fractions(report: &EvalReport) -> Vec<f64> {
    let mut f: Vec<f64> = report.rows.iter().map(|r| r.meta.data_fraction).collect();
    f.sort_by(f64::total_cmp);
    f.dedup();
    f
}

/// Horizon-averaged MSE against training-data fraction, one line per model;
/// zero-shot models are drawn dashed.
pub fn fraction_plot(report: &EvalReport) -> String {
    let fractions = distinct_fractions(report);
    let ticks: Vec<(f64, String)> = fractions.iter().map(|&f| (f, format!("{f}"))).collect();
    let mut models: Vec<(String, bool)> = Vec::new();
    for r in &report.rows {
        let key = (r.meta.model.clone(), r.meta.mode == "zero-shot");
        if !models.contains(&key) {
            models.push(key);
        }
    }
    let series: Vec<Series> = models
        .into_iter()
        .map(|(m, zero)| {
            let points = fractions
                .iter()
                .filter_map(|&f| {
                    let v: Vec<f64> = report
                        .rows
                        .iter()
                        .filter(|r| r.meta.model == m && r.meta.data_fraction == f && !r.skipped)
                        .map(|r| r.mse)
                        .collect();
                    (!v.is_empty()).then(|| (f, v.iter().sum::<f64>() / v.len() as f64))
                })
                .collect();
            Series { name: m, points, dashed: zero }
        })
        .collect();
    line_plot("Mean MSE vs training data fraction", "training data fraction", &ticks, &series)
}

/// Write `report.csv`, `report.md` and `mse_vs_horizon.svg` to `dir`, plus
/// `mse_vs_fraction.svg` when the report spans several data fractions.
pub fn render_report(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    put("report.csv", csv)?;
    put("report.md", format!("# Forecast MSE (normalized)\n\n{}", markdown_table(report)).into_bytes())?;
    put("mse_vs_horizon.svg", horizon_plot(report).into_bytes())?;
    if distinct_fractions(report).len() > 1 {
        put("mse_vs_fraction.svg", fraction_plot(report).into_bytes())?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{HorizonScores, RowMeta};

    fn rep(models: &[(&str, Vec<f64>)], horizons: &[usize]) -> EvalReport {
        let mut r = EvalReport::default();
        for (m, mse) in models {
            let meta = RowMeta { model: m.to_string(), mode: "scratch".into(), seed: 0, data_fraction: 1.0, scope: "plant".into() };
            r.push_scores(&meta, &HorizonScores {
                horizons: horizons.to_vec(),
                raw_mse: vec![[0.0; 4]; mse.len()],
                mse: mse.clone(),
                n_windows: 1,
                skipped: 0,
            });
        }
        r
    }

    #[test]
    fn six_by_six_table_with_one_best_per_column() {
        let h = [1, 6, 12, 24, 48, 96];
        let models: Vec<(&str, Vec<f64>)> = ["Timer", "Timer-scratch", "Transformer", "Transformer-mini", "LSTM", "Zero-shot"]
            .iter()
            .enumerate()
            .map(|(i, m)| (*m, h.iter().map(|&x| ((i * 7 + x) % 5) as f64 * 0.1 + 0.1).collect()))
            .collect();
        let md = markdown_table(&rep(&models, &h));
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 8);
        assert_eq!(lines[0], "| Model | 1 | 6 | 12 | 24 | 48 | 96 |");
        for j in 0..6 {
            let bold = lines[2..].iter().filter(|l| l.split('|').nth(j + 2).unwrap().contains("**")).count();
            assert_eq!(bold, 1);
        }
    }

    #[test]
    fn ties_flag_first_and_single_row_is_one_cell() {
        let md = markdown_table(&rep(&[("A", vec![0.5]), ("B", vec![0.5])], &[1]));
        assert!(md.contains("| A | **0.5000** |") && md.contains("| B | 0.5000 |"));
        let one = markdown_table(&rep(&[("A", vec![0.25])], &[3]));
        assert_eq!(one, "| Model | 3 |\n|---|---:|\n| A | **0.2500** |\n");
    }

    #[test]
    fn empty_report_still_renders() {
        let dir = tempfile::tempdir().unwrap();
        let files = render_report(&EvalReport::default(), dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        assert_eq!(fs::read_to_string(dir.path().join("report.csv")).unwrap().lines().count(), 1);
        assert!(fs::read_to_string(dir.path().join("mse_vs_horizon.svg")).unwrap().ends_with("</svg>\n"));
    }
}
