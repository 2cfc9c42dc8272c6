//! CSV and SVG output.
//!
//! Numbers are written with Rust's shortest round-trip formatting, which is
//! locale-free and deterministic.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{AgentSpec, ExperimentResults, SummaryTable};
use crate::error::{Error, Result};
use crate::rdcore::{write_rd_curve_csv, RdPoint};

pub const STEPS_FILE: &str = "steps.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SVG_FILE: &str = "summary.svg";
pub const RD_CURVE_FILE: &str = "rdcurve.csv";
pub const WARNINGS_FILE: &str = "warnings.csv";

pub const STEPS_HEADER: [&str; 13] = [
    "agent",
    "beta_mode",
    "beta",
    "seed",
    "t",
    "action",
    "reward",
    "expected_regret",
    "cum_regret",
    "rate_bits",
    "achieved_distortion",
    "ba_iterations",
    "psi_bar",
];

pub const SUMMARY_HEADER: [&str; 7] = [
    "agent",
    "beta_mode",
    "beta",
    "t",
    "mean_cum_regret",
    "ci95_lo",
    "ci95_hi",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputOptions {
    /// Replace existing output files.
    pub force: bool,
    pub svg: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self {
            force: false,
            svg: true,
        }
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn check_target(path: &Path, force: bool) -> Result<()> {
    if !force && path.exists() {
        return Err(Error::WouldOverwrite(path.to_path_buf()));
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

pub fn write_steps_csv<W: Write>(results: &ExperimentResults, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STEPS_HEADER)?;
    for tr in &results.trajectories {
        let agent = tr.agent;
        for s in &tr.steps {
            let (beta, rate, distortion, iters, psi) = match s.diagnostics {
                Some(d) => (
                    d.beta_used.to_string(),
                    d.rate_bits.to_string(),
                    d.achieved_distortion.to_string(),
                    d.ba_iterations.to_string(),
                    d.psi_bar.map(|p| p.to_string()).unwrap_or_default(),
                ),
                None => Default::default(),
            };
            w.write_record([
                agent.id().to_string(),
                agent.beta_mode().to_string(),
                beta,
                tr.seed.to_string(),
                s.t.to_string(),
                s.action.to_string(),
                s.reward.to_string(),
                s.expected_regret.to_string(),
                s.cum_regret.to_string(),
                rate,
                distortion,
                iters,
                psi,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(summary: &SummaryTable, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in &summary.rows {
        w.write_record([
            r.agent.id().to_string(),
            r.agent.beta_mode().to_string(),
            r.agent.beta_label(),
            r.t.to_string(),
            r.mean_cum_regret.to_string(),
            r.ci95_lo.to_string(),
            r.ci95_hi.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `steps.csv`, `summary.csv`, `summary.svg` (when enabled) and
/// `warnings.csv` (when some episodes failed) into `out_dir`. Existing files
/// are only replaced with `force`. Returns the paths written.
pub fn emit_outputs(
    results: &ExperimentResults,
    out_dir: &Path,
    opts: OutputOptions,
) -> Result<Vec<PathBuf>> {
    prepare_dir(out_dir)?;
    let steps = out_dir.join(STEPS_FILE);
    let summary = out_dir.join(SUMMARY_FILE);
    let svg = out_dir.join(SVG_FILE);
    let warnings = out_dir.join(WARNINGS_FILE);
    for path in [&steps, &summary, &svg, &warnings] {
        check_target(path, opts.force)?;
    }

    let mut written = Vec::new();
    let file = fs::File::create(&steps).map_err(|e| Error::io(&steps, e))?;
    write_steps_csv(results, std::io::BufWriter::new(file)).map_err(|e| Error::csv(&steps, e))?;
    written.push(steps);

    let file = fs::File::create(&summary).map_err(|e| Error::io(&summary, e))?;
    write_summary_csv(&results.summary, std::io::BufWriter::new(file))
        .map_err(|e| Error::csv(&summary, e))?;
    written.push(summary);

    if opts.svg {
        let doc = render_svg(&series_from_summary(&results.summary));
        fs::write(&svg, doc).map_err(|e| Error::io(&svg, e))?;
        written.push(svg);
    } else if opts.force && svg.exists() {
        fs::remove_file(&svg).map_err(|e| Error::io(&svg, e))?;
    }

    if !results.failures.is_empty() {
        let mut w = csv_writer(&warnings)?;
        let mut write = || -> csv::Result<()> {
            w.write_record(["agent", "seed", "error"])?;
            for f in &results.failures {
                w.write_record([f.agent.to_string(), f.seed.to_string(), f.message.clone()])?;
            }
            w.flush()?;
            Ok(())
        };
        write().map_err(|e| Error::csv(&warnings, e))?;
        written.push(warnings);
    } else if opts.force && warnings.exists() {
        fs::remove_file(&warnings).map_err(|e| Error::io(&warnings, e))?;
    }
    Ok(written)
}

/// Writes `rdcurve.csv` into `out_dir`.
pub fn emit_rd_curve(points: &[RdPoint], out_dir: &Path, force: bool) -> Result<PathBuf> {
    prepare_dir(out_dir)?;
    let path = out_dir.join(RD_CURVE_FILE);
    check_target(&path, force)?;
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_rd_curve_csv(points, std::io::BufWriter::new(file)).map_err(|e| Error::csv(&path, e))?;
    Ok(path)
}

/// One plotted line: mean cumulative regret with its confidence band.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(t, mean, lo, hi)`
    pub points: Vec<(f64, f64, f64, f64)>,
}

fn series_label(agent: &str, beta_mode: &str, beta: &str) -> String {
    match (beta_mode, beta) {
        ("", _) => agent.to_string(),
        ("fixed", b) => format!("{agent} beta={b}"),
        (mode, "") => format!("{agent} {mode}"),
        (mode, b) => format!("{agent} {mode} beta={b}"),
    }
}

pub fn series_from_summary(summary: &SummaryTable) -> Vec<Series> {
    let mut out: Vec<(AgentSpec, Series)> = Vec::new();
    for r in &summary.rows {
        let idx = match out.iter().position(|(a, _)| *a == r.agent) {
            Some(i) => i,
            None => {
                let label = series_label(r.agent.id(), r.agent.beta_mode(), &r.agent.beta_label());
                out.push((
                    r.agent,
                    Series {
                        label,
                        points: Vec::new(),
                    },
                ));
                out.len() - 1
            }
        };
        out[idx]
            .1
            .points
            .push((r.t as f64, r.mean_cum_regret, r.ci95_lo, r.ci95_hi));
    }
    out.into_iter().map(|(_, s)| s).collect()
}

/// Reads a `summary.csv` back into plot series, grouped by
/// `(agent, beta_mode, beta)` in order of first appearance.
pub fn read_summary_series(path: &Path) -> Result<Vec<Series>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != SUMMARY_HEADER {
        return Err(Error::Config(format!(
            "{}: expected header {}",
            path.display(),
            SUMMARY_HEADER.join(",")
        )));
    }
    let mut keys: Vec<(String, String, String)> = Vec::new();
    let mut series: Vec<Series> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let key = (
            record[0].to_string(),
            record[1].to_string(),
            record[2].to_string(),
        );
        let num = |i: usize| -> Result<f64> {
            record[i].parse::<f64>().map_err(|_| {
                Error::Config(format!("{}: bad number `{}`", path.display(), &record[i]))
            })
        };
        let point = (num(3)?, num(4)?, num(5)?, num(6)?);
        match keys.iter().position(|k| *k == key) {
            Some(i) => series[i].points.push(point),
            None => {
                series.push(Series {
                    label: series_label(&key.0, &key.1, &key.2),
                    points: vec![point],
                });
                keys.push(key);
            }
        }
    }
    Ok(series)
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];
const MAX_POINTS: usize = 400;

/// Minimal line chart of mean cumulative regret against time with shaded
/// confidence bands.
pub fn render_svg(series: &[Series]) -> String {
    let (width, height) = (900.0, 560.0);
    let (left, right, top, bottom) = (70.0, 220.0, 30.0, 50.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;

    let all = series.iter().flat_map(|s| s.points.iter());
    let t_max = all.clone().map(|p| p.0).fold(1.0f64, f64::max);
    let y_max = all.map(|p| p.3).fold(1e-12f64, f64::max);
    let x = |t: f64| left + plot_w * t / t_max;
    let y = |v: f64| top + plot_h * (1.0 - v.max(0.0) / y_max);

    let mut doc = String::new();
    let _ = writeln!(
        doc,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(doc, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        doc,
        r#"<line x1="{left}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{left}" y1="{top}" x2="{left}" y2="{b}" stroke="black"/>"#,
        b = top + plot_h,
        r = left + plot_w
    );
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let _ = writeln!(
            doc,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text><text x="{}" y="{}" text-anchor="end">{}</text>"#,
            x(frac * t_max),
            top + plot_h + 18.0,
            fmt_tick(frac * t_max),
            left - 6.0,
            y(frac * y_max) + 4.0,
            fmt_tick(frac * y_max)
        );
    }
    let _ = writeln!(
        doc,
        r#"<text x="{}" y="{}" text-anchor="middle">t</text><text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">cumulative regret</text>"#,
        left + plot_w / 2.0,
        height - 10.0,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let stride = s.points.len().div_ceil(MAX_POINTS).max(1);
        let mut pts: Vec<&(f64, f64, f64, f64)> = s.points.iter().step_by(stride).collect();
        if let Some(last) = s.points.last() {
            if pts.last() != Some(&last) {
                pts.push(last);
            }
        }
        let upper = pts.iter().map(|p| format!("{:.2},{:.2}", x(p.0), y(p.3)));
        let lower = pts
            .iter()
            .rev()
            .map(|p| format!("{:.2},{:.2}", x(p.0), y(p.2)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            doc,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.0), y(p.1)))
            .collect();
        let _ = writeln!(
            doc,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + plot_w + 15.0;
        let _ = writeln!(
            doc,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    doc.push_str("</svg>\n");
    doc
}

fn fmt_tick(v: f64) -> String {
    if v >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
