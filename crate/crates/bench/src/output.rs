//! `trials.csv`, `summary.csv`, `grid_check.csv` and `errors.svg`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::Method;
use crate::error::{BenchError, Result};
use crate::runner::{GridCheckRow, QuantileSummary, Stage, SummaryRow, TrialResult};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_trials_csv(trials: &[TrialResult], methods: &[Method], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["trial".to_string(), "t".to_string(), "truth".to_string()];
    for m in methods {
        for col in ["filter_est", "smooth_est", "filter_abs_err", "smooth_abs_err"] {
            header.push(format!("{}_{col}", m.id()));
        }
    }
    w.write_record(&header)?;
    for tr in trials {
        for t in 0..tr.truth.len() {
            let mut rec = vec![tr.trial.to_string(), t.to_string(), format_float(tr.truth[t])];
            for &m in methods {
                let r = tr
                    .method(m)
                    .ok_or_else(|| BenchError::Config(format!("trial {} lacks method {m}", tr.trial)))?;
                rec.extend(
                    [r.filter_est[t], r.smooth_est[t], r.filter_err[t], r.smooth_err[t]]
                        .into_iter()
                        .map(format_float),
                );
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(summary: &QuantileSummary, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "method", "stage", "median", "q10", "q90"])?;
    for r in &summary.rows {
        w.write_record([
            r.t.to_string(),
            r.method.id().to_string(),
            r.stage.id().to_string(),
            format_float(r.median),
            format_float(r.q10),
            format_float(r.q90),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid_check_csv(rows: &[GridCheckRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial", "horizon", "recursions_agree", "grid_objective", "amp_objective"])?;
    for r in rows {
        w.write_record([
            r.trial.to_string(),
            r.horizon.to_string(),
            r.recursions_agree.to_string(),
            format_float(r.grid_objective),
            format_float(r.amp_objective),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `trials.csv` and `summary.csv` into `dir`; returns their paths.
pub fn emit_csv(trials: &[TrialResult], summary: &QuantileSummary, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let trials_path = dir.join("trials.csv");
    let summary_path = dir.join("summary.csv");
    write_trials_csv(trials, &summary.methods, &trials_path)?;
    write_summary_csv(summary, &summary_path)?;
    Ok(vec![trials_path, summary_path])
}

fn color(m: Method) -> &'static str {
    match m {
        Method::Amp => "#1f77b4",
        Method::Klf => "#d62728",
        Method::Iplf => "#2ca02c",
    }
}

/// Pixel geometry of `errors.svg`: two stacked panels sharing the time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotLayout {
    pub width: f64,
    pub height: f64,
    pub left: f64,
    pub plot_width: f64,
    pub panel_top: [f64; 2],
    pub panel_height: f64,
    pub horizon: usize,
    /// Upper end of the y axis per panel (filter, smoother).
    pub y_max: [f64; 2],
}

impl PlotLayout {
    pub fn for_summary(summary: &QuantileSummary) -> Self {
        let y_max = [Stage::Filter, Stage::Smoother].map(|stage| {
            let top = summary
                .rows
                .iter()
                .filter(|r| r.stage == stage && r.q90.is_finite())
                .fold(0.0_f64, |m, r| m.max(r.q90));
            if top > 0.0 {
                top * 1.05
            } else {
                1.0
            }
        });
        Self {
            width: 900.0,
            height: 640.0,
            left: 70.0,
            plot_width: 700.0,
            panel_top: [40.0, 350.0],
            panel_height: 240.0,
            horizon: summary.horizon,
            y_max,
        }
    }

    fn panel(stage: Stage) -> usize {
        match stage {
            Stage::Filter => 0,
            Stage::Smoother => 1,
        }
    }

    pub fn x_of(&self, t: usize) -> f64 {
        self.left + self.plot_width * t as f64 / self.horizon.max(1) as f64
    }

    pub fn y_of(&self, stage: Stage, v: f64) -> f64 {
        let p = Self::panel(stage);
        self.panel_top[p] + self.panel_height * (1.0 - v / self.y_max[p])
    }

    /// Inverse of [`PlotLayout::y_of`].
    pub fn value_of(&self, stage: Stage, y: f64) -> f64 {
        let p = Self::panel(stage);
        (1.0 - (y - self.panel_top[p]) / self.panel_height) * self.y_max[p]
    }
}

fn points(pts: impl Iterator<Item = (f64, f64)>) -> String {
    pts.map(|(x, y)| format!("{x:.3},{y:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Render the two-panel quantile band chart as a standalone SVG document.
pub fn render_svg(summary: &QuantileSummary) -> Result<String> {
    if summary.rows.is_empty() {
        return Err(BenchError::Config("cannot plot an empty summary".into()));
    }
    let lay = PlotLayout::for_summary(summary);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = lay.width,
        h = lay.height
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, lay.width, lay.height);

    for stage in [Stage::Filter, Stage::Smoother] {
        let p = PlotLayout::panel(stage);
        let top = lay.panel_top[p];
        let bottom = top + lay.panel_height;
        let right = lay.left + lay.plot_width;
        let title = match stage {
            Stage::Filter => "Filter absolute error",
            Stage::Smoother => "Smoother absolute error",
        };
        let _ = writeln!(s, r#"<g class="panel" data-stage="{}">"#, stage.id());
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-weight="bold">{title}</text>"#, lay.left, top - 10.0);
        let _ = writeln!(
            s,
            r##"<rect x="{:.3}" y="{top:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="#444"/>"##,
            lay.left, lay.plot_width, lay.panel_height
        );
        for k in 0..=4 {
            let v = lay.y_max[p] * k as f64 / 4.0;
            let y = lay.y_of(stage, v);
            let _ = writeln!(
                s,
                r##"<line x1="{:.3}" y1="{y:.3}" x2="{right:.3}" y2="{y:.3}" stroke="#ddd"/><text x="{:.3}" y="{:.3}" text-anchor="end">{v:.2}</text>"##,
                lay.left,
                lay.left - 6.0,
                y + 4.0
            );
        }
        for k in 0..=4 {
            let t = lay.horizon * k / 4;
            let x = lay.x_of(t);
            let _ = writeln!(s, r#"<text x="{x:.3}" y="{:.3}" text-anchor="middle">{t}</text>"#, bottom + 16.0);
        }
        for &m in &summary.methods {
            let rows: Vec<&SummaryRow> = summary.series(m, stage).collect();
            let upper = rows.iter().map(|r| (lay.x_of(r.t), lay.y_of(stage, r.q90)));
            let lower = rows.iter().rev().map(|r| (lay.x_of(r.t), lay.y_of(stage, r.q10)));
            let _ = writeln!(
                s,
                r#"<polygon class="band" data-method="{}" data-stage="{}" points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"#,
                m.id(),
                stage.id(),
                points(upper.chain(lower)),
                color(m)
            );
            let median = rows.iter().map(|r| (lay.x_of(r.t), lay.y_of(stage, r.median)));
            let _ = writeln!(
                s,
                r#"<polyline class="median" data-method="{}" data-stage="{}" points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                m.id(),
                stage.id(),
                points(median),
                color(m)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">time step</text>"#,
        lay.left + lay.plot_width / 2.0,
        lay.height - 8.0
    );
    let _ = writeln!(s, r#"<g class="legend">"#);
    for (k, &m) in summary.methods.iter().enumerate() {
        let y = 60.0 + 22.0 * k as f64;
        let x = lay.left + lay.plot_width + 20.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="14" height="10" fill="{c}" fill-opacity="0.4" stroke="{c}"/><text x="{:.1}" y="{y:.1}">{}</text>"#,
            y - 9.0,
            x + 20.0,
            m.label(),
            c = color(m)
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `errors.svg` into `dir`.
pub fn emit_plot(summary: &QuantileSummary, dir: &Path) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join("errors.svg");
    fs::write(&path, render_svg(summary)?)?;
    Ok(path)
}
