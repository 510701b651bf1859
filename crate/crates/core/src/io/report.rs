use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::estimate::Method;
use crate::sim::{ScenarioResult, TOTAL_CIF_PROBS};
use crate::step::StepFunction;

pub const TOOL: &str = "cifkit";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn io_err(e: std::io::Error) -> Error {
    Error::io("<report output>", e)
}

/// Comment lines opening every emitted table.
pub fn write_header<W: Write>(out: &mut W, fields: &[(&str, String)]) -> Result<()> {
    writeln!(out, "# tool={TOOL} {VERSION}").map_err(io_err)?;
    for (k, v) in fields {
        writeln!(out, "# {k}={v}").map_err(io_err)?;
    }
    Ok(())
}

/// Which curve a curve file holds.
#[derive(Debug, Clone)]
pub struct CurveMeta {
    pub method: Method,
    /// Cause number or `total`.
    pub cause: String,
    pub cause_label: String,
    /// `name=value;...`.
    pub profile: String,
    pub seed: u64,
}

/// One row at t = 0 and one per jump of `curve`; band columns when a
/// half-width is given. Values are written unclamped.
pub fn write_curve_csv<W: Write>(
    mut out: W,
    meta: &CurveMeta,
    curve: &StepFunction,
    half_width: Option<f64>,
) -> Result<()> {
    let mut fields = vec![
        ("method", meta.method.to_string()),
        ("cause", meta.cause.clone()),
        ("cause_label", meta.cause_label.clone()),
        ("z", meta.profile.clone()),
        ("seed", meta.seed.to_string()),
    ];
    if let Some(h) = half_width {
        fields.push(("band_half_width", h.to_string()));
    }
    write_header(&mut out, &fields)?;
    let mut w = csv::Writer::from_writer(out);
    if half_width.is_some() {
        w.write_record(["time", "cif", "lower", "upper"])?;
    } else {
        w.write_record(["time", "cif"])?;
    }
    let points = std::iter::once((0.0, curve.initial_value()))
        .chain(curve.jump_times().iter().copied().zip(curve.values().iter().copied()));
    for (t, v) in points {
        match half_width {
            Some(h) => w.write_record([t.to_string(), v.to_string(), (v - h).to_string(), (v + h).to_string()])?,
            None => w.write_record([t.to_string(), v.to_string()])?,
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// One row per (scenario, method, cause) with the bias, end-SD, coverage
/// and half-width columns.
pub fn write_results_csv<W: Write>(mut out: W, results: &[ScenarioResult], seed: u64) -> Result<()> {
    write_header(&mut out, &[("table", "results".into()), ("seed", seed.to_string())])?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scenario",
        "shape",
        "n",
        "relative_risk",
        "z",
        "censoring",
        "covariate_law",
        "method",
        "cause",
        "max_bias",
        "end_sd",
        "coverage",
        "half_width",
        "replications",
        "completed",
        "fit_failures",
        "bootstrap_failures",
    ])?;
    for r in results {
        let c = &r.config;
        for m in &r.metrics {
            w.write_record([
                c.id.to_string(),
                c.shape.to_string(),
                c.n.to_string(),
                c.relative_risk.to_string(),
                c.z_eval.to_string(),
                c.censor_rate.to_string(),
                c.covariate_law.to_string(),
                m.method.to_string(),
                cause_letter(m.cause),
                format!("{:.6}", m.max_bias),
                format!("{:.6}", m.end_sd),
                opt(m.coverage),
                opt(m.half_width_mean),
                c.replications.to_string(),
                r.completed.to_string(),
                r.fit_failures.to_string(),
                r.bootstrap_failures.to_string(),
            ])?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

fn cause_letter(cause: u32) -> String {
    match cause {
        1 => "A".into(),
        2 => "B".into(),
        j => j.to_string(),
    }
}

/// Total CIF at the last event time, Methods 1 and 2, uncensored cells.
pub fn write_quantiles_csv<W: Write>(mut out: W, results: &[ScenarioResult], seed: u64) -> Result<()> {
    write_header(&mut out, &[("table", "total_cif_quantiles".into()), ("seed", seed.to_string())])?;
    let mut w = csv::Writer::from_writer(out);
    let mut head: Vec<String> = ["scenario", "shape", "n", "relative_risk", "z", "covariate_law", "method"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    head.extend(TOTAL_CIF_PROBS.iter().map(|p| format!("q{p}")));
    w.write_record(&head)?;
    for r in results {
        let c = &r.config;
        for q in &r.total_cif_quantiles {
            let mut row = vec![
                c.id.to_string(),
                c.shape.to_string(),
                c.n.to_string(),
                c.relative_risk.to_string(),
                c.z_eval.to_string(),
                c.covariate_law.to_string(),
                q.method.to_string(),
            ];
            row.extend(q.values.iter().map(|v| format!("{v:.4}")));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// `key = value` lines.
pub fn write_manifest<W: Write>(mut out: W, entries: &[(String, String)]) -> Result<()> {
    writeln!(out, "tool = {TOOL}").map_err(io_err)?;
    writeln!(out, "version = {VERSION}").map_err(io_err)?;
    for (k, v) in entries {
        writeln!(out, "{k} = {v}").map_err(io_err)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub label: String,
    pub curve: StepFunction,
    pub half_width: Option<f64>,
}

const PALETTE: [&str; 6] = ["#c0392b", "#2471a3", "#1e8449", "#7d3c98", "#b9770e", "#566573"];

/// Step-style SVG of the series on [0, 1], bands dashed. Values are clamped
/// to the unit interval for display only.
pub fn render_svg(title: &str, series: &[PlotSeries]) -> String {
    let (width, height, margin) = (640.0, 420.0, 50.0);
    let t_max = series
        .iter()
        .filter_map(|s| s.curve.jump_times().last().copied())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE)
        * 1.05;
    let x = |t: f64| margin + (width - 2.0 * margin) * t / t_max;
    let y = |v: f64| height - margin - (height - 2.0 * margin) * v.clamp(0.0, 1.0);
    let path = |curve: &StepFunction, shift: f64| {
        let mut d = format!("M{:.2},{:.2}", x(0.0), y(curve.initial_value() + shift));
        for (&t, &v) in curve.jump_times().iter().zip(curve.values()) {
            let _ = write!(d, " H{:.2} V{:.2}", x(t), y(v + shift));
        }
        let _ = write!(d, " H{:.2}", x(t_max));
        d
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{m},{m} V{b} H{r}" fill="none" stroke="black"/>"#,
        m = margin,
        b = height - margin,
        r = width - margin
    );
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#,
            margin - 6.0,
            y(v) + 4.0
        );
        let t = t_max * v;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t:.2}</text>"#,
            x(t),
            height - margin + 16.0
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
            path(&s.curve, 0.0)
        );
        if let Some(h) = s.half_width {
            for shift in [-h, h] {
                let _ = writeln!(
                    svg,
                    r#"<path d="{}" fill="none" stroke="{color}" stroke-dasharray="4 3"/>"#,
                    path(&s.curve, shift)
                );
            }
        }
        let ly = margin + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}" fill="{color}">{}</text>"#,
            width - margin - 150.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
