//! Report rendering: effect summaries, posterior curves, ground truths,
//! and simulation-study metrics as CSV, JSON, and aligned plain-text
//! tables.
//!
//! Every emitter is a pure function of its input — no timestamps, no
//! environment lookups — so a rerun with the same seed produces
//! byte-identical artifacts. CSV and JSON render numbers in shortest
//! round-trip form (full precision); the plain-text tables round effects
//! to two significant figures for reading.

use serde::Serialize;

use crate::data::Mode;
use crate::gcomp::{
    equal_tailed_interval, EffectSummary, Estimand, GcompPosterior, ARM_LABELS,
};
use crate::sim::{SimReport, TrueEffects};
use crate::Result;

// ---------------------------------------------------------------------------
// Effects
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EffectCsvRow<'a> {
    visit: usize,
    time: f64,
    event: &'a str,
    estimand: String,
    mean: f64,
    lower: f64,
    upper: f64,
}

fn event_label(event: Option<u8>) -> &'static str {
    match event {
        None => "",
        Some(1) => "1",
        Some(2) => "2",
        Some(_) => "?",
    }
}

/// Effects as CSV: one row per (visit, event, estimand) with full-precision
/// mean and interval bounds.
pub fn effects_csv(summary: &EffectSummary) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &summary.rows {
        writer.serialize(EffectCsvRow {
            visit: row.visit,
            time: row.time,
            event: event_label(row.event),
            estimand: row.estimand.to_string(),
            mean: row.mean,
            lower: row.lower,
            upper: row.upper,
        })?;
    }
    finish_csv(writer)
}

#[derive(Serialize)]
struct EffectJsonRow<'a> {
    visit: usize,
    time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    event: Option<u8>,
    estimand: Estimand,
    mean: f64,
    lower: f64,
    upper: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<&'a [f64]>,
}

#[derive(Serialize)]
struct EffectsJson<'a> {
    mode: Mode,
    level: f64,
    rows: Vec<EffectJsonRow<'a>>,
}

/// Effects as pretty JSON. `emit_samples` controls whether each row also
/// carries its raw posterior samples.
pub fn effects_json(summary: &EffectSummary, emit_samples: bool) -> Result<String> {
    let doc = EffectsJson {
        mode: summary.mode,
        level: summary.level,
        rows: summary
            .rows
            .iter()
            .map(|row| EffectJsonRow {
                visit: row.visit,
                time: row.time,
                event: row.event,
                estimand: row.estimand,
                mean: row.mean,
                lower: row.lower,
                upper: row.upper,
                samples: emit_samples.then_some(row.samples.as_slice()),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

fn render_table(header: Vec<String>, rows: Vec<Vec<String>>) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let render_row = |cells: &[String], out: &mut String| {
        for (index, (cell, width)) in cells.iter().zip(&widths).enumerate() {
            if index > 0 {
                out.push_str("  ");
            }
            out.push_str(cell);
            for _ in cell.len()..*width {
                out.push(' ');
            }
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    };
    render_row(&header, &mut out);
    for row in &rows {
        render_row(row, &mut out);
    }
    out
}

/// Effects as an aligned plain-text table, one line per visit (and event),
/// columns IDE/IIE/TE rendered as `point(lower, upper)` at two significant
/// figures.
pub fn effects_table(summary: &EffectSummary) -> String {
    let competing = summary.mode == Mode::Competing;
    let mut header = vec!["visit".to_string(), "time".to_string()];
    if competing {
        header.push("event".to_string());
    }
    for estimand in
        [Estimand::DirectEffect, Estimand::IndirectEffect, Estimand::TotalEffect]
    {
        header.push(estimand.to_string());
    }

    // Rows are grouped by (visit, event) with the three estimands as
    // columns; the summary is already sorted that way.
    let mut keys: Vec<(usize, Option<u8>, f64)> = Vec::new();
    for row in &summary.rows {
        if !keys.iter().any(|(v, e, _)| *v == row.visit && *e == row.event) {
            keys.push((row.visit, row.event, row.time));
        }
    }
    let mut rows = Vec::with_capacity(keys.len());
    for (visit, event, time) in keys {
        let mut cells = vec![visit.to_string(), format!("{time}")];
        if competing {
            cells.push(event_label(event).to_string());
        }
        for estimand in
            [Estimand::DirectEffect, Estimand::IndirectEffect, Estimand::TotalEffect]
        {
            let cell = summary
                .row(visit, event, estimand)
                .map(|r| r.format())
                .unwrap_or_else(|| "-".to_string());
            cells.push(cell);
        }
        rows.push(cells);
    }

    let percent = summary.level * 100.0;
    format!(
        "interventional effects ({percent}% equal-tailed credible intervals)\n{}",
        render_table(header, rows)
    )
}

// ---------------------------------------------------------------------------
// Curves
// ---------------------------------------------------------------------------

/// One summarized posterior-curve value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    /// Arm label from [`ARM_LABELS`].
    pub arm: &'static str,
    /// Which curve: `hazard`, `hazard_competing`, `survival`,
    /// `cif_main`, or `cif_competing`.
    pub statistic: &'static str,
    /// 1-based visit.
    pub visit: usize,
    /// Visit time t_j.
    pub time: f64,
    /// Posterior mean.
    pub mean: f64,
    /// Equal-tailed interval bounds.
    pub lower: f64,
    /// Upper bound.
    pub upper: f64,
}

fn summarize_curve(
    rows: &mut Vec<CurveRow>,
    arm: &'static str,
    statistic: &'static str,
    curve: &[Vec<f64>],
    visit_grid: &[f64],
    level: f64,
) {
    let num_draws = curve.len();
    for (h, time) in visit_grid.iter().enumerate() {
        let samples: Vec<f64> = (0..num_draws).map(|q| curve[q][h]).collect();
        let mean = samples.iter().sum::<f64>() / num_draws as f64;
        let (lower, upper) = equal_tailed_interval(&samples, level);
        rows.push(CurveRow {
            arm,
            statistic,
            visit: h + 1,
            time: *time,
            mean,
            lower,
            upper,
        });
    }
}

/// Summarizes a posterior's curves into rows ordered by (arm, statistic,
/// visit).
pub fn curve_rows(posterior: &GcompPosterior, level: f64) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for (arm_index, arm) in posterior.arms.iter().enumerate() {
        let label = ARM_LABELS[arm_index];
        let named: [(&'static str, Option<&Vec<Vec<f64>>>); 5] = [
            ("hazard", Some(&arm.hazard_main)),
            ("hazard_competing", arm.hazard_competing.as_ref()),
            ("survival", Some(&arm.survival)),
            ("cif_main", arm.cif_main.as_ref()),
            ("cif_competing", arm.cif_competing.as_ref()),
        ];
        for (statistic, curve) in named {
            if let Some(curve) = curve {
                summarize_curve(
                    &mut rows,
                    label,
                    statistic,
                    curve,
                    &posterior.visit_grid,
                    level,
                );
            }
        }
    }
    rows
}

/// Posterior curves as CSV, one row per (arm, statistic, visit).
pub fn curves_csv(posterior: &GcompPosterior, level: f64) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in curve_rows(posterior, level) {
        writer.serialize(row)?;
    }
    finish_csv(writer)
}

#[derive(Serialize)]
struct CurvesJson<'a> {
    mode: Mode,
    level: f64,
    num_draws: usize,
    rows: Vec<CurveRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    posterior: Option<&'a GcompPosterior>,
}

/// Posterior curves as pretty JSON; `emit_samples` additionally embeds the
/// full per-draw posterior.
pub fn curves_json(
    posterior: &GcompPosterior,
    level: f64,
    emit_samples: bool,
) -> Result<String> {
    let doc = CurvesJson {
        mode: posterior.mode,
        level,
        num_draws: posterior.num_draws,
        rows: curve_rows(posterior, level),
        posterior: emit_samples.then_some(posterior),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

// ---------------------------------------------------------------------------
// True effects and study metrics
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TruthCsvRow {
    visit: usize,
    estimand: String,
    value: f64,
    mc_se: f64,
}

/// Ground-truth effects as CSV.
pub fn truth_csv(truth: &TrueEffects) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &truth.rows {
        writer.serialize(TruthCsvRow {
            visit: row.visit,
            estimand: row.estimand.to_string(),
            value: row.value,
            mc_se: row.mc_se,
        })?;
    }
    finish_csv(writer)
}

/// Ground-truth effects as pretty JSON (the full structure, including the
/// regimes and the trajectory budget).
pub fn truth_json(truth: &TrueEffects) -> Result<String> {
    Ok(serde_json::to_string_pretty(truth)?)
}

#[derive(Serialize)]
struct SimCsvRow<'a> {
    estimator: &'a str,
    visit: usize,
    estimand: String,
    truth: f64,
    bias: f64,
    bias_mc_se: f64,
    mse: f64,
    mse_mc_se: f64,
    coverage: f64,
    coverage_mc_se: f64,
    num_replicates_used: usize,
    num_failures: usize,
}

/// Study metrics as CSV, one row per (estimator, visit, estimand).
pub fn sim_csv(report: &SimReport) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &report.rows {
        writer.serialize(SimCsvRow {
            estimator: &row.estimator,
            visit: row.visit,
            estimand: row.estimand.to_string(),
            truth: row.truth,
            bias: row.bias,
            bias_mc_se: row.bias_mc_se,
            mse: row.mse,
            mse_mc_se: row.mse_mc_se,
            coverage: row.coverage,
            coverage_mc_se: row.coverage_mc_se,
            num_replicates_used: row.num_replicates_used,
            num_failures: row.num_failures,
        })?;
    }
    finish_csv(writer)
}

/// Study metrics as pretty JSON (the full report structure).
pub fn sim_json(report: &SimReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// Study metrics as an aligned plain-text table with a scenario header.
pub fn sim_table(report: &SimReport) -> String {
    let header = ["estimator", "visit", "estimand", "truth", "bias", "MSE", "coverage", "failures"]
        .map(str::to_string)
        .to_vec();
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|row| {
            vec![
                row.estimator.clone(),
                row.visit.to_string(),
                row.estimand.to_string(),
                format!("{:.6}", row.truth),
                format!("{:.6} ± {:.6}", row.bias, row.bias_mc_se),
                format!("{:.3e}", row.mse),
                format!("{:.3} ± {:.3}", row.coverage, row.coverage_mc_se),
                row.num_failures.to_string(),
            ]
        })
        .collect();
    format!(
        "scenario {}: n = {}, {} replicates, level {}\n{}",
        report.scenario,
        report.sample_size,
        report.num_replicates,
        report.level,
        render_table(header, rows)
    )
}

fn finish_csv(writer: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = writer.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}
