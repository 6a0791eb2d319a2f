//! CSV and JSON artifacts for evaluation runs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::harness::EvalReport;
use super::ranking::RankingResult;
use super::scenario::ScenarioReport;
use super::{EvalError, Result};
use crate::agent::{AgentDecision, TimedEvent};
use crate::artifact::ArtifactHeader;

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

fn start<W: Write>(mut out: W, header: Option<&ArtifactHeader>) -> Result<csv::Writer<W>> {
    if let Some(h) = header {
        out.write_all(h.render().as_bytes())?;
    }
    Ok(csv::Writer::from_writer(out))
}

fn finish<W: Write>(w: csv::Writer<W>) -> Result<()> {
    w.into_inner().map_err(|e| EvalError::Io(e.into_error()))?.flush()?;
    Ok(())
}

/// One row per case.
pub fn write_eval_csv<W: Write>(out: W, header: Option<&ArtifactHeader>, report: &EvalReport) -> Result<()> {
    let mut w = start(out, header)?;
    w.write_record([
        "case_id", "kind", "source", "variable_a", "level_a", "variable_b", "level_b", "benchmark", "predicted",
        "samples", "status",
    ])?;
    for c in &report.cases {
        let get = |i: usize| c.levels.get(i).cloned().unwrap_or_default();
        let (va, la) = get(0);
        let (vb, lb) = get(1);
        w.write_record([
            c.case_id.as_str(),
            c.kind.as_str(),
            c.source.as_str(),
            &va,
            &la,
            &vb,
            &lb,
            &fmt(Some(c.benchmark)),
            &fmt(c.predicted),
            &c.samples.len().to_string(),
            c.error.as_deref().unwrap_or("ok"),
        ])?;
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub task: String,
    pub backend_id: String,
    pub reps: usize,
    pub cases: usize,
    pub complete_cases: usize,
    pub completeness: f64,
    pub r_squared: Option<f64>,
    pub mae: Option<f64>,
    pub metric_note: Option<String>,
    pub provenance: serde_json::Map<String, serde_json::Value>,
}

impl EvalSummary {
    pub fn new(report: &EvalReport, header: Option<&ArtifactHeader>) -> Self {
        let provenance = header
            .map(|h| {
                h.fields()
                    .iter()
                    .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                    .collect()
            })
            .unwrap_or_default();
        EvalSummary {
            task: report.task.clone(),
            backend_id: report.backend_id.clone(),
            reps: report.reps,
            cases: report.cases.len(),
            complete_cases: report.cases.iter().filter(|c| c.is_complete()).count(),
            completeness: report.completeness,
            r_squared: report.r_squared,
            mae: report.mae,
            metric_note: report.metric_note.clone(),
            provenance,
        }
    }
}

pub fn write_summary_json<W: Write>(mut out: W, header: Option<&ArtifactHeader>, report: &EvalReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, &EvalSummary::new(report, header))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_ranking_csv<W: Write>(out: W, header: Option<&ArtifactHeader>, results: &[RankingResult]) -> Result<()> {
    let mut w = start(out, header)?;
    w.write_record(["factor", "expected_order", "predicted_order", "exact", "kendall_tau"])?;
    for r in results {
        w.write_record([
            r.factor.as_str(),
            &r.expected_order.join(">"),
            &r.predicted_order.join(">"),
            &r.exact.to_string(),
            &format!("{:.6}", r.tau),
        ])?;
    }
    finish(w)
}

pub fn write_scenario_csv<W: Write>(out: W, header: Option<&ArtifactHeader>, reports: &[ScenarioReport]) -> Result<()> {
    let mut w = start(out, header)?;
    w.write_record(["scenario_id", "profile_id", "predicted", "reference", "ordering_satisfied", "status"])?;
    for rep in reports {
        for r in &rep.results {
            w.write_record([
                rep.scenario_id.as_str(),
                r.id.as_str(),
                &fmt(r.predicted),
                &fmt(r.reference),
                &rep.ordering_satisfied.to_string(),
                r.error.as_deref().unwrap_or("ok"),
            ])?;
        }
    }
    finish(w)
}

/// Step 0 is the baseline decision; step i follows event i.
pub fn write_trajectory_csv<W: Write>(
    out: W,
    header: Option<&ArtifactHeader>,
    events: &[TimedEvent],
    decisions: &[AgentDecision],
) -> Result<()> {
    if decisions.len() != events.len() + 1 {
        return Err(EvalError::Input(format!(
            "{} events need {} decisions, got {}",
            events.len(),
            events.len() + 1,
            decisions.len()
        )));
    }
    let mut w = start(out, header)?;
    w.write_record(["step", "timestamp", "event", "probability_pct"])?;
    for (step, d) in decisions.iter().enumerate() {
        let (ts, text) = match step.checked_sub(1).map(|i| &events[i]) {
            Some(ev) => (ev.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true), ev.text.as_str()),
            None => (String::new(), "baseline"),
        };
        w.write_record([step.to_string(), ts, text.to_string(), format!("{:.1}", d.probability * 100.0)])?;
    }
    finish(w)
}
