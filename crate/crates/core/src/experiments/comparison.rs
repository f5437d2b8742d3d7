//! Head-to-head runs: the dynamic protocol and the synchronous baseline on
//! identical data, identical initial parameters, and identical seed streams.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{Decision, RunLedger, RunMode};
use crate::simnet::{run_baseline_sim, run_dynamic_sim};

use super::scenario::{build_sim_config, Scenario};

/// Whole-run totals for one mode, all derived from the round series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeTotals {
    pub final_accuracy: f64,
    pub total_training_time: f64,
    pub total_upload_count: usize,
    pub total_upload_time: f64,
    pub total_virtual_time: f64,
}

impl ModeTotals {
    pub fn from_ledger(ledger: &RunLedger) -> Self {
        ModeTotals {
            final_accuracy: ledger.final_accuracy(),
            total_training_time: ledger.total_training_time(),
            total_upload_count: ledger.total_uploads(),
            total_upload_time: ledger.total_upload_time(),
            total_virtual_time: ledger.total_virtual_time,
        }
    }
}

/// What the dynamic run saved (or cost) relative to the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    /// Baseline uploads minus dynamic uploads.
    pub uploads_saved: i64,
    /// Baseline upload seconds minus dynamic upload seconds.
    pub upload_time_saved: f64,
    /// Baseline wall clock minus dynamic wall clock (virtual seconds).
    pub virtual_time_saved: f64,
    /// Dynamic final accuracy minus baseline final accuracy.
    pub accuracy_delta: f64,
}

/// Paired result of one scenario under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenario_name: String,
    pub seed: u64,
    pub dynamic: RunLedger,
    pub baseline: RunLedger,
}

impl ComparisonReport {
    pub fn dynamic_totals(&self) -> ModeTotals {
        ModeTotals::from_ledger(&self.dynamic)
    }

    pub fn baseline_totals(&self) -> ModeTotals {
        ModeTotals::from_ledger(&self.baseline)
    }

    pub fn deltas(&self) -> Deltas {
        let d = self.dynamic_totals();
        let b = self.baseline_totals();
        Deltas {
            uploads_saved: b.total_upload_count as i64 - d.total_upload_count as i64,
            upload_time_saved: b.total_upload_time - d.total_upload_time,
            virtual_time_saved: b.total_virtual_time - d.total_virtual_time,
            accuracy_delta: d.final_accuracy - b.final_accuracy,
        }
    }

    pub fn ledger(&self, mode: RunMode) -> &RunLedger {
        match mode {
            RunMode::Dynamic => &self.dynamic,
            RunMode::Baseline => &self.baseline,
        }
    }
}

/// Run both modes of a scenario under one seed and cross-check the result.
pub fn run_comparison(scenario: &Scenario, seed: u64) -> Result<ComparisonReport> {
    let cfg = build_sim_config(scenario, seed)?;
    let dynamic = run_dynamic_sim(&cfg)?;
    let baseline = run_baseline_sim(&cfg)?;
    let report = ComparisonReport {
        scenario_name: scenario.name.clone(),
        seed,
        dynamic,
        baseline,
    };
    check_report(&report, scenario)?;
    Ok(report)
}

/// Internal consistency conditions every comparison must satisfy; a failure
/// here is a bug, not a data property.
fn check_report(report: &ComparisonReport, scenario: &Scenario) -> Result<()> {
    let fail = |msg: String| Err(Error::validation(format!("comparison invariant: {msg}")));

    report.dynamic.validate()?;
    report.baseline.validate()?;
    if report.dynamic.mode != RunMode::Dynamic || report.baseline.mode != RunMode::Baseline {
        return fail("ledger modes are swapped".into());
    }
    let rounds = scenario.rounds as usize;
    if report.dynamic.records.len() != rounds || report.baseline.records.len() != rounds {
        return fail(format!(
            "expected {rounds} rounds, got dynamic {} / baseline {}",
            report.dynamic.records.len(),
            report.baseline.records.len()
        ));
    }

    // The baseline waits for everyone, so it uploads clients x rounds models,
    // and the gate can only remove uploads, never add them.
    let expected_baseline = scenario.clients.len() * rounds;
    let b = report.baseline.total_uploads();
    if b != expected_baseline {
        return fail(format!("baseline uploads {b}, expected exactly {expected_baseline}"));
    }
    let d = report.dynamic.total_uploads();
    if d > b {
        return fail(format!("dynamic uploads {d} exceed baseline {b}"));
    }

    // All clients share one network model, so every upload costs the same
    // transfer time and totals must factor.
    let per_upload = scenario.network.transfer_time(scenario.payload_bytes);
    for (ledger, count) in [(&report.dynamic, d), (&report.baseline, b)] {
        let expect = count as f64 * per_upload;
        let got = ledger.total_upload_time();
        if (got - expect).abs() > 1e-9 * expect.max(1.0) {
            return fail(format!(
                "{} upload time {got} != {count} uploads x {per_upload}s",
                ledger.mode.as_str()
            ));
        }
    }

    // Totals must equal the sums of their series.
    for ledger in [&report.dynamic, &report.baseline] {
        let series_uploads: usize = ledger.records.iter().map(|r| r.participant_count).sum();
        if series_uploads != ledger.total_uploads() {
            return fail(format!("{} totals disagree with series", ledger.mode.as_str()));
        }
    }
    Ok(())
}

/// Mean of per-seed values, `None` for an empty slice.
fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// One scenario's reports averaged over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummary {
    pub scenario_name: String,
    pub runs: usize,
    pub mean_dynamic_uploads: f64,
    pub mean_uploads_saved: f64,
    pub mean_upload_time_saved: f64,
    pub mean_dynamic_accuracy: f64,
    pub mean_baseline_accuracy: f64,
}

/// Group reports by scenario (in first-seen order) and average their totals.
pub fn summarize(reports: &[ComparisonReport]) -> Vec<ScenarioSummary> {
    let mut order: Vec<&str> = Vec::new();
    for r in reports {
        if !order.contains(&r.scenario_name.as_str()) {
            order.push(&r.scenario_name);
        }
    }
    order
        .into_iter()
        .map(|name| {
            let group: Vec<&ComparisonReport> =
                reports.iter().filter(|r| r.scenario_name == name).collect();
            let collect = |f: &dyn Fn(&ComparisonReport) -> f64| -> Vec<f64> {
                group.iter().map(|r| f(r)).collect()
            };
            ScenarioSummary {
                scenario_name: name.to_string(),
                runs: group.len(),
                mean_dynamic_uploads: mean(&collect(&|r| {
                    r.dynamic_totals().total_upload_count as f64
                }))
                .unwrap_or(0.0),
                mean_uploads_saved: mean(&collect(&|r| r.deltas().uploads_saved as f64))
                    .unwrap_or(0.0),
                mean_upload_time_saved: mean(&collect(&|r| r.deltas().upload_time_saved))
                    .unwrap_or(0.0),
                mean_dynamic_accuracy: mean(&collect(&|r| r.dynamic_totals().final_accuracy))
                    .unwrap_or(0.0),
                mean_baseline_accuracy: mean(&collect(&|r| r.baseline_totals().final_accuracy))
                    .unwrap_or(0.0),
            }
        })
        .collect()
}

/// Render summaries as an aligned text table.
pub fn render_summary_table(summaries: &[ScenarioSummary]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>4} {:>12} {:>12} {:>14} {:>9} {:>9}\n",
        "scenario", "runs", "dyn uploads", "saved", "saved time s", "dyn acc", "base acc"
    ));
    for s in summaries {
        out.push_str(&format!(
            "{:<24} {:>4} {:>12.1} {:>12.1} {:>14.1} {:>9.4} {:>9.4}\n",
            s.scenario_name,
            s.runs,
            s.mean_dynamic_uploads,
            s.mean_uploads_saved,
            s.mean_upload_time_saved,
            s.mean_dynamic_accuracy,
            s.mean_baseline_accuracy
        ));
    }
    out
}

/// Count dynamic-mode decision kinds across a report's rounds.
pub fn decision_counts(ledger: &RunLedger) -> (usize, usize, usize) {
    let mut uploaded = 0;
    let mut skipped = 0;
    let mut late = 0;
    for r in &ledger.records {
        for c in &r.per_client {
            match c.decision {
                Decision::Uploaded => uploaded += 1,
                Decision::Skipped => skipped += 1,
                Decision::Late => late += 1,
            }
        }
    }
    (uploaded, skipped, late)
}
