//! CSV export of comparison reports, and the inverse parse.
//!
//! One file holds both modes of one comparison: a row per (mode, round,
//! client) followed by one totals row per mode. The column order is fixed,
//! the header is mandatory, and floats use the shortest representation that
//! round-trips, so equal reports always serialize to identical bytes.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::protocol::{ClientRoundRecord, Decision, RoundRecord, RunLedger, RunMode};

use super::comparison::ComparisonReport;

/// Fixed column order; every exporter writes exactly this header.
pub const CSV_HEADER: [&str; 15] = [
    "scenario",
    "seed",
    "mode",
    "round",
    "client_id",
    "decision",
    "training_time",
    "local_acc",
    "upload_transfer_time",
    "waiting_time_used",
    "opened_at",
    "closed_at",
    "dispatch_time",
    "global_acc_after",
    "participant_count",
];

/// Marker in the `round` column for the per-mode totals row.
const TOTALS_ROUND: &str = "total";

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Serialize a comparison to CSV bytes: dynamic rounds, dynamic totals,
/// baseline rounds, baseline totals.
pub fn export_comparison_csv(report: &ComparisonReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for mode in [RunMode::Dynamic, RunMode::Baseline] {
        let ledger = report.ledger(mode);
        for round in &ledger.records {
            for c in &round.per_client {
                w.write_record([
                    report.scenario_name.as_str(),
                    &report.seed.to_string(),
                    mode.as_str(),
                    &round.round_index.to_string(),
                    &c.client_id.to_string(),
                    c.decision.as_str(),
                    &fmt_f64(c.training_time),
                    &fmt_opt(c.local_acc),
                    &fmt_f64(c.upload_transfer_time),
                    &fmt_f64(round.waiting_time_used),
                    &fmt_f64(round.opened_at),
                    &fmt_f64(round.closed_at),
                    &fmt_f64(round.dispatch_time),
                    &fmt_f64(round.global_acc_after),
                    &round.participant_count.to_string(),
                ])?;
            }
        }
        // Totals row: training and upload sums, then the run-level closing
        // figures in the dispatch/accuracy/participant columns.
        w.write_record([
            report.scenario_name.as_str(),
            &report.seed.to_string(),
            mode.as_str(),
            TOTALS_ROUND,
            "",
            "",
            &fmt_f64(ledger.total_training_time()),
            "",
            &fmt_f64(ledger.total_upload_time()),
            "",
            "",
            "",
            &fmt_f64(ledger.total_virtual_time),
            &fmt_f64(ledger.final_accuracy()),
            &ledger.total_uploads().to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Csv(e.to_string()))
}

pub fn write_comparison_csv(report: &ComparisonReport, path: &Path) -> Result<()> {
    std::fs::write(path, export_comparison_csv(report)?)?;
    Ok(())
}

fn parse_f64(field: &str, ctx: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Csv(format!("{ctx}: bad float {field:?}")))
}

fn parse_opt(field: &str, ctx: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        Ok(Some(parse_f64(field, ctx)?))
    }
}

struct PendingRound {
    record: RoundRecord,
}

struct PendingLedger {
    rounds: Vec<PendingRound>,
    totals: Option<(f64, f64, f64, f64, usize)>,
}

impl PendingLedger {
    fn new() -> Self {
        PendingLedger { rounds: Vec::new(), totals: None }
    }
}

/// Parse CSV text produced by [`export_comparison_csv`] back into the same
/// in-memory report, verifying the totals rows against the parsed series.
pub fn import_comparison_csv(text: &str) -> Result<ComparisonReport> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    {
        let header = reader.headers().map_err(|e| Error::Csv(e.to_string()))?;
        let got: Vec<&str> = header.iter().collect();
        if got != CSV_HEADER {
            return Err(Error::Csv(format!("unexpected header {got:?}")));
        }
    }

    let mut scenario_name: Option<String> = None;
    let mut seed: Option<u64> = None;
    let mut dynamic = PendingLedger::new();
    let mut baseline = PendingLedger::new();

    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Csv(e.to_string()))?;
        let ctx = format!("row {}", i + 2);
        if row.len() != CSV_HEADER.len() {
            return Err(Error::Csv(format!("{ctx}: expected {} fields", CSV_HEADER.len())));
        }
        let field = |j: usize| row.get(j).unwrap();

        let name = field(0).to_string();
        match &scenario_name {
            None => scenario_name = Some(name),
            Some(prev) if *prev != name => {
                return Err(Error::Csv(format!("{ctx}: mixed scenarios {prev:?} and {name:?}")));
            }
            _ => {}
        }
        let row_seed: u64 =
            field(1).parse().map_err(|_| Error::Csv(format!("{ctx}: bad seed")))?;
        match seed {
            None => seed = Some(row_seed),
            Some(prev) if prev != row_seed => {
                return Err(Error::Csv(format!("{ctx}: mixed seeds {prev} and {row_seed}")));
            }
            _ => {}
        }

        let mode = RunMode::from_str(field(2)).map_err(|e| Error::Csv(format!("{ctx}: {e}")))?;
        let pending = match mode {
            RunMode::Dynamic => &mut dynamic,
            RunMode::Baseline => &mut baseline,
        };

        if field(3) == TOTALS_ROUND {
            if pending.totals.is_some() {
                return Err(Error::Csv(format!("{ctx}: duplicate totals row")));
            }
            pending.totals = Some((
                parse_f64(field(6), &ctx)?,
                parse_f64(field(8), &ctx)?,
                parse_f64(field(12), &ctx)?,
                parse_f64(field(13), &ctx)?,
                field(14).parse().map_err(|_| Error::Csv(format!("{ctx}: bad count")))?,
            ));
            continue;
        }
        if pending.totals.is_some() {
            return Err(Error::Csv(format!("{ctx}: round row after totals row")));
        }

        let round_index: u32 =
            field(3).parse().map_err(|_| Error::Csv(format!("{ctx}: bad round")))?;
        let client = ClientRoundRecord {
            client_id: field(4).parse().map_err(|_| Error::Csv(format!("{ctx}: bad client")))?,
            decision: Decision::from_str(field(5))
                .map_err(|e| Error::Csv(format!("{ctx}: {e}")))?,
            training_time: parse_f64(field(6), &ctx)?,
            local_acc: parse_opt(field(7), &ctx)?,
            upload_transfer_time: parse_f64(field(8), &ctx)?,
        };
        let round_fields = RoundRecord {
            round_index,
            waiting_time_used: parse_f64(field(9), &ctx)?,
            opened_at: parse_f64(field(10), &ctx)?,
            closed_at: parse_f64(field(11), &ctx)?,
            dispatch_time: parse_f64(field(12), &ctx)?,
            global_acc_after: parse_f64(field(13), &ctx)?,
            participant_count: field(14)
                .parse()
                .map_err(|_| Error::Csv(format!("{ctx}: bad participant count")))?,
            per_client: vec![],
        };

        match pending.rounds.last_mut() {
            Some(last) if last.record.round_index == round_index => {
                // Round-level columns repeat on every client row; they must
                // not drift within one round.
                let r = &last.record;
                if r.waiting_time_used != round_fields.waiting_time_used
                    || r.opened_at != round_fields.opened_at
                    || r.closed_at != round_fields.closed_at
                    || r.dispatch_time != round_fields.dispatch_time
                    || r.global_acc_after != round_fields.global_acc_after
                    || r.participant_count != round_fields.participant_count
                {
                    return Err(Error::Csv(format!(
                        "{ctx}: inconsistent round columns within round {round_index}"
                    )));
                }
                last.record.per_client.push(client);
            }
            _ => {
                let mut record = round_fields;
                record.per_client.push(client);
                pending.rounds.push(PendingRound { record });
            }
        }
    }

    let scenario_name = scenario_name.ok_or_else(|| Error::Csv("no data rows".into()))?;
    let seed = seed.unwrap();

    let finish = |pending: PendingLedger, mode: RunMode| -> Result<RunLedger> {
        let (training, upload, virtual_time, final_acc, uploads) = pending
            .totals
            .ok_or_else(|| Error::Csv(format!("missing {} totals row", mode.as_str())))?;
        let ledger = RunLedger {
            mode,
            total_virtual_time: virtual_time,
            records: pending.rounds.into_iter().map(|p| p.record).collect(),
        };
        ledger.validate()?;
        // The totals row is redundant with the series; reject files where
        // they disagree rather than silently trusting one side.
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        if !close(ledger.total_training_time(), training)
            || !close(ledger.total_upload_time(), upload)
            || !close(ledger.final_accuracy(), final_acc)
            || ledger.total_uploads() != uploads
        {
            return Err(Error::Csv(format!(
                "{} totals row disagrees with its round series",
                mode.as_str()
            )));
        }
        Ok(ledger)
    };

    Ok(ComparisonReport {
        scenario_name,
        seed,
        dynamic: finish(dynamic, RunMode::Dynamic)?,
        baseline: finish(baseline, RunMode::Baseline)?,
    })
}

pub fn read_comparison_csv(path: &Path) -> Result<ComparisonReport> {
    let text = std::fs::read_to_string(path)?;
    import_comparison_csv(&text)
}
