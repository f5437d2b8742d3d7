//! Run the base scenario suite across seeds and print per-scenario means
//! plus a per-run detail table: upload/skip/late counts and final accuracy
//! for both modes. Naming a single scenario also dumps its first seed's
//! per-round decisions.
//!
//! Usage: suite_stats [n_seeds] [scenario-name]

use dynfed_core::experiments::{
    base_scenarios, decision_counts, render_summary_table, run_comparison, summarize,
    ComparisonReport, DEFAULT_SEEDS,
};

fn main() {
    let mut args = std::env::args().skip(1);
    let n_seeds: usize = args
        .next()
        .map(|s| s.parse().expect("n_seeds must be a number"))
        .unwrap_or(3)
        .min(DEFAULT_SEEDS.len());
    let only: Option<String> = args.next();

    let scenarios: Vec<_> = base_scenarios()
        .into_iter()
        .filter(|s| only.as_ref().is_none_or(|name| &s.name == name))
        .collect();
    if scenarios.is_empty() {
        eprintln!("no scenario matches; valid names:");
        for s in base_scenarios() {
            eprintln!("  {}", s.name);
        }
        std::process::exit(2);
    }

    let mut reports: Vec<ComparisonReport> = Vec::new();
    println!(
        "{:<16} {:>4} {:>8} {:>6} {:>6} {:>9} {:>9} {:>11}",
        "scenario", "seed", "uploads", "skips", "late", "dyn acc", "base acc", "time saved"
    );
    for scenario in &scenarios {
        for &seed in DEFAULT_SEEDS.iter().take(n_seeds) {
            let report = run_comparison(scenario, seed).unwrap_or_else(|e| {
                eprintln!("{} seed {seed}: {e}", scenario.name);
                std::process::exit(1);
            });
            let (u, s, l) = decision_counts(&report.dynamic);
            println!(
                "{:<16} {:>4} {:>8} {:>6} {:>6} {:>9.4} {:>9.4} {:>10.1}s",
                report.scenario_name,
                seed,
                u,
                s,
                l,
                report.dynamic_totals().final_accuracy,
                report.baseline_totals().final_accuracy,
                report.deltas().upload_time_saved,
            );
            reports.push(report);
        }
    }
    println!();
    print!("{}", render_summary_table(&summarize(&reports)));

    if only.is_some() {
        let report = &reports[0];
        println!("\nper-round detail: {} seed {}", report.scenario_name, report.seed);
        println!("{:>5} {:>9} {:>8}  per-client decision(local acc)", "round", "waiting", "global");
        for r in &report.dynamic.records {
            let cells: Vec<String> = r
                .per_client
                .iter()
                .map(|c| {
                    let tag = c.decision.as_str().chars().next().unwrap().to_uppercase();
                    match c.local_acc {
                        Some(a) => format!("c{} {tag}({a:.3})", c.client_id),
                        None => format!("c{} {tag}(  -  )", c.client_id),
                    }
                })
                .collect();
            println!(
                "{:>5} {:>9.2} {:>8.4}  {}",
                r.round_index,
                r.waiting_time_used,
                r.global_acc_after,
                cells.join("  ")
            );
        }
    }
}
