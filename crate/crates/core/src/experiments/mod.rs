//! Experiment definitions and reporting: named scenarios, paired
//! dynamic-versus-baseline runs, seed sweeps, and CSV artifacts.

mod comparison;
mod csv;
mod scenario;

pub use comparison::{
    decision_counts, render_summary_table, run_comparison, summarize, ComparisonReport, Deltas,
    ModeTotals, ScenarioSummary,
};
pub use csv::{
    export_comparison_csv, import_comparison_csv, read_comparison_csv, write_comparison_csv,
    CSV_HEADER,
};
pub use scenario::{
    base_scenarios, build_scenario_suite, build_sim_config, find_scenario, scenario_from_toml,
    scenario_to_toml, ClientSpec, CorruptionSpec, DataConfig, Scenario, DEFAULT_SEEDS,
    PAYLOAD_LARGE, PAYLOAD_MEDIUM, PAYLOAD_SMALL, SCHEMA_VERSION,
};
