//! Experiment orchestration behind the command-line tool: simulation sweeps,
//! dataset generation, training and timing.

mod config;
mod data;
mod output;
mod simulate;
mod trial;

pub use config::{parse_policies, ExperimentConfig, ExperimentSettings, Policy, Preset, MAX_UNFOLDED_STAGES};
pub use data::{generate_dataset, held_out_min_rates, trace_stage_labels, train_policy, DatasetBundle};
pub use output::{
    bench_csv, bench_json, curves_csv, fmt_f64, policy_csv, summary_json, write_dataset_bundle, write_simulation,
};
pub use simulate::{
    bench, resolve_models, simulate, BenchReport, BenchRow, Percentiles, PolicyRecords, PolicySummary, SimulationReport,
    TrialRecord,
};
pub use trial::{evaluate, run_policy, trial_seed, Evaluation, Models, PolicyRun, Trial, COMPLIANCE_TOL};
