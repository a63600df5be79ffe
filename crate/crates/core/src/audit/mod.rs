//! End-to-end audits: configuration, per-seed pipeline runs with
//! cross-seed summaries, the capacity sweep, and report files.

mod config;
mod pipeline;
mod report;
mod sweep;

pub use config::{parse_config_text, parse_seeds, read_config_entries, AuditConfig, Backend, KEYS};
pub use pipeline::{
    evaluate, run_audit, run_seed, AuditResult, ConsistencySummary, DataSource, GroupSummary,
    RatioSummary, SampleTable, SeedResult, Stat, Summary, TrainedModel, SCHEMA_VERSION,
};
pub use report::{emit_report, read_report, render_csv, render_markdown, ReportFormat};
pub use sweep::{emit_sweep, render_sweep_csv, render_sweep_markdown, run_sweep, SweepResult, SweepRow};
