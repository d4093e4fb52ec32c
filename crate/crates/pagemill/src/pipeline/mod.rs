//! End-to-end corpus pipeline: configuration plus the command drivers
//! that the CLI binary dispatches to.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_anneal_plan, cmd_generate, cmd_ingest, cmd_length_report, cmd_stats, cmd_validate,
    generate_for_page, load_pages, run_generator, sample_params, substream_seed, task_feasible,
    AnnealReport, GenParams, GenerateReport, IngestReport, LengthSummary, PipelineError,
    RenderedExample, StatsReport, ValidateReport,
};
pub use config::{ConfigError, GridConfig, PipelineConfig, ScheduleConfig};
