//! Declarative experiments: config parsing, seeded parallel ensembles,
//! persistence and reports.

mod pipeline;
mod run;
mod spec;

pub use pipeline::{resolve_fields, Pipeline, Tally};
pub use run::{report_render, run, run_in_memory, RunReport, Status, Verdict, DEFAULT_TOLERANCES};
pub use spec::{parse_spec, ExperimentSpec, TASKS};
