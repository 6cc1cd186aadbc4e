//! Experiment orchestration: single runs, the displacement scenario, the
//! benchmark suite and its tables and plots.

pub mod bench;
pub mod config;
pub mod run;
pub mod scenario;
pub mod svg;

pub use bench::{run_bench, write_bench, BenchOutput, ResultsTable, RunRecord};
pub use config::{default_suite, ExperimentConfig, Suite};
pub use run::{run_experiment, run_on_track, ReferencePoint, RunMetrics, RunOutput};
pub use scenario::{run_displacement, DisplacementOutcome, DisplacementSpec};
