//! Configuration, ingestion, orchestration and persistence.

pub mod checks;
pub mod config;
pub mod io;
pub mod run;

pub use checks::{run_suite, CheckOutcome};
pub use config::{ExperimentConfig, Mode, Overrides, MIN_REPLICATIONS};
pub use io::{csv_rows, emit, emit_to, load_csv, write_sample_csv, CsvRow, Format, Loaded};
pub use run::{run, run_with_cache, OracleCache, OracleReport, ReplicationResult, ResultRecord, Summary, TrimStats};
