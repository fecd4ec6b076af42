//! Study simulation and the offline analysis report.

pub mod error;
pub mod report;
pub mod study;
pub mod svg;

pub use error::CliError;
pub use report::{analyze, analyze_dir, write_bundle, AnalyzeOptions, ReportBundle};
pub use study::{simulate_study, StudyConfig};
