pub mod acceptance;
pub mod complexity;
pub mod config;
pub mod montecarlo;
pub mod report;
pub mod run;
pub mod stats;

pub use acceptance::{CriterionResult, Scale};
pub use complexity::{complexity_report, ComplexityReport, SweepSettings};
pub use config::ExperimentConfig;
pub use montecarlo::{monte_carlo_corruption, CorruptionEstimate, MonteCarloOptions};
pub use report::{run, run_serial, RunReport};
pub use run::{simulate, TrialMetrics, TrialOutcome};
