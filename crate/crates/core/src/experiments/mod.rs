pub mod instances;
pub mod matcomp;
pub mod metrics;
pub mod reference;
pub mod runner;

pub use runner::{
    bounds, run_experiment, run_to_csv, Algorithm, BoundsReport, ExperimentConfig, ExperimentKind,
    TrajectoryRecord,
};
