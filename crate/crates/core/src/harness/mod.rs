//! Simulation engine: configuration, synthetic data, replication runner and
//! file formats.

pub mod config;
pub mod engine;
pub mod generate;
pub mod io;

pub use config::{DataLaw, ExperimentConfig, MechanismConfig, MechanismKind, MethodConfig};
pub use engine::{run_experiment, run_replication, ResultRow, ResultTable};
pub use generate::{generate, RawStream};
pub use io::Format;
