//! Ground-truth reaction systems, ODE integration and in-silico datasets.

mod dataset;
pub mod ode;
mod system;

pub use dataset::{generate_dataset, Dataset, ExperimentData, NoiseSpec, Provenance};
pub use ode::{integrate, rk4_fixed, FailureReason, IntegrationFailure, IntegratorSettings};
pub use dataset::{experiment_file_name, simulate_experiment, Manifest};
pub use system::{integrate_rate, make_case_study, CaseStudy, Experiment, ReactionSystem, SimulateError, CASE_STUDIES};
