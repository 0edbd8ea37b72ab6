//! Privacy, convergence and accuracy analytics.

mod accuracy;
mod convergence;
mod coupling;
mod potential;
mod privacy;
mod report;

pub use accuracy::{accuracy_radius, monte_carlo_accuracy, weighted_mean, AccuracyReport, MonteCarloAccuracy};
pub use convergence::{convergence_estimate, ConvergenceEstimate};
pub use coupling::{
    build_coupled_noise, density_ratio_log_bound, round0_histogram_log_ratio, verify_coupling,
    CouplingResult,
};
pub use potential::{contraction_check_centralized, potential, potential_of, ContractionCheck};
pub use privacy::{epsilon_bound, PrivacyReport};
pub use report::KeyValues;
