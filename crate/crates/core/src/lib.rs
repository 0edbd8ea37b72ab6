//! Simulation of differentially private iterative consensus.
//!
//! Clients perturb the state they report with Laplace noise whose scale
//! decays as `c·qᵗ`, then move a fraction `σ` towards the feedback they
//! receive: the mean of all reports (client-server) or the mean over their
//! graph neighbourhood (distributed). The crate executes both mechanisms,
//! replays the coupling that underlies their privacy guarantee, and
//! evaluates privacy, convergence and accuracy in closed form and by Monte
//! Carlo.
//!
//! Round semantics are generic over [`Scalar`], so the same code runs in
//! `f64`, `f32` or exact [`BigRational`] arithmetic.

pub mod analysis;
pub mod error;
pub mod graph;
pub mod mechanism;
pub mod noise;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use graph::{check_convergence_condition, laplacian, ConvergenceCheck, Graph, LaplacianMatrix};
pub use mechanism::{
    inject_noise_sequence, observe, run_execution, ExecutionTrace, Feedback, MechanismParams,
    Mode, Observation, RoundRecord,
};
pub use noise::{laplace_pdf, sample_laplace, LaplaceParam, NoiseSchedule};
pub use num_rational::BigRational;
pub use scalar::{Real, Scalar};

/// Mechanism parameters in double precision.
pub type Params = MechanismParams<f64>;
/// Double-precision execution trace.
pub type Trace = ExecutionTrace<f64>;
/// Single-precision execution trace.
pub type Trace32 = ExecutionTrace<f32>;
/// Mechanism parameters in exact rational arithmetic.
pub type ExactParams = MechanismParams<BigRational>;
/// Exact rational execution trace.
pub type ExactTrace = ExecutionTrace<BigRational>;
pub type Laplacian = LaplacianMatrix<f64>;
pub type ExactLaplacian = LaplacianMatrix<BigRational>;
