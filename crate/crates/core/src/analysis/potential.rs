use crate::error::{Error, Result};
use crate::graph::LaplacianMatrix;
use crate::mechanism::{ExecutionTrace, MechanismParams, Mode};
use crate::scalar::Scalar;

/// Below this the ratio `P(t+1)/P(t)` is not checked.
const UNDERFLOW: f64 = 1e-300;

/// Disagreement potential `θᵀLθ`.
pub fn potential<S: Scalar>(theta: &[S], lap: &LaplacianMatrix<S>) -> Result<S> {
    if theta.len() != lap.n() {
        return Err(Error::DimensionMismatch {
            what: "theta",
            expected: lap.n(),
            found: theta.len(),
        });
    }
    Ok(lap.quadratic_form(theta))
}

/// Potential for a mechanism: the complete-graph Laplacian in the
/// client-server case, the communication graph's otherwise.
pub fn potential_of<S: Scalar>(params: &MechanismParams<S>) -> LaplacianMatrix<S> {
    match params.mode() {
        Mode::Centralized => LaplacianMatrix::complete(params.n()),
        Mode::Distributed(g) => LaplacianMatrix::of_graph(g),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionCheck {
    /// `max |P(t+1)/P(t) − (1−σ)²| / (1−σ)²` over checked rounds.
    pub max_relative_deviation: f64,
    pub rounds_checked: usize,
    pub expected_ratio: f64,
}

/// Compares each round's potential ratio with `(1−σ)²` on a client-server
/// trace. Rounds whose starting potential is below `1e-300` are skipped, as
/// is everything after them.
pub fn contraction_check_centralized<S: Scalar>(trace: &ExecutionTrace<S>) -> Result<ContractionCheck> {
    if !matches!(trace.params.mode(), Mode::Centralized) {
        return Err(Error::WrongMode {
            expected: "centralized",
        });
    }
    let lap = LaplacianMatrix::<S>::complete(trace.params.n());
    let keep = S::one() - trace.params.sigma()[0].clone();
    let target = keep.clone() * keep;
    let target_f = target.as_f64();

    let potentials: Vec<S> = trace.states().map(|th| lap.quadratic_form(th)).collect();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for w in potentials.windows(2) {
        if w[0].as_f64() < UNDERFLOW {
            break;
        }
        let ratio = w[1].clone() / w[0].clone();
        let deviation = ((ratio - target.clone()) / target.clone()).abs().as_f64();
        worst = worst.max(deviation);
        checked += 1;
    }
    Ok(ContractionCheck {
        max_relative_deviation: worst,
        rounds_checked: checked,
        expected_ratio: target_f,
    })
}
