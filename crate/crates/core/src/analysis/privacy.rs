use crate::analysis::report::{opt, KeyValues};
use crate::scalar::Real;

/// Closed-form privacy level of a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyReport<F> {
    /// `q / (c·(q + σ_min − 1))`, defined only when `valid`.
    pub epsilon: Option<F>,
    /// `1 − σ_min < q < 1` and `c > 0`.
    pub valid: bool,
    pub sigma_min: F,
    pub delta_note: &'static str,
}

const DELTA_NOTE: &str =
    "probabilities from delta-adjacent initial states differ by at most a factor exp(epsilon*delta)";

/// Privacy level for coefficients `sigma` (one entry for the client-server
/// mechanism, one per client otherwise) and schedule `(c, q)`.
pub fn epsilon_bound<F: Real>(sigma: &[F], c: F, q: F) -> PrivacyReport<F> {
    let sigma_min = sigma.iter().copied().fold(F::infinity(), F::min);
    let valid = !sigma.is_empty() && c > F::zero() && q < F::one() && q + sigma_min > F::one();
    let epsilon = valid.then(|| q / (c * (q + sigma_min - F::one())));
    PrivacyReport {
        epsilon,
        valid,
        sigma_min,
        delta_note: DELTA_NOTE,
    }
}

impl<F: Real> KeyValues for PrivacyReport<F> {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("epsilon", opt(&self.epsilon)),
            ("privacy_valid", self.valid.to_string()),
            ("sigma_min", self.sigma_min.to_string()),
            ("delta_note", self.delta_note.to_string()),
        ]
    }
}
