use rayon::prelude::*;

use crate::analysis::report::{opt, KeyValues};
use crate::error::{Error, Result};
use crate::mechanism::{run_execution, MechanismParams, Mode};
use crate::rng::derive_seed;
use crate::scalar::{ordered_sum, Real, Scalar};

/// `(b, r)`-accuracy figures.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport<F> {
    pub b: F,
    /// Radius around the target mean reached with probability `≥ 1−b`.
    pub r: F,
    /// Variance weight `Σ(|N(i)|+1)² / (Σγᵢ)²`; `σ²/N` client-server.
    pub d_tilde: F,
    /// `Σγᵢθᵢ(0)/Σγᵢ` (plain mean in the client-server case).
    pub target_mean: F,
    pub unweighted_mean: F,
    pub empirical_fraction: Option<F>,
}

impl<F: Real> AccuracyReport<F> {
    /// `2·d̃·c²/(1−q²)`, the limiting variance of the mean's drift.
    pub fn drift_variance_bound(&self, c: F, q: F) -> F {
        F::lit(2.0) * self.d_tilde * c * c / (F::one() - q * q)
    }
}

impl<F: Real> KeyValues for AccuracyReport<F> {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("b", self.b.to_string()),
            ("radius", self.r.to_string()),
            ("d_tilde", self.d_tilde.to_string()),
            ("target_mean", self.target_mean.to_string()),
            ("unweighted_mean", self.unweighted_mean.to_string()),
            ("empirical_fraction", opt(&self.empirical_fraction)),
        ]
    }
}

/// `Σγᵢθᵢ / Σγᵢ`.
pub fn weighted_mean<S: Scalar>(theta: &[S], weights: &[S]) -> S {
    let num = theta
        .iter()
        .zip(weights)
        .fold(S::zero(), |acc, (t, w)| acc + t.clone() * w.clone());
    num / ordered_sum(weights)
}

/// Closed-form accuracy radius.
///
/// Client-server: `r = √2·c·σ / √(b·N·(1−q²))`. Distributed:
/// `r = √(2d̃)·c / √(b·(1−q²))`.
pub fn accuracy_radius<F: Real>(
    params: &MechanismParams<F>,
    theta0: &[F],
    b: F,
) -> Result<AccuracyReport<F>> {
    if !(b > F::zero() && b < F::one()) {
        return Err(Error::InvalidParameter {
            name: "b",
            reason: format!("must lie in the open interval (0,1), got {b}"),
        });
    }
    let n = params.n();
    if theta0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "theta0",
            expected: n,
            found: theta0.len(),
        });
    }
    let c = F::lit(params.schedule().c());
    let q = F::lit(params.schedule().q());
    let nf = F::from_count(n);
    let two = F::lit(2.0);
    let one_minus_q2 = F::one() - q * q;
    let unweighted_mean = ordered_sum(theta0) / nf;

    let report = match params.mode() {
        Mode::Centralized => {
            let sigma = params.sigma()[0];
            AccuracyReport {
                b,
                r: two.sqrt() * c * sigma / (b * nf * one_minus_q2).sqrt(),
                d_tilde: sigma * sigma / nf,
                target_mean: unweighted_mean,
                unweighted_mean,
                empirical_fraction: None,
            }
        }
        Mode::Distributed(_) => {
            let gamma = params.gamma();
            let gamma_sum = ordered_sum(&gamma);
            let sq = (0..n).fold(F::zero(), |acc, i| {
                let s = F::from_count(params.neighborhood_size(i));
                acc + s * s
            });
            let d_tilde = sq / (gamma_sum * gamma_sum);
            AccuracyReport {
                b,
                r: (two * d_tilde).sqrt() * c / (b * one_minus_q2).sqrt(),
                d_tilde,
                target_mean: weighted_mean(theta0, &gamma),
                unweighted_mean,
                empirical_fraction: None,
            }
        }
    };
    Ok(report)
}

/// Monte Carlo estimate of how often the weighted mean ends within `r`
/// of its starting value.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloAccuracy<F> {
    /// Closed-form report with `empirical_fraction` filled in.
    pub report: AccuracyReport<F>,
    /// `θ̄(T) − θ̄(0)` per run, in run order.
    pub drifts: Vec<F>,
    pub drift_variance: F,
    pub mean_abs_drift: F,
    pub variance_bound: F,
    /// Largest `max θ − min θ` at the horizon across runs.
    pub max_final_spread: F,
}

/// Runs `runs` independent executions of `rounds` rounds each. Run `r`
/// uses seed `derive_seed(seed, r)`; results are reduced in run order.
pub fn monte_carlo_accuracy<F: Real>(
    theta0: &[F],
    params: &MechanismParams<F>,
    rounds: usize,
    runs: usize,
    b: F,
    seed: u64,
) -> Result<MonteCarloAccuracy<F>> {
    if runs == 0 {
        return Err(Error::InvalidParameter {
            name: "runs",
            reason: "need at least one run".into(),
        });
    }
    let mut report = accuracy_radius(params, theta0, b)?;
    let gamma = params.gamma();
    let start = report.target_mean;

    let outcomes: Vec<(F, F)> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let trace = run_execution(theta0, params, rounds, derive_seed(seed, run as u64))?;
            let fin = &trace.final_theta;
            let spread = fin.iter().copied().fold(F::neg_infinity(), F::max)
                - fin.iter().copied().fold(F::infinity(), F::min);
            Ok((weighted_mean(fin, &gamma) - start, spread))
        })
        .collect::<Result<_>>()?;

    let drifts: Vec<F> = outcomes.iter().map(|o| o.0).collect();
    let count = F::from_count(runs);
    let inside = drifts.iter().filter(|d| d.abs() <= report.r).count();
    report.empirical_fraction = Some(F::from_count(inside) / count);

    let mean = ordered_sum(&drifts) / count;
    let drift_variance = if runs > 1 {
        drifts
            .iter()
            .fold(F::zero(), |acc, &d| acc + (d - mean) * (d - mean))
            / F::from_count(runs - 1)
    } else {
        F::zero()
    };
    let mean_abs_drift = drifts.iter().fold(F::zero(), |acc, d| acc + d.abs()) / count;
    let c = F::lit(params.schedule().c());
    let q = F::lit(params.schedule().q());
    let variance_bound = report.drift_variance_bound(c, q);
    let max_final_spread = outcomes.iter().map(|o| o.1).fold(F::zero(), F::max);

    Ok(MonteCarloAccuracy {
        report,
        drifts,
        drift_variance,
        mean_abs_drift,
        variance_bound,
        max_final_spread,
    })
}
