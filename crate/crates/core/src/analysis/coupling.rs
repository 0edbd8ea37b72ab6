//! Executable form of the bijection between executions from adjacent
//! initial states: client `k`'s noise is shifted by `δ(1−σₖ)ᵗ`, which keeps
//! every message and feedback value unchanged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::report::KeyValues;
use crate::error::{Error, Result};
use crate::mechanism::{inject_noise_sequence, observe, MechanismParams, Mode};
use crate::noise::LaplaceParam;
use crate::rng::derive_seed;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingResult {
    /// 0-based index of the client whose initial state differs.
    pub k: usize,
    /// `θₖ(0) − θ'ₖ(0)`.
    pub delta: f64,
    pub horizon: usize,
    /// Sup-norm distance between the two observations.
    pub max_observation_gap: f64,
    /// Per round `t = 0..=T`: `|θₖ(t) − θ'ₖ(t) − δ(1−σₖ)ᵗ|`.
    pub theta_gap_errors: Vec<f64>,
    /// Largest state difference over clients other than `k`.
    pub max_other_state_gap: f64,
    /// `Σ_{t<T} (|δ|/c)((1−σₖ)/q)ᵗ`.
    pub density_ratio_log_bound: f64,
}

impl CouplingResult {
    pub fn max_theta_gap_error(&self) -> f64 {
        self.theta_gap_errors.iter().copied().fold(0.0, f64::max)
    }
}

impl KeyValues for CouplingResult {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("k", (self.k + 1).to_string()),
            ("delta", self.delta.to_string()),
            ("horizon", self.horizon.to_string()),
            ("max_observation_gap", self.max_observation_gap.to_string()),
            ("max_theta_gap_error", self.max_theta_gap_error().to_string()),
            ("max_other_state_gap", self.max_other_state_gap.to_string()),
            ("density_ratio_log_bound", self.density_ratio_log_bound.to_string()),
        ]
    }
}

/// Shifts client `k`'s noise at round `t` by `δ(1−σₖ)ᵗ`.
pub fn build_coupled_noise<S: Scalar>(eta_seq: &[Vec<S>], k: usize, delta: &S, sigma_k: &S) -> Vec<Vec<S>> {
    let keep = S::one() - sigma_k.clone();
    let mut shift = delta.clone();
    eta_seq
        .iter()
        .map(|row| {
            let mut row = row.clone();
            if let Some(v) = row.get_mut(k) {
                *v = v.clone() + shift.clone();
            }
            shift = shift.clone() * keep.clone();
            row
        })
        .collect()
}

/// `Σ_{t<T} (|δ|/c)·((1−σₖ)/q)ᵗ`; infinite when `c = 0`.
pub fn density_ratio_log_bound(delta: f64, c: f64, q: f64, sigma_k: f64, horizon: usize) -> f64 {
    if delta == 0.0 {
        return 0.0;
    }
    if c <= 0.0 {
        return f64::INFINITY;
    }
    let ratio = (1.0 - sigma_k) / q;
    let mut term = delta.abs() / c;
    let mut sum = 0.0;
    for _ in 0..horizon {
        sum += term;
        term *= ratio;
    }
    sum
}

/// Runs the mechanism from `theta0` with `eta_seq` and from `theta0_prime`
/// with the coupled noise, and measures how far the pair departs from the
/// coupling identities.
pub fn verify_coupling<S: Scalar>(
    theta0: &[S],
    theta0_prime: &[S],
    params: &MechanismParams<S>,
    eta_seq: &[Vec<S>],
) -> Result<CouplingResult> {
    let n = params.n();
    for (what, len) in [("theta0", theta0.len()), ("theta0_prime", theta0_prime.len())] {
        if len != n {
            return Err(Error::DimensionMismatch {
                what,
                expected: n,
                found: len,
            });
        }
    }
    let differing: Vec<usize> = (0..n).filter(|&i| theta0[i] != theta0_prime[i]).collect();
    if differing.len() > 1 {
        return Err(Error::NotAdjacent(differing));
    }
    let k = differing.first().copied().unwrap_or(0);
    if matches!(params.mode(), Mode::Distributed(_)) && params.compromised().contains(&k) && !differing.is_empty() {
        return Err(Error::CompromisedClient(k));
    }
    let delta = theta0[k].clone() - theta0_prime[k].clone();
    let sigma_k = params.sigma()[k].clone();

    let coupled = build_coupled_noise(eta_seq, k, &delta, &sigma_k);
    let original = inject_noise_sequence(theta0, params, eta_seq)?;
    let mirrored = inject_noise_sequence(theta0_prime, params, &coupled)?;

    let max_observation_gap = observe(&original).sup_gap(&observe(&mirrored));

    let keep = S::one() - sigma_k.clone();
    let mut expected = delta.clone();
    let mut theta_gap_errors = Vec::with_capacity(original.horizon() + 1);
    let mut max_other_state_gap = 0.0f64;
    for (a, b) in original.states().zip(mirrored.states()) {
        let gap = a[k].clone() - b[k].clone();
        theta_gap_errors.push((gap - expected.clone()).abs().as_f64());
        expected = expected * keep.clone();
        for i in (0..n).filter(|&i| i != k) {
            max_other_state_gap = max_other_state_gap.max((a[i].clone() - b[i].clone()).abs().as_f64());
        }
    }

    let sched = params.schedule();
    Ok(CouplingResult {
        k,
        delta: delta.as_f64(),
        horizon: eta_seq.len(),
        max_observation_gap,
        theta_gap_errors,
        max_other_state_gap,
        density_ratio_log_bound: density_ratio_log_bound(
            delta.as_f64(),
            sched.c(),
            sched.q(),
            sigma_k.as_f64(),
            eta_seq.len(),
        ),
    })
}

/// Coarse empirical check on client `k`'s round-0 message: histograms of
/// `θₖ + Lap(c)` and `θ'ₖ + Lap(c)` over `bins` equal-width bins, returning
/// the largest `|ln(f/f')|` among bins where both counts reach 30.
///
/// A diagnostic only; frequency ratios on continuous data are noisy.
pub fn round0_histogram_log_ratio(
    theta_k: f64,
    theta_k_prime: f64,
    c: f64,
    bins: usize,
    runs: usize,
    seed: u64,
) -> Result<f64> {
    let lap = LaplaceParam::new(c)?;
    let mut rng_a = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let mut rng_b = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let a: Vec<f64> = (0..runs).map(|_| theta_k + lap.sample(&mut rng_a)).collect();
    let b: Vec<f64> = (0..runs).map(|_| theta_k_prime + lap.sample(&mut rng_b)).collect();
    let lo = theta_k.min(theta_k_prime) - 3.0 * c;
    let hi = theta_k.max(theta_k_prime) + 3.0 * c;
    let width = (hi - lo) / bins.max(1) as f64;
    let histogram = |xs: &[f64]| {
        let mut h = vec![0usize; bins.max(1)];
        for &x in xs {
            if x >= lo && x < hi && width > 0.0 {
                let idx = (((x - lo) / width) as usize).min(h.len() - 1);
                h[idx] += 1;
            }
        }
        h
    };
    let (ha, hb) = (histogram(&a), histogram(&b));
    Ok(ha
        .iter()
        .zip(&hb)
        .filter(|(&x, &y)| x >= 30 && y >= 30)
        .map(|(&x, &y)| (x as f64 / y as f64).ln().abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::mechanism::run_execution;
    use crate::noise::NoiseSchedule;

    fn sched(c: f64, q: f64) -> NoiseSchedule<f64> {
        NoiseSchedule::new(c, q).unwrap()
    }

    #[test]
    fn zero_shift_is_identity() {
        let seq = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(build_coupled_noise(&seq, 0, &0.0, &0.5), seq);
    }

    #[test]
    fn shift_decays_geometrically() {
        let seq = vec![vec![0.0]; 3];
        let out = build_coupled_noise(&seq, 0, &1.0, &0.5);
        assert_eq!(out, vec![vec![1.0], vec![0.5], vec![0.25]]);
    }

    #[test]
    fn shift_matches_schedule_decay_when_sigma_is_one_minus_q() {
        let q = 0.75f64;
        let seq = vec![vec![0.0f64, 0.0]; 6];
        let out = build_coupled_noise(&seq, 1, &2.0, &(1.0 - q));
        for (t, row) in out.iter().enumerate() {
            assert!((row[1] - 2.0 * q.powi(t as i32)).abs() < 1e-15);
            assert_eq!(row[0], 0.0);
        }
    }

    #[test]
    fn identical_starts_have_no_gaps() {
        let p = MechanismParams::centralized(3, 0.5, sched(1.0, 0.9)).unwrap();
        let tr = run_execution(&[0.0, 1.0, 2.0], &p, 20, 1).unwrap();
        let r = verify_coupling(&tr.theta0, &tr.theta0, &p, &tr.noise_sequence()).unwrap();
        assert_eq!(r.max_observation_gap, 0.0);
        assert_eq!(r.max_theta_gap_error(), 0.0);
        assert_eq!(r.density_ratio_log_bound, 0.0);
    }

    #[test]
    fn centralized_coupling_holds() {
        let p = MechanismParams::centralized(3, 0.5, sched(1.0, 0.9)).unwrap();
        let theta = [0.3, -1.0, 2.0];
        let theta_prime = [0.3, -2.0, 2.0];
        let tr = run_execution(&theta, &p, 50, 99).unwrap();
        let r = verify_coupling(&theta, &theta_prime, &p, &tr.noise_sequence()).unwrap();
        assert_eq!(r.k, 1);
        assert_eq!(r.delta, 1.0);
        assert!(r.max_observation_gap < 1e-10);
        assert!(r.max_theta_gap_error() < 1e-10);
        assert!(r.max_other_state_gap < 1e-10);
        assert_eq!(r.theta_gap_errors.len(), 51);
    }

    #[test]
    fn distributed_coupling_with_compromised_neighbours() {
        let g = Graph::ring(6).unwrap();
        let p = MechanismParams::distributed(g, vec![0.3, 0.5, 0.7, 0.4, 0.6, 0.5], sched(2.0, 0.9), [1, 3])
            .unwrap();
        let theta = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut theta_prime = theta;
        theta_prime[2] = 0.5;
        let tr = run_execution(&theta, &p, 40, 5).unwrap();
        let r = verify_coupling(&theta, &theta_prime, &p, &tr.noise_sequence()).unwrap();
        assert!(r.max_observation_gap < 1e-10, "{r:?}");
        assert!(r.max_theta_gap_error() < 1e-10);

        let mut bad = theta;
        bad[1] = 0.0;
        assert_eq!(
            verify_coupling(&theta, &bad, &p, &tr.noise_sequence()),
            Err(Error::CompromisedClient(1))
        );
    }

    #[test]
    fn non_adjacent_inputs_are_rejected() {
        let p = MechanismParams::centralized(3, 0.5, sched(1.0, 0.9)).unwrap();
        let err = verify_coupling(&[0.0, 0.0, 0.0], &[1.0, 1.0, 0.0], &p, &[]).unwrap_err();
        assert_eq!(err, Error::NotAdjacent(vec![0, 1]));
    }

    #[test]
    fn log_bound_series_limit() {
        // (1/10)·Σ(0.2/0.9)ᵗ = 9/70
        let b = density_ratio_log_bound(1.0, 10.0, 0.9, 0.8, 500);
        assert!((b - 9.0 / 70.0).abs() < 1e-12);
        assert!((b - 0.128_571_428_571_428_6).abs() < 1e-12);
        assert_eq!(density_ratio_log_bound(1.0, 0.0, 0.9, 0.8, 5), f64::INFINITY);
    }

    #[test]
    fn histogram_diagnostic_is_finite() {
        let r = round0_histogram_log_ratio(0.0, 1.0, 2.0, 12, 20_000, 3).unwrap();
        // round-0 messages alone satisfy the ratio bound exp(δ/c) = exp(0.5)
        assert!(r.is_finite() && r < 1.0, "{r}");
    }
}
