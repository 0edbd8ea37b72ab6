use rayon::prelude::*;

use crate::analysis::potential::potential_of;
use crate::error::{Error, Result};
use crate::graph::{check_convergence_condition, ConvergenceCheck, Graph, LaplacianMatrix};
use crate::mechanism::{run_round, MechanismParams, Mode, SeededNoise};
use crate::rng::derive_seed;
use crate::scalar::Scalar;

/// Per-round Monte Carlo statistics of the potential `P(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceEstimate {
    pub check: ConvergenceCheck<f64>,
    pub runs: usize,
    /// Sample mean of `P(t)` for `t = 0..=T`.
    pub mean_potential: Vec<f64>,
    /// Sample mean of `P(t+1) − (1−a)·P(t)` for `t = 0..T`.
    pub mean_excess: Vec<f64>,
    /// Standard error of `mean_excess`.
    pub excess_std_err: Vec<f64>,
    /// `λ_N·M²·E[wᵀw]` with `E[wᵀw] = Σᵢ(|N(i)|+1)·2c²q²ᵗ`.
    pub noise_term: Vec<f64>,
}

impl ConvergenceEstimate {
    /// Rounds where `E[P(t+1)] ≤ (1−a)E[P(t)] + λ_N M² E[wᵀw]` fails by more
    /// than `k_se` standard errors.
    pub fn recursion_violations(&self, k_se: f64) -> Vec<usize> {
        (0..self.mean_excess.len())
            .filter(|&t| {
                // relative slack for the f64 reduction of exact per-run values
                let slack = 1e-12 * (self.mean_potential[t] + self.mean_potential[t + 1]);
                self.mean_excess[t] > self.noise_term[t] + k_se * self.excess_std_err[t] + slack
            })
            .collect()
    }

    /// Noise-free bound `(1−a)ᵗ·P(0)`.
    pub fn deterministic_bound(&self, t: usize) -> f64 {
        (1.0 - self.check.a).powi(t as i32) * self.mean_potential[0]
    }
}

/// Averages `P(t)` over `runs` seeded executions (run `r` uses
/// `derive_seed(seed, r)`). The client-server mechanism is treated as the
/// complete graph.
///
/// States are shifted by client 0's value after every round. Both the
/// mechanism and `P` commute with a common shift, so this changes nothing
/// exactly, but in floating point the state magnitudes then shrink with the
/// disagreement and `P` keeps its relative precision down to the noise floor.
pub fn convergence_estimate<S: Scalar>(
    params: &MechanismParams<S>,
    theta0: &[S],
    rounds: usize,
    runs: usize,
    seed: u64,
) -> Result<ConvergenceEstimate> {
    if runs == 0 {
        return Err(Error::InvalidParameter {
            name: "runs",
            reason: "need at least one run".into(),
        });
    }
    let graph = match params.mode() {
        Mode::Distributed(g) => g.clone(),
        Mode::Centralized => Graph::complete(params.n())?,
    };
    let sigma: Vec<f64> = params.sigma().iter().map(Scalar::as_f64).collect();
    let check = check_convergence_condition(&graph, &sigma)?;
    let keep = S::lift(1.0 - check.a);
    let lap = potential_of(params);

    let per_run: Vec<(Vec<f64>, Vec<f64>)> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let p = recentred_potentials(params, theta0, rounds, &lap, derive_seed(seed, run as u64))?;
            let excess = p
                .windows(2)
                .map(|w| (w[1].clone() - keep.clone() * w[0].clone()).as_f64())
                .collect();
            Ok((p.iter().map(Scalar::as_f64).collect(), excess))
        })
        .collect::<Result<_>>()?;

    let count = runs as f64;
    let mut mean_potential = vec![0.0; rounds + 1];
    let mut mean_excess = vec![0.0; rounds];
    for (p, e) in &per_run {
        for (acc, v) in mean_potential.iter_mut().zip(p) {
            *acc += v;
        }
        for (acc, v) in mean_excess.iter_mut().zip(e) {
            *acc += v;
        }
    }
    mean_potential.iter_mut().for_each(|v| *v /= count);
    mean_excess.iter_mut().for_each(|v| *v /= count);

    let excess_std_err = (0..rounds)
        .map(|t| {
            if runs < 2 {
                return 0.0;
            }
            let ss: f64 = per_run
                .iter()
                .map(|(_, e)| (e[t] - mean_excess[t]).powi(2))
                .sum();
            (ss / (count - 1.0) / count).sqrt()
        })
        .collect();

    let c = params.schedule().c();
    let q = params.schedule().q();
    let nbhd: f64 = (0..graph.n()).map(|i| (graph.degree(i) + 1) as f64).sum();
    let noise_term = (0..rounds)
        .map(|t| {
            let ew = nbhd * 2.0 * c * c * q.powi(2 * t as i32);
            check.lambda_n * check.big_m * check.big_m * ew
        })
        .collect();

    Ok(ConvergenceEstimate {
        check,
        runs,
        mean_potential,
        mean_excess,
        excess_std_err,
        noise_term,
    })
}

fn recentre<S: Scalar>(theta: &mut [S]) {
    if let Some(anchor) = theta.first().cloned() {
        theta.iter_mut().for_each(|v| *v = v.clone() - anchor.clone());
    }
}

fn recentred_potentials<S: Scalar>(
    params: &MechanismParams<S>,
    theta0: &[S],
    rounds: usize,
    lap: &LaplacianMatrix<S>,
    seed: u64,
) -> Result<Vec<S>> {
    params.check_dim("theta0", theta0.len())?;
    let mut noise = SeededNoise::new(seed, params.n());
    let mut theta = theta0.to_vec();
    recentre(&mut theta);
    let mut p = Vec::with_capacity(rounds + 1);
    p.push(lap.quadratic_form(&theta));
    for t in 0..rounds {
        let (_, mut next) = run_round(&theta, params, t, &mut noise)?;
        recentre(&mut next);
        p.push(lap.quadratic_form(&next));
        theta = next;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseSchedule;
    use crate::scalar::ratio;
    use num_rational::BigRational;

    #[test]
    fn noiseless_decay_within_deterministic_bound() {
        let g = Graph::path(5).unwrap();
        let sched = NoiseSchedule::new(0.0, 0.5).unwrap();
        let p = MechanismParams::distributed(g, vec![0.5; 5], sched, []).unwrap();
        let theta = [0.0, 1.0, 4.0, -2.0, 3.0];
        let est = convergence_estimate(&p, &theta, 100, 1, 0).unwrap();
        assert!(est.check.converges());
        for t in 0..=100 {
            assert!(est.mean_potential[t] <= est.deterministic_bound(t) * (1.0 + 1e-9) + 1e-300);
        }
        assert!(est.recursion_violations(0.0).is_empty());
    }

    #[test]
    fn consensus_start_stays_put() {
        let g = Graph::ring(4).unwrap();
        let sched = NoiseSchedule::new(0.0, 0.5).unwrap();
        let p = MechanismParams::distributed(g, vec![0.4; 4], sched, []).unwrap();
        let est = convergence_estimate(&p, &[2.0; 4], 20, 2, 0).unwrap();
        assert!(est.mean_potential.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn k3_noisy_potential_vanishes() {
        let g = Graph::complete(3).unwrap();
        let sched = NoiseSchedule::new(1.0, 0.5).unwrap();
        let p = MechanismParams::<BigRational>::distributed(g, vec![ratio(1, 2); 3], sched, []).unwrap();
        let theta = vec![ratio(0, 1), ratio(1, 1), ratio(3, 1)];
        let est = convergence_estimate(&p, &theta, 200, 200, 4).unwrap();
        assert!(est.mean_potential[200] < 1e-6);
        assert!(est.recursion_violations(3.0).is_empty());
    }

    #[test]
    fn float_potentials_track_exact_ones() {
        let sched = NoiseSchedule::new(1.0, 0.8).unwrap();
        let theta: Vec<f64> = (0..6).map(|i| 40.0 + 10.0 * i as f64).collect();
        let theta_x: Vec<BigRational> = theta.iter().map(|&v| BigRational::lift(v)).collect();
        let run = |g: Graph| {
            let pf = MechanismParams::distributed(g.clone(), vec![0.5; 6], sched, []).unwrap();
            let px = MechanismParams::<BigRational>::distributed(g, vec![ratio(1, 2); 6], sched, []).unwrap();
            let float = recentred_potentials(&pf, &theta, 150, &potential_of(&pf), 3).unwrap();
            let exact = recentred_potentials(&px, &theta_x, 150, &potential_of(&px), 3).unwrap();
            (float, exact.iter().map(Scalar::as_f64).collect::<Vec<_>>())
        };

        let (float, exact) = run(Graph::ring(6).unwrap());
        assert!(exact[150] < 1e-20);
        for (a, b) in float.iter().zip(&exact) {
            assert!((a - b).abs() <= 1e-9 * b, "{a} vs {b}");
        }

        // on K_N the noise cancels from the disagreement; float error stays
        // far below the per-round noise contribution
        let (float, exact) = run(Graph::complete(6).unwrap());
        for (t, (a, b)) in float.iter().zip(&exact).enumerate() {
            assert!((a - b).abs() <= 1e-20 * 0.64f64.powi(t as i32) + 1e-9 * b);
        }
    }
}
