//! Round semantics of the client-server and distributed mechanisms.
//!
//! All averages accumulate in ascending client index so a trace is a pure
//! function of the initial state, the parameters and the noise sequence.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::noise::{LaplaceParam, NoiseSchedule};
use crate::scalar::{ordered_sum, Scalar};

/// Topology the clients average over.
#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Every client reports to one server that broadcasts the mean.
    Centralized,
    /// Clients average with their neighbours in the graph.
    Distributed(Graph),
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Centralized => "centralized",
            Mode::Distributed(_) => "distributed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismParams<S> {
    sigma: Vec<S>,
    schedule: NoiseSchedule<f64>,
    mode: Mode,
    compromised: BTreeSet<usize>,
}

impl<S: Scalar> MechanismParams<S> {
    /// Client-server mechanism with a common interpolation coefficient.
    pub fn centralized(n: usize, sigma: S, schedule: NoiseSchedule<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "need at least one client".into(),
            });
        }
        Self::validated(vec![sigma; n], schedule, Mode::Centralized, BTreeSet::new())
    }

    /// Distributed mechanism over `graph`; `compromised` holds 0-based
    /// client indices whose states the adversary can read.
    pub fn distributed(
        graph: Graph,
        sigma: Vec<S>,
        schedule: NoiseSchedule<f64>,
        compromised: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        if sigma.len() != graph.n() {
            return Err(Error::DimensionMismatch {
                what: "sigma",
                expected: graph.n(),
                found: sigma.len(),
            });
        }
        let compromised: BTreeSet<usize> = compromised.into_iter().collect();
        if let Some(&k) = compromised.iter().find(|&&k| k >= graph.n()) {
            return Err(Error::ClientOutOfRange {
                index: k,
                n: graph.n(),
            });
        }
        Self::validated(sigma, schedule, Mode::Distributed(graph), compromised)
    }

    fn validated(
        sigma: Vec<S>,
        schedule: NoiseSchedule<f64>,
        mode: Mode,
        compromised: BTreeSet<usize>,
    ) -> Result<Self> {
        for (i, s) in sigma.iter().enumerate() {
            if !(*s > S::zero() && *s < S::one()) {
                return Err(Error::InvalidParameter {
                    name: "sigma",
                    reason: format!("sigma[{i}] = {s} must lie in the open interval (0,1)"),
                });
            }
        }
        Ok(Self {
            sigma,
            schedule,
            mode,
            compromised,
        })
    }

    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[S] {
        &self.sigma
    }

    pub fn sigma_min(&self) -> S {
        self.sigma
            .iter()
            .skip(1)
            .fold(self.sigma[0].clone(), |m, s| if *s < m { s.clone() } else { m })
    }

    pub fn schedule(&self) -> &NoiseSchedule<f64> {
        &self.schedule
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    pub fn graph(&self) -> Option<&Graph> {
        match &self.mode {
            Mode::Distributed(g) => Some(g),
            Mode::Centralized => None,
        }
    }

    pub fn compromised(&self) -> &BTreeSet<usize> {
        &self.compromised
    }

    /// Neighbourhood size `|N(i)|+1`; `N` for every client in the
    /// client-server setting.
    pub fn neighborhood_size(&self, i: usize) -> usize {
        match &self.mode {
            Mode::Centralized => self.n(),
            Mode::Distributed(g) => g.degree(i) + 1,
        }
    }

    /// Weights `γᵢ = (|N(i)|+1)/σᵢ` of the mean the mechanism preserves in
    /// expectation.
    pub fn gamma(&self) -> Vec<S> {
        (0..self.n())
            .map(|i| S::from_count(self.neighborhood_size(i)) / self.sigma[i].clone())
            .collect()
    }

    /// `q > 1 − min σᵢ`: the privacy lemmas apply.
    pub fn is_private(&self) -> bool {
        let q = self.schedule.q();
        self.schedule.c() > 0.0 && q < 1.0 && q + self.sigma_min().as_f64() > 1.0
    }

    /// Same mechanism with another noise schedule.
    pub fn with_schedule(&self, schedule: NoiseSchedule<f64>) -> Self {
        Self {
            schedule,
            ..self.clone()
        }
    }

    pub(crate) fn check_dim(&self, what: &'static str, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.n(),
                found: len,
            });
        }
        Ok(())
    }
}

/// Feedback of one round: the server mean, or each client's local mean.
#[derive(Debug, Clone, PartialEq)]
pub enum Feedback<S> {
    Server(S),
    Local(Vec<S>),
}

impl<S: Scalar> Feedback<S> {
    /// Feedback as seen by client `i`.
    pub fn for_client(&self, i: usize) -> &S {
        match self {
            Feedback::Server(y) => y,
            Feedback::Local(ys) => &ys[i],
        }
    }

    pub fn sup_gap(&self, other: &Self) -> f64 {
        match (self, other) {
            (Feedback::Server(a), Feedback::Server(b)) => (a.clone() - b.clone()).abs().as_f64(),
            (Feedback::Local(a), Feedback::Local(b)) => crate::scalar::sup_gap(a, b),
            _ => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord<S> {
    pub t: usize,
    /// States at the start of the round.
    pub theta: Vec<S>,
    pub eta: Vec<S>,
    /// Messages `θ + η`.
    pub x: Vec<S>,
    pub y: Feedback<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace<S> {
    pub params: MechanismParams<S>,
    pub theta0: Vec<S>,
    pub rounds: Vec<RoundRecord<S>>,
    pub final_theta: Vec<S>,
}

impl<S: Scalar> ExecutionTrace<S> {
    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    /// `θ(0), θ(1), …, θ(T)`.
    pub fn states(&self) -> impl Iterator<Item = &[S]> {
        self.rounds
            .iter()
            .map(|r| r.theta.as_slice())
            .chain(std::iter::once(self.final_theta.as_slice()))
    }

    pub fn noise_sequence(&self) -> Vec<Vec<S>> {
        self.rounds.iter().map(|r| r.eta.clone()).collect()
    }
}

/// What an honest-but-curious adversary sees: all messages, all feedback,
/// and the states of compromised clients.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<S> {
    pub x_seq: Vec<Vec<S>>,
    pub y_seq: Vec<Feedback<S>>,
    /// Sorted 0-based indices.
    pub compromised: Vec<usize>,
    /// Per round, the states of `compromised` in the same order.
    pub compromised_theta_seq: Vec<Vec<S>>,
}

impl<S: Scalar> Observation<S> {
    /// Sup-norm distance between two observations of equal shape.
    pub fn sup_gap(&self, other: &Self) -> f64 {
        if self.x_seq.len() != other.x_seq.len() || self.compromised != other.compromised {
            return f64::INFINITY;
        }
        let xs = self
            .x_seq
            .iter()
            .zip(&other.x_seq)
            .map(|(a, b)| crate::scalar::sup_gap(a, b));
        let ys = self.y_seq.iter().zip(&other.y_seq).map(|(a, b)| a.sup_gap(b));
        let thetas = self
            .compromised_theta_seq
            .iter()
            .zip(&other.compromised_theta_seq)
            .map(|(a, b)| crate::scalar::sup_gap(a, b));
        xs.chain(ys).chain(thetas).fold(0.0, f64::max)
    }
}

/// Supplies the per-round noise vector.
pub trait NoiseSource<S> {
    /// Writes the noises of round `t` (Laplace scale `scale`) into `out`.
    /// Rounds are requested in increasing order starting at 0.
    fn fill(&mut self, t: usize, scale: f64, out: &mut [S]) -> Result<()>;
}

/// Independent ChaCha substreams derived from one master seed: stream `i`
/// feeds client `i`, stream `N` is spare.
#[derive(Debug, Clone)]
pub struct SeededNoise {
    streams: Vec<ChaCha8Rng>,
}

impl SeededNoise {
    pub fn new(master_seed: u64, n: usize) -> Self {
        let streams = (0..=n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        Self { streams }
    }

    /// The stream not assigned to any client.
    pub fn spare(&mut self) -> &mut ChaCha8Rng {
        self.streams.last_mut().expect("spare stream exists")
    }
}

impl<S: Scalar> NoiseSource<S> for SeededNoise {
    fn fill(&mut self, _t: usize, scale: f64, out: &mut [S]) -> Result<()> {
        let lap = LaplaceParam::new(scale)?;
        for (slot, rng) in out.iter_mut().zip(&mut self.streams) {
            *slot = S::lift(lap.sample(rng));
        }
        Ok(())
    }
}

/// Replays a fixed noise sequence.
#[derive(Debug, Clone)]
pub struct InjectedNoise<'a, S> {
    seq: &'a [Vec<S>],
}

impl<'a, S> InjectedNoise<'a, S> {
    pub fn new(seq: &'a [Vec<S>]) -> Self {
        Self { seq }
    }
}

impl<S: Scalar> NoiseSource<S> for InjectedNoise<'_, S> {
    fn fill(&mut self, t: usize, _scale: f64, out: &mut [S]) -> Result<()> {
        let row = self.seq.get(t).ok_or(Error::DimensionMismatch {
            what: "noise sequence rounds",
            expected: t + 1,
            found: self.seq.len(),
        })?;
        if row.len() != out.len() {
            return Err(Error::DimensionMismatch {
                what: "noise vector",
                expected: out.len(),
                found: row.len(),
            });
        }
        out.clone_from_slice(row);
        Ok(())
    }
}

/// No noise at all.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl<S: Scalar> NoiseSource<S> for ZeroNoise {
    fn fill(&mut self, _t: usize, _scale: f64, out: &mut [S]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = S::zero());
        Ok(())
    }
}

fn draw_messages<S: Scalar>(
    theta: &[S],
    params: &MechanismParams<S>,
    t: usize,
    noise: &mut impl NoiseSource<S>,
) -> Result<(Vec<S>, Vec<S>)> {
    params.check_dim("theta", theta.len())?;
    let mut eta = vec![S::zero(); theta.len()];
    noise.fill(t, params.schedule.scale_at(t), &mut eta)?;
    let x = theta
        .iter()
        .zip(&eta)
        .map(|(th, e)| th.clone() + e.clone())
        .collect();
    Ok((eta, x))
}

fn interpolate<S: Scalar>(theta: &S, y: &S, sigma: &S) -> S {
    (S::one() - sigma.clone()) * theta.clone() + sigma.clone() * y.clone()
}

/// One client-server round: `xᵢ = θᵢ + ηᵢ`, `y = mean(x)`,
/// `θᵢ' = (1−σ)θᵢ + σy`.
pub fn run_round_centralized<S: Scalar>(
    theta: &[S],
    params: &MechanismParams<S>,
    t: usize,
    noise: &mut impl NoiseSource<S>,
) -> Result<(RoundRecord<S>, Vec<S>)> {
    if !matches!(params.mode, Mode::Centralized) {
        return Err(Error::WrongMode {
            expected: "centralized",
        });
    }
    let (eta, x) = draw_messages(theta, params, t, noise)?;
    let y = ordered_sum(&x) / S::from_count(x.len());
    let sigma = &params.sigma[0];
    let next = theta.iter().map(|th| interpolate(th, &y, sigma)).collect();
    let record = RoundRecord {
        t,
        theta: theta.to_vec(),
        eta,
        x,
        y: Feedback::Server(y),
    };
    Ok((record, next))
}

/// One distributed round: `yᵢ` is the mean of `x` over `N(i) ∪ {i}` and
/// `θᵢ' = (1−σᵢ)θᵢ + σᵢyᵢ`.
pub fn run_round_distributed<S: Scalar>(
    theta: &[S],
    params: &MechanismParams<S>,
    t: usize,
    noise: &mut impl NoiseSource<S>,
) -> Result<(RoundRecord<S>, Vec<S>)> {
    let Mode::Distributed(graph) = &params.mode else {
        return Err(Error::WrongMode {
            expected: "distributed",
        });
    };
    let (eta, x) = draw_messages(theta, params, t, noise)?;
    let y: Vec<S> = (0..theta.len())
        .map(|i| {
            let nbrs = graph.neighbors(i);
            let split = nbrs.partition_point(|&j| j < i);
            let sum = nbrs[..split]
                .iter()
                .chain(std::iter::once(&i))
                .chain(&nbrs[split..])
                .fold(S::zero(), |acc, &j| acc + x[j].clone());
            sum / S::from_count(nbrs.len() + 1)
        })
        .collect();
    let next = theta
        .iter()
        .zip(&y)
        .zip(&params.sigma)
        .map(|((th, yi), s)| interpolate(th, yi, s))
        .collect();
    let record = RoundRecord {
        t,
        theta: theta.to_vec(),
        eta,
        x,
        y: Feedback::Local(y),
    };
    Ok((record, next))
}

/// Dispatches on the parameter mode.
pub fn run_round<S: Scalar>(
    theta: &[S],
    params: &MechanismParams<S>,
    t: usize,
    noise: &mut impl NoiseSource<S>,
) -> Result<(RoundRecord<S>, Vec<S>)> {
    match params.mode {
        Mode::Centralized => run_round_centralized(theta, params, t, noise),
        Mode::Distributed(_) => run_round_distributed(theta, params, t, noise),
    }
}

/// Runs `rounds` rounds drawing noise from `noise`.
pub fn run_with_noise<S: Scalar>(
    theta0: &[S],
    params: &MechanismParams<S>,
    rounds: usize,
    noise: &mut impl NoiseSource<S>,
) -> Result<ExecutionTrace<S>> {
    params.check_dim("theta0", theta0.len())?;
    let mut theta = theta0.to_vec();
    let mut records = Vec::with_capacity(rounds);
    for t in 0..rounds {
        let (record, next) = run_round(&theta, params, t, noise)?;
        records.push(record);
        theta = next;
    }
    Ok(ExecutionTrace {
        params: params.clone(),
        theta0: theta0.to_vec(),
        rounds: records,
        final_theta: theta,
    })
}

/// Seeded execution over a finite horizon.
pub fn run_execution<S: Scalar>(
    theta0: &[S],
    params: &MechanismParams<S>,
    rounds: usize,
    seed: u64,
) -> Result<ExecutionTrace<S>> {
    run_with_noise(theta0, params, rounds, &mut SeededNoise::new(seed, params.n()))
}

/// Executes with the supplied noises instead of sampling; the horizon is
/// the length of `eta_seq`.
pub fn inject_noise_sequence<S: Scalar>(
    theta0: &[S],
    params: &MechanismParams<S>,
    eta_seq: &[Vec<S>],
) -> Result<ExecutionTrace<S>> {
    for row in eta_seq {
        params.check_dim("noise vector", row.len())?;
    }
    run_with_noise(theta0, params, eta_seq.len(), &mut InjectedNoise::new(eta_seq))
}

/// Adversary's projection of a trace.
pub fn observe<S: Scalar>(trace: &ExecutionTrace<S>) -> Observation<S> {
    let compromised: Vec<usize> = match trace.params.mode {
        Mode::Centralized => Vec::new(),
        Mode::Distributed(_) => trace.params.compromised.iter().copied().collect(),
    };
    Observation {
        x_seq: trace.rounds.iter().map(|r| r.x.clone()).collect(),
        y_seq: trace.rounds.iter().map(|r| r.y.clone()).collect(),
        compromised_theta_seq: trace
            .rounds
            .iter()
            .map(|r| compromised.iter().map(|&k| r.theta[k].clone()).collect())
            .collect(),
        compromised,
    }
}

/// Smallest horizon with `c·q^T < 1e-12` and `(1−σ_min)^T·spread < 1e-12`.
pub fn default_horizon(c: f64, q: f64, sigma_min: f64, spread: f64) -> usize {
    const FLOOR: f64 = 1e-12;
    const CAP: usize = 1_000_000;
    let steps = |amplitude: f64, rate: f64| -> usize {
        if amplitude < FLOOR || rate <= 0.0 {
            return 0;
        }
        if rate >= 1.0 {
            return CAP;
        }
        let t = ((FLOOR / amplitude).ln() / rate.ln()).floor() as usize + 1;
        t.min(CAP)
    };
    steps(c, q).max(steps(spread.abs(), 1.0 - sigma_min))
}

/// CSV with columns `t,client,theta,eta,x,y`; `y` is the client's own
/// feedback.
pub fn trace_csv<S: Scalar>(trace: &ExecutionTrace<S>) -> String {
    let mut out = String::from("t,client,theta,eta,x,y\n");
    for r in &trace.rounds {
        for i in 0..r.x.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.t,
                i + 1,
                r.theta[i],
                r.eta[i],
                r.x[i],
                r.y.for_client(i)
            );
        }
    }
    out
}

/// Observation CSV: same columns as [`trace_csv`], with `theta` and `eta`
/// left empty for uncompromised clients.
pub fn observation_csv<S: Scalar>(obs: &Observation<S>) -> String {
    let mut out = String::from("t,client,theta,eta,x,y\n");
    for (t, (x, y)) in obs.x_seq.iter().zip(&obs.y_seq).enumerate() {
        for (i, xi) in x.iter().enumerate() {
            let (theta, eta) = match obs.compromised.binary_search(&i) {
                Ok(pos) => {
                    let th = obs.compromised_theta_seq[t][pos].clone();
                    let eta = xi.clone() - th.clone();
                    (th.to_string(), eta.to_string())
                }
                Err(_) => (String::new(), String::new()),
            };
            let _ = writeln!(out, "{t},{},{theta},{eta},{xi},{}", i + 1, y.for_client(i));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;
    use num_rational::BigRational;
    use proptest::prelude::*;

    fn sched(c: f64, q: f64) -> NoiseSchedule<f64> {
        NoiseSchedule::new(c, q).unwrap()
    }

    #[test]
    fn centralized_zero_noise() {
        let p = MechanismParams::centralized(2, 0.5, sched(1.0, 0.5)).unwrap();
        let (rec, next) = run_round_centralized(&[0.0, 1.0], &p, 0, &mut ZeroNoise).unwrap();
        assert_eq!(rec.y, Feedback::Server(0.5));
        assert_eq!(next, vec![0.25, 0.75]);
    }

    #[test]
    fn centralized_zero_sum_noise() {
        let p = MechanismParams::centralized(2, 0.5, sched(1.0, 0.5)).unwrap();
        let seq = vec![vec![2.0, -2.0]];
        let mut src = InjectedNoise::new(&seq);
        let (rec, next) = run_round_centralized(&[0.0, 1.0], &p, 0, &mut src).unwrap();
        assert_eq!(rec.x, vec![2.0, -1.0]);
        assert_eq!(rec.y, Feedback::Server(0.5));
        assert_eq!(next, vec![0.25, 0.75]);
    }

    #[test]
    fn consensus_is_fixed_point() {
        let p = MechanismParams::centralized(4, 0.3, sched(1.0, 0.5)).unwrap();
        let theta = vec![2.5; 4];
        let (_, next) = run_round_centralized(&theta, &p, 0, &mut ZeroNoise).unwrap();
        assert_eq!(next, theta);
        let g = Graph::path(4).unwrap();
        let p = MechanismParams::distributed(g, vec![0.3, 0.6, 0.2, 0.9], sched(1.0, 0.5), [])
            .unwrap();
        let (_, next) = run_round_distributed(&theta, &p, 0, &mut ZeroNoise).unwrap();
        assert_eq!(next, theta);
    }

    #[test]
    fn distributed_path_example() {
        let g = Graph::path(3).unwrap();
        let p = MechanismParams::distributed(g.clone(), vec![0.5; 3], sched(1.0, 0.5), []).unwrap();
        let (rec, next) = run_round_distributed(&[0.0, 3.0, 6.0], &p, 0, &mut ZeroNoise).unwrap();
        assert_eq!(rec.y, Feedback::Local(vec![1.5, 3.0, 4.5]));
        assert_eq!(next, vec![0.75, 3.0, 5.25]);
        assert!(MechanismParams::distributed(g, vec![1.0; 3], sched(1.0, 0.5), []).is_err());
    }

    #[test]
    fn isolated_node_self_averages() {
        let g = Graph::new(3, [(0, 1)]).unwrap();
        let p = MechanismParams::distributed(g, vec![0.4; 3], sched(1.0, 0.5), []).unwrap();
        let seq = vec![vec![0.0, 0.0, 1.5]];
        let (rec, next) =
            run_round_distributed(&[1.0f64, 2.0, 7.0], &p, 0, &mut InjectedNoise::new(&seq)).unwrap();
        assert_eq!(*rec.y.for_client(2), 8.5);
        assert!((next[2] - (7.0 + 0.4 * 1.5)).abs() < 1e-15);
    }

    #[test]
    fn complete_graph_matches_centralized_without_noise() {
        let n = 5;
        let theta = vec![0.1, 4.0, -2.0, 3.3, 0.0];
        let pc = MechanismParams::centralized(n, 0.35, sched(1.0, 0.5)).unwrap();
        let pd = MechanismParams::distributed(
            Graph::complete(n).unwrap(),
            vec![0.35; n],
            sched(1.0, 0.5),
            [],
        )
        .unwrap();
        let (_, a) = run_round_centralized(&theta, &pc, 0, &mut ZeroNoise).unwrap();
        let (_, b) = run_round_distributed(&theta, &pd, 0, &mut ZeroNoise).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_mode_is_rejected() {
        let p = MechanismParams::centralized(2, 0.5, sched(1.0, 0.5)).unwrap();
        assert!(run_round_distributed(&[0.0, 1.0], &p, 0, &mut ZeroNoise).is_err());
        assert!(run_round_centralized(&[0.0], &p, 0, &mut ZeroNoise).is_err());
    }

    #[test]
    fn empty_horizon() {
        let p = MechanismParams::centralized(2, 0.5, sched(1.0, 0.5)).unwrap();
        let tr = run_execution(&[0.0, 1.0], &p, 0, 9).unwrap();
        assert!(tr.rounds.is_empty());
        assert_eq!(tr.final_theta, vec![0.0, 1.0]);
    }

    #[test]
    fn seeded_runs_replay() {
        let p = MechanismParams::centralized(3, 0.5, sched(2.0, 0.9)).unwrap();
        let a = run_execution(&[0.0, 1.0, 5.0], &p, 40, 77).unwrap();
        let b = run_execution(&[0.0, 1.0, 5.0], &p, 40, 77).unwrap();
        assert_eq!(a, b);
        let c = run_execution(&[0.0, 1.0, 5.0], &p, 40, 78).unwrap();
        assert_ne!(a, c);
        let replay = inject_noise_sequence(&a.theta0, &p, &a.noise_sequence()).unwrap();
        assert_eq!(replay, a);
    }

    #[test]
    fn longer_horizon_extends_prefix() {
        let p = MechanismParams::centralized(3, 0.5, sched(2.0, 0.9)).unwrap();
        let short = run_execution(&[0.0, 1.0, 5.0], &p, 10, 5).unwrap();
        let long = run_execution(&[0.0, 1.0, 5.0], &p, 20, 5).unwrap();
        assert_eq!(short.rounds[..], long.rounds[..10]);
    }

    #[test]
    fn zero_noise_injection_is_noiseless_averaging() {
        let p = MechanismParams::centralized(2, 0.5, sched(1.0, 0.5)).unwrap();
        let tr = inject_noise_sequence(&[0.0, 1.0], &p, &vec![vec![0.0, 0.0]; 3]).unwrap();
        assert_eq!(tr.final_theta, vec![0.4375, 0.5625]);
        let tr = inject_noise_sequence(&[3.0, 3.0], &p, &vec![vec![0.0, 0.0]; 3]).unwrap();
        assert!(tr.states().all(|s| s == [3.0, 3.0]));
        assert!(inject_noise_sequence(&[0.0, 1.0], &p, &[vec![0.0]]).is_err());
    }

    #[test]
    fn zero_scale_schedule_gives_zero_noise() {
        let p = MechanismParams::centralized(3, 0.5, sched(0.0, 0.5)).unwrap();
        let tr = run_execution(&[0.0, 1.0, 2.0], &p, 5, 1).unwrap();
        assert!(tr.rounds.iter().all(|r| r.eta.iter().all(|&e| e == 0.0)));
    }

    #[test]
    fn observation_projection() {
        let p = MechanismParams::centralized(3, 0.5, sched(1.0, 0.9)).unwrap();
        let tr = run_execution(&[0.0, 1.0, 2.0], &p, 3, 1).unwrap();
        let obs = observe(&tr);
        assert!(obs.compromised.is_empty());
        assert!(obs.compromised_theta_seq.iter().all(Vec::is_empty));
        assert_eq!(obs.x_seq.len(), 3);

        let g = Graph::ring(4).unwrap();
        let p = MechanismParams::distributed(g, vec![0.5; 4], sched(1.0, 0.9), 0..4).unwrap();
        let tr = run_execution(&[0.0, 1.0, 2.0, 3.0], &p, 3, 1).unwrap();
        let obs = observe(&tr);
        for (t, r) in tr.rounds.iter().enumerate() {
            assert_eq!(obs.compromised_theta_seq[t], r.theta);
            let eta: Vec<f64> = r.x.iter().zip(&r.theta).map(|(x, th)| x - th).collect();
            assert!(crate::scalar::sup_gap(&eta, &r.eta) < 1e-12);
        }
    }

    #[test]
    fn compromised_out_of_range() {
        let g = Graph::ring(4).unwrap();
        assert!(MechanismParams::distributed(g, vec![0.5; 4], sched(1.0, 0.9), [4]).is_err());
    }

    #[test]
    fn privacy_flag() {
        let p = MechanismParams::centralized(3, 0.8, sched(10.0, 0.9)).unwrap();
        assert!(p.is_private());
        let p = MechanismParams::centralized(3, 0.8, sched(10.0, 0.2)).unwrap();
        assert!(!p.is_private());
    }

    #[test]
    fn single_client_is_at_consensus() {
        let p = MechanismParams::centralized(1, 0.5, sched(1.0, 0.5)).unwrap();
        let tr = run_execution(&[4.0], &p, 10, 3).unwrap();
        assert_eq!(tr.rounds.len(), 10);
        let g = Graph::edgeless(1).unwrap();
        let p = MechanismParams::distributed(g, vec![0.5], sched(0.0, 0.5), []).unwrap();
        let tr = run_execution(&[4.0], &p, 10, 3).unwrap();
        assert_eq!(tr.final_theta, vec![4.0]);
    }

    #[test]
    fn horizon_defaults() {
        let t = default_horizon(10.0, 0.9, 0.8, 1.0);
        assert!(10.0 * 0.9f64.powi(t as i32) < 1e-12);
        assert!(10.0 * 0.9f64.powi(t as i32 - 1) >= 1e-12);
        assert_eq!(default_horizon(0.0, 0.9, 0.5, 0.0), 0);
        let t = default_horizon(0.0, 0.9, 0.5, 1.0);
        assert!(0.5f64.powi(t as i32) < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let g = Graph::path(2).unwrap();
        let p = MechanismParams::distributed(g, vec![0.5; 2], sched(1.0, 0.5), [1]).unwrap();
        let seq = vec![vec![0.5, -0.5]];
        let tr = inject_noise_sequence(&[0.0, 1.0], &p, &seq).unwrap();
        assert_eq!(
            trace_csv(&tr),
            "t,client,theta,eta,x,y\n0,1,0,0.5,0.5,0.5\n0,2,1,-0.5,0.5,0.5\n"
        );
        assert_eq!(
            observation_csv(&observe(&tr)),
            "t,client,theta,eta,x,y\n0,1,,,0.5,0.5\n0,2,1,-0.5,0.5,0.5\n"
        );
    }

    #[test]
    fn rational_round_is_exact() {
        let p = MechanismParams::centralized(2, ratio(1, 2), sched(1.0, 0.5)).unwrap();
        let theta = vec![ratio(0, 1), ratio(1, 1)];
        let (_, next) = run_round_centralized(&theta, &p, 0, &mut SeededNoise::new(4, 2)).unwrap();
        let gap: BigRational = next[1].clone() - next[0].clone();
        assert_eq!(gap, ratio(1, 2));
    }

    proptest! {
        #[test]
        fn centralized_gaps_contract_exactly(seed in any::<u64>(), n in 2usize..8, s in 1i64..10) {
            let sigma = ratio(s, 10);
            let p = MechanismParams::centralized(n, sigma.clone(), sched(3.0, 0.7)).unwrap();
            let theta: Vec<BigRational> = (0..n as i64).map(|i| ratio(i * i - 3, 7)).collect();
            let tr = run_execution(&theta, &p, 6, seed).unwrap();
            let states: Vec<&[BigRational]> = tr.states().collect();
            for w in states.windows(2) {
                for i in 0..n {
                    for j in 0..n {
                        let before = w[0][i].clone() - w[0][j].clone();
                        let after = w[1][i].clone() - w[1][j].clone();
                        prop_assert_eq!(after, (ratio(1, 1) - sigma.clone()) * before);
                    }
                }
            }
        }

        #[test]
        fn messages_are_consistent(seed in any::<u64>(), n in 2usize..8) {
            let g = Graph::ring(n).unwrap();
            let p = MechanismParams::distributed(g.clone(), vec![0.4; n], sched(2.0, 0.8), []).unwrap();
            let theta: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let tr = run_execution(&theta, &p, 10, seed).unwrap();
            for r in &tr.rounds {
                for i in 0..n {
                    prop_assert_eq!(r.x[i], r.theta[i] + r.eta[i]);
                    let mut members: Vec<usize> = g.neighbors(i).to_vec();
                    members.push(i);
                    members.sort_unstable();
                    let mut acc = 0.0;
                    for &j in &members {
                        acc += r.x[j];
                    }
                    prop_assert_eq!(*r.y.for_client(i), acc / members.len() as f64);
                }
            }
        }

        #[test]
        fn weighted_mean_random_walk(seed in any::<u64>(), n in 2usize..7) {
            // θ̄(t+1) = θ̄(t) + Σwᵢ/Σγᵢ with wᵢ the neighbourhood noise sum
            let g = Graph::path(n).unwrap();
            let sigma: Vec<BigRational> = (0..n as i64).map(|i| ratio(i + 1, n as i64 + 2)).collect();
            let p = MechanismParams::distributed(g.clone(), sigma, sched(1.0, 0.8), []).unwrap();
            let theta: Vec<BigRational> = (0..n as i64).map(|i| ratio(i * 5 - 2, 3)).collect();
            let tr = run_execution(&theta, &p, 5, seed).unwrap();
            let gamma = p.gamma();
            let gsum = ordered_sum(&gamma);
            let wmean = |th: &[BigRational]| -> BigRational {
                th.iter().zip(&gamma).fold(ratio(0, 1), |a, (x, w)| a + x.clone() * w.clone()) / gsum.clone()
            };
            for (k, r) in tr.rounds.iter().enumerate() {
                let next = if k + 1 < tr.rounds.len() { &tr.rounds[k + 1].theta } else { &tr.final_theta };
                let w_total = (0..n).fold(ratio(0, 1), |acc, i| {
                    let mut s = r.eta[i].clone();
                    for &j in g.neighbors(i) {
                        s += r.eta[j].clone();
                    }
                    acc + s
                });
                prop_assert_eq!(wmean(next), wmean(&r.theta) + w_total / gsum.clone());
            }
        }
    }
}
