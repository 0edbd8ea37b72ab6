//! Subcommand implementations. Each returns its outputs as strings so the
//! binary only has to write them.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use privcon_core::analysis::{
    accuracy_radius, epsilon_bound, monte_carlo_accuracy, verify_coupling, CouplingResult, KeyValues,
};
use privcon_core::mechanism::{default_horizon, observation_csv, trace_csv, SeededNoise};
use privcon_core::rng::derive_seed;
use privcon_core::{
    check_convergence_condition, observe, run_execution, ConvergenceCheck, Graph, NoiseSchedule, Params,
};

use crate::config::{ConfigError, ExperimentConfig, GraphGenerator, ModeKind, SweepVariable, Theta0Init, Topology};

/// Stream reserved for graph generation.
const GRAPH_STREAM: u64 = u64::MAX;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    /// Bad command-line input.
    Usage(String),
    Io { path: PathBuf, source: std::io::Error },
    Core(privcon_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Io { .. } | CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<privcon_core::Error> for CliError {
    fn from(e: privcon_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Graph for a distributed config; erdos graphs are drawn from the seed.
pub fn build_graph(cfg: &ExperimentConfig) -> CliResult<Option<Graph>> {
    let Some(topology) = &cfg.topology else {
        return Ok(None);
    };
    let g = match topology {
        Topology::File { graph, .. } => graph.clone(),
        Topology::Generator(GraphGenerator::Path) => Graph::path(cfg.n)?,
        Topology::Generator(GraphGenerator::Ring) => Graph::ring(cfg.n)?,
        Topology::Generator(GraphGenerator::Complete) => Graph::complete(cfg.n)?,
        Topology::Generator(GraphGenerator::Erdos(p)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, GRAPH_STREAM));
            Graph::erdos_renyi(cfg.n, *p, &mut rng)?
        }
    };
    Ok(Some(g))
}

pub fn build_params(cfg: &ExperimentConfig) -> CliResult<Params> {
    let schedule = NoiseSchedule::new(cfg.c, cfg.q)?;
    let sigma = cfg.sigma.expand(cfg.n);
    let params = match cfg.mode {
        ModeKind::Centralized => Params::centralized(cfg.n, sigma[0], schedule)?,
        ModeKind::Distributed => {
            let graph = build_graph(cfg)?.ok_or_else(|| CliError::Usage("distributed mode needs a graph".into()))?;
            Params::distributed(graph, sigma, schedule, cfg.compromised.iter().copied())?
        }
    };
    Ok(params)
}

/// Initial states, drawn from the spare stream of the run seed when random.
pub fn build_theta0(cfg: &ExperimentConfig) -> CliResult<Vec<f64>> {
    let mut noise = SeededNoise::new(cfg.seed, cfg.n);
    let rng = noise.spare();
    Ok(match &cfg.theta0 {
        Theta0Init::Explicit(v) => v.clone(),
        Theta0Init::Uniform { lo, hi } => {
            if lo == hi {
                vec![*lo; cfg.n]
            } else {
                let d = Uniform::new(*lo, *hi).map_err(|e| CliError::Usage(format!("theta0: {e}")))?;
                (0..cfg.n).map(|_| d.sample(rng)).collect()
            }
        }
        Theta0Init::Gaussian { mean, sd } => {
            let d = Normal::new(*mean, *sd).map_err(|e| CliError::Usage(format!("theta0: {e}")))?;
            (0..cfg.n).map(|_| d.sample(rng)).collect()
        }
    })
}

fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn horizon(cfg: &ExperimentConfig, params: &Params, theta0: &[f64]) -> usize {
    cfg.rounds
        .unwrap_or_else(|| default_horizon(cfg.c, cfg.q, params.sigma_min(), spread(theta0)))
}

#[derive(Debug)]
pub struct RunOutput {
    pub trace_csv: String,
    pub observation_csv: String,
    pub summary: String,
}

pub fn run(cfg: &ExperimentConfig) -> CliResult<RunOutput> {
    let params = build_params(cfg)?;
    let theta0 = build_theta0(cfg)?;
    let rounds = horizon(cfg, &params, &theta0);
    let trace = run_execution(&theta0, &params, rounds, cfg.seed)?;

    let mut summary = String::new();
    let mut kv = |k: &str, v: String| summary.push_str(&format!("{k}={v}\n"));
    kv("mode", params.mode().name().to_string());
    kv("n", cfg.n.to_string());
    kv("rounds", rounds.to_string());
    kv("runs", cfg.runs.to_string());
    kv("seed", cfg.seed.to_string());
    kv("initial_spread", spread(&theta0).to_string());
    kv("final_spread", spread(&trace.final_theta).to_string());
    kv("mean_drift", (mean(&trace.final_theta) - mean(&theta0)).abs().to_string());

    summary.push_str(&epsilon_bound(params.sigma(), cfg.c, cfg.q).to_kv_string());
    let accuracy = if cfg.runs > 1 {
        monte_carlo_accuracy(&theta0, &params, rounds, cfg.runs, cfg.b, cfg.seed)?.report
    } else {
        accuracy_radius(&params, &theta0, cfg.b)?
    };
    summary.push_str(&accuracy.to_kv_string());
    if let Some(g) = params.graph() {
        summary.push_str(&check_convergence_condition(g, params.sigma())?.to_string());
    }

    Ok(RunOutput {
        trace_csv: trace_csv(&trace),
        observation_csv: observation_csv(&observe(&trace)),
        summary,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub epsilon: Option<f64>,
    pub valid: bool,
    pub radius: f64,
    pub empirical_fraction: f64,
    pub mean_drift: f64,
}

/// Evaluates every swept value in input order. Invalid values were already
/// rejected when the config was parsed.
pub fn sweep(cfg: &ExperimentConfig) -> CliResult<Vec<SweepRow>> {
    let Some(sw) = &cfg.sweep else {
        return Err(CliError::Usage("sweep needs `sweep_variable` and `sweep_values` in the config".into()));
    };
    let theta0 = build_theta0(cfg)?;
    sw.values
        .iter()
        .map(|&value| {
            let mut row_cfg = cfg.clone();
            match sw.variable {
                SweepVariable::Q => row_cfg.q = value,
                SweepVariable::C => row_cfg.c = value,
                SweepVariable::Sigma => row_cfg.sigma = crate::config::SigmaInput::Uniform(value),
            }
            let params = build_params(&row_cfg)?;
            let rounds = horizon(&row_cfg, &params, &theta0);
            let privacy = epsilon_bound(params.sigma(), row_cfg.c, row_cfg.q);
            let mc = monte_carlo_accuracy(&theta0, &params, rounds, row_cfg.runs, row_cfg.b, row_cfg.seed)?;
            Ok(SweepRow {
                value,
                epsilon: privacy.epsilon,
                valid: privacy.valid,
                radius: mc.report.r,
                empirical_fraction: mc.report.empirical_fraction.unwrap_or(0.0),
                mean_drift: mc.mean_abs_drift,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("value,epsilon,valid,radius,empirical_fraction,mean_drift\n");
    for r in rows {
        let eps = r.epsilon.map(|e| e.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.value, eps, r.valid, r.radius, r.empirical_fraction, r.mean_drift
        ));
    }
    out
}

pub fn check_graph(graph: &Graph, sigma: &[f64]) -> CliResult<ConvergenceCheck<f64>> {
    if sigma.len() != 1 && sigma.len() != graph.n() {
        return Err(CliError::Usage(format!(
            "--sigma needs 1 or {} values, got {}",
            graph.n(),
            sigma.len()
        )));
    }
    let sigma = if sigma.len() == 1 { vec![sigma[0]; graph.n()] } else { sigma.to_vec() };
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
        return Err(CliError::Usage(format!("--sigma value {s} is outside the open interval (0,1)")));
    }
    Ok(check_convergence_condition(graph, &sigma)?)
}

pub fn read_graph(path: &Path) -> CliResult<Graph> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Graph::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Debug)]
pub struct CoupleOutput {
    pub result: CouplingResult,
    pub epsilon: Option<f64>,
}

impl CoupleOutput {
    pub fn render(&self) -> String {
        let mut out = self.result.to_kv_string();
        match self.epsilon {
            Some(eps) => {
                out.push_str(&format!("epsilon={eps}\n"));
                out.push_str(&format!("epsilon_times_delta={}\n", eps * self.result.delta.abs()));
            }
            None => out.push_str("epsilon=\nepsilon_times_delta=\n"),
        }
        out
    }
}

/// Couples the configured run with one where client `k` (1-based) starts
/// `delta` lower, under the same sampled noise.
pub fn couple(cfg: &ExperimentConfig, k: usize, delta: f64) -> CliResult<CoupleOutput> {
    if k == 0 || k > cfg.n {
        return Err(CliError::Usage(format!("client {k} is not in 1..={}", cfg.n)));
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(CliError::Usage(format!("delta must be a finite value >= 0, got {delta}")));
    }
    let idx = k - 1;
    if cfg.mode == ModeKind::Distributed && cfg.compromised.contains(&idx) {
        return Err(CliError::Usage(format!("client {k} is compromised; its state is observed directly")));
    }
    let params = build_params(cfg)?;
    let theta0 = build_theta0(cfg)?;
    let rounds = horizon(cfg, &params, &theta0);
    let eta = run_execution(&theta0, &params, rounds, cfg.seed)?.noise_sequence();
    let mut theta0_prime = theta0.clone();
    theta0_prime[idx] -= delta;
    let result = verify_coupling(&theta0, &theta0_prime, &params, &eta)?;
    let epsilon = epsilon_bound(params.sigma(), cfg.c, cfg.q).epsilon;
    Ok(CoupleOutput { result, epsilon })
}
