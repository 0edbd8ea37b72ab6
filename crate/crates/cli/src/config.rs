//! Experiment configuration: flat `key = value` text.
//!
//! ```text
//! # client-server run, N = 500
//! mode = centralized
//! n = 500
//! sigma = 0.8            # or a per-client list: [0.5, 0.6, ...]
//! c = 10
//! q = 0.9
//! b = 0.5
//! theta0 = uniform(0, 1) # or gaussian(mean, sd) or [1, 2, 3]
//! rounds = auto          # or an integer
//! runs = 2000
//! seed = 7
//! sweep_variable = q
//! sweep_values = [0.25, 0.5, 0.75, 0.9]
//! ```
//!
//! Distributed runs additionally need `graph = path | ring | complete |
//! erdos(p)` or `graph_file = PATH` (relative to the config file), and may
//! list `compromised` clients (1-based).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use privcon_core::Graph;

const KEYS: &[&str] = &[
    "mode",
    "n",
    "graph",
    "graph_file",
    "sigma",
    "c",
    "q",
    "b",
    "theta0",
    "rounds",
    "runs",
    "seed",
    "compromised",
    "sweep_variable",
    "sweep_values",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    Centralized,
    Distributed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphGenerator {
    Path,
    Ring,
    Complete,
    Erdos(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Generator(GraphGenerator),
    File { path: PathBuf, graph: Graph },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SigmaInput {
    Uniform(f64),
    PerClient(Vec<f64>),
}

impl SigmaInput {
    pub fn expand(&self, n: usize) -> Vec<f64> {
        match self {
            SigmaInput::Uniform(s) => vec![*s; n],
            SigmaInput::PerClient(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Theta0Init {
    Explicit(Vec<f64>),
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    Q,
    C,
    Sigma,
}

impl SweepVariable {
    pub fn key(&self) -> &'static str {
        match self {
            SweepVariable::Q => "q",
            SweepVariable::C => "c",
            SweepVariable::Sigma => "sigma",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: ModeKind,
    pub n: usize,
    pub topology: Option<Topology>,
    pub sigma: SigmaInput,
    pub c: f64,
    pub q: f64,
    pub b: f64,
    pub theta0: Theta0Init,
    /// `None` selects the default horizon.
    pub rounds: Option<usize>,
    pub runs: usize,
    pub seed: u64,
    /// 0-based.
    pub compromised: Vec<usize>,
    pub sweep: Option<Sweep>,
}

impl ExperimentConfig {
    /// Minimal client-server configuration.
    pub fn centralized(n: usize, sigma: f64, c: f64, q: f64) -> Self {
        Self {
            mode: ModeKind::Centralized,
            n,
            topology: None,
            sigma: SigmaInput::Uniform(sigma),
            c,
            q,
            b: 0.5,
            theta0: Theta0Init::Uniform { lo: 0.0, hi: 1.0 },
            rounds: None,
            runs: 1,
            seed: 0,
            compromised: Vec::new(),
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

/// Every problem found in a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub violations: Vec<Violation>,
}

impl ConfigError {
    fn single(key: &str, message: impl Into<String>) -> Self {
        Self {
            violations: vec![Violation {
                key: key.into(),
                message: message.into(),
            }],
        }
    }

    pub fn mentions(&self, key: &str) -> bool {
        self.violations.iter().any(|v| v.key == key)
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for v in &self.violations {
            writeln!(f, "  `{}`: {}", v.key, v.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

struct Collector {
    violations: Vec<Violation>,
}

impl Collector {
    fn push(&mut self, key: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            key: key.into(),
            message: message.into(),
        });
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::single("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Parses configuration text; relative graph files resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    let mut errs = Collector {
        violations: Vec::new(),
    };
    let mut raw: BTreeMap<String, String> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errs.push("config", format!("line {}: expected `key = value`", idx + 1));
            continue;
        };
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            errs.push(&key, "unknown key");
            continue;
        }
        if raw.insert(key.clone(), value.trim().to_string()).is_some() {
            errs.push(&key, "given more than once");
        }
    }

    let get = |k: &str| raw.get(k).map(String::as_str);
    let required = |k: &str, errs: &mut Collector| -> Option<String> {
        let v = get(k).map(str::to_string);
        if v.is_none() {
            errs.push(k, "missing required key");
        }
        v
    };

    let mode = required("mode", &mut errs).and_then(|v| match v.as_str() {
        "centralized" => Some(ModeKind::Centralized),
        "distributed" => Some(ModeKind::Distributed),
        other => {
            errs.push("mode", format!("expected `centralized` or `distributed`, got `{other}`"));
            None
        }
    });

    let n = required("n", &mut errs).and_then(|v| match v.parse::<usize>() {
        Ok(n) if n >= 1 => Some(n),
        _ => {
            errs.push("n", format!("must be a positive integer, got `{v}`"));
            None
        }
    });

    let sigma = required("sigma", &mut errs).and_then(|v| {
        let parsed = if v.starts_with('[') {
            parse_list(&v).map(SigmaInput::PerClient)
        } else {
            v.parse::<f64>().ok().map(SigmaInput::Uniform)
        };
        match parsed {
            Some(parsed) => {
                let values = match &parsed {
                    SigmaInput::Uniform(s) => vec![*s],
                    SigmaInput::PerClient(vs) => vs.clone(),
                };
                let mut ok = true;
                for s in values {
                    if !(s > 0.0 && s < 1.0) {
                        errs.push("sigma", format!("{s} is outside the open interval (0,1)"));
                        ok = false;
                    }
                }
                if matches!(parsed, SigmaInput::PerClient(_)) && mode == Some(ModeKind::Centralized) {
                    errs.push("sigma", "client-server mode takes a single coefficient");
                    ok = false;
                }
                if let (SigmaInput::PerClient(vs), Some(n)) = (&parsed, n) {
                    if vs.len() != n {
                        errs.push("sigma", format!("expected {n} values, got {}", vs.len()));
                        ok = false;
                    }
                }
                ok.then_some(parsed)
            }
            None => {
                errs.push("sigma", format!("expected a number or a bracketed list, got `{v}`"));
                None
            }
        }
    });

    let c = required("c", &mut errs).and_then(|v| number("c", &v, &mut errs)).and_then(|c| {
        check_c(c).map_err(|m| errs.push("c", m)).ok()
    });
    let q = required("q", &mut errs).and_then(|v| number("q", &v, &mut errs)).and_then(|q| {
        check_q(q).map_err(|m| errs.push("q", m)).ok()
    });
    let b = match get("b") {
        None => Some(0.5),
        Some(v) => number("b", v, &mut errs).and_then(|b| {
            if b > 0.0 && b < 1.0 {
                Some(b)
            } else {
                errs.push("b", format!("{b} is outside the open interval (0,1)"));
                None
            }
        }),
    };

    let theta0 = match get("theta0") {
        None => Some(Theta0Init::Uniform { lo: 0.0, hi: 1.0 }),
        Some(v) => parse_theta0(v, n, &mut errs),
    };

    let rounds = match get("rounds") {
        None | Some("auto") => Some(None),
        Some(v) => match v.parse::<usize>() {
            Ok(r) => Some(Some(r)),
            Err(_) => {
                errs.push("rounds", format!("must be a nonnegative integer or `auto`, got `{v}`"));
                None
            }
        },
    };

    let runs = match get("runs") {
        None => Some(1),
        Some(v) => match v.parse::<usize>() {
            Ok(r) if r >= 1 => Some(r),
            _ => {
                errs.push("runs", format!("must be a positive integer, got `{v}`"));
                None
            }
        },
    };

    let seed = required("seed", &mut errs).and_then(|v| match v.parse::<u64>() {
        Ok(s) => Some(s),
        Err(_) => {
            errs.push("seed", format!("must be an unsigned integer, got `{v}`"));
            None
        }
    });

    let topology = parse_topology(get("graph"), get("graph_file"), base, n, mode, &mut errs);

    let compromised = match get("compromised") {
        None => Vec::new(),
        Some(v) => {
            if mode == Some(ModeKind::Centralized) {
                errs.push("compromised", "only meaningful in distributed mode");
            }
            match parse_list(v) {
                Some(list) => {
                    let mut out = Vec::new();
                    for x in list {
                        let ok = x.fract() == 0.0 && x >= 1.0 && n.is_none_or(|n| x <= n as f64);
                        if ok {
                            out.push(x as usize - 1);
                        } else {
                            errs.push("compromised", format!("client index {x} is not in 1..=n"));
                        }
                    }
                    out.sort_unstable();
                    out.dedup();
                    out
                }
                None => {
                    errs.push("compromised", format!("expected a bracketed list, got `{v}`"));
                    Vec::new()
                }
            }
        }
    };

    let sweep = parse_sweep(get("sweep_variable"), get("sweep_values"), n, &mut errs);

    if !errs.violations.is_empty() {
        return Err(ConfigError {
            violations: errs.violations,
        });
    }
    Ok(ExperimentConfig {
        mode: mode.expect("validated"),
        n: n.expect("validated"),
        topology,
        sigma: sigma.expect("validated"),
        c: c.expect("validated"),
        q: q.expect("validated"),
        b: b.expect("validated"),
        theta0: theta0.expect("validated"),
        rounds: rounds.expect("validated"),
        runs: runs.expect("validated"),
        seed: seed.expect("validated"),
        compromised,
        sweep,
    })
}

pub(crate) fn check_c(c: f64) -> Result<f64, String> {
    if c >= 0.0 && c.is_finite() {
        Ok(c)
    } else {
        Err(format!("{c} must be a finite real >= 0"))
    }
}

pub(crate) fn check_q(q: f64) -> Result<f64, String> {
    if q > 0.0 && q < 1.0 {
        Ok(q)
    } else {
        Err(format!("{q} is outside the open interval (0,1)"))
    }
}

fn number(key: &str, v: &str, errs: &mut Collector) -> Option<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Some(x),
        _ => {
            errs.push(key, format!("expected a number, got `{v}`"));
            None
        }
    }
}

/// `[a, b, c]`
pub fn parse_list(v: &str) -> Option<Vec<f64>> {
    let inner = v.trim().strip_prefix('[')?.strip_suffix(']')?.trim();
    if inner.is_empty() {
        return Some(Vec::new());
    }
    inner
        .split(',')
        .map(|s| s.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect()
}

/// `name(a, b, ...)`
fn parse_call(v: &str) -> Option<(&str, Vec<f64>)> {
    let (name, rest) = v.split_once('(')?;
    let args = rest.trim().strip_suffix(')')?;
    let parsed = args
        .split(',')
        .map(|s| s.trim().parse::<f64>().ok())
        .collect::<Option<Vec<_>>>()?;
    Some((name.trim(), parsed))
}

fn parse_theta0(v: &str, n: Option<usize>, errs: &mut Collector) -> Option<Theta0Init> {
    if v.starts_with('[') {
        let Some(list) = parse_list(v) else {
            errs.push("theta0", format!("malformed list `{v}`"));
            return None;
        };
        if let Some(n) = n {
            if list.len() != n {
                errs.push("theta0", format!("expected {n} values, got {}", list.len()));
                return None;
            }
        }
        return Some(Theta0Init::Explicit(list));
    }
    match parse_call(v) {
        Some(("uniform", args)) if args.len() == 2 => {
            if args[0] <= args[1] {
                Some(Theta0Init::Uniform {
                    lo: args[0],
                    hi: args[1],
                })
            } else {
                errs.push("theta0", "uniform(lo, hi) needs lo <= hi");
                None
            }
        }
        Some(("gaussian", args)) if args.len() == 2 => {
            if args[1] >= 0.0 {
                Some(Theta0Init::Gaussian {
                    mean: args[0],
                    sd: args[1],
                })
            } else {
                errs.push("theta0", "gaussian(mean, sd) needs sd >= 0");
                None
            }
        }
        _ => {
            errs.push(
                "theta0",
                format!("expected a list, uniform(lo, hi) or gaussian(mean, sd), got `{v}`"),
            );
            None
        }
    }
}

fn parse_topology(
    generator: Option<&str>,
    file: Option<&str>,
    base: &Path,
    n: Option<usize>,
    mode: Option<ModeKind>,
    errs: &mut Collector,
) -> Option<Topology> {
    match (generator, file) {
        (Some(_), Some(_)) => {
            errs.push("graph_file", "give either `graph` or `graph_file`, not both");
            None
        }
        (None, None) => {
            if mode == Some(ModeKind::Distributed) {
                errs.push("graph_file", "distributed mode needs `graph_file` or a `graph` generator");
            }
            None
        }
        (Some(g), None) => {
            let generator = match g {
                "path" => Some(GraphGenerator::Path),
                "ring" => Some(GraphGenerator::Ring),
                "complete" => Some(GraphGenerator::Complete),
                other => match parse_call(other) {
                    Some(("erdos", args)) if args.len() == 1 && (0.0..=1.0).contains(&args[0]) => {
                        Some(GraphGenerator::Erdos(args[0]))
                    }
                    _ => None,
                },
            };
            if generator.is_none() {
                errs.push("graph", format!("expected path, ring, complete or erdos(p), got `{g}`"));
            }
            generator.map(Topology::Generator)
        }
        (None, Some(f)) => {
            let path = base.join(f);
            let text = match std::fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) => {
                    errs.push("graph_file", format!("cannot read {}: {e}", path.display()));
                    return None;
                }
            };
            match Graph::parse(&text) {
                Ok(graph) => {
                    if let Some(n) = n {
                        if graph.n() != n {
                            errs.push("graph_file", format!("graph has {} nodes but n = {n}", graph.n()));
                            return None;
                        }
                    }
                    Some(Topology::File { path, graph })
                }
                Err(e) => {
                    errs.push("graph_file", format!("{}: {e}", path.display()));
                    None
                }
            }
        }
    }
}

fn parse_sweep(
    variable: Option<&str>,
    values: Option<&str>,
    _n: Option<usize>,
    errs: &mut Collector,
) -> Option<Sweep> {
    let (variable, values) = match (variable, values) {
        (None, None) => return None,
        (Some(_), None) => {
            errs.push("sweep_values", "missing; required with `sweep_variable`");
            return None;
        }
        (None, Some(_)) => {
            errs.push("sweep_variable", "missing; required with `sweep_values`");
            return None;
        }
        (Some(var), Some(vals)) => (var, vals),
    };
    let variable = match variable {
        "q" => SweepVariable::Q,
        "c" => SweepVariable::C,
        "sigma" => SweepVariable::Sigma,
        other => {
            errs.push("sweep_variable", format!("expected q, c or sigma, got `{other}`"));
            return None;
        }
    };
    let Some(list) = parse_list(values) else {
        errs.push("sweep_values", format!("expected a bracketed list, got `{values}`"));
        return None;
    };
    if list.is_empty() {
        errs.push("sweep_values", "needs at least one value");
        return None;
    }
    let mut ok = true;
    for &v in &list {
        let check = match variable {
            SweepVariable::Q => check_q(v),
            SweepVariable::C => check_c(v),
            SweepVariable::Sigma => {
                if v > 0.0 && v < 1.0 {
                    Ok(v)
                } else {
                    Err(format!("{v} is outside the open interval (0,1)"))
                }
            }
        };
        if let Err(m) = check {
            errs.push("sweep_values", format!("{} value {m}", variable.key()));
            ok = false;
        }
    }
    ok.then_some(Sweep {
        variable,
        values: list,
    })
}
