//! Communication topologies, their Laplacians, and the convergence gate for
//! the distributed mechanism.

mod eigen;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use rand::Rng;

pub use eigen::{eigenvalues_symmetric, DenseMatrix};

use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar};

/// Default relative tolerance for the Jacobi solver.
pub const EIGEN_TOL: f64 = 1e-9;
/// `λ₂` above this counts as spectrally connected.
pub const CONNECTIVITY_TOL: f64 = 1e-7;

/// Undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from 0-based pairs. Self-loops, duplicates and
    /// out-of-range endpoints are rejected; pair order is irrelevant.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a},{b}) has an endpoint outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({},{})", e.0, e.1)));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            edges,
            neighbors,
        })
    }

    pub fn edgeless(n: usize) -> Result<Self> {
        Self::new(n, [])
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i)))
    }

    /// Cycle on `n ≥ 3` nodes; smaller `n` degrade to the path.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Self::path(n);
        }
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(
            n,
            (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))),
        )
    }

    /// G(n, p): each pair is an edge independently with probability `p`.
    pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: format!("edge probability must lie in [0,1], got {p}"),
            });
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        Self::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn is_complete(&self) -> bool {
        self.edges.len() == self.n * (self.n - 1) / 2
    }

    /// Reachability via union-find.
    pub fn is_connected(&self) -> bool {
        let mut uf = UnionFind::new(self.n);
        for &(a, b) in &self.edges {
            uf.union(a, b);
        }
        uf.components() == 1
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "permutation",
                expected: self.n,
                found: perm.len(),
            });
        }
        Self::new(self.n, self.edges.iter().map(|&(a, b)| (perm[a], perm[b])))
    }

    /// Parses the text format: first data line `N`, then one `i j` pair per
    /// edge with 1-based indices. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut edges = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::GraphParse {
                line: line_no,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match n {
                None => {
                    if fields.len() != 1 {
                        return Err(err(format!("expected node count, found `{line}`")));
                    }
                    let count: usize = fields[0]
                        .parse()
                        .map_err(|_| err(format!("invalid node count `{}`", fields[0])))?;
                    if count == 0 {
                        return Err(err("node count must be positive".into()));
                    }
                    n = Some(count);
                }
                Some(count) => {
                    if fields.len() != 2 {
                        return Err(err(format!("expected `i j`, found `{line}`")));
                    }
                    let parse = |s: &str| -> Result<usize> {
                        let v: usize = s
                            .parse()
                            .map_err(|_| err(format!("invalid node index `{s}`")))?;
                        if v == 0 || v > count {
                            return Err(err(format!("node index {v} outside 1..={count}")));
                        }
                        Ok(v - 1)
                    };
                    let (a, b) = (parse(fields[0])?, parse(fields[1])?);
                    if a == b {
                        return Err(err(format!("self-loop at node {}", a + 1)));
                    }
                    if !seen.insert((a.min(b), a.max(b))) {
                        return Err(err(format!("duplicate edge {} {}", a + 1, b + 1)));
                    }
                    edges.push((a, b));
                }
            }
        }
        let n = n.ok_or(Error::GraphParse {
            line: text.lines().count().max(1),
            message: "missing node count".into(),
        })?;
        Self::new(n, edges)
    }

    /// Inverse of [`Graph::parse`].
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for &(a, b) in &self.edges {
            out.push_str(&format!("{} {}\n", a + 1, b + 1));
        }
        out
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }

    fn components(&mut self) -> usize {
        (0..self.parent.len()).filter(|&i| self.find(i) == i).count()
    }
}

/// Graph Laplacian: degrees on the diagonal, `-1` on edges.
///
/// The client-server potential uses the complete-graph instance
/// (`N-1` diagonal, `-1` elsewhere).
#[derive(Debug, Clone)]
pub struct LaplacianMatrix<S> {
    n: usize,
    entries: Vec<S>,
    edges: Vec<(usize, usize)>,
    complete: bool,
    spectrum: OnceLock<Vec<f64>>,
}

impl<S: Scalar> LaplacianMatrix<S> {
    pub fn of_graph(g: &Graph) -> Self {
        let n = g.n();
        let mut entries = vec![S::zero(); n * n];
        for i in 0..n {
            entries[i * n + i] = S::from_count(g.degree(i));
        }
        for &(a, b) in g.edges() {
            entries[a * n + b] = -S::one();
            entries[b * n + a] = -S::one();
        }
        Self {
            n,
            entries,
            edges: g.edges().to_vec(),
            complete: g.is_complete(),
            spectrum: OnceLock::new(),
        }
    }

    /// Laplacian of `K_n`.
    pub fn complete(n: usize) -> Self {
        Self::of_graph(&Graph::complete(n.max(1)).expect("complete graph is well formed"))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<S>> {
        self.entries.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn to_dense<F: Real>(&self) -> DenseMatrix<F> {
        let mut m = DenseMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.set(i, j, F::lit(self.get(i, j).as_f64()));
            }
        }
        m
    }

    /// `L·v`
    pub fn apply(&self, v: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.n];
        for &(a, b) in &self.edges {
            let diff = v[a].clone() - v[b].clone();
            out[a] = out[a].clone() + diff.clone();
            out[b] = out[b].clone() - diff;
        }
        out
    }

    /// `θᵀLθ = Σ_{(i,j)∈E} (θᵢ − θⱼ)²`.
    pub fn quadratic_form(&self, theta: &[S]) -> S {
        if self.complete && self.n > 2 {
            // N·Σ(θᵢ − mean)², O(N) instead of O(N²)
            let n = S::from_count(self.n);
            let mean = theta.iter().fold(S::zero(), |a, v| a + v.clone()) / n.clone();
            let centered = theta.iter().fold(S::zero(), |acc, v| {
                let d = v.clone() - mean.clone();
                acc + d.clone() * d
            });
            return n * centered;
        }
        self.edges.iter().fold(S::zero(), |acc, &(a, b)| {
            let d = theta[a].clone() - theta[b].clone();
            acc + d.clone() * d
        })
    }

    /// Ascending eigenvalues, computed once with [`EIGEN_TOL`].
    pub fn eigenvalues(&self) -> &[f64] {
        self.spectrum.get_or_init(|| {
            eigenvalues_symmetric(&self.to_dense::<f64>(), EIGEN_TOL)
                .expect("Laplacian is symmetric by construction")
        })
    }

    pub fn lambda2(&self) -> f64 {
        self.eigenvalues().get(1).copied().unwrap_or(0.0)
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }
}

/// Free-function form of [`LaplacianMatrix::of_graph`].
pub fn laplacian<S: Scalar>(g: &Graph) -> LaplacianMatrix<S> {
    LaplacianMatrix::of_graph(g)
}

/// Quantities entering the distributed convergence condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCheck<F> {
    pub lambda2: F,
    pub lambda_n: F,
    /// `inf dᵢ` with `dᵢ = σᵢ/(|N(i)|+1)`
    pub m: F,
    /// `sup dᵢ`
    pub big_m: F,
    pub connected: bool,
    /// `λ₂ > CONNECTIVITY_TOL`; reported alongside the union-find verdict.
    pub spectrally_connected: bool,
    /// `2m − λ_N·M²`
    pub contraction_margin: F,
    /// `min(λ₂·margin, 1)` when connected and the margin is positive, else 0.
    pub a: F,
    /// Whether `λ_N < M²/(2m)` holds.
    pub printed_form_holds: bool,
}

impl<F: Real> ConvergenceCheck<F> {
    /// The gate used by the simulator.
    pub fn converges(&self) -> bool {
        self.connected && self.contraction_margin > F::zero()
    }
}

impl<F: Real> fmt::Display for ConvergenceCheck<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "connected={}", self.connected)?;
        writeln!(f, "spectrally_connected={}", self.spectrally_connected)?;
        writeln!(f, "lambda2={}", self.lambda2)?;
        writeln!(f, "lambda_n={}", self.lambda_n)?;
        writeln!(f, "m={}", self.m)?;
        writeln!(f, "M={}", self.big_m)?;
        writeln!(f, "contraction_margin={}", self.contraction_margin)?;
        writeln!(f, "a={}", self.a)?;
        writeln!(
            f,
            "condition_2m_minus_lambdaN_M2_positive={}",
            self.contraction_margin > F::zero()
        )?;
        writeln!(f, "condition_lambdaN_lt_M2_over_2m={}", self.printed_form_holds)?;
        write!(f, "converges={}", self.converges())
    }
}

/// Evaluates the convergence condition for `g` with per-client
/// coefficients `sigma`.
pub fn check_convergence_condition<F: Real>(g: &Graph, sigma: &[F]) -> Result<ConvergenceCheck<F>> {
    if sigma.len() != g.n() {
        return Err(Error::DimensionMismatch {
            what: "sigma",
            expected: g.n(),
            found: sigma.len(),
        });
    }
    let d: Vec<F> = sigma
        .iter()
        .enumerate()
        .map(|(i, &s)| s / F::from_count(g.degree(i) + 1))
        .collect();
    let m = d.iter().copied().fold(F::infinity(), F::min);
    let big_m = d.iter().copied().fold(F::neg_infinity(), F::max);

    let lap = LaplacianMatrix::<F>::of_graph(g);
    let spectrum = eigenvalues_symmetric(&lap.to_dense::<F>(), F::lit(EIGEN_TOL))?;
    let lambda2 = spectrum.get(1).copied().unwrap_or(F::zero());
    let lambda_n = spectrum.last().copied().unwrap_or(F::zero());

    let spectrally_connected = lambda2 > F::lit(CONNECTIVITY_TOL);
    let connected = g.is_connected();
    let margin = F::lit(2.0) * m - lambda_n * big_m * big_m;
    let a = if connected && margin > F::zero() {
        (lambda2 * margin).min(F::one())
    } else {
        F::zero()
    };
    let printed_form_holds = lambda_n < big_m * big_m / (F::lit(2.0) * m);

    Ok(ConvergenceCheck {
        lambda2,
        lambda_n,
        m,
        big_m,
        connected,
        spectrally_connected,
        contraction_margin: margin,
        a,
        printed_form_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rows(l: &LaplacianMatrix<f64>) -> Vec<Vec<f64>> {
        l.rows()
    }

    #[test]
    fn laplacian_examples() {
        let p3 = Graph::path(3).unwrap();
        assert_eq!(
            rows(&laplacian(&p3)),
            vec![
                vec![1.0, -1.0, 0.0],
                vec![-1.0, 2.0, -1.0],
                vec![0.0, -1.0, 1.0]
            ]
        );
        let k2 = Graph::complete(2).unwrap();
        assert_eq!(rows(&laplacian(&k2)), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let e3 = Graph::edgeless(3).unwrap();
        assert_eq!(rows(&laplacian(&e3)), vec![vec![0.0; 3]; 3]);
    }

    #[test]
    fn path3_spectrum() {
        // characteristic polynomial λ(λ−1)(λ−3)
        let l = laplacian::<f64>(&Graph::path(3).unwrap());
        let ev = eigenvalues_symmetric(&l.to_dense::<f64>(), 1e-13).unwrap();
        for (got, want) in ev.iter().zip([0.0, 1.0, 3.0]) {
            assert!((got - want).abs() < 1e-9, "{ev:?}");
        }
    }

    #[test]
    fn complete_graph_spectrum() {
        for n in [3usize, 5, 17] {
            let l = laplacian::<f64>(&Graph::complete(n).unwrap());
            let ev = eigenvalues_symmetric(&l.to_dense::<f64>(), 1e-13).unwrap();
            assert!(ev[0].abs() < 1e-9);
            for v in &ev[1..] {
                assert!((v - n as f64).abs() < 1e-9, "K{n}: {ev:?}");
            }
        }
    }

    #[test]
    fn convergence_check_k3() {
        let g = Graph::complete(3).unwrap();
        let c = check_convergence_condition(&g, &[0.5f64, 0.5, 0.5]).unwrap();
        assert!((c.m - 1.0 / 6.0).abs() < 1e-15);
        assert!((c.big_m - 1.0 / 6.0).abs() < 1e-15);
        assert!((c.lambda2 - 3.0).abs() < 1e-9);
        assert!((c.lambda_n - 3.0).abs() < 1e-9);
        assert!((c.contraction_margin - 0.25).abs() < 1e-9);
        assert!((c.a - 0.75).abs() < 1e-9);
        assert!(c.converges());
        // 3 < (1/36)/(1/3) fails
        assert!(!c.printed_form_holds);
    }

    #[test]
    fn convergence_check_path3() {
        let g = Graph::path(3).unwrap();
        let c = check_convergence_condition(&g, &[0.3f64, 0.3, 0.3]).unwrap();
        assert!((c.m - 0.1).abs() < 1e-15);
        assert!((c.big_m - 0.15).abs() < 1e-15);
        assert!((c.lambda_n - 3.0).abs() < 1e-9);
        assert!((c.contraction_margin - 0.1325).abs() < 1e-9);
        assert!(c.connected && c.converges());
    }

    #[test]
    fn convergence_check_disconnected() {
        let g = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        let c = check_convergence_condition(&g, &[0.5f64; 4]).unwrap();
        assert!(!c.connected);
        assert!(!c.spectrally_connected);
        assert!(c.lambda2.abs() < 1e-12);
        assert_eq!(c.a, 0.0);
        assert!(!c.converges());
    }

    #[test]
    fn convergence_check_dimension() {
        let g = Graph::path(3).unwrap();
        assert!(check_convergence_condition(&g, &[0.5f64, 0.5]).is_err());
    }

    #[test]
    fn uniform_sigma_complete_graph_margin() {
        // 2m − λ_N M² = σ(2−σ)/N on K_N
        for n in [2usize, 4, 9] {
            for sigma in [0.1, 0.5, 0.95] {
                let g = Graph::complete(n).unwrap();
                let c = check_convergence_condition(&g, &vec![sigma; n]).unwrap();
                let want = sigma * (2.0 - sigma) / n as f64;
                assert!((c.contraction_margin - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn graph_validation() {
        assert!(Graph::new(3, [(0, 0)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(3, [(0, 3)]).is_err());
        assert!(Graph::new(0, []).is_err());
        let g = Graph::ring(5).unwrap();
        assert!((0..5).all(|i| g.degree(i) == 2));
        assert_eq!(Graph::ring(2).unwrap(), Graph::path(2).unwrap());
    }

    #[test]
    fn parse_format() {
        let text = "# a path\n3\n\n1 2 # first\n2 3\n";
        let g = Graph::parse(text).unwrap();
        assert_eq!(g, Graph::path(3).unwrap());
        assert_eq!(Graph::parse(&g.to_text()).unwrap(), g);
    }

    #[test]
    fn parse_errors_name_line() {
        let cases = [
            ("3\n1 2\n2 4\n", 3),
            ("3\n1 1\n", 2),
            ("3\n1 2\n2 1\n", 3),
            ("x\n", 1),
            ("3\n1 2 3\n", 2),
        ];
        for (text, line) in cases {
            match Graph::parse(text) {
                Err(Error::GraphParse { line: got, .. }) => assert_eq!(got, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert!(Graph::parse("# nothing\n").is_err());
    }

    #[test]
    fn rational_laplacian_quadratic_form() {
        let g = Graph::path(3).unwrap();
        let l = laplacian::<BigRational>(&g);
        let theta: Vec<BigRational> = [0, 3, 6].iter().map(|&v| BigRational::from_count(v)).collect();
        assert_eq!(l.quadratic_form(&theta), BigRational::from_count(18));
    }

    #[test]
    fn complete_quadratic_form_matches_edge_sum() {
        let g = Graph::complete(6).unwrap();
        let l = laplacian::<f64>(&g);
        let theta = [0.3f64, -1.2, 4.0, 2.5, 0.0, 1.1];
        let edge_sum: f64 = g
            .edges()
            .iter()
            .map(|&(a, b)| (theta[a] - theta[b]).powi(2))
            .sum();
        assert!((l.quadratic_form(&theta) - edge_sum).abs() < 1e-12);
    }

    fn random_graph(seed: u64, n: usize, p: f64) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Graph::erdos_renyi(n, p, &mut rng).unwrap()
    }

    proptest! {
        #[test]
        fn connected_graphs_have_positive_lambda2(seed in any::<u64>(), n in 2usize..12) {
            let g = random_graph(seed, n, 0.5);
            let l = laplacian::<f64>(&g);
            let ones = vec![1.0; n];
            let l1 = l.apply(&ones);
            prop_assert!(l1.iter().all(|v| v.abs() < 1e-12));
            prop_assert_eq!(g.is_connected(), l.lambda2() > CONNECTIVITY_TOL);
            prop_assert!(l.eigenvalues()[0].abs() < 1e-9);
            prop_assert!(l.eigenvalues().iter().all(|&v| v > -1e-9));
        }

        #[test]
        fn lll_dominates_lambda2_l(seed in any::<u64>(), n in 2usize..10,
                                   theta in proptest::collection::vec(-10.0f64..10.0, 10)) {
            let g = random_graph(seed, n, 0.6);
            let l = laplacian::<f64>(&g);
            let theta = &theta[..n];
            let lt = l.apply(theta);
            let ll = lt.iter().map(|v| v * v).sum::<f64>();
            let q = l.quadratic_form(theta);
            prop_assert!(ll >= l.lambda2() * q - 1e-8 * (1.0 + q));
        }

        #[test]
        fn spectrum_is_permutation_invariant(seed in any::<u64>(), n in 2usize..10) {
            let g = random_graph(seed, n, 0.5);
            let mut perm: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            for i in (1..n).rev() {
                perm.swap(i, rand::Rng::random_range(&mut rng, 0..=i));
            }
            let h = g.permuted(&perm).unwrap();
            let lg = laplacian::<f64>(&g);
            let lh = laplacian::<f64>(&h);
            // L_h = P L_g Pᵀ
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(lg.get(i, j), lh.get(perm[i], perm[j]));
                }
            }
            for (a, b) in lg.eigenvalues().iter().zip(lh.eigenvalues()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
