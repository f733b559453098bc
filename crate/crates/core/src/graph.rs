//! Weighted communication digraphs and their Laplacians.
//!
//! Weight `w_ij` is the weight of the edge carrying information from agent `j`
//! into agent `i`; the Laplacian is `L = D - W` with `D` the row sums of `W`.

use std::collections::VecDeque;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, Complex, Matrix, NumericsError};

/// Default tolerance for `w_ij == w_ji`.
pub const BALANCE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("invalid weight matrix: {0}")]
    InvalidWeights(String),
    #[error("edge ({0}, {1}) out of range for {2} agents")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("operation requires a balanced graph")]
    NotBalanced,
    #[error("reduction basis has {basis} rows but graph has {graph} agents")]
    BasisMismatch { basis: usize, graph: usize },
    #[error("no graph found with spectrum inside [{lo}, {hi}] after {attempts} attempts (best ratio {best_ratio})")]
    Infeasible { lo: f64, hi: f64, attempts: usize, best_ratio: f64 },
    #[error("invalid random graph recipe: {0}")]
    InvalidRecipe(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, GraphError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDigraph {
    weights: Matrix,
}

impl WeightedDigraph {
    pub fn new(weights: Matrix) -> Result<Self> {
        if !weights.is_square() {
            return Err(GraphError::InvalidWeights("weight matrix must be square".into()));
        }
        let n = weights.rows();
        if n < 2 {
            return Err(GraphError::TooFewAgents(n));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(GraphError::InvalidWeights(format!("self-loop at agent {i}")));
            }
            for j in 0..n {
                if weights[(i, j)] < 0.0 {
                    return Err(GraphError::InvalidWeights(format!("negative weight at ({i}, {j})")));
                }
            }
        }
        Ok(Self { weights })
    }

    /// Build from directed triples `(i, j, w)`: information flows from `j` into `i`.
    /// Indices are zero-based; repeated triples accumulate.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if n < 2 {
            return Err(GraphError::TooFewAgents(n));
        }
        let mut w = Matrix::zeros(n, n);
        for &(i, j, wt) in edges {
            if i >= n || j >= n {
                return Err(GraphError::EdgeOutOfRange(i, j, n));
            }
            if !wt.is_finite() {
                return Err(GraphError::InvalidWeights("non-finite weight".into()));
            }
            w[(i, j)] += wt;
        }
        Self::new(w)
    }

    /// Build a balanced graph from undirected pairs.
    pub fn undirected(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let both: Vec<_> = edges.iter().flat_map(|&(i, j, w)| [(i, j, w), (j, i, w)]).collect();
        Self::from_edges(n, &both)
    }

    pub fn complete(n: usize, w: f64) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    edges.push((i, j, w));
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn agents(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn in_degree(&self, i: usize) -> f64 {
        self.weights.row(i).iter().sum()
    }

    pub fn max_degree(&self) -> f64 {
        (0..self.agents()).map(|i| self.in_degree(i)).fold(0.0, f64::max)
    }

    /// Directed edges `(i, j, w)` with `w > 0`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.agents();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.weights[(i, j)];
                if w > 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    /// Same graph with every weight multiplied by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.weights.scale(s))
    }

    /// Relabel agents: agent `i` of the result is agent `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.agents();
        if perm.len() != n {
            return Err(GraphError::InvalidWeights("permutation length".into()));
        }
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                w[(i, j)] = self.weights[(perm[i], perm[j])];
            }
        }
        Self::new(w)
    }

    pub fn laplacian(&self) -> Matrix {
        laplacian(self)
    }

    pub fn is_balanced(&self, tol: f64) -> bool {
        is_balanced(self, tol)
    }

    pub fn has_spanning_tree(&self) -> bool {
        has_spanning_tree(self)
    }
}

/// `L = D - W`.
pub fn laplacian(g: &WeightedDigraph) -> Matrix {
    let n = g.agents();
    let mut l = g.weights.scale(-1.0);
    for i in 0..n {
        // sum the off-diagonal negatives directly so each row cancels exactly
        let s: f64 = (0..n).filter(|&j| j != i).map(|j| l[(i, j)]).sum();
        l[(i, i)] = -s;
    }
    l
}

pub fn is_balanced(g: &WeightedDigraph, tol: f64) -> bool {
    let n = g.agents();
    (0..n).all(|i| (0..i).all(|j| (g.weight(i, j) - g.weight(j, i)).abs() <= tol))
}

/// True iff some agent reaches every other along directed edges.
pub fn has_spanning_tree(g: &WeightedDigraph) -> bool {
    let n = g.agents();
    // out[j] lists the agents that receive information from j
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in g.edges() {
        out[j].push(i);
    }
    (0..n).any(|root| {
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut count = 1;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &u in &out[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        count == n
    })
}

/// Laplacian spectrum of a balanced graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    /// All eigenvalues, ascending. Real because the Laplacian is symmetric.
    pub eigenvalues: Vec<f64>,
    pub lambda2: f64,
    pub lambda_n: f64,
}

impl SpectrumSummary {
    /// `lambda_N / lambda_2`; infinite for disconnected graphs.
    pub fn ratio(&self) -> f64 {
        if self.lambda2 <= 0.0 {
            f64::INFINITY
        } else {
            self.lambda_n / self.lambda2
        }
    }
}

pub fn spectrum(g: &WeightedDigraph) -> Result<SpectrumSummary> {
    if !g.is_balanced(BALANCE_TOL) {
        return Err(GraphError::NotBalanced);
    }
    let mut l = laplacian(g);
    let n = g.agents();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (l[(i, j)] + l[(j, i)]);
            l[(i, j)] = v;
            l[(j, i)] = v;
        }
    }
    let eigenvalues = numerics::symmetric_eigenvalues(&l)?;
    Ok(SpectrumSummary { lambda2: eigenvalues[1], lambda_n: eigenvalues[n - 1], eigenvalues })
}

/// Radius bound for a general digraph: every Laplacian eigenvalue lies in
/// `|z - d_max| <= d_max`, so `|z| <= 2 d_max`.
pub fn gershgorin_radius(g: &WeightedDigraph) -> f64 {
    2.0 * g.max_degree()
}

/// Eigenvalues of the Laplacian of an arbitrary digraph (complex in general).
pub fn laplacian_eigenvalues(g: &WeightedDigraph) -> Result<Vec<Complex>> {
    Ok(numerics::general_eigenvalues(&laplacian(g))?)
}

/// Orthonormal basis of the complement of the all-ones vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionBasis {
    mbar: Matrix,
}

impl ReductionBasis {
    pub fn matrix(&self) -> &Matrix {
        &self.mbar
    }

    pub fn agents(&self) -> usize {
        self.mbar.rows()
    }

    /// `(Mbar^T ⊗ I_n) x` for a stacked state of `agents()` blocks of length `n`.
    pub fn project(&self, x: &[f64], n: usize) -> Vec<f64> {
        let agents = self.agents();
        assert_eq!(x.len(), agents * n, "state length");
        let mut xi = vec![0.0; (agents - 1) * n];
        for i in 0..agents {
            let row = self.mbar.row(i);
            let xs = &x[i * n..(i + 1) * n];
            for (k, m) in row.iter().enumerate() {
                if *m == 0.0 {
                    continue;
                }
                for s in 0..n {
                    xi[k * n + s] += m * xs[s];
                }
            }
        }
        xi
    }
}

/// Normalized Helmert basis: column `k` is `(1, .., 1, -k, 0, ..) / sqrt(k (k + 1))`
/// with `k` leading ones. This is Gram-Schmidt applied to `e1 - e2, e2 - e3, ...`.
pub fn reduction_basis(n: usize) -> Result<ReductionBasis> {
    if n < 2 {
        return Err(GraphError::TooFewAgents(n));
    }
    let mut mbar = Matrix::zeros(n, n - 1);
    for col in 0..n - 1 {
        let k = (col + 1) as f64;
        let norm = (k * (k + 1.0)).sqrt();
        for row in 0..=col {
            mbar[(row, col)] = 1.0 / norm;
        }
        mbar[(col + 1, col)] = -k / norm;
    }
    Ok(ReductionBasis { mbar })
}

fn reduced_unchecked(g: &WeightedDigraph, basis: &ReductionBasis) -> Result<Matrix> {
    if basis.agents() != g.agents() {
        return Err(GraphError::BasisMismatch { basis: basis.agents(), graph: g.agents() });
    }
    let m = &basis.mbar;
    Ok(m.transpose().matmul(&laplacian(g))?.matmul(m)?)
}

/// `Lbar = Mbar^T L Mbar`, symmetric for balanced graphs.
pub fn reduced_laplacian(g: &WeightedDigraph, basis: &ReductionBasis) -> Result<Matrix> {
    if !g.is_balanced(BALANCE_TOL) {
        return Err(GraphError::NotBalanced);
    }
    let mut lbar = reduced_unchecked(g, basis)?;
    let n = lbar.rows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (lbar[(i, j)] + lbar[(j, i)]);
            lbar[(i, j)] = v;
            lbar[(j, i)] = v;
        }
    }
    Ok(lbar)
}

/// Lower-right block of `M^{-1} L M` for any digraph. Since `Mbar` is
/// orthonormal and orthogonal to `1`, this is again `Mbar^T L Mbar`.
pub fn reduced_laplacian_general(g: &WeightedDigraph, basis: &ReductionBasis) -> Result<Matrix> {
    reduced_unchecked(g, basis)
}

/// Recipe for [`random_balanced_graph`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomGraphRecipe {
    pub agents: usize,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// Probability of each extra undirected edge on top of a random spanning tree.
    pub edge_prob: f64,
    pub max_attempts: usize,
}

impl RandomGraphRecipe {
    pub const DEFAULT_EDGE_PROB: f64 = 0.5;
    pub const DEFAULT_ATTEMPTS: usize = 200;

    pub fn new(agents: usize, lambda_lo: f64, lambda_hi: f64) -> Self {
        Self {
            agents,
            lambda_lo,
            lambda_hi,
            edge_prob: Self::DEFAULT_EDGE_PROB,
            max_attempts: Self::DEFAULT_ATTEMPTS,
        }
    }

    pub fn with_edge_prob(mut self, p: f64) -> Self {
        self.edge_prob = p;
        self
    }
}

/// Connected balanced graph with `lambda_lo <= lambda_2` and `lambda_N <= lambda_hi`.
///
/// Samples a uniform random labelled spanning tree, adds each remaining
/// undirected edge with probability `edge_prob`, then rescales all weights by
/// the factor that centres `[lambda_2, lambda_N]` geometrically in the band.
/// Draws whose spectral ratio exceeds `lambda_hi / lambda_lo` are rejected.
pub fn random_balanced_graph(recipe: &RandomGraphRecipe, seed: u64) -> Result<WeightedDigraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_balanced_graph_with(recipe, &mut rng)
}

pub fn random_balanced_graph_with(
    recipe: &RandomGraphRecipe,
    rng: &mut ChaCha8Rng,
) -> Result<WeightedDigraph> {
    let RandomGraphRecipe { agents: n, lambda_lo: lo, lambda_hi: hi, edge_prob, max_attempts } = *recipe;
    if n < 2 {
        return Err(GraphError::TooFewAgents(n));
    }
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(GraphError::InvalidRecipe(format!("need 0 < lambda_lo <= lambda_hi, got [{lo}, {hi}]")));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(GraphError::InvalidRecipe(format!("edge_prob {edge_prob} outside [0, 1]")));
    }
    let target = hi / lo;
    let mut best_ratio = f64::INFINITY;
    for _ in 0..max_attempts.max(1) {
        let g = sample_connected_unit_graph(n, edge_prob, rng)?;
        let spec = spectrum(&g)?;
        let ratio = spec.ratio();
        best_ratio = best_ratio.min(ratio);
        if ratio > target {
            continue;
        }
        let s = (lo * hi / (spec.lambda2 * spec.lambda_n)).sqrt();
        let scaled = g.scaled(s)?;
        // guard against the rescaled band landing a hair outside by rounding
        let check = spectrum(&scaled)?;
        if check.lambda2 >= lo && check.lambda_n <= hi {
            return Ok(scaled);
        }
    }
    Err(GraphError::Infeasible { lo, hi, attempts: max_attempts.max(1), best_ratio })
}

fn sample_connected_unit_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Result<WeightedDigraph> {
    let mut adj = vec![vec![false; n]; n];
    // random attachment over a shuffled order yields a random spanning tree
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        let child = order[k];
        adj[parent][child] = true;
        adj[child][parent] = true;
    }
    for i in 0..n {
        for j in i + 1..n {
            if !adj[i][j] && p > 0.0 && rng.random_bool(p) {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        }
    }
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if adj[i][j] {
                w[(i, j)] = 1.0;
            }
        }
    }
    WeightedDigraph::new(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> WeightedDigraph {
        WeightedDigraph::undirected(2, &[(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn laplacian_examples() {
        let l = pair().laplacian();
        assert_eq!(l, Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap());

        let empty = WeightedDigraph::new(Matrix::zeros(3, 3)).unwrap();
        assert_eq!(empty.laplacian(), Matrix::zeros(3, 3));

        let cycle = WeightedDigraph::from_edges(3, &[(0, 2, 1.0), (1, 0, 1.0), (2, 1, 1.0)]).unwrap();
        let l = cycle.laplacian();
        for i in 0..3 {
            assert_eq!(l[(i, i)], 1.0);
            assert_eq!(l.row(i).iter().filter(|v| **v == -1.0).count(), 1);
            assert_eq!(l.row(i).iter().sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn rejects_invalid_weights() {
        let mut w = Matrix::zeros(3, 3);
        w[(1, 1)] = 1.0;
        assert!(WeightedDigraph::new(w).is_err());
        let mut w = Matrix::zeros(3, 3);
        w[(0, 1)] = -1.0;
        assert!(WeightedDigraph::new(w).is_err());
        assert_eq!(WeightedDigraph::new(Matrix::zeros(1, 1)), Err(GraphError::TooFewAgents(1)));
        assert!(WeightedDigraph::from_edges(2, &[(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn balance_checks() {
        assert!(pair().is_balanced(BALANCE_TOL));
        let one_way = WeightedDigraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert!(!one_way.is_balanced(BALANCE_TOL));
        let tol = 1e-6;
        let near = WeightedDigraph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0 + tol / 2.0)]).unwrap();
        assert!(near.is_balanced(tol));
    }

    #[test]
    fn spanning_tree_checks() {
        // information flows 0 -> 1 -> 2 -> 3
        let path = WeightedDigraph::from_edges(4, &[(1, 0, 1.0), (2, 1, 1.0), (3, 2, 1.0)]).unwrap();
        assert!(path.has_spanning_tree());
        let pairs = WeightedDigraph::undirected(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(!pairs.has_spanning_tree());
        assert!(WeightedDigraph::complete(5, 1.0).unwrap().has_spanning_tree());
        // two sources feeding a sink: no single root
        let vee = WeightedDigraph::from_edges(3, &[(2, 0, 1.0), (2, 1, 1.0)]).unwrap();
        assert!(!vee.has_spanning_tree());
    }

    #[test]
    fn spectrum_examples() {
        let s = spectrum(&pair()).unwrap();
        assert!(s.eigenvalues[0].abs() < 1e-14);
        assert!((s.lambda2 - 2.0).abs() < 1e-14 && (s.lambda_n - 2.0).abs() < 1e-14);

        // K3 characteristic polynomial: x (x - 3)^2
        let s = spectrum(&WeightedDigraph::complete(3, 1.0).unwrap()).unwrap();
        for (got, want) in s.eigenvalues.iter().zip([0.0, 3.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }

        let pairs = WeightedDigraph::undirected(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(spectrum(&pairs).unwrap().lambda2.abs() < 1e-10);

        let one_way = WeightedDigraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(spectrum(&one_way), Err(GraphError::NotBalanced));
        assert_eq!(gershgorin_radius(&one_way), 2.0);
    }

    #[test]
    fn reduction_basis_small() {
        let b = reduction_basis(2).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((b.matrix()[(0, 0)].abs() - h).abs() < 1e-15);
        assert!((b.matrix()[(0, 0)] + b.matrix()[(1, 0)]).abs() < 1e-15);
        assert_eq!(reduction_basis(1).unwrap_err(), GraphError::TooFewAgents(1));

        let b3 = reduction_basis(3).unwrap();
        let gram = b3.matrix().transpose().matmul(b3.matrix()).unwrap();
        assert!(gram.max_abs_diff(&Matrix::identity(2)).unwrap() < 1e-12);
        let ones = b3.matrix().transpose().matvec(&[1.0; 3]).unwrap();
        assert!(ones.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn reduced_laplacian_examples() {
        let b = reduction_basis(2).unwrap();
        let lbar = reduced_laplacian(&pair(), &b).unwrap();
        assert!((lbar[(0, 0)] - 2.0).abs() < 1e-14);

        let b3 = reduction_basis(3).unwrap();
        let lbar = reduced_laplacian(&WeightedDigraph::complete(3, 1.0).unwrap(), &b3).unwrap();
        let ev = numerics::symmetric_eigenvalues(&lbar).unwrap();
        assert!((ev[0] - 3.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);

        let b4 = reduction_basis(4).unwrap();
        let pairs = WeightedDigraph::undirected(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let lbar = reduced_laplacian(&pairs, &b4).unwrap();
        assert!(numerics::symmetric_eigenvalues(&lbar).unwrap()[0].abs() < 1e-12);

        let one_way = WeightedDigraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(reduced_laplacian(&one_way, &b), Err(GraphError::NotBalanced));
        assert!(matches!(reduced_laplacian(&pair(), &b3), Err(GraphError::BasisMismatch { .. })));
    }

    #[test]
    fn random_pair_graph() {
        let g = random_balanced_graph(&RandomGraphRecipe::new(2, 0.3, 6.0), 1).unwrap();
        let w = g.weight(0, 1);
        assert_eq!(w, g.weight(1, 0));
        assert!(2.0 * w >= 0.3 && 2.0 * w <= 6.0);
    }

    #[test]
    fn random_graph_is_deterministic() {
        let r = RandomGraphRecipe::new(8, 0.5, 10.0);
        assert_eq!(random_balanced_graph(&r, 42).unwrap(), random_balanced_graph(&r, 42).unwrap());
    }

    #[test]
    fn impossible_band_reports_infeasible() {
        // with no extra edges every 3-agent draw is a path, spectrum {0, 1, 3}
        let r = RandomGraphRecipe::new(3, 1.0, 1.0).with_edge_prob(0.0);
        match random_balanced_graph(&r, 7) {
            Err(GraphError::Infeasible { best_ratio, .. }) => assert!((best_ratio - 3.0).abs() < 1e-9),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn permutation_relabels_weights() {
        let g = WeightedDigraph::from_edges(3, &[(0, 1, 2.0), (2, 0, 0.5)]).unwrap();
        let p = g.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(p.weight(1, 2), 2.0);
        assert_eq!(p.weight(0, 1), 0.5);
    }
}
