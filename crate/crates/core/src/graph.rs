//! Directed communication graphs and their spectral data.
//!
//! Adjacency convention: `a_ij > 0` means node `i` receives information from
//! node `j` (an edge `v_j → v_i`). The Laplacian is `L = D̃ − Ã` with the
//! in-degree diagonal, so every row of `L` sums to zero.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::matrix::{self, ensure_finite, ensure_square, Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    adjacency: Matrix,
    labels: Vec<String>,
}

impl DirectedGraph {
    pub fn new(adjacency: Matrix) -> Result<Self> {
        let n = ensure_square(&adjacency, "adjacency")?;
        ensure_finite(&adjacency, "adjacency")?;
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::Invariant(format!("self-loop at node {}", i + 1)));
            }
        }
        if adjacency.iter().any(|&w| w < 0.0) {
            return Err(Error::Invariant("adjacency weights must be non-negative".into()));
        }
        let labels = (1..=n).map(|i| i.to_string()).collect();
        Ok(Self { adjacency, labels })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::Dimension(format!("{} labels for {} nodes", labels.len(), self.n())));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Unweighted graph from `(receiver, sender)` pairs, 0-based.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = Matrix::zeros(n, n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Dimension(format!("edge ({i}, {j}) outside {n} nodes")));
            }
            adj[(i, j)] = 1.0;
        }
        Self::new(adj)
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    /// Nodes reachable from `root` following information flow `j → i`.
    fn reach(&self, root: usize, forward: bool) -> Vec<bool> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(j) = stack.pop() {
            for i in 0..n {
                let w = if forward { self.adjacency[(i, j)] } else { self.adjacency[(j, i)] };
                if w > 0.0 && !seen[i] {
                    seen[i] = true;
                    stack.push(i);
                }
            }
        }
        seen
    }
}

pub fn laplacian(g: &DirectedGraph) -> Matrix {
    let n = g.n();
    let mut l = -g.adjacency.clone();
    for i in 0..n {
        let deg: f64 = (0..n).filter(|&j| j != i).map(|j| g.adjacency[(i, j)]).sum();
        l[(i, i)] = deg;
    }
    l
}

pub fn is_strongly_connected(g: &DirectedGraph) -> bool {
    g.reach(0, true).iter().all(|&r| r) && g.reach(0, false).iter().all(|&r| r)
}

/// Some root reaches every node.
pub fn has_spanning_tree(g: &DirectedGraph) -> bool {
    (0..g.n()).any(|r| g.reach(r, true).iter().all(|&x| x))
}

/// Algebraic form of the spanning-tree test: zero is a simple Laplacian
/// eigenvalue.
pub fn zero_is_simple_eigenvalue(g: &DirectedGraph) -> Result<bool> {
    let l = laplacian(g);
    let tol = 1e-8 * (1.0 + l.norm());
    let zeros = matrix::eigenvalues(&l)?.iter().filter(|z| matrix::modulus(z) <= tol).count();
    Ok(zeros == 1)
}

pub fn laplacian_spectrum(g: &DirectedGraph) -> Result<Vec<Complex<f64>>> {
    matrix::eigenvalues(&laplacian(g))
}

/// Positive left null vector of a Laplacian, normalized to sum 1.
pub fn left_perron_vector(l: &Matrix) -> Result<Vector> {
    let n = ensure_square(l, "Laplacian")?;
    ensure_finite(l, "Laplacian")?;
    if n == 1 {
        return Ok(Vector::from_element(1, 1.0));
    }
    let svd = l.transpose().svd(false, true);
    let v_t = svd.v_t.unwrap();
    let tol = 1e-9 * (1.0 + matrix::spectral_norm(l));
    let null: Vec<usize> = (0..n).filter(|&k| svd.singular_values[k] <= tol).collect();
    if null.len() != 1 {
        return Err(Error::Structure(format!(
            "left null space has dimension {} (expected 1); graph is not strongly connected",
            null.len()
        )));
    }
    let mut f = v_t.row(null[0]).transpose().into_owned();
    let total = f.sum();
    if total == 0.0 {
        return Err(Error::Structure("left null vector sums to zero".into()));
    }
    f /= total;
    if f.iter().any(|&x| x <= 1e-12) {
        return Err(Error::Structure("left null vector has non-positive entries; graph is not strongly connected".into()));
    }
    Ok(f)
}

fn orthonormal_complement(f: &Vector) -> Matrix {
    let n = f.len();
    let unit = f.normalize();
    let proj = Matrix::identity(n, n) - &unit * unit.transpose();
    let eig = proj.symmetric_eigen();
    let mut cols: Vec<usize> = (0..n).collect();
    cols.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    Matrix::from_fn(n, n - 1, |r, k| eig.eigenvectors[(r, cols[k])])
}

/// `min xᵀM̂x / xᵀΓx` over `x ⊥ f`, with `Γ = diag(f)` and
/// `M̂ = (ΓM + MᵀΓ)/2`.
///
/// Both quadratic forms are restricted to an orthonormal basis `Q` of `f⊥`;
/// the Cholesky factor of `QᵀΓQ` turns the pencil into a standard symmetric
/// eigenproblem.
pub fn generalized_connectivity(m: &Matrix, f: &Vector) -> Result<f64> {
    let n = ensure_square(m, "connectivity matrix")?;
    if f.len() != n {
        return Err(Error::Dimension(format!("f has {} entries for a {n}x{n} matrix", f.len())));
    }
    if n == 1 {
        return Err(Error::Degenerate("constraint subspace is empty for a single node".into()));
    }
    if f.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Structure("f must be strictly positive".into()));
    }
    let gamma = Matrix::from_diagonal(f);
    let m_hat = (&gamma * m + m.transpose() * &gamma) * 0.5;
    let q = orthonormal_complement(f);
    let a = q.transpose() * m_hat * &q;
    let b = q.transpose() * gamma * &q;
    let chol = b
        .cholesky()
        .ok_or_else(|| Error::Degenerate("projected Γ is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular Cholesky factor".into()))?;
    let reduced = &l_inv * a * l_inv.transpose();
    Ok(*matrix::symmetric_eigenvalues(&reduced)?.last().unwrap())
}

/// Eigenvalues of `ΓLLᵀΓ`, sorted descending.
pub fn gamma_lap_spectrum(l: &Matrix, f: &Vector) -> Result<Vec<f64>> {
    let n = ensure_square(l, "Laplacian")?;
    if f.len() != n {
        return Err(Error::Dimension(format!("f has {} entries for {n} nodes", f.len())));
    }
    let gamma = Matrix::from_diagonal(f);
    let s = &gamma * l * l.transpose() * &gamma;
    matrix::symmetric_eigenvalues(&s)
}

/// Pinned-node flags `d_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PinningSet {
    flags: Vec<bool>,
}

impl PinningSet {
    /// `pinned` holds 0-based node indices.
    pub fn new(n: usize, pinned: &[usize]) -> Result<Self> {
        let mut flags = vec![false; n];
        for &i in pinned {
            if i >= n {
                return Err(Error::Dimension(format!("pinned node {} outside {n} nodes", i + 1)));
            }
            flags[i] = true;
        }
        Ok(Self { flags })
    }

    pub fn from_flags(flags: Vec<bool>) -> Self {
        Self { flags }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn is_pinned(&self, i: usize) -> bool {
        self.flags[i]
    }

    pub fn d(&self, i: usize) -> f64 {
        if self.flags[i] {
            1.0
        } else {
            0.0
        }
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&p| p).count()
    }

    pub fn pinned_indices(&self) -> Vec<usize> {
        (0..self.flags.len()).filter(|&i| self.flags[i]).collect()
    }

    pub fn matrix(&self) -> Matrix {
        Matrix::from_fn(self.len(), self.len(), |i, j| if i == j { self.d(i) } else { 0.0 })
    }
}

/// Spectral quantities of a follower graph used by the gain conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub laplacian: Matrix,
    pub f: Vector,
    pub gamma: Matrix,
    /// `a(L − D)`, evaluated with `f` taken from `L`.
    pub connectivity: f64,
    /// Eigenvalues of `ΓLLᵀΓ`, descending.
    pub gamma_lap_eigs: Vec<f64>,
}

impl SpectralData {
    pub fn compute(g: &DirectedGraph, pinning: &PinningSet) -> Result<Self> {
        if pinning.len() != g.n() {
            return Err(Error::Dimension(format!("{} pinning flags for {} nodes", pinning.len(), g.n())));
        }
        let l = laplacian(g);
        let f = left_perron_vector(&l)?;
        let connectivity = generalized_connectivity(&(&l - pinning.matrix()), &f)?;
        let gamma_lap_eigs = gamma_lap_spectrum(&l, &f)?;
        Ok(Self {
            gamma: Matrix::from_diagonal(&f),
            laplacian: l,
            f,
            connectivity,
            gamma_lap_eigs,
        })
    }
}

/// A follower graph, its pinning set and derived spectral data.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub graph: DirectedGraph,
    pub pinning: PinningSet,
    pub spectral: SpectralData,
}

impl Network {
    pub fn new(graph: DirectedGraph, pinning: PinningSet) -> Result<Self> {
        if !is_strongly_connected(&graph) {
            return Err(Error::Structure("follower graph must be strongly connected".into()));
        }
        if pinning.count() == 0 {
            return Err(Error::Invariant("at least one node must be pinned".into()));
        }
        let spectral = SpectralData::compute(&graph, &pinning)?;
        Ok(Self { graph, pinning, spectral })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn in_degree(&self, i: usize) -> f64 {
        self.spectral.laplacian[(i, i)]
    }
}

/// Outcome of the exhaustive spectrum search.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub matches: Vec<DirectedGraph>,
    /// Closest strongly connected candidate by bottleneck spectrum distance,
    /// among those that reached the eigenvalue stage.
    pub nearest: Option<(DirectedGraph, f64)>,
    pub candidates_examined: usize,
}

/// Largest-deviation optimal matching between two multisets of equal size
/// (exhaustive over permutations; sizes here are at most a handful).
pub fn spectrum_distance(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    fn go(a: &[Complex<f64>], b: &[Complex<f64>], used: &mut [bool], k: usize, cur: f64, best: &mut f64) {
        if cur >= *best {
            return;
        }
        if k == a.len() {
            *best = cur;
            return;
        }
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                go(a, b, used, k + 1, cur.max(matrix::modulus(&(a[k] - b[j]))), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(a, b, &mut vec![false; b.len()], 0, 0.0, &mut best);
    best
}

/// Maximum node count for [`reconstruct_by_spectrum`].
pub const RECONSTRUCT_MAX_NODES: usize = 6;

/// Enumerates every binary zero-diagonal adjacency on `n` nodes and returns
/// the strongly connected ones whose Laplacian spectrum equals
/// `{0} ∪ target` within `tol`.
///
/// Candidate `k` sets bit `b` of `k` on the `b`-th off-diagonal entry in
/// row-major order; results keep that order. The trace and trace-of-square
/// identities prune candidates before any eigenvalue work.
pub fn reconstruct_by_spectrum(n: usize, target: &[Complex<f64>], tol: f64) -> Result<Reconstruction> {
    if n == 0 || n > RECONSTRUCT_MAX_NODES {
        return Err(Error::Size(format!("spectrum reconstruction supports 1..={RECONSTRUCT_MAX_NODES} nodes, got {n}")));
    }
    let mut full: Vec<Complex<f64>> = Vec::with_capacity(target.len() + 1);
    full.push(Complex::new(0.0, 0.0));
    full.extend_from_slice(target);
    let mut out = Reconstruction {
        matches: Vec::new(),
        nearest: None,
        candidates_examined: 0,
    };
    if full.len() != n {
        return Ok(out);
    }
    let positions: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let trace: f64 = full.iter().map(|z| z.re).sum();
    let trace_sq: f64 = full.iter().map(|z| (z * z).re).sum();
    // Allow the per-eigenvalue tolerance to accumulate in the sums.
    let trace_slack = n as f64 * tol + 1e-9;
    let sq_slack = full.iter().map(|z| 2.0 * matrix::modulus(z) * tol + tol * tol).sum::<f64>() + 1e-9;

    let total: u64 = 1u64 << positions.len();
    for bits in 0..total {
        out.candidates_examined += 1;
        let edges = bits.count_ones() as f64;
        if (edges - trace).abs() > trace_slack {
            continue;
        }
        let mut adj = Matrix::zeros(n, n);
        for (b, &(i, j)) in positions.iter().enumerate() {
            if bits >> b & 1 == 1 {
                adj[(i, j)] = 1.0;
            }
        }
        // tr(L²) = Σ d_i² + #{i≠j : a_ij = a_ji = 1}
        let mut tsq = 0.0;
        for i in 0..n {
            let d: f64 = adj.row(i).sum();
            tsq += d * d;
            for j in 0..n {
                if i != j {
                    tsq += adj[(i, j)] * adj[(j, i)];
                }
            }
        }
        if (tsq - trace_sq).abs() > sq_slack {
            continue;
        }
        let g = DirectedGraph::new(adj)?;
        if !is_strongly_connected(&g) {
            continue;
        }
        let spec = laplacian_spectrum(&g)?;
        let dist = spectrum_distance(&spec, &full);
        if dist <= tol {
            out.matches.push(g.clone());
        }
        if out.nearest.as_ref().map_or(true, |(_, d)| dist < *d) {
            out.nearest = Some((g, dist));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn cycle3() -> DirectedGraph {
        DirectedGraph::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).unwrap()
    }

    fn pair() -> DirectedGraph {
        DirectedGraph::from_edges(2, &[(0, 1), (1, 0)]).unwrap()
    }

    fn chain() -> DirectedGraph {
        // 1 → 2 → 3
        DirectedGraph::from_edges(3, &[(1, 0), (2, 1)]).unwrap()
    }

    #[test]
    fn laplacian_examples() {
        assert_eq!(laplacian(&cycle3()), dmatrix![1.0, -1.0, 0.0; 0.0, 1.0, -1.0; -1.0, 0.0, 1.0]);
        assert_eq!(laplacian(&pair()), dmatrix![1.0, -1.0; -1.0, 1.0]);
        assert_eq!(laplacian(&DirectedGraph::new(Matrix::zeros(3, 3)).unwrap()), Matrix::zeros(3, 3));
    }

    #[test]
    fn graph_validation() {
        assert!(matches!(DirectedGraph::new(dmatrix![1.0, 0.0; 0.0, 0.0]), Err(Error::Invariant(_))));
        assert!(matches!(DirectedGraph::new(dmatrix![0.0, -1.0; 0.0, 0.0]), Err(Error::Invariant(_))));
        assert!(matches!(DirectedGraph::new(Matrix::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn connectivity_predicates() {
        assert!(is_strongly_connected(&cycle3()));
        assert!(!is_strongly_connected(&chain()));
        assert!(is_strongly_connected(&DirectedGraph::new(Matrix::zeros(1, 1)).unwrap()));

        assert!(has_spanning_tree(&chain()));
        assert!(!has_spanning_tree(&DirectedGraph::new(Matrix::zeros(2, 2)).unwrap()));
        assert!(has_spanning_tree(&cycle3()));
        for g in [chain(), cycle3(), pair(), DirectedGraph::new(Matrix::zeros(2, 2)).unwrap()] {
            assert_eq!(has_spanning_tree(&g), zero_is_simple_eigenvalue(&g).unwrap());
        }
    }

    #[test]
    fn perron_examples() {
        let f = left_perron_vector(&laplacian(&cycle3())).unwrap();
        assert_abs_diff_eq!(f, Vector::from_element(3, 1.0 / 3.0), epsilon = 1e-12);
        let f = left_perron_vector(&laplacian(&pair())).unwrap();
        assert_abs_diff_eq!(f, Vector::from_element(2, 0.5), epsilon = 1e-12);
        // a_12 = 2, a_21 = 1: solve [2 −1; −2 1] f = 0 → f ∝ (1, 2).
        let f = left_perron_vector(&dmatrix![2.0, -2.0; -1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(f, nalgebra::dvector![1.0 / 3.0, 2.0 / 3.0], epsilon = 1e-12);
        assert!(matches!(left_perron_vector(&laplacian(&chain())), Err(Error::Structure(_))));
    }

    #[test]
    fn connectivity_examples() {
        let l = laplacian(&pair());
        let a = generalized_connectivity(&l, &Vector::from_element(2, 0.5)).unwrap();
        assert_abs_diff_eq!(a, 2.0, epsilon = 1e-12);
        let a = generalized_connectivity(&laplacian(&cycle3()), &Vector::from_element(3, 1.0 / 3.0)).unwrap();
        assert_abs_diff_eq!(a, 1.5, epsilon = 1e-12);
        let k3 = DirectedGraph::from_edges(3, &[(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)]).unwrap();
        let a = generalized_connectivity(&laplacian(&k3), &Vector::from_element(3, 1.0 / 3.0)).unwrap();
        assert_abs_diff_eq!(a, 3.0, epsilon = 1e-12);
        assert!(matches!(
            generalized_connectivity(&Matrix::zeros(1, 1), &Vector::from_element(1, 1.0)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn gamma_lap_examples() {
        let eig = gamma_lap_spectrum(&laplacian(&pair()), &Vector::from_element(2, 0.5)).unwrap();
        assert_abs_diff_eq!(eig[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig[1], 0.0, epsilon = 1e-12);
        let eig = gamma_lap_spectrum(&Matrix::zeros(3, 3), &Vector::from_element(3, 1.0 / 3.0)).unwrap();
        assert!(eig.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn pinning_set_basics() {
        let p = PinningSet::new(4, &[0]).unwrap();
        assert_eq!(p.count(), 1);
        assert_eq!(p.d(0), 1.0);
        assert_eq!(p.d(3), 0.0);
        assert!(PinningSet::new(2, &[2]).is_err());
    }

    #[test]
    fn network_requires_pinning_and_connectivity() {
        assert!(Network::new(cycle3(), PinningSet::new(3, &[]).unwrap()).is_err());
        assert!(Network::new(chain(), PinningSet::new(3, &[0]).unwrap()).is_err());
        let net = Network::new(cycle3(), PinningSet::new(3, &[0]).unwrap()).unwrap();
        assert_abs_diff_eq!(net.spectral.f.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reconstruct_small_cases() {
        let target = [Complex::new(1.5, 0.8660), Complex::new(1.5, -0.8660)];
        let r = reconstruct_by_spectrum(3, &target, 1e-3).unwrap();
        assert!(r.matches.iter().any(|g| g == &cycle3()));
        let r = reconstruct_by_spectrum(2, &[Complex::new(2.0, 0.0)], 1e-9).unwrap();
        assert_eq!(r.matches, vec![pair()]);
        assert!(matches!(reconstruct_by_spectrum(7, &[], 1e-3), Err(Error::Size(_))));
    }

    #[test]
    fn spectrum_distance_is_permutation_invariant() {
        let a = [Complex::new(0.0, 0.0), Complex::new(1.5, 0.866), Complex::new(1.5, -0.866)];
        let b = [Complex::new(1.5, -0.866), Complex::new(0.0, 0.0), Complex::new(1.5, 0.866)];
        assert_abs_diff_eq!(spectrum_distance(&a, &b), 0.0);
    }
}
