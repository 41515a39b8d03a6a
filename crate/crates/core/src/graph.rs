//! Finite undirected graphs, their random-walk transition matrices, reversible
//! measures and normalized Laplacians.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{sqrt, RealMatrix};

/// Row sums and measure totals must match 1 to this precision.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Absolute tolerance for detailed balance and Laplacian symmetry.
pub const BALANCE_TOL: f64 = 1e-10;

/// Finite undirected graph with an optional walk and reversible measure.
///
/// Edges are stored as ordered pairs `(min, max)`; self-loops are `(j, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphModel {
    vertex_count: usize,
    edges: BTreeSet<(usize, usize)>,
    transition: Option<RealMatrix>,
    measure: Option<Vec<f64>>,
}

impl GraphModel {
    pub fn new(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= vertex_count || b >= vertex_count {
                return Err(Error::EdgeOutOfRange(a, b));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self {
            vertex_count,
            edges: set,
            transition: None,
            measure: None,
        })
    }

    /// Path on `n` vertices `0 - 1 - … - (n-1)`.
    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|j| (j - 1, j)).collect();
        Self::new(n, &edges)
    }

    /// Cycle on `n ≥ 3` vertices.
    pub fn cycle(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).map(|j| (j, (j + 1) % n)).collect();
        Self::new(n, &edges)
    }

    /// Star with centre `0` and `leaves` leaves.
    pub fn star(leaves: usize) -> Result<Self> {
        let edges: Vec<_> = (1..=leaves).map(|j| (0, j)).collect();
        Self::new(leaves + 1, &edges)
    }

    /// One vertex carrying a self-loop.
    pub fn single_loop() -> Self {
        Self::new(1, &[(0, 0)]).expect("one vertex")
    }

    /// Complete graph with self-loops on `n` vertices.
    pub fn complete_with_loops(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for j in 0..n {
            for k in j..n {
                edges.push((j, k));
            }
        }
        Self::new(n, &edges)
    }

    /// `K̄_{d+1}` with `P[j][k] = q_k` and reversible measure `q`.
    pub fn kbar(q: &[f64]) -> Result<Self> {
        validate_open_simplex(q)?;
        let n = q.len();
        let p = RealMatrix::from_fn(n, n, |_, k| q[k]);
        Self::complete_with_loops(n)?
            .with_transition(p)?
            .with_measure(q.to_vec())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.vertex_count).filter(|&k| self.has_edge(v, k)).collect()
    }

    /// Number of distinct neighbours; a self-loop counts once.
    pub fn degree(&self, v: usize) -> usize {
        self.neighbors(v).len()
    }

    pub fn transition(&self) -> Option<&RealMatrix> {
        self.transition.as_ref()
    }

    pub fn measure(&self) -> Option<&[f64]> {
        self.measure.as_deref()
    }

    /// Attaches a transition matrix after checking it is a walk on this graph.
    pub fn with_transition(mut self, p: RealMatrix) -> Result<Self> {
        let n = self.vertex_count;
        if p.rows() != n || p.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: p.rows().max(p.cols()),
            });
        }
        for j in 0..n {
            let mut sum = 0.0;
            for k in 0..n {
                let x = p[(j, k)];
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::NegativeTransition { row: j, col: k });
                }
                if x > 0.0 && !self.has_edge(j, k) {
                    return Err(Error::TransitionOffGraph { row: j, col: k });
                }
                sum += x;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotRowStochastic { row: j, sum });
            }
        }
        self.transition = Some(p);
        Ok(self)
    }

    /// Attaches a strictly positive measure summing to one.
    pub fn with_measure(mut self, pi: Vec<f64>) -> Result<Self> {
        if pi.len() != self.vertex_count {
            return Err(Error::DimensionMismatch {
                expected: self.vertex_count,
                found: pi.len(),
            });
        }
        if pi.iter().any(|&x| !x.is_finite() || x <= 0.0) {
            return Err(Error::InvalidMeasure("entries must be strictly positive"));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidMeasure("entries must sum to 1"));
        }
        self.measure = Some(pi);
        Ok(self)
    }

    /// Fills in whatever is missing: the simple random walk when there is no
    /// transition, the stationary measure when there is no measure.
    ///
    /// A supplied measure is kept, but it must satisfy detailed balance.
    pub fn completed(self) -> Result<Self> {
        let g = if self.transition.is_some() {
            self
        } else {
            uniform_walk_transition(&self)?
        };
        match g.measure {
            Some(ref pi) => {
                let report = verify_detailed_balance(g.transition.as_ref().unwrap(), pi)?;
                if !report.ok {
                    return Err(Error::NotReversible(report.max_defect));
                }
                Ok(g)
            }
            None => {
                let pi = stationary_measure(&g)?;
                g.with_measure(pi)
            }
        }
    }

    /// Normalized Laplacian of the attached `(P, π)`.
    pub fn laplacian(&self) -> Result<SymmetricOperator> {
        let p = self.transition.as_ref().ok_or(Error::MissingTransition)?;
        let pi = self.measure.as_deref().ok_or(Error::MissingMeasure)?;
        normalized_laplacian(p, pi)
    }
}

/// Real symmetric operator with its construction-time symmetry defect.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricOperator {
    matrix: RealMatrix,
    symmetry_defect: f64,
}

impl SymmetricOperator {
    pub fn new(matrix: RealMatrix) -> Result<Self> {
        let symmetry_defect = matrix.hermitian_defect();
        if symmetry_defect > BALANCE_TOL {
            return Err(Error::NotReversible(symmetry_defect));
        }
        let n = matrix.rows();
        let matrix = RealMatrix::from_fn(n, n, |i, j| 0.5 * (matrix[(i, j)] + matrix[(j, i)]));
        Ok(Self {
            matrix,
            symmetry_defect,
        })
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.matrix
    }

    pub fn symmetry_defect(&self) -> f64 {
        self.symmetry_defect
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

/// Simple random walk: `P[j][k] = 1/deg(j)` for each neighbour `k`.
pub fn uniform_walk_transition(g: &GraphModel) -> Result<GraphModel> {
    let n = g.vertex_count();
    let mut p = RealMatrix::zeros(n, n);
    for j in 0..n {
        let nb = g.neighbors(j);
        if nb.is_empty() {
            return Err(Error::IsolatedVertex(j));
        }
        let w = 1.0 / nb.len() as f64;
        for k in nb {
            p[(j, k)] = w;
        }
    }
    let mut out = g.clone();
    out.transition = Some(p);
    Ok(out)
}

/// Solves `πP = π`, `Σπ = 1` for an irreducible chain.
pub fn stationary_measure(g: &GraphModel) -> Result<Vec<f64>> {
    let p = g.transition().ok_or(Error::MissingTransition)?;
    let n = p.rows();
    if !strongly_connected(p) {
        return Err(Error::NotIrreducible);
    }
    // (Pᵀ − I) π = 0 with the last equation replaced by Σπ = 1.
    let mut a = RealMatrix::from_fn(n, n, |i, j| p[(j, i)] - if i == j { 1.0 } else { 0.0 });
    let mut b = vec![0.0; n];
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    let pi = solve_dense(a, b).ok_or(Error::NotIrreducible)?;
    if let Some(j) = pi.iter().position(|&x| x.is_nan() || x <= 0.0) {
        return Err(Error::NoPositiveFixedVector(j));
    }
    let total: f64 = pi.iter().sum();
    Ok(pi.into_iter().map(|x| x / total).collect())
}

fn strongly_connected(p: &RealMatrix) -> bool {
    let n = p.rows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for w in 0..n {
                let w_edge = if forward { p[(v, w)] } else { p[(w, v)] };
                if w_edge > 0.0 && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: RealMatrix, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))?;
        if a[(piv, col)].abs() < 1e-14 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                let tmp = a[(col, k)];
                a[(col, k)] = a[(piv, k)];
                a[(piv, k)] = tmp;
            }
            b.swap(col, piv);
        }
        for r in col + 1..n {
            let f = a[(r, col)] / a[(col, col)];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[(r, k)] -= f * a[(col, k)];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[(i, k)] * x[k]).sum();
        x[i] = (b[i] - s) / a[(i, i)];
    }
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceReport {
    pub ok: bool,
    pub max_defect: f64,
}

/// `max_{j,k} |π_j P[j][k] − π_k P[k][j]|` against [`BALANCE_TOL`].
pub fn verify_detailed_balance(p: &RealMatrix, pi: &[f64]) -> Result<BalanceReport> {
    let n = pi.len();
    if p.rows() != n || p.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p.rows(),
        });
    }
    let mut max_defect: f64 = 0.0;
    for j in 0..n {
        for k in j + 1..n {
            max_defect = max_defect.max((pi[j] * p[(j, k)] - pi[k] * p[(k, j)]).abs());
        }
    }
    Ok(BalanceReport {
        ok: max_defect <= BALANCE_TOL,
        max_defect,
    })
}

/// `𝓛 = I − D^{1/2} P D^{−1/2}` with `D = diag(π)`.
pub fn normalized_laplacian(p: &RealMatrix, pi: &[f64]) -> Result<SymmetricOperator> {
    let n = pi.len();
    if p.rows() != n || p.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p.rows(),
        });
    }
    let l = RealMatrix::from_fn(n, n, |j, k| {
        let id = if j == k { 1.0 } else { 0.0 };
        id - sqrt(pi[j] / pi[k]) * p[(j, k)]
    });
    SymmetricOperator::new(l)
}

/// Checks `q` lies in the open simplex: `0 < q_j < 1`, `Σq = 1`.
pub fn validate_open_simplex(q: &[f64]) -> Result<()> {
    if q.is_empty() {
        return Err(Error::InvalidProbabilityVector("empty"));
    }
    if q.len() == 1 {
        // d = 0: the single weight is necessarily 1.
        return if (q[0] - 1.0).abs() <= STOCHASTIC_TOL {
            Ok(())
        } else {
            Err(Error::InvalidProbabilityVector("entries must sum to 1"))
        };
    }
    if q.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::InvalidProbabilityVector("entries must lie in (0, 1)"));
    }
    if (q.iter().sum::<f64>() - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidProbabilityVector("entries must sum to 1"));
    }
    Ok(())
}
