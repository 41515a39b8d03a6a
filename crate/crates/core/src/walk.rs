//! Hierarchical continuous-time quantum walks.
//!
//! `𝓗_G = Σ_tuple Λ^{1/2} 𝓗_H Λ^{1/2} ⊗ |v_{ℓ⁰}⟩⟨v_{ℓ⁰}| ⊗ … ⊗ |v_{ℓᵈ}⟩⟨v_{ℓᵈ}|`
//! with `Λ = diag(λ_{ℓ⁰}, …, λ_{ℓᵈ})` built from the local eigenvalues, and
//! `U_G(t) = exp(it𝓗_G)`.
//!
//! The joint law of local positions sums over the eigen-labels `ℓ` of each
//! tuple block. Those labels are only defined up to a basis choice inside
//! degenerate eigenspaces, so every group is aligned with the global initial
//! state: the first label of a group carries the whole projection of `ψ_H`
//! onto the group and the others carry nothing. This makes the result depend
//! on the spectral projectors only.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::graph::{validate_open_simplex, GraphModel};
use crate::hierarchy::{HierarchicalModel, DEFAULT_CAP};
use crate::linalg::{apply_on_axis, cis, inner, kron_vectors, norm2, sqrt, ComplexMatrix, IndexSpace, RealMatrix};
use crate::spectral::{eigh, EigenSystem, GROUPING_TOL, HERMITIAN_TOL};

/// Unit-norm tolerance for states.
pub const STATE_TOL: f64 = 1e-12;
/// Smallest entry a distribution may have.
pub const NEGATIVE_TOL: f64 = 1e-12;
/// Largest total-mass defect a distribution may have.
pub const MASS_TOL: f64 = 1e-9;

type C = Complex64;

fn zero() -> C {
    C::new(0.0, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<C>,
    norm: f64,
}

impl QuantumState {
    /// Rejects states whose norm is off by more than [`STATE_TOL`].
    pub fn new(amplitudes: Vec<C>) -> Result<Self> {
        let norm = norm2(&amplitudes);
        if amplitudes.is_empty() || (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { amplitudes, norm })
    }

    /// Divides by the norm.
    pub fn normalized(mut amplitudes: Vec<C>) -> Result<Self> {
        let n = norm2(&amplitudes);
        if amplitudes.is_empty() || n <= 0.0 || !n.is_finite() {
            return Err(Error::NotNormalized(n));
        }
        for a in &mut amplitudes {
            *a /= n;
        }
        let norm = norm2(&amplitudes);
        Ok(Self { amplitudes, norm })
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        let mut amplitudes = vec![zero(); dim];
        amplitudes[k] = C::new(1.0, 0.0);
        Self {
            amplitudes,
            norm: 1.0,
        }
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&x| C::new(x, 0.0)).collect())
    }

    /// `ψ_0 ⊗ ψ_1 ⊗ …`, first factor slowest.
    pub fn product(parts: &[&QuantumState]) -> Self {
        let factors: Vec<&[C]> = parts.iter().map(|p| p.amplitudes.as_slice()).collect();
        let amplitudes = kron_vectors(&factors);
        let norm = norm2(&amplitudes);
        Self { amplitudes, norm }
    }

    pub fn amplitudes(&self) -> &[C] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// `|⟨k|ψ⟩|²` for every `k`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Which evaluation produced a [`JointDistribution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formula {
    /// Label-basis marginal of the general assembly.
    General,
    /// Two-projector form for `H = K̄`.
    TwoTerm,
    /// Phase term plus initial law minus phaseless term, for `H = K̄`.
    ThreeTerm,
    /// `p`-mixture of product laws, for `H = K̄` with constant overlap.
    Factorized,
    /// Position marginal `Σ_y |⟨y, k|U ψ⟩|²`.
    Vertex,
}

/// Probabilities over `(k_0, …, k_d)`, row-major with `k_d` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    dims: Vec<usize>,
    probabilities: Vec<f64>,
    time: f64,
    formula: Formula,
}

impl JointDistribution {
    /// Checks entries `≥ −1e-12` and mass within `1e-9` of one.
    pub fn new(dims: Vec<usize>, probabilities: Vec<f64>, time: f64, formula: Formula) -> Result<Self> {
        let len: usize = dims.iter().product();
        if probabilities.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: probabilities.len(),
            });
        }
        let min = probabilities.iter().copied().fold(f64::INFINITY, f64::min);
        let mass: f64 = probabilities.iter().sum();
        if min.is_nan() || min < -NEGATIVE_TOL || mass.is_nan() || (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution { min, mass });
        }
        Ok(Self {
            dims,
            probabilities,
            time,
            formula,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn get(&self, k: &[usize]) -> f64 {
        self.probabilities[IndexSpace::new(&self.dims).flatten(k)]
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn formula(&self) -> Formula {
        self.formula
    }

    pub fn mass(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.probabilities
            .iter()
            .zip(&other.probabilities)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One tuple block `Λ^{1/2} 𝓗_H Λ^{1/2}` with its eigensystem.
#[derive(Debug, Clone)]
pub struct TupleBlock {
    pub tuple: Vec<usize>,
    /// Diagonal of `Λ`.
    pub lambda: Vec<f64>,
    pub system: EigenSystem<C>,
}

#[derive(Debug, Clone)]
pub struct HamiltonianAssembly {
    global_ham: ComplexMatrix,
    global_system: EigenSystem<C>,
    locals: Vec<EigenSystem<C>>,
    local_vectors: Vec<ComplexMatrix>,
    local_adjoints: Vec<ComplexMatrix>,
    local_space: IndexSpace,
    blocks: Vec<TupleBlock>,
    cap: usize,
}

impl HamiltonianAssembly {
    /// Builds and diagonalizes every tuple block.
    ///
    /// When `Λ` is a multiple `c·I` the block is `c·𝓗_H` and reuses the
    /// eigenvectors and grouping of `𝓗_H`.
    pub fn new(global_ham: &ComplexMatrix, locals: Vec<EigenSystem<C>>) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::NoLocalGraphs);
        }
        if !global_ham.is_square() || global_ham.rows() != locals.len() {
            return Err(Error::DimensionMismatch {
                expected: locals.len(),
                found: global_ham.rows(),
            });
        }
        let defect = global_ham.hermitian_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        for (graph, s) in locals.iter().enumerate() {
            if s.min_value() < -NEGATIVE_TOL {
                return Err(Error::NegativeLocalEigenvalue {
                    graph,
                    value: s.min_value(),
                });
            }
        }
        let global_system = eigh(global_ham, GROUPING_TOL)?;
        let dims: Vec<usize> = locals.iter().map(EigenSystem::dim).collect();
        let local_space = IndexSpace::new(&dims);
        let g = locals.len();
        let mut blocks = Vec::with_capacity(local_space.len());
        for tuple in local_space.iter() {
            let lambda: Vec<f64> = tuple
                .iter()
                .zip(&locals)
                .map(|(&m, s)| snap_zero(s.values()[m]))
                .collect();
            let lo = lambda.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let system = if hi - lo <= GROUPING_TOL {
                global_system.scaled_keep_groups(lambda.iter().sum::<f64>() / g as f64)
            } else {
                let s: Vec<f64> = lambda.iter().map(|&v| sqrt(v)).collect();
                let block = ComplexMatrix::from_fn(g, g, |i, j| global_ham[(i, j)] * (s[i] * s[j]));
                eigh(&block, GROUPING_TOL)?
            };
            blocks.push(TupleBlock {
                tuple,
                lambda,
                system,
            });
        }
        let local_vectors: Vec<ComplexMatrix> = locals.iter().map(EigenSystem::vector_matrix).collect();
        let local_adjoints = local_vectors.iter().map(ComplexMatrix::adjoint).collect();
        Ok(Self {
            global_ham: global_ham.clone(),
            global_system,
            locals,
            local_vectors,
            local_adjoints,
            local_space,
            blocks,
            cap: DEFAULT_CAP,
        })
    }

    /// Local Hamiltonians `𝓛_{G_j}` and, unless given, `𝓗_H = I − 𝓛_H`.
    pub fn from_model(model: &HierarchicalModel, global_ham: Option<ComplexMatrix>) -> Result<Self> {
        let global_ham = match global_ham {
            Some(h) => h,
            None => {
                let l = model.global_laplacian()?.matrix();
                let g = l.rows();
                RealMatrix::from_fn(g, g, |i, j| if i == j { 1.0 } else { 0.0 } - l[(i, j)]).to_complex()
            }
        };
        let locals = model.locals().iter().map(|g| g.eigen().to_complex()).collect();
        let mut out = Self::new(&global_ham, locals)?;
        out.cap = model.options().cap;
        Ok(out)
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn global_hamiltonian(&self) -> &ComplexMatrix {
        &self.global_ham
    }

    pub fn global_system(&self) -> &EigenSystem<C> {
        &self.global_system
    }

    pub fn locals(&self) -> &[EigenSystem<C>] {
        &self.locals
    }

    pub fn blocks(&self) -> &[TupleBlock] {
        &self.blocks
    }

    pub fn global_dim(&self) -> usize {
        self.locals.len()
    }

    pub fn local_dims(&self) -> &[usize] {
        self.local_space.dims()
    }

    pub fn local_dim(&self) -> usize {
        self.local_space.len()
    }

    pub fn dim(&self) -> usize {
        self.global_dim() * self.local_dim()
    }

    fn full_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.global_dim()];
        dims.extend_from_slice(self.local_dims());
        dims
    }

    /// Applies one matrix per local axis of a `(global, locals…)` tensor.
    fn transform_locals(&self, x: Vec<C>, ops: &[ComplexMatrix], skip_global: bool) -> Vec<C> {
        let mut dims = if skip_global { self.local_dims().to_vec() } else { self.full_dims() };
        let offset = if skip_global { 0 } else { 1 };
        let mut x = x;
        for (j, op) in ops.iter().enumerate() {
            let (y, d) = apply_on_axis(&x, &dims, j + offset, op);
            x = y;
            dims = d;
        }
        x
    }

    /// `exp(it𝓗_G) ψ` without forming `𝓗_G`.
    pub fn evolve(&self, t: f64, psi: &QuantumState) -> Result<QuantumState> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: psi.dim(),
            });
        }
        let l = self.local_dim();
        let g = self.global_dim();
        let mut coeffs = self.transform_locals(psi.amplitudes.clone(), &self.local_adjoints, false);
        for (m, block) in self.blocks.iter().enumerate() {
            let x: Vec<C> = (0..g).map(|y| coeffs[y * l + m]).collect();
            let mut y = vec![zero(); g];
            for (w, &val) in block.system.vectors().iter().zip(block.system.values()) {
                let c = inner(w, &x) * cis(t * val);
                for (yi, wi) in y.iter_mut().zip(w) {
                    *yi += c * wi;
                }
            }
            for (i, v) in y.into_iter().enumerate() {
                coeffs[i * l + m] = v;
            }
        }
        let amplitudes = self.transform_locals(coeffs, &self.local_vectors, false);
        let norm = norm2(&amplitudes);
        Ok(QuantumState { amplitudes, norm })
    }

    /// Dense `𝓗_G` (below the dimension cap).
    pub fn dense_hamiltonian(&self) -> Result<ComplexMatrix> {
        let n = self.dim();
        if n > self.cap {
            return Err(Error::DimensionCapExceeded { dim: n, cap: self.cap });
        }
        let (g, l) = (self.global_dim(), self.local_dim());
        let mut out = ComplexMatrix::zeros(n, n);
        for block in &self.blocks {
            let vecs: Vec<&[C]> = block
                .tuple
                .iter()
                .zip(&self.locals)
                .map(|(&m, s)| s.vector(m))
                .collect();
            let v = kron_vectors(&vecs);
            let s: Vec<f64> = block.lambda.iter().map(|&x| sqrt(x)).collect();
            for y in 0..g {
                for y2 in 0..g {
                    let h = self.global_ham[(y, y2)] * (s[y] * s[y2]);
                    if h == zero() {
                        continue;
                    }
                    for a in 0..l {
                        for b in 0..l {
                            out[(y * l + a, y2 * l + b)] += h * v[a] * v[b].conj();
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn check_states(&self, psi_h: &QuantumState, psi_locals: &[QuantumState]) -> Result<()> {
        if psi_h.dim() != self.global_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.global_dim(),
                found: psi_h.dim(),
            });
        }
        if psi_locals.len() != self.locals.len() {
            return Err(Error::DimensionMismatch {
                expected: self.locals.len(),
                found: psi_locals.len(),
            });
        }
        for (s, psi) in self.locals.iter().zip(psi_locals) {
            if psi.dim() != s.dim() {
                return Err(Error::DimensionMismatch {
                    expected: s.dim(),
                    found: psi.dim(),
                });
            }
        }
        Ok(())
    }

    /// `Π_j ⟨v_{m_j}|ψ_j⟩` over all label tuples `m`.
    fn local_coefficients(&self, psi_locals: &[QuantumState]) -> Vec<C> {
        let parts: Vec<Vec<C>> = self
            .local_adjoints
            .iter()
            .zip(psi_locals)
            .map(|(a, p)| a.mul_vec(p.amplitudes()))
            .collect();
        let refs: Vec<&[C]> = parts.iter().map(Vec::as_slice).collect();
        kron_vectors(&refs)
    }

    /// Aligned overlaps `β_ℓ` of `ψ_H` with one tuple block, phases applied.
    fn aligned_overlaps(block: &TupleBlock, psi_h: &[C], t: Option<f64>) -> Vec<C> {
        let s = &block.system;
        let mut beta = vec![zero(); s.dim()];
        for group in s.groups() {
            let weight: f64 = group.clone().map(|l| inner(s.vector(l), psi_h).norm_sqr()).sum();
            let phase = t.map_or(C::new(1.0, 0.0), |t| cis(t * s.values()[group.start]));
            beta[group.start] = phase * sqrt(weight);
        }
        beta
    }

    fn label_marginal(&self, t: Option<f64>, psi_h: &QuantumState, psi_locals: &[QuantumState]) -> Vec<f64> {
        let gamma = self.local_coefficients(psi_locals);
        let betas: Vec<Vec<C>> = self
            .blocks
            .iter()
            .map(|b| Self::aligned_overlaps(b, psi_h.amplitudes(), t))
            .collect();
        let mut probs = vec![0.0; self.local_dim()];
        for label in 0..self.global_dim() {
            let x: Vec<C> = betas.iter().zip(&gamma).map(|(b, g)| b[label] * g).collect();
            if x.iter().all(|z| *z == zero()) {
                continue;
            }
            let a = self.transform_locals(x, &self.local_vectors, true);
            for (p, z) in probs.iter_mut().zip(a) {
                *p += z.norm_sqr();
            }
        }
        probs
    }

    /// `Σ_ℓ |Σ_tuple ⟨v_ℓ|ψ_H⟩ e^{itλ_ℓ} Π_j ⟨k_j|v_{ℓ^j}⟩⟨v_{ℓ^j}|ψ_j⟩|²`.
    pub fn joint_distribution(
        &self,
        t: f64,
        psi_h: &QuantumState,
        psi_locals: &[QuantumState],
    ) -> Result<JointDistribution> {
        self.check_states(psi_h, psi_locals)?;
        let probs = self.label_marginal(Some(t), psi_h, psi_locals);
        JointDistribution::new(self.local_dims().to_vec(), probs, t, Formula::General)
    }

    /// Same sum with every phase set to one.
    pub fn phaseless_distribution(
        &self,
        psi_h: &QuantumState,
        psi_locals: &[QuantumState],
    ) -> Result<JointDistribution> {
        self.check_states(psi_h, psi_locals)?;
        let probs = self.label_marginal(None, psi_h, psi_locals);
        JointDistribution::new(self.local_dims().to_vec(), probs, 0.0, Formula::General)
    }

    /// `Σ_y |⟨y, k| U(t) (ψ_H ⊗ ψ_0 ⊗ …)⟩|²`.
    pub fn vertex_marginal(
        &self,
        t: f64,
        psi_h: &QuantumState,
        psi_locals: &[QuantumState],
    ) -> Result<JointDistribution> {
        self.check_states(psi_h, psi_locals)?;
        let mut parts = vec![psi_h];
        parts.extend(psi_locals.iter());
        let psi = self.evolve(t, &QuantumState::product(&parts))?;
        let l = self.local_dim();
        let mut probs = vec![0.0; l];
        for (i, a) in psi.amplitudes().iter().enumerate() {
            probs[i % l] += a.norm_sqr();
        }
        JointDistribution::new(self.local_dims().to_vec(), probs, t, Formula::Vertex)
    }
}

/// Local eigenvalues within [`NEGATIVE_TOL`] of zero are zero: `√λ` would
/// blow rounding noise up to `~1e-8`.
fn snap_zero(v: f64) -> f64 {
    if v <= NEGATIVE_TOL {
        0.0
    } else {
        v
    }
}

/// `|Σ_ℓ e^{itλ_ℓ} ⟨k|v_ℓ⟩⟨v_ℓ|ψ⟩|²` for one Hamiltonian's eigensystem.
pub fn ctqw_distribution(system: &EigenSystem<C>, psi: &QuantumState, t: f64) -> Result<Vec<f64>> {
    if psi.dim() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            found: psi.dim(),
        });
    }
    let mut amp = vec![zero(); system.dim()];
    for (v, &val) in system.vectors().iter().zip(system.values()) {
        let c = inner(v, psi.amplitudes()) * cis(t * val);
        for (a, x) in amp.iter_mut().zip(v) {
            *a += c * x;
        }
    }
    Ok(amp.iter().map(|a| a.norm_sqr()).collect())
}

/// CTQW on one graph driven by its normalized Laplacian.
pub fn single_ctqw_distribution(g: &GraphModel, psi: &QuantumState, t: f64) -> Result<Vec<f64>> {
    let g = g.clone().completed()?;
    let system = eigh(g.laplacian()?.matrix(), GROUPING_TOL)?;
    ctqw_distribution(&system.to_complex(), psi, t)
}

/// `𝓗_K̄ = (Σ √q_j |j⟩)(Σ √q_j ⟨j|)`.
pub fn kbar_hamiltonian(q: &[f64]) -> Result<RealMatrix> {
    validate_open_simplex(q)?;
    let s: Vec<f64> = q.iter().map(|&x| sqrt(x)).collect();
    let n = q.len();
    Ok(RealMatrix::from_fn(n, n, |i, j| s[i] * s[j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KbarBranch {
    /// Normalized `Σ √(g_j q_j) |j⟩`.
    Weighted,
    /// Every gap is zero: `Σ √q_j |j⟩`.
    Uniform,
}

/// Eigenvector of the nonzero eigenvalue of `Λ^{1/2} 𝓗_K̄ Λ^{1/2}` for
/// `Λ = diag(gaps)`, or `√q` when all gaps vanish.
pub fn kbar_tuple_vector(gaps: &[f64], q: &[f64], tol: f64) -> Result<(Vec<f64>, KbarBranch)> {
    if gaps.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            found: gaps.len(),
        });
    }
    let mut w = Vec::with_capacity(q.len());
    for (index, (&g, &qj)) in gaps.iter().zip(q).enumerate() {
        let value = g * qj;
        if value < -tol {
            return Err(Error::NegativeWeight { index, value });
        }
        w.push(value.max(0.0));
    }
    if gaps.iter().any(|g| g.abs() > tol) {
        let n = sqrt(w.iter().sum());
        Ok((w.iter().map(|&x| sqrt(x) / n).collect(), KbarBranch::Weighted))
    } else {
        let n = sqrt(q.iter().sum());
        Ok((q.iter().map(|&x| sqrt(x) / n).collect(), KbarBranch::Uniform))
    }
}

/// `H = K̄_{d+1}` with `𝓗_{G_j} = 𝓛_{G_j}`.
#[derive(Debug, Clone)]
pub struct KbarModel {
    q: Vec<f64>,
    locals: Vec<EigenSystem<C>>,
    local_vectors: Vec<ComplexMatrix>,
    local_space: IndexSpace,
    tuples: Vec<KbarTuple>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KbarTuple {
    pub tuple: Vec<usize>,
    /// Local Laplacian eigenvalues `1 − λ`.
    pub gaps: Vec<f64>,
    pub vector: Vec<f64>,
    pub branch: KbarBranch,
    /// `Σ_j (1 − λ_j) q_j`.
    pub energy: f64,
}

impl KbarModel {
    pub fn new(q: &[f64], locals: Vec<EigenSystem<f64>>) -> Result<Self> {
        validate_open_simplex(q)?;
        if locals.len() != q.len() {
            return Err(Error::DimensionMismatch {
                expected: q.len(),
                found: locals.len(),
            });
        }
        let dims: Vec<usize> = locals.iter().map(EigenSystem::dim).collect();
        let local_space = IndexSpace::new(&dims);
        let mut tuples = Vec::with_capacity(local_space.len());
        for tuple in local_space.iter() {
            let gaps: Vec<f64> = tuple.iter().zip(&locals).map(|(&m, s)| s.values()[m]).collect();
            let (vector, branch) = kbar_tuple_vector(&gaps, q, GROUPING_TOL)?;
            let energy = gaps.iter().zip(q).map(|(g, qj)| g.max(0.0) * qj).sum();
            tuples.push(KbarTuple {
                tuple,
                gaps,
                vector,
                branch,
                energy,
            });
        }
        let locals: Vec<EigenSystem<C>> = locals.iter().map(EigenSystem::to_complex).collect();
        let local_vectors = locals.iter().map(EigenSystem::vector_matrix).collect();
        Ok(Self {
            q: q.to_vec(),
            locals,
            local_vectors,
            local_space,
            tuples,
        })
    }

    pub fn from_model(q: &[f64], model: &HierarchicalModel) -> Result<Self> {
        Self::new(q, model.locals().iter().map(|g| g.eigen().clone()).collect())
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn tuples(&self) -> &[KbarTuple] {
        &self.tuples
    }

    pub fn local_dims(&self) -> &[usize] {
        self.local_space.dims()
    }

    fn check_states(&self, psi_h: &QuantumState, psi_locals: &[QuantumState]) -> Result<()> {
        if psi_h.dim() != self.q.len() {
            return Err(Error::DimensionMismatch {
                expected: self.q.len(),
                found: psi_h.dim(),
            });
        }
        self.check_locals(psi_locals)
    }

    fn check_locals(&self, psi_locals: &[QuantumState]) -> Result<()> {
        if psi_locals.len() != self.locals.len() {
            return Err(Error::DimensionMismatch {
                expected: self.locals.len(),
                found: psi_locals.len(),
            });
        }
        for (s, p) in self.locals.iter().zip(psi_locals) {
            if p.dim() != s.dim() {
                return Err(Error::DimensionMismatch {
                    expected: s.dim(),
                    found: p.dim(),
                });
            }
        }
        Ok(())
    }

    /// `a_t = |⟨v^{(t)}|ψ_H⟩|` per tuple.
    pub fn overlaps(&self, psi_h: &QuantumState) -> Vec<f64> {
        self.tuples
            .iter()
            .map(|t| {
                t.vector
                    .iter()
                    .zip(psi_h.amplitudes())
                    .fold(zero(), |acc, (&v, a)| acc + a * v)
                    .norm()
            })
            .collect()
    }

    /// `(min, max)` of `|⟨v^{(t)}|ψ_H⟩|²` over tuples.
    pub fn overlap_range(&self, psi_h: &QuantumState) -> (f64, f64) {
        self.overlaps(psi_h).iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| {
            (lo.min(a * a), hi.max(a * a))
        })
    }

    /// The common overlap `p` when the spread is within `tol`.
    pub fn constant_overlap(&self, psi_h: &QuantumState, tol: f64) -> Option<f64> {
        let (lo, hi) = self.overlap_range(psi_h);
        (hi - lo <= tol).then_some(0.5 * (lo + hi))
    }

    /// `(⊗V_j)(f ⊙ Γ)` with `Γ[m] = Π_j ⟨v_{m_j}|ψ_j⟩`.
    fn weighted_sum(&self, gamma: &[C], f: impl Fn(usize) -> C) -> Vec<C> {
        let mut x: Vec<C> = gamma.iter().enumerate().map(|(m, g)| f(m) * g).collect();
        let mut dims = self.local_dims().to_vec();
        for (j, v) in self.local_vectors.iter().enumerate() {
            let (y, d) = apply_on_axis(&x, &dims, j, v);
            x = y;
            dims = d;
        }
        x
    }

    fn gamma(&self, psi_locals: &[QuantumState]) -> Vec<C> {
        let parts: Vec<Vec<C>> = self
            .local_vectors
            .iter()
            .zip(psi_locals)
            .map(|(v, p)| v.adjoint().mul_vec(p.amplitudes()))
            .collect();
        let refs: Vec<&[C]> = parts.iter().map(Vec::as_slice).collect();
        kron_vectors(&refs)
    }

    /// Raw three-term values `|Σ a e^{itμ} c|² + |Σ c|² − |Σ a c|²`.
    ///
    /// These are a probability law only under constant overlap; otherwise
    /// entries can be negative.
    pub fn three_term_values(&self, t: f64, psi_h: &QuantumState, psi_locals: &[QuantumState]) -> Result<Vec<f64>> {
        self.check_states(psi_h, psi_locals)?;
        let a = self.overlaps(psi_h);
        let gamma = self.gamma(psi_locals);
        let s1 = self.weighted_sum(&gamma, |m| cis(t * self.tuples[m].energy) * a[m]);
        let s2 = self.weighted_sum(&gamma, |_| C::new(1.0, 0.0));
        let s3 = self.weighted_sum(&gamma, |m| C::new(a[m], 0.0));
        Ok(s1
            .iter()
            .zip(&s2)
            .zip(&s3)
            .map(|((x, y), z)| x.norm_sqr() + y.norm_sqr() - z.norm_sqr())
            .collect())
    }

    /// Three-term law; fails with `InvalidDistribution` when it is not one.
    pub fn kbar_joint_distribution(
        &self,
        t: f64,
        psi_h: &QuantumState,
        psi_locals: &[QuantumState],
    ) -> Result<JointDistribution> {
        let values = self.three_term_values(t, psi_h, psi_locals)?;
        JointDistribution::new(self.local_dims().to_vec(), values, t, Formula::ThreeTerm)
    }

    /// `|Σ a e^{itμ} c|² + |Σ √(1 − a²) c|²`.
    pub fn two_term_distribution(
        &self,
        t: f64,
        psi_h: &QuantumState,
        psi_locals: &[QuantumState],
    ) -> Result<JointDistribution> {
        self.check_states(psi_h, psi_locals)?;
        let a = self.overlaps(psi_h);
        let gamma = self.gamma(psi_locals);
        let s1 = self.weighted_sum(&gamma, |m| cis(t * self.tuples[m].energy) * a[m]);
        let s2 = self.weighted_sum(&gamma, |m| C::new(sqrt((1.0 - a[m] * a[m]).max(0.0)), 0.0));
        let values = s1.iter().zip(&s2).map(|(x, y)| x.norm_sqr() + y.norm_sqr()).collect();
        JointDistribution::new(self.local_dims().to_vec(), values, t, Formula::TwoTerm)
    }

    /// `U(t) ψ = Σ_t [e^{itμ_t} |v^t⟩⟨v^t| + (I − |v^t⟩⟨v^t|)] ⊗ projectors · ψ`.
    pub fn projector_evolve(&self, t: f64, psi: &QuantumState) -> Result<QuantumState> {
        let g = self.q.len();
        let l = self.local_space.len();
        if psi.dim() != g * l {
            return Err(Error::DimensionMismatch {
                expected: g * l,
                found: psi.dim(),
            });
        }
        let mut dims = vec![g];
        dims.extend_from_slice(self.local_dims());
        let mut x = psi.amplitudes().to_vec();
        let mut d = dims.clone();
        for (j, v) in self.local_vectors.iter().enumerate() {
            let (y, nd) = apply_on_axis(&x, &d, j + 1, &v.adjoint());
            x = y;
            d = nd;
        }
        for (m, tup) in self.tuples.iter().enumerate() {
            let c = (0..g).fold(zero(), |acc, y| acc + x[y * l + m] * tup.vector[y]);
            let shift = c * (cis(t * tup.energy) - C::new(1.0, 0.0));
            for y in 0..g {
                x[y * l + m] += shift * tup.vector[y];
            }
        }
        for (j, v) in self.local_vectors.iter().enumerate() {
            let (y, nd) = apply_on_axis(&x, &d, j + 1, v);
            x = y;
            d = nd;
        }
        let norm = norm2(&x);
        Ok(QuantumState { amplitudes: x, norm })
    }

    /// `p Π_j ℙ(X^{(j)}_{q_j t} = k_j) + (1 − p) Π_j |⟨k_j|ψ_j⟩|²`.
    pub fn factorized_distribution(&self, t: f64, p: f64, psi_locals: &[QuantumState]) -> Result<JointDistribution> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidP(p));
        }
        self.check_locals(psi_locals)?;
        let mut moved = Vec::with_capacity(self.locals.len());
        for ((s, psi), &qj) in self.locals.iter().zip(psi_locals).zip(&self.q) {
            moved.push(ctqw_distribution(s, psi, qj * t)?);
        }
        let frozen: Vec<Vec<f64>> = psi_locals.iter().map(QuantumState::probabilities).collect();
        let mr: Vec<&[f64]> = moved.iter().map(Vec::as_slice).collect();
        let fr: Vec<&[f64]> = frozen.iter().map(Vec::as_slice).collect();
        let a = kron_vectors(&mr);
        let b = kron_vectors(&fr);
        let values = a.iter().zip(&b).map(|(x, y)| p * x + (1.0 - p) * y).collect();
        JointDistribution::new(self.local_dims().to_vec(), values, t, Formula::Factorized)
    }

    /// [`Self::factorized_distribution`] after checking that `p` is the
    /// common overlap of `ψ_H` within `tol`.
    pub fn factorized_checked(
        &self,
        t: f64,
        p: f64,
        psi_h: &QuantumState,
        psi_locals: &[QuantumState],
        tol: f64,
    ) -> Result<JointDistribution> {
        self.check_states(psi_h, psi_locals)?;
        let (lo, hi) = self.overlap_range(psi_h);
        let spread = (hi - lo).max((p - lo).abs()).max((hi - p).abs());
        if spread > tol {
            return Err(Error::ConstantOverlapViolated { spread, asserted: p });
        }
        self.factorized_distribution(t, p, psi_locals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::ModelOptions;
    use core::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn model(q: &[f64], locals: Vec<GraphModel>) -> HierarchicalModel {
        HierarchicalModel::new(GraphModel::kbar(q).unwrap(), locals, ModelOptions::default()).unwrap()
    }

    fn p2() -> GraphModel {
        GraphModel::path(2).unwrap()
    }

    fn kbar_setup() -> (HierarchicalModel, HamiltonianAssembly, KbarModel) {
        let m = model(&[0.5, 0.5], vec![p2(), p2()]);
        let asm = HamiltonianAssembly::from_model(&m, None).unwrap();
        let kb = KbarModel::from_model(&[0.5, 0.5], &m).unwrap();
        (m, asm, kb)
    }

    fn psi_hi() -> QuantumState {
        QuantumState::new(vec![c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2)]).unwrap()
    }

    #[test]
    fn state_validation() {
        assert!(matches!(QuantumState::new(vec![c(1.0, 0.0), c(1.0, 0.0)]), Err(Error::NotNormalized(_))));
        let s = QuantumState::normalized(vec![c(3.0, 0.0), c(0.0, 4.0)]).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-15);
        assert!(QuantumState::normalized(vec![zero()]).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(JointDistribution::new(vec![2], vec![0.5, 0.5], 0.0, Formula::General).is_ok());
        assert!(matches!(
            JointDistribution::new(vec![2], vec![1.1, -0.1], 0.0, Formula::General),
            Err(Error::InvalidDistribution { .. })
        ));
        assert!(JointDistribution::new(vec![2], vec![0.5, 0.4], 0.0, Formula::General).is_err());
    }

    #[test]
    fn assembly_examples() {
        let h = kbar_hamiltonian(&[0.5, 0.5]).unwrap().to_complex();
        let one = EigenSystem::from_parts(vec![1.0], vec![vec![c(1.0, 0.0)]], GROUPING_TOL);
        let a = HamiltonianAssembly::new(&h, vec![one.clone(), one]).unwrap();
        assert!(a.blocks()[0].system.reconstruct().max_abs_diff(&h) < 1e-15);

        let (_, asm, _) = kbar_setup();
        // P2 Laplacian eigenvalues are (0, 2); tuple (1, 1) has Λ = 2I.
        let b = &asm.blocks()[3];
        assert_eq!(b.lambda, vec![2.0, 2.0]);
        let want = ComplexMatrix::from_fn(2, 2, |_, _| c(1.0, 0.0));
        assert!(b.system.reconstruct().max_abs_diff(&want) < 1e-14);
        let b = &asm.blocks()[0];
        assert!(b.system.reconstruct().max_abs() < 1e-15);

        let neg = EigenSystem::from_parts(vec![-0.5, 1.0], vec![vec![c(1.0, 0.0), zero()], vec![zero(), c(1.0, 0.0)]], GROUPING_TOL);
        let h1 = ComplexMatrix::identity(1);
        assert!(matches!(
            HamiltonianAssembly::new(&h1, vec![neg]),
            Err(Error::NegativeLocalEigenvalue { graph: 0, .. })
        ));
        let bad = ComplexMatrix::from_fn(2, 2, |i, j| c((i + 2 * j) as f64, 0.0));
        let one = EigenSystem::from_parts(vec![1.0], vec![vec![c(1.0, 0.0)]], GROUPING_TOL);
        assert!(matches!(
            HamiltonianAssembly::new(&bad, vec![one.clone(), one]),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn evolve_matches_dense_series_and_is_unitary() {
        let (m, asm, _) = kbar_setup();
        let h = asm.dense_hamiltonian().unwrap();
        let psi = QuantumState::normalized((0..m.dim()).map(|i| c((i as f64).cos(), (i as f64 * 0.3).sin())).collect()).unwrap();
        for t in [0.0, 0.3, -1.2] {
            let out = asm.evolve(t, &psi).unwrap();
            assert!((out.norm() - 1.0).abs() < 1e-12);
            // Taylor series of exp(itH)ψ; ‖tH‖ is small here.
            let mut term = psi.amplitudes().to_vec();
            let mut sum = term.clone();
            for k in 1..60 {
                term = h.mul_vec(&term).iter().map(|z| z * c(0.0, t) / k as f64).collect();
                for (s, x) in sum.iter_mut().zip(&term) {
                    *s += x;
                }
            }
            for (a, b) in out.amplitudes().iter().zip(&sum) {
                assert!((a - b).norm() < 1e-12);
            }
            let back = asm.evolve(-t, &out).unwrap();
            for (a, b) in back.amplitudes().iter().zip(psi.amplitudes()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn single_vertex_phase_only() {
        let sys = EigenSystem::from_parts(vec![0.7], vec![vec![c(1.0, 0.0)]], GROUPING_TOL);
        let asm = HamiltonianAssembly::new(&ComplexMatrix::identity(1), vec![sys]).unwrap();
        let psi = QuantumState::new(vec![c(0.6, 0.8)]).unwrap();
        let out = asm.evolve(2.0, &psi).unwrap();
        assert!((out.amplitudes()[0].norm() - 1.0).abs() < 1e-15);
        assert!((out.amplitudes()[0] - psi.amplitudes()[0] * cis(1.4)).norm() < 1e-15);
    }

    #[test]
    fn single_graph_reduction() {
        let m = HierarchicalModel::new(GraphModel::single_loop(), vec![GraphModel::cycle(3).unwrap()], ModelOptions::default()).unwrap();
        let asm = HamiltonianAssembly::new(&ComplexMatrix::identity(1), vec![m.local(0).eigen().to_complex()]).unwrap();
        let psi0 = QuantumState::normalized(vec![c(1.0, 0.0), c(0.0, 1.0), c(0.5, 0.5)]).unwrap();
        let psi_h = QuantumState::basis(1, 0);
        for t in [0.0, 0.4, 3.0] {
            let d = asm.joint_distribution(t, &psi_h, core::slice::from_ref(&psi0)).unwrap();
            let s = single_ctqw_distribution(&GraphModel::cycle(3).unwrap(), &psi0, t).unwrap();
            for (a, b) in d.probabilities().iter().zip(&s) {
                assert!((a - b).abs() < 1e-13);
            }
            let v = asm.vertex_marginal(t, &psi_h, core::slice::from_ref(&psi0)).unwrap();
            assert!(v.max_abs_diff(&d) < 1e-13);
        }
    }

    #[test]
    fn p2_closed_form() {
        let psi = QuantumState::basis(2, 0);
        for t in [0.0, PI / 4.0, PI / 2.0, 1.0] {
            let d = single_ctqw_distribution(&p2(), &psi, t).unwrap();
            assert!((d[0] - t.cos().powi(2)).abs() < 1e-14);
        }
    }

    #[test]
    fn eigenvector_collapse_and_t0() {
        let (m, asm, _) = kbar_setup();
        let v1: Vec<C> = m.local(1).eigen().vector(1).iter().map(|&x| c(x, 0.0)).collect();
        let locals = [QuantumState::basis(2, 0), QuantumState::new(v1).unwrap()];
        let psi_h = QuantumState::normalized(vec![c(0.3, 0.1), c(-0.2, 0.9)]).unwrap();
        let d = asm.joint_distribution(0.0, &psi_h, &locals).unwrap();
        let e = asm.phaseless_distribution(&psi_h, &locals).unwrap();
        assert_eq!(d.probabilities(), e.probabilities());
        let d = asm.joint_distribution(1.3, &psi_h, &locals).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn kbar_hamiltonian_examples() {
        assert!(kbar_hamiltonian(&[1.0, 0.0]).is_err());
        let h = kbar_hamiltonian(&[0.5, 0.5]).unwrap();
        assert!(h.max_abs_diff(&RealMatrix::from_fn(2, 2, |_, _| 0.5)) < 1e-15);
        let h = kbar_hamiltonian(&[0.2, 0.3, 0.5]).unwrap();
        assert!((h.trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kbar_tuple_vector_examples() {
        let (v, b) = kbar_tuple_vector(&[0.0, 0.0], &[0.25, 0.75], 1e-9).unwrap();
        assert_eq!(b, KbarBranch::Uniform);
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.75f64.sqrt()).abs() < 1e-15);
        let (v, b) = kbar_tuple_vector(&[2.0, 0.0], &[0.25, 0.75], 1e-9).unwrap();
        assert_eq!((v, b), (vec![1.0, 0.0], KbarBranch::Weighted));
        let (v, _) = kbar_tuple_vector(&[2.0, 2.0], &[0.5, 0.5], 1e-9).unwrap();
        assert!((v[0] - FRAC_1_SQRT_2).abs() < 1e-15 && (v[1] - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(
            kbar_tuple_vector(&[-1.0, 1.0], &[0.5, 0.5], 1e-9),
            Err(Error::NegativeWeight { index: 0, .. })
        ));
    }

    #[test]
    fn kbar_paths_agree_on_constant_overlap() {
        let (_, asm, kb) = kbar_setup();
        let psi_h = psi_hi();
        let (lo, hi) = kb.overlap_range(&psi_h);
        assert!((lo - 0.5).abs() < 1e-15 && (hi - 0.5).abs() < 1e-15);
        let locals = [QuantumState::basis(2, 0), QuantumState::basis(2, 0)];
        for t in [0.0, 0.7, PI, 5.0] {
            let g = asm.joint_distribution(t, &psi_h, &locals).unwrap();
            let l = kb.two_term_distribution(t, &psi_h, &locals).unwrap();
            let th = kb.kbar_joint_distribution(t, &psi_h, &locals).unwrap();
            let f = kb.factorized_checked(t, 0.5, &psi_h, &locals, 1e-9).unwrap();
            assert!(g.max_abs_diff(&l) < 1e-13);
            assert!(g.max_abs_diff(&th) < 1e-13);
            assert!(th.max_abs_diff(&f) < 1e-13);
        }
        let t0 = kb.kbar_joint_distribution(0.0, &psi_h, &locals).unwrap();
        assert!((t0.get(&[0, 0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn three_term_fails_without_constant_overlap() {
        let (_, asm, kb) = kbar_setup();
        let psi_h = QuantumState::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]).unwrap();
        let locals = [QuantumState::basis(2, 0), QuantumState::basis(2, 0)];
        let t = PI / 4.0;
        let raw = kb.three_term_values(t, &psi_h, &locals).unwrap();
        assert!(raw[3] < -0.02);
        assert!(matches!(
            kb.kbar_joint_distribution(t, &psi_h, &locals),
            Err(Error::InvalidDistribution { .. })
        ));
        let g = asm.joint_distribution(t, &psi_h, &locals).unwrap();
        let l = kb.two_term_distribution(t, &psi_h, &locals).unwrap();
        assert!(g.max_abs_diff(&l) < 1e-13);
        assert!(matches!(
            kb.factorized_checked(t, 0.5, &psi_h, &locals, 1e-9),
            Err(Error::ConstantOverlapViolated { .. })
        ));
    }

    #[test]
    fn trivial_locals_are_static() {
        let q = [0.3, 0.7];
        let kb = KbarModel::new(&q, vec![GraphModel::single_loop(), GraphModel::single_loop()]
            .into_iter()
            .map(|g| eigh(g.completed().unwrap().laplacian().unwrap().matrix(), GROUPING_TOL).unwrap())
            .collect())
        .unwrap();
        let psi_h = QuantumState::from_real(&[0.3f64.sqrt(), 0.7f64.sqrt()]).unwrap();
        assert_eq!(kb.tuples()[0].branch, KbarBranch::Uniform);
        let locals = [QuantumState::basis(1, 0), QuantumState::basis(1, 0)];
        let d = kb.kbar_joint_distribution(2.0, &psi_h, &locals).unwrap();
        assert!((d.probabilities()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn factorized_examples() {
        let (_, _, kb) = kbar_setup();
        let locals = [QuantumState::basis(2, 0), QuantumState::basis(2, 1)];
        assert!(matches!(kb.factorized_distribution(1.0, 1.5, &locals), Err(Error::InvalidP(_))));
        let f0 = kb.factorized_distribution(3.0, 0.0, &locals).unwrap();
        assert_eq!(f0.get(&[0, 1]), 1.0);
        let f1 = kb.factorized_distribution(3.0, 1.0, &locals).unwrap();
        let a = single_ctqw_distribution(&p2(), &locals[0], 1.5).unwrap();
        let b = single_ctqw_distribution(&p2(), &locals[1], 1.5).unwrap();
        assert!((f1.get(&[1, 0]) - a[1] * b[0]).abs() < 1e-15);
    }

    #[test]
    fn projector_evolution_matches_assembly() {
        let m = model(&[0.3, 0.7], vec![p2(), GraphModel::cycle(3).unwrap()]);
        let asm = HamiltonianAssembly::from_model(&m, None).unwrap();
        let kb = KbarModel::from_model(&[0.3, 0.7], &m).unwrap();
        let psi = QuantumState::normalized((0..m.dim()).map(|i| c(1.0 + i as f64, (i * i) as f64 * 0.1)).collect()).unwrap();
        for t in [0.3, 1.0, PI] {
            let a = asm.evolve(t, &psi).unwrap();
            let b = kb.projector_evolve(t, &psi).unwrap();
            for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn local_shift_changes_the_hierarchical_law() {
        // Shift invariance holds for a single graph only: shifting local
        // spectra rescales Λ and so changes every tuple block.
        let m = model(&[0.5, 0.5], vec![p2(), GraphModel::cycle(3).unwrap()]);
        let asm = HamiltonianAssembly::from_model(&m, None).unwrap();
        let reflected: Vec<EigenSystem<C>> = m
            .locals()
            .iter()
            .map(|g| crate::spectral::shift_to_nonnegative(&g.eigen().to_complex(), crate::spectral::ShiftMode::MaxReflect).0)
            .collect();
        let other = HamiltonianAssembly::new(asm.global_hamiltonian(), reflected).unwrap();
        let psi_h = QuantumState::from_real(&[0.6, 0.8]).unwrap();
        let locals = [QuantumState::basis(2, 0), QuantumState::basis(3, 0)];
        let a = asm.joint_distribution(1.0, &psi_h, &locals).unwrap();
        let b = other.joint_distribution(1.0, &psi_h, &locals).unwrap();
        assert!(a.max_abs_diff(&b) > 1e-3);
    }
}
