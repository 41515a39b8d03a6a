//! Hierarchical random walks on `G = (H; G_0, …, G_d)`.
//!
//! States are pairs `(y, k)` with `y` a vertex of `H` and `k = (k_0, …, k_d)`
//! one vertex per local graph. Flat index: `y · Π n_j + Σ k_j · stride_j`,
//! so the global register varies slowest and local register `d` fastest.
//!
//! The discrete walk is `P_G = Σ_j P_H |j⟩⟨j| ⊗ lift(P_{G_j})`: the local
//! graph that moves is the one attached to the global walker's destination.
//! [`Convention::Source`] switches to `Σ_j |j⟩⟨j| P_H ⊗ lift(P_{G_j})`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::graph::{verify_detailed_balance, GraphModel, SymmetricOperator};
use crate::linalg::{apply_on_axis, exp, kron_vectors, sqrt, IndexSpace, Matrix, RealMatrix, Scalar};
use crate::spectral::{
    eigh, general_eigen, transition_spectrum, EigenSystem, TransitionSpectrum, GROUPING_TOL,
};

/// Largest dimension for which dense hierarchical operators are built.
pub const DEFAULT_CAP: usize = 4096;

/// Which local graph moves on a global step `y → y′`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    /// `G_{y′}` moves (the operator as written).
    #[default]
    Destination,
    /// `G_y` moves.
    Source,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOptions {
    pub convention: Convention,
    pub cap: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            convention: Convention::Destination,
            cap: DEFAULT_CAP,
        }
    }
}

/// A reversible local graph with its Laplacian spectrum.
#[derive(Debug, Clone)]
pub struct LocalGraph {
    graph: GraphModel,
    laplacian: SymmetricOperator,
    eigen: EigenSystem<f64>,
    spectrum: TransitionSpectrum,
}

impl LocalGraph {
    pub fn graph(&self) -> &GraphModel {
        &self.graph
    }

    pub fn transition(&self) -> &RealMatrix {
        self.graph.transition().expect("completed graph")
    }

    pub fn measure(&self) -> &[f64] {
        self.graph.measure().expect("completed graph")
    }

    pub fn laplacian(&self) -> &SymmetricOperator {
        &self.laplacian
    }

    /// Eigensystem of the normalized Laplacian.
    pub fn eigen(&self) -> &EigenSystem<f64> {
        &self.eigen
    }

    /// Eigen-data of the transition matrix (`λ = 1 − μ`).
    pub fn spectrum(&self) -> &TransitionSpectrum {
        &self.spectrum
    }

    pub fn dim(&self) -> usize {
        self.graph.vertex_count()
    }
}

#[derive(Debug, Clone)]
pub struct HierarchicalModel {
    global: GraphModel,
    global_laplacian: core::result::Result<SymmetricOperator, Error>,
    locals: Vec<LocalGraph>,
    local_space: IndexSpace,
    options: ModelOptions,
}

impl HierarchicalModel {
    /// Completes every graph (simple walk and stationary measure when missing)
    /// and decomposes the local Laplacians.
    ///
    /// The global graph only needs a transition matrix; its Laplacian is
    /// required later by the continuous-time spectral routines.
    pub fn new(global: GraphModel, locals: Vec<GraphModel>, options: ModelOptions) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::NoLocalGraphs);
        }
        if global.vertex_count() != locals.len() {
            return Err(Error::DimensionMismatch {
                expected: global.vertex_count(),
                found: locals.len(),
            });
        }
        let global = if global.transition().is_some() {
            global
        } else {
            crate::graph::uniform_walk_transition(&global)?
        };
        let global = match global.clone().completed() {
            Ok(g) => g,
            Err(_) => global,
        };
        let global_laplacian = global.laplacian();

        let mut out = Vec::with_capacity(locals.len());
        for (index, g) in locals.into_iter().enumerate() {
            let g = g.completed().map_err(|e| match e {
                Error::NotReversible(defect) => Error::LocalNotReversible { index, defect },
                e => e,
            })?;
            let p = g.transition().ok_or(Error::MissingTransition)?;
            let pi = g.measure().ok_or(Error::MissingMeasure)?;
            let report = verify_detailed_balance(p, pi)?;
            if !report.ok {
                return Err(Error::LocalNotReversible {
                    index,
                    defect: report.max_defect,
                });
            }
            let laplacian = g.laplacian().map_err(|e| match e {
                Error::NotReversible(defect) => Error::LocalNotReversible { index, defect },
                e => e,
            })?;
            let eigen = eigh(laplacian.matrix(), GROUPING_TOL)?;
            let spectrum = transition_spectrum(&eigen, pi)?;
            out.push(LocalGraph {
                graph: g,
                laplacian,
                eigen,
                spectrum,
            });
        }
        let dims: Vec<usize> = out.iter().map(LocalGraph::dim).collect();
        Ok(Self {
            global,
            global_laplacian,
            locals: out,
            local_space: IndexSpace::new(&dims),
            options,
        })
    }

    pub fn global(&self) -> &GraphModel {
        &self.global
    }

    pub fn global_transition(&self) -> &RealMatrix {
        self.global.transition().expect("global transition")
    }

    /// Normalized Laplacian of `H`; fails when `H` is not reversible.
    pub fn global_laplacian(&self) -> Result<&SymmetricOperator> {
        self.global_laplacian.as_ref().map_err(Clone::clone)
    }

    pub fn locals(&self) -> &[LocalGraph] {
        &self.locals
    }

    pub fn local(&self, j: usize) -> &LocalGraph {
        &self.locals[j]
    }

    pub fn options(&self) -> &ModelOptions {
        &self.options
    }

    pub fn convention(&self) -> Convention {
        self.options.convention
    }

    /// `d + 1`.
    pub fn global_dim(&self) -> usize {
        self.locals.len()
    }

    pub fn local_dims(&self) -> &[usize] {
        self.local_space.dims()
    }

    pub fn local_space(&self) -> &IndexSpace {
        &self.local_space
    }

    /// `Π_j n_j`.
    pub fn local_dim(&self) -> usize {
        self.local_space.len()
    }

    /// `(d + 1) · Π_j n_j`.
    pub fn dim(&self) -> usize {
        self.global_dim() * self.local_dim()
    }

    pub fn flatten(&self, y: usize, k: &[usize]) -> usize {
        y * self.local_dim() + self.local_space.flatten(k)
    }

    pub fn unflatten(&self, flat: usize) -> (usize, Vec<usize>) {
        let l = self.local_dim();
        (flat / l, self.local_space.unflatten(flat % l))
    }

    fn check_cap(&self) -> Result<()> {
        if self.dim() > self.options.cap {
            return Err(Error::DimensionCapExceeded {
                dim: self.dim(),
                cap: self.options.cap,
            });
        }
        Ok(())
    }

    /// `I ⊗ … ⊗ A ⊗ … ⊗ I` on the local tensor space, `A` in slot `j`.
    pub fn lift_local<T: Scalar>(&self, a: &Matrix<T>, j: usize) -> Result<Matrix<T>> {
        let dims = self.local_dims();
        if j >= dims.len() {
            return Err(Error::DimensionMismatch {
                expected: dims.len(),
                found: j,
            });
        }
        if !a.is_square() || a.rows() != dims[j] {
            return Err(Error::DimensionMismatch {
                expected: dims[j],
                found: a.rows(),
            });
        }
        let before: usize = dims[..j].iter().product();
        let after: usize = dims[j + 1..].iter().product();
        Ok(Matrix::identity(before).kron(a).kron(&Matrix::identity(after)))
    }

    /// Dense `Σ P_H[y][y′] |y⟩⟨y′| ⊗ lift(ops[s])`, `s` the selected vertex.
    fn assemble(&self, ops: &[RealMatrix]) -> Result<RealMatrix> {
        self.check_cap()?;
        let lifted = ops
            .iter()
            .enumerate()
            .map(|(j, a)| self.lift_local(a, j))
            .collect::<Result<Vec<_>>>()?;
        let ph = self.global_transition();
        let (g, l) = (self.global_dim(), self.local_dim());
        let mut out = RealMatrix::zeros(g * l, g * l);
        for y in 0..g {
            for y2 in 0..g {
                let w = ph[(y, y2)];
                if w == 0.0 {
                    continue;
                }
                let block = &lifted[self.selected(y, y2)];
                for a in 0..l {
                    for b in 0..l {
                        out[(y * l + a, y2 * l + b)] = w * block[(a, b)];
                    }
                }
            }
        }
        Ok(out)
    }

    fn selected(&self, y: usize, y2: usize) -> usize {
        match self.options.convention {
            Convention::Destination => y2,
            Convention::Source => y,
        }
    }

    /// Dense hDTRW transition matrix (below the dimension cap).
    pub fn build_hdtrw(&self) -> Result<RealMatrix> {
        let ops: Vec<RealMatrix> = self.locals.iter().map(|g| g.transition().clone()).collect();
        self.assemble(&ops)
    }

    /// `P_G x` without forming `P_G`.
    pub fn apply_hdtrw(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let (g, l) = (self.global_dim(), self.local_dim());
        let dims = self.local_dims();
        let ph = self.global_transition();
        let mut out = vec![0.0; x.len()];
        for y in 0..g {
            for y2 in 0..g {
                let w = ph[(y, y2)];
                if w == 0.0 {
                    continue;
                }
                let s = self.selected(y, y2);
                let (moved, _) = apply_on_axis(&x[y2 * l..(y2 + 1) * l], dims, s, self.locals[s].transition());
                for (o, m) in out[y * l..(y + 1) * l].iter_mut().zip(moved) {
                    *o += w * m;
                }
            }
        }
        Ok(out)
    }

    /// `(d+1) × (d+1)` block whose eigenpairs give those of `P_G` for one
    /// tuple of local transition eigenvalues.
    pub fn hdtrw_block(&self, lambda: &[f64]) -> RealMatrix {
        let ph = self.global_transition();
        let g = self.global_dim();
        match self.options.convention {
            Convention::Destination => RealMatrix::from_fn(g, g, |i, j| ph[(i, j)] * lambda[j]),
            Convention::Source => RealMatrix::from_fn(g, g, |i, j| lambda[i] * ph[(i, j)]),
        }
    }

    /// Eigenpairs of `P_G` assembled from per-tuple blocks.
    ///
    /// Tuples whose block is not diagonalizable are listed in `defective`;
    /// their genuine eigenvectors are still returned.
    pub fn hdtrw_eigenpairs(&self) -> Result<HdtrwSpectrum> {
        let mut pairs = Vec::new();
        let mut defective = Vec::new();
        for tuple in self.local_space.iter() {
            let lambda = self.tuple_transition_values(&tuple);
            let block = self.hdtrw_block(&lambda).to_complex();
            let eig = general_eigen(&block)?;
            if eig.defective {
                defective.push(tuple.clone());
            }
            for p in eig.pairs {
                pairs.push(HdtrwPair {
                    tuple: tuple.clone(),
                    value: p.value,
                    global: p.vector,
                });
            }
        }
        Ok(HdtrwSpectrum { pairs, defective })
    }

    /// Transition eigenvalues `(λ_{ℓ⁰}, …, λ_{ℓᵈ})` for a label tuple.
    pub fn tuple_transition_values(&self, tuple: &[usize]) -> Vec<f64> {
        tuple
            .iter()
            .zip(&self.locals)
            .map(|(&m, g)| g.spectrum.values()[m])
            .collect()
    }

    fn check_times(&self, t: &[f64]) -> Result<()> {
        if t.len() != self.global_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.global_dim(),
                found: t.len(),
            });
        }
        if let Some(&bad) = t.iter().find(|&&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::NegativeTime(bad));
        }
        Ok(())
    }

    /// Dense hCTRW matrix `Σ_j P_H|j⟩⟨j| ⊗ lift(exp{−t_j(I − P_{G_j})})`.
    pub fn build_hctrw(&self, t: &[f64]) -> Result<RealMatrix> {
        self.check_times(t)?;
        let ops: Vec<RealMatrix> = self
            .locals
            .iter()
            .zip(t)
            .map(|(g, &tj)| g.spectrum.reconstruct_with(|l| exp(-tj * (1.0 - l))))
            .collect();
        self.assemble(&ops)
    }

    /// `Λ^{1/2} (I − 𝓛_H) Λ^{1/2}` for a positive diagonal `Λ`.
    pub fn hctrw_core(&self, lambda: &[f64]) -> Result<RealMatrix> {
        let g = self.global_dim();
        if lambda.len() != g {
            return Err(Error::DimensionMismatch {
                expected: g,
                found: lambda.len(),
            });
        }
        if let Some((index, &value)) = lambda.iter().enumerate().find(|(_, &v)| v.is_nan() || v <= 0.0) {
            return Err(Error::NonpositiveDiagonal { index, value });
        }
        let l = self.global_laplacian()?.matrix();
        let s: Vec<f64> = lambda.iter().map(|&v| sqrt(v)).collect();
        Ok(RealMatrix::from_fn(g, g, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            s[i] * (id - l[(i, j)]) * s[j]
        }))
    }

    /// Left/right eigen-data of `P_G(t)` from the symmetric per-tuple cores.
    pub fn hctrw_spectral(&self, t: &[f64]) -> Result<DeformedSpectrum> {
        self.check_times(t)?;
        let pi_h = self
            .global
            .measure()
            .ok_or(Error::MissingMeasure)?
            .to_vec();
        let mut blocks = Vec::with_capacity(self.local_dim());
        for tuple in self.local_space.iter() {
            let lambda = hctrw_lambda(&self.tuple_transition_values(&tuple), t);
            let core = self.hctrw_core(&lambda)?;
            let eig = eigh(&core, GROUPING_TOL)?;
            // right = S_r v, left = vᵀ S_l with S_r S_l = I.
            let (sr, sl): (Vec<f64>, Vec<f64>) = match self.options.convention {
                Convention::Destination => lambda
                    .iter()
                    .zip(&pi_h)
                    .map(|(&a, &p)| (1.0 / sqrt(a * p), sqrt(a * p)))
                    .unzip(),
                Convention::Source => lambda
                    .iter()
                    .zip(&pi_h)
                    .map(|(&a, &p)| (sqrt(a / p), sqrt(p / a)))
                    .unzip(),
            };
            let right = eig
                .vectors()
                .iter()
                .map(|v| v.iter().zip(&sr).map(|(x, s)| x * s).collect())
                .collect();
            let left = eig
                .vectors()
                .iter()
                .map(|v| v.iter().zip(&sl).map(|(x, s)| x * s).collect())
                .collect();
            blocks.push(DeformedBlock {
                tuple,
                lambda,
                values: eig.values().to_vec(),
                right,
                left,
            });
        }
        Ok(DeformedSpectrum { blocks })
    }
}

/// `diag(exp{−t_j (1 − λ_j)})`, returned as its diagonal.
pub fn hctrw_lambda(lambda: &[f64], t: &[f64]) -> Vec<f64> {
    lambda
        .iter()
        .zip(t)
        .map(|(&l, &tj)| exp(-tj * (1.0 - l)))
        .collect()
}

/// One eigenpair of `P_G`: `w = u ⊗ (⊗_j D_j^{−1/2} v_{ℓ^j})`.
#[derive(Debug, Clone, PartialEq)]
pub struct HdtrwPair {
    pub tuple: Vec<usize>,
    pub value: Complex64,
    /// `u`, eigenvector of the tuple block.
    pub global: Vec<Complex64>,
}

impl HdtrwPair {
    pub fn vector(&self, model: &HierarchicalModel) -> Vec<Complex64> {
        let locals: Vec<Vec<Complex64>> = self
            .tuple
            .iter()
            .zip(model.locals())
            .map(|(&m, g)| g.spectrum().right(m).iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        let mut factors: Vec<&[Complex64]> = vec![&self.global];
        factors.extend(locals.iter().map(Vec::as_slice));
        kron_vectors(&factors)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HdtrwSpectrum {
    pub pairs: Vec<HdtrwPair>,
    pub defective: Vec<Vec<usize>>,
}

impl HdtrwSpectrum {
    /// The pairs, or `DefectiveBlock` naming the first defective tuple.
    pub fn into_complete(self) -> Result<Vec<HdtrwPair>> {
        match self.defective.into_iter().next() {
            Some(tuple) => Err(Error::DefectiveBlock(tuple)),
            None => Ok(self.pairs),
        }
    }
}

/// Per-tuple part of the deformed spectrum. Full vectors are the global
/// parts tensored with the local transition eigenvectors of `tuple`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformedBlock {
    pub tuple: Vec<usize>,
    /// Diagonal of `Λ_t` for this tuple.
    pub lambda: Vec<f64>,
    pub values: Vec<f64>,
    pub right: Vec<Vec<f64>>,
    pub left: Vec<Vec<f64>>,
}

impl DeformedBlock {
    /// `max |left_m · right_n − δ_mn|` on the global block.
    pub fn biorthogonality_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (m, l) in self.left.iter().enumerate() {
            for (n, r) in self.right.iter().enumerate() {
                let dot: f64 = l.iter().zip(r).map(|(a, b)| a * b).sum();
                let want = if m == n { 1.0 } else { 0.0 };
                d = d.max((dot - want).abs());
            }
        }
        d
    }

    /// `Σ_ℓ κ_ℓ right_ℓ left_ℓᵀ`.
    pub fn block_matrix(&self) -> RealMatrix {
        let g = self.values.len();
        RealMatrix::from_fn(g, g, |i, j| {
            (0..g).map(|l| self.values[l] * self.right[l][i] * self.left[l][j]).sum()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformedSpectrum {
    pub blocks: Vec<DeformedBlock>,
}

impl DeformedSpectrum {
    pub fn max_biorthogonality_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(DeformedBlock::biorthogonality_defect)
            .fold(0.0, f64::max)
    }

    /// `Σ_tuple Σ_ℓ κ · ṽ w̃ᵀ` as a dense matrix.
    pub fn reconstruct(&self, model: &HierarchicalModel) -> Result<RealMatrix> {
        model.check_cap()?;
        let (g, l) = (model.global_dim(), model.local_dim());
        let mut out = RealMatrix::zeros(g * l, g * l);
        for b in &self.blocks {
            let rights: Vec<&[f64]> = b
                .tuple
                .iter()
                .zip(model.locals())
                .map(|(&m, lg)| lg.spectrum().right(m))
                .collect();
            let lefts: Vec<&[f64]> = b
                .tuple
                .iter()
                .zip(model.locals())
                .map(|(&m, lg)| lg.spectrum().left(m))
                .collect();
            let r = kron_vectors(&rights);
            let lv = kron_vectors(&lefts);
            let bm = b.block_matrix();
            for y in 0..g {
                for y2 in 0..g {
                    let w = bm[(y, y2)];
                    if w == 0.0 {
                        continue;
                    }
                    for a in 0..l {
                        for c in 0..l {
                            out[(y * l + a, y2 * l + c)] += w * r[a] * lv[c];
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}
