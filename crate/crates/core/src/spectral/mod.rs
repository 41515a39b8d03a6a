//! Hermitian eigendecomposition, degeneracy grouping, transition spectra,
//! nonnegative spectral shifts and eigen-tuple enumeration.

mod general;

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;


pub use general::{general_eigen, GeneralEigen, GeneralEigenpair};

use crate::error::{Error, Result};
use crate::linalg::{sqrt, IndexSpace, Matrix, RealMatrix, Scalar};

/// Default absolute tolerance for grouping degenerate eigenvalues.
pub const GROUPING_TOL: f64 = 1e-9;
/// Inputs to [`eigh`] must satisfy `‖A − Aᴴ‖_max` below this.
pub const HERMITIAN_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
///
/// `vectors[m]` pairs with `values[m]`. `groups` partitions `0..dim` into
/// contiguous clusters of degenerate eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem<T> {
    values: Vec<f64>,
    vectors: Vec<Vec<T>>,
    groups: Vec<Range<usize>>,
    tol: f64,
}

impl<T: Scalar> EigenSystem<T> {
    /// Assembles a system from ascending values and matching vectors.
    ///
    /// Groups are recomputed with `tol`. Panics if the values are not sorted
    /// or lengths disagree.
    pub fn from_parts(values: Vec<f64>, vectors: Vec<Vec<T>>, tol: f64) -> Self {
        assert_eq!(values.len(), vectors.len());
        assert!(values.windows(2).all(|w| w[0] <= w[1]), "values must be ascending");
        let groups = group_sorted(&values, tol);
        Self {
            values,
            vectors,
            groups,
            tol,
        }
    }

    /// Same eigenvectors and grouping with eigenvalues multiplied by `c ≥ 0`.
    ///
    /// The grouping of `self` is kept even when scaling collapses distinct
    /// values (for example `c = 0`).
    pub fn scaled_keep_groups(&self, c: f64) -> Self {
        assert!(c >= 0.0);
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            vectors: self.vectors.clone(),
            groups: self.groups.clone(),
            tol: self.tol,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vector(&self, m: usize) -> &[T] {
        &self.vectors[m]
    }

    pub fn vectors(&self) -> &[Vec<T>] {
        &self.vectors
    }

    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }

    pub fn max_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Matrix whose columns are the eigenvectors.
    pub fn vector_matrix(&self) -> Matrix<T> {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, m| self.vectors[m][i])
    }

    /// `Σ_m λ_m v_m v_mᴴ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| {
            self.values
                .iter()
                .zip(&self.vectors)
                .fold(T::zero(), |acc, (&l, v)| acc + (v[i] * v[j].conj()).scale(l))
        })
    }

    /// `‖VᴴV − I‖_max`.
    pub fn orthonormality_defect(&self) -> f64 {
        let v = self.vector_matrix();
        v.adjoint().matmul(&v).max_abs_diff(&Matrix::identity(self.dim()))
    }

    pub fn to_complex(&self) -> EigenSystem<num_complex::Complex64> {
        EigenSystem {
            values: self.values.clone(),
            vectors: self
                .vectors
                .iter()
                .map(|v| v.iter().map(|x| x.to_complex()).collect())
                .collect(),
            groups: self.groups.clone(),
            tol: self.tol,
        }
    }

    /// Flips the phase of one eigenvector by `u` (`|u| = 1`). Used to probe
    /// phase invariance of downstream formulas.
    pub fn with_vector_phase(mut self, m: usize, u: T) -> Self {
        for x in &mut self.vectors[m] {
            *x = *x * u;
        }
        self
    }
}

fn group_sorted(values: &[f64], tol: f64) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > tol {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

/// Hermitian eigendecomposition by cyclic Jacobi rotations.
///
/// Values come back ascending; each vector's largest-modulus component is
/// made real and positive so output is deterministic.
pub fn eigh<T: Scalar>(a: &Matrix<T>, tol: f64) -> Result<EigenSystem<T>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            found: a.cols(),
        });
    }
    let defect = a.hermitian_defect();
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian(defect));
    }
    let n = a.rows();
    let mut m = Matrix::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()).scale(0.5));
    let mut v = Matrix::<T>::identity(n);
    let scale = m.max_abs().max(f64::MIN_POSITIVE);

    let mut converged = n <= 1;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                let x = m[(p, q)].modulus();
                off += x * x;
            }
        }
        if sqrt(off) <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut m, &mut v, p, q, scale);
            }
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].real().total_cmp(&m[(j, j)].real()));
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)].real()).collect();
    let vectors: Vec<Vec<T>> = order
        .iter()
        .map(|&c| normalize_phase(v.column(c)))
        .collect();
    Ok(EigenSystem::from_parts(values, vectors, tol))
}

/// One Jacobi rotation zeroing `m[(p, q)]`.
fn rotate<T: Scalar>(m: &mut Matrix<T>, v: &mut Matrix<T>, p: usize, q: usize, scale: f64) {
    let apq = m[(p, q)];
    let r = apq.modulus();
    if r <= 1e-18 * scale {
        return;
    }
    let ph = apq.phase();
    let ph_c = ph.conj();
    let alpha = m[(p, p)].real();
    let beta = m[(q, q)].real();
    let theta = (beta - alpha) / (2.0 * r);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        let s = if theta >= 0.0 { 1.0 } else { -1.0 };
        s / (theta.abs() + sqrt(theta * theta + 1.0))
    };
    let c = 1.0 / sqrt(t * t + 1.0);
    let s = t * c;
    // U = diag(1, conj(ph)) · [[c, s], [-s, c]]
    let u00 = T::from_real(c);
    let u01 = T::from_real(s);
    let u10 = ph_c.scale(-s);
    let u11 = ph_c.scale(c);
    let n = m.rows();
    for k in 0..n {
        let (akp, akq) = (m[(k, p)], m[(k, q)]);
        m[(k, p)] = akp * u00 + akq * u10;
        m[(k, q)] = akp * u01 + akq * u11;
    }
    for k in 0..n {
        let (apk, aqk) = (m[(p, k)], m[(q, k)]);
        m[(p, k)] = u00.conj() * apk + u10.conj() * aqk;
        m[(q, k)] = u01.conj() * apk + u11.conj() * aqk;
    }
    m[(p, q)] = T::zero();
    m[(q, p)] = T::zero();
    m[(p, p)] = T::from_real(alpha - t * r);
    m[(q, q)] = T::from_real(beta + t * r);
    for k in 0..n {
        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
        v[(k, p)] = vkp * u00 + vkq * u10;
        v[(k, q)] = vkp * u01 + vkq * u11;
    }
}

fn normalize_phase<T: Scalar>(mut x: Vec<T>) -> Vec<T> {
    let max = x.iter().fold(0.0_f64, |m, z| m.max(z.modulus()));
    if max == 0.0 {
        return x;
    }
    let pivot = x
        .iter()
        .position(|z| z.modulus() >= max * (1.0 - 1e-10))
        .unwrap_or(0);
    let u = x[pivot].phase().conj();
    let norm = crate::linalg::norm2(&x);
    for z in &mut x {
        *z = (*z * u).scale(1.0 / norm);
    }
    x
}

/// Eigen-data of a reversible `P` obtained from its normalized Laplacian:
/// `P = Σ_m λ_m right_m left_mᵀ` with `λ = 1 − μ`, `right = D^{−1/2} v`,
/// `left = vᵀ D^{1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSpectrum {
    values: Vec<f64>,
    right: Vec<Vec<f64>>,
    left: Vec<Vec<f64>>,
}

impl TransitionSpectrum {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn right(&self, m: usize) -> &[f64] {
        &self.right[m]
    }

    pub fn left(&self, m: usize) -> &[f64] {
        &self.left[m]
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `Σ_m λ_m right_m left_mᵀ`.
    pub fn reconstruct(&self) -> RealMatrix {
        self.reconstruct_with(|l| l)
    }

    /// `Σ_m f(λ_m) right_m left_mᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> RealMatrix {
        let n = self.dim();
        let mut out = RealMatrix::zeros(n, n);
        for m in 0..n {
            let w = f(self.values[m]);
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += w * self.right[m][i] * self.left[m][j];
                }
            }
        }
        out
    }

    /// `max |left_m · right_n − δ_mn|`.
    pub fn biorthogonality_defect(&self) -> f64 {
        let n = self.dim();
        let mut d: f64 = 0.0;
        for m in 0..n {
            for k in 0..n {
                let dot: f64 = self.left[m].iter().zip(&self.right[k]).map(|(a, b)| a * b).sum();
                let want = if m == k { 1.0 } else { 0.0 };
                d = d.max((dot - want).abs());
            }
        }
        d
    }
}

pub fn transition_spectrum(laplacian: &EigenSystem<f64>, pi: &[f64]) -> Result<TransitionSpectrum> {
    let n = laplacian.dim();
    if pi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: pi.len(),
        });
    }
    let sq: Vec<f64> = pi.iter().map(|&p| sqrt(p)).collect();
    let values = laplacian.values().iter().map(|mu| 1.0 - mu).collect();
    let right = laplacian
        .vectors()
        .iter()
        .map(|v| v.iter().zip(&sq).map(|(x, s)| x / s).collect())
        .collect();
    let left = laplacian
        .vectors()
        .iter()
        .map(|v| v.iter().zip(&sq).map(|(x, s)| x * s).collect())
        .collect();
    Ok(TransitionSpectrum {
        values,
        right,
        left,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftMode {
    /// `H − λ_min I`.
    MinShift,
    /// `λ_max I − H`.
    MaxReflect,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralShift {
    pub offset: f64,
    pub mode: ShiftMode,
}

/// Moves a spectrum onto `[0, ∞)` without touching eigenvectors.
pub fn shift_to_nonnegative<T: Scalar>(
    system: &EigenSystem<T>,
    mode: ShiftMode,
) -> (EigenSystem<T>, SpectralShift) {
    match mode {
        ShiftMode::MinShift => {
            let offset = system.min_value();
            let values = system.values().iter().map(|v| v - offset).collect();
            (
                EigenSystem::from_parts(values, system.vectors.clone(), system.tol),
                SpectralShift { offset, mode },
            )
        }
        ShiftMode::MaxReflect => {
            let offset = system.max_value();
            let values = system.values().iter().rev().map(|v| offset - v).collect();
            let vectors = system.vectors.iter().rev().cloned().collect();
            (
                EigenSystem::from_parts(values, vectors, system.tol),
                SpectralShift { offset, mode },
            )
        }
    }
}

/// One eigen-label per system: indices, eigenvalues and eigenvectors.
#[derive(Debug, Clone)]
pub struct TupleEntry<'a, T> {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub vectors: Vec<&'a [T]>,
}

/// Every label tuple `(ℓ⁰, …, ℓᵈ)` exactly once, lexicographic, last system fastest.
pub fn tuple_iterator<'a, T: Scalar>(
    systems: &'a [EigenSystem<T>],
) -> impl Iterator<Item = TupleEntry<'a, T>> + 'a {
    let dims: Vec<usize> = systems.iter().map(EigenSystem::dim).collect();
    let space = IndexSpace::new(&dims);
    let all: Vec<Vec<usize>> = if systems.is_empty() {
        vec![]
    } else {
        space.iter().collect()
    };
    all.into_iter().map(move |indices| TupleEntry {
        values: indices
            .iter()
            .zip(systems)
            .map(|(&l, s)| s.values()[l])
            .collect(),
        vectors: indices
            .iter()
            .zip(systems)
            .map(|(&l, s)| s.vector(l))
            .collect(),
        indices,
    })
}
