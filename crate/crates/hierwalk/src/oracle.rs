//! Brute-force reference implementations.
//!
//! Nothing here calls the spectral or walk code of `hierwalk-core`: operators
//! are assembled entry by entry, exponentials come from a Taylor series or
//! from nalgebra's Hermitian eigensolver, and distributions are summed
//! directly. Agreement with the core crate is therefore a real check.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

/// Largest `‖M‖_max` accepted by [`matrix_exp`].
pub const EXP_NORM_CAP: f64 = 1e3;
const TAYLOR_TERMS: usize = 18;
const GROUP_TOL: f64 = 1e-9;
/// Eigenvalues of a nonnegative Hamiltonian at or below this are taken as zero.
const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("matrix norm {0} is too large for the series exponential")]
    Overflow(f64),
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("dense dimension {dim} exceeds cap {cap}")]
    DimensionCapExceeded { dim: usize, cap: usize },
    #[error("matrix is not square")]
    NotSquare,
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// `exp(M)`. With `hermitian_hint` the input is diagonalized instead of
/// summed as a series.
pub fn matrix_exp(m: &CMat, hermitian_hint: bool) -> Result<CMat> {
    if !m.is_square() {
        return Err(OracleError::NotSquare);
    }
    let big = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if big.is_nan() || big > EXP_NORM_CAP {
        return Err(OracleError::Overflow(big));
    }
    if hermitian_hint {
        let eig = SymmetricEigen::new(m.clone());
        let d = CMat::from_diagonal(&eig.eigenvalues.map(|l| Complex64::new(l.exp(), 0.0)));
        return Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint());
    }
    let n = m.nrows();
    let norm1 = (0..n)
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut k = 0;
    while norm1 / 2f64.powi(k) > 0.5 {
        k += 1;
    }
    let a = m / Complex64::new(2f64.powi(k), 0.0);
    let mut term = CMat::identity(n, n);
    let mut sum = term.clone();
    for i in 1..=TAYLOR_TERMS {
        term = &term * &a / Complex64::new(i as f64, 0.0);
        sum += &term;
    }
    for _ in 0..k {
        sum = &sum * &sum;
    }
    Ok(sum)
}

/// `exp(itH)` by the series path.
pub fn unitary(h: &CMat, t: f64) -> Result<CMat> {
    matrix_exp(&(h * Complex64::new(0.0, t)), false)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Dense copy of a row-major `rows × cols` buffer.
pub fn from_row_major<T: nalgebra::Scalar + Copy>(rows: usize, cols: usize, data: &[T]) -> DMatrix<T> {
    DMatrix::from_row_slice(rows, cols, data)
}

fn multi_index(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for (o, &d) in out.iter_mut().zip(dims).rev() {
        *o = flat % d;
        flat /= d;
    }
    out
}

/// Hierarchical operator `Σ P_H[y][y′] |y⟩⟨y′| ⊗ (ops[s] on register s)`,
/// entry by entry. `s = y′` unless `source`, then `s = y`.
pub fn hierarchical_loop(global_p: &RMat, ops: &[RMat], source: bool) -> RMat {
    let g = global_p.nrows();
    let dims: Vec<usize> = ops.iter().map(|o| o.nrows()).collect();
    let l: usize = dims.iter().product();
    let mut out = RMat::zeros(g * l, g * l);
    for y in 0..g {
        for a in 0..l {
            let k = multi_index(a, &dims);
            for y2 in 0..g {
                let s = if source { y } else { y2 };
                for b in 0..l {
                    let k2 = multi_index(b, &dims);
                    let others_fixed = (0..dims.len()).all(|j| j == s || k[j] == k2[j]);
                    if others_fixed {
                        out[(y * l + a, y2 * l + b)] = global_p[(y, y2)] * ops[s][(k[s], k2[s])];
                    }
                }
            }
        }
    }
    out
}

/// `P_G(t)` with each semigroup from the series exponential of `−t_j(I − P_j)`.
pub fn hctrw_loop(global_p: &RMat, local_p: &[RMat], t: &[f64], source: bool) -> Result<RMat> {
    let ops = local_p
        .iter()
        .zip(t)
        .map(|(p, &tj)| {
            let n = p.nrows();
            let gen = (RMat::identity(n, n) - p) * (-tj);
            matrix_exp(&to_complex(&gen), false).map(|e| e.map(|z| z.re))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hierarchical_loop(global_p, &ops, source))
}

/// Principal square root of a nonnegative Hermitian matrix.
pub fn sqrt_psd(h: &CMat) -> CMat {
    let eig = SymmetricEigen::new(h.clone());
    let d = CMat::from_diagonal(&eig.eigenvalues.map(|l| Complex64::new(if l <= ZERO_TOL { 0.0 } else { l.sqrt() }, 0.0)));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// `𝓗_G` entry by entry: block `(y, y′)` is `𝓗_H[y][y′]` times the product of
/// `√𝓗_{G_y}` on register `y` and `√𝓗_{G_{y′}}` on register `y′`.
pub fn dense_hamiltonian(global_h: &CMat, local_h: &[CMat], cap: usize) -> Result<CMat> {
    let g = global_h.nrows();
    let dims: Vec<usize> = local_h.iter().map(|h| h.nrows()).collect();
    let l: usize = dims.iter().product();
    if g * l > cap {
        return Err(OracleError::DimensionCapExceeded { dim: g * l, cap });
    }
    let roots: Vec<CMat> = local_h.iter().map(sqrt_psd).collect();
    let mut out = CMat::zeros(g * l, g * l);
    for y in 0..g {
        for y2 in 0..g {
            let h = global_h[(y, y2)];
            if h == Complex64::new(0.0, 0.0) {
                continue;
            }
            for a in 0..l {
                let k = multi_index(a, &dims);
                for b in 0..l {
                    let k2 = multi_index(b, &dims);
                    let mut v = h;
                    for j in 0..dims.len() {
                        let f = if j == y && j == y2 {
                            local_h[j][(k[j], k2[j])]
                        } else if j == y || j == y2 {
                            roots[j][(k[j], k2[j])]
                        } else if k[j] == k2[j] {
                            Complex64::new(1.0, 0.0)
                        } else {
                            Complex64::new(0.0, 0.0)
                        };
                        v *= f;
                    }
                    out[(y * l + a, y2 * l + b)] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Ascending eigenvalues with eigenvectors as columns.
fn sorted_eigen(h: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(h.nrows(), h.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn group_starts(values: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > GROUP_TOL {
            out.push(start..i);
            start = i;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// Sum over the global eigen-labels of each tuple block.
    Label,
    /// Marginal of the position law over the global register.
    Vertex,
}

/// Joint law of local positions by direct summation.
///
/// `Label` uses the same label alignment as the library: inside each
/// degenerate group the first label carries the whole projection of `ψ_H`,
/// and a block `c·𝓗_H` keeps the grouping of `𝓗_H`.
pub fn dense_joint_distribution(
    global_h: &CMat,
    local_h: &[CMat],
    t: f64,
    psi_h: &[Complex64],
    psi_locals: &[Vec<Complex64>],
    basis: Basis,
    cap: usize,
) -> Result<Vec<f64>> {
    let g = global_h.nrows();
    let dims: Vec<usize> = local_h.iter().map(|h| h.nrows()).collect();
    let l: usize = dims.iter().product();
    if g * l > cap {
        return Err(OracleError::DimensionCapExceeded { dim: g * l, cap });
    }
    match basis {
        Basis::Vertex => {
            let hg = dense_hamiltonian(global_h, local_h, cap)?;
            let u = unitary(&hg, t)?;
            let mut psi = psi_h.to_vec();
            for p in psi_locals {
                psi = psi.iter().flat_map(|a| p.iter().map(move |b| a * b)).collect();
            }
            let out = &u * nalgebra::DVector::from_vec(psi);
            let mut probs = vec![0.0; l];
            for (i, z) in out.iter().enumerate() {
                probs[i % l] += z.norm_sqr();
            }
            Ok(probs)
        }
        Basis::Label => {
            let locals: Vec<(Vec<f64>, CMat)> = local_h.iter().map(sorted_eigen).collect();
            let (gvals, gvecs) = sorted_eigen(global_h);
            // coefficient c_j[k][m] = ⟨k|v_m⟩⟨v_m|ψ_j⟩
            let coef: Vec<Vec<Vec<Complex64>>> = locals
                .iter()
                .zip(psi_locals)
                .map(|((_, v), psi)| {
                    let n = v.nrows();
                    (0..n)
                        .map(|k| {
                            (0..n)
                                .map(|m| {
                                    let ov: Complex64 = (0..n).map(|i| v[(i, m)].conj() * psi[i]).sum();
                                    v[(k, m)] * ov
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            // β[m][ℓ] for every tuple m.
            let mut beta: Vec<Vec<Complex64>> = Vec::with_capacity(l);
            for mflat in 0..l {
                let m = multi_index(mflat, &dims);
                let lam: Vec<f64> = m.iter().zip(&locals).map(|(&mi, (v, _))| if v[mi] <= ZERO_TOL { 0.0 } else { v[mi] }).collect();
                let lo = lam.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = lam.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let (vals, vecs, groups) = if hi - lo <= GROUP_TOL {
                    let c = lam.iter().sum::<f64>() / g as f64;
                    (gvals.iter().map(|v| v * c).collect::<Vec<_>>(), gvecs.clone(), group_starts(&gvals))
                } else {
                    let s: Vec<f64> = lam.iter().map(|x| x.sqrt()).collect();
                    let block = CMat::from_fn(g, g, |i, j| global_h[(i, j)] * s[i] * s[j]);
                    let (v, w) = sorted_eigen(&block);
                    let gr = group_starts(&v);
                    (v, w, gr)
                };
                let mut b = vec![Complex64::new(0.0, 0.0); g];
                for grp in groups {
                    let mut weight = 0.0;
                    for lab in grp.clone() {
                        let ov: Complex64 = (0..g).map(|i| vecs[(i, lab)].conj() * psi_h[i]).sum();
                        weight += ov.norm_sqr();
                    }
                    let phase = Complex64::new(0.0, t * vals[grp.start]).exp();
                    b[grp.start] = phase * weight.sqrt();
                }
                beta.push(b);
            }
            let mut probs = vec![0.0; l];
            for (kflat, p) in probs.iter_mut().enumerate() {
                let k = multi_index(kflat, &dims);
                for lab in 0..g {
                    let mut amp = Complex64::new(0.0, 0.0);
                    for (mflat, b) in beta.iter().enumerate() {
                        if b[lab] == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        let m = multi_index(mflat, &dims);
                        let mut prod = b[lab];
                        for j in 0..dims.len() {
                            prod *= coef[j][k[j]][m[j]];
                        }
                        amp += prod;
                    }
                    *p += amp.norm_sqr();
                }
            }
            Ok(probs)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub max_abs_diff: f64,
    /// Multi-index of the worst entry.
    pub location: Vec<usize>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Entrywise comparison of two tensors stored row-major with shape `shape`.
pub fn compare<T: Copy + Into<Complex64>>(a: &[T], b: &[T], shape: &[usize], tol: f64) -> Result<ComparisonReport> {
    let len: usize = shape.iter().product();
    if a.len() != len || b.len() != len {
        return Err(OracleError::ShapeMismatch {
            left: vec![a.len()],
            right: vec![b.len()],
        });
    }
    let mut worst = (0.0, 0);
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        let d = (x.into() - y.into()).norm();
        if d > worst.0 || d.is_nan() {
            worst = (d, i);
        }
    }
    Ok(ComparisonReport {
        max_abs_diff: worst.0,
        location: multi_index(worst.1, shape),
        tolerance: tol,
        pass: worst.0 <= tol,
    })
}

/// [`compare`] for two matrices.
pub fn compare_matrices<T>(a: &DMatrix<T>, b: &DMatrix<T>, tol: f64) -> Result<ComparisonReport>
where
    T: nalgebra::Scalar + Copy + Into<Complex64>,
{
    if a.shape() != b.shape() {
        return Err(OracleError::ShapeMismatch {
            left: vec![a.nrows(), a.ncols()],
            right: vec![b.nrows(), b.ncols()],
        });
    }
    let ra: Vec<T> = a.transpose().iter().copied().collect();
    let rb: Vec<T> = b.transpose().iter().copied().collect();
    compare(&ra, &rb, &[a.nrows(), a.ncols()], tol)
}
