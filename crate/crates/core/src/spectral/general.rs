//! Eigenpairs of small general (non-Hermitian) complex matrices.
//!
//! Eigenvalues come from a shifted QR iteration on the Hessenberg form.
//! Eigenvectors come from the null space of `A − λI`, found with a
//! column-pivoted QR; a cluster whose null space is smaller than its
//! multiplicity marks the matrix as defective.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{inner, norm2, sqrt, ComplexMatrix, Scalar};

/// Eigenvalues closer than this (times `max(1, ‖A‖_max)`) form one cluster.
pub const CLUSTER_TOL: f64 = 1e-6;
/// Pivots below this (times `max(1, ‖A‖_max)`) count as rank deficiency.
pub const RANK_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralEigenpair {
    pub value: Complex64,
    pub vector: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralEigen {
    /// Unit-norm eigenpairs. Complete only when `defective` is false.
    pub pairs: Vec<GeneralEigenpair>,
    pub defective: bool,
}

pub fn general_eigen(a: &ComplexMatrix) -> Result<GeneralEigen> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            found: a.cols(),
        });
    }
    let n = a.rows();
    let scale = a.max_abs().max(1.0);
    let values = eigenvalues(a)?;

    let mut clusters: Vec<(Complex64, usize)> = Vec::new();
    for v in values {
        match clusters
            .iter_mut()
            .find(|(c, _)| (*c - v).norm() <= CLUSTER_TOL * scale)
        {
            Some((c, m)) => {
                *c = (*c * (*m as f64) + v) / (*m as f64 + 1.0);
                *m += 1;
            }
            None => clusters.push((v, 1)),
        }
    }

    let mut pairs = Vec::with_capacity(n);
    let mut defective = false;
    for (value, mult) in clusters {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] -= value;
        }
        let null = null_space(&shifted, RANK_TOL * scale);
        if null.len() < mult {
            defective = true;
        }
        for vector in null.into_iter().take(mult) {
            pairs.push(GeneralEigenpair { value, vector });
        }
    }
    Ok(GeneralEigen { pairs, defective })
}

/// Eigenvalues of a square complex matrix (with multiplicity).
pub fn eigenvalues(a: &ComplexMatrix) -> Result<Vec<Complex64>> {
    let n = a.rows();
    if n == 0 {
        return Ok(vec![]);
    }
    let mut h = hessenberg(a);
    let norm = h.max_abs().max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(n);
    let mut hi = n - 1;
    let mut its = 0;
    loop {
        if hi == 0 {
            out.push(h[(0, 0)]);
            break;
        }
        let mut l = hi;
        while l > 0 {
            let s = h[(l, l)].norm() + h[(l - 1, l - 1)].norm();
            let s = if s == 0.0 { norm } else { s };
            if h[(l, l - 1)].norm() <= f64::EPSILON * s {
                h[(l, l - 1)] = Complex64::new(0.0, 0.0);
                break;
            }
            l -= 1;
        }
        if l == hi {
            out.push(h[(hi, hi)]);
            hi -= 1;
            its = 0;
            continue;
        }
        its += 1;
        if its > 100 * n {
            return Err(Error::ConvergenceFailure);
        }
        let mu = if its % 11 == 10 {
            // exceptional shift
            h[(hi, hi)] + Complex64::new(0.75 * h[(hi, hi - 1)].norm(), 0.0)
        } else {
            wilkinson_shift(&h, hi)
        };
        qr_step(&mut h, l, hi, mu);
    }
    Ok(out)
}

fn wilkinson_shift(h: &ComplexMatrix, hi: usize) -> Complex64 {
    let a = h[(hi - 1, hi - 1)];
    let b = h[(hi - 1, hi)];
    let c = h[(hi, hi - 1)];
    let d = h[(hi, hi)];
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let m1 = (a + d) * 0.5 + disc;
    let m2 = (a + d) * 0.5 - disc;
    if (m1 - d).norm() <= (m2 - d).norm() {
        m1
    } else {
        m2
    }
}

/// One shifted QR sweep on the unreduced block `l..=hi`.
fn qr_step(h: &mut ComplexMatrix, l: usize, hi: usize, mu: Complex64) {
    for k in l..=hi {
        h[(k, k)] -= mu;
    }
    let mut rots = Vec::with_capacity(hi - l);
    for k in l..hi {
        let (c, s) = givens(h[(k, k)], h[(k + 1, k)]);
        for j in k..=hi {
            let (x, y) = (h[(k, j)], h[(k + 1, j)]);
            h[(k, j)] = x * c + s * y;
            h[(k + 1, j)] = -s.conj() * x + y * c;
        }
        rots.push((c, s));
    }
    for (off, &(c, s)) in rots.iter().enumerate() {
        let k = l + off;
        for i in l..=(k + 2).min(hi) {
            let (x, y) = (h[(i, k)], h[(i, k + 1)]);
            h[(i, k)] = x * c + y * s.conj();
            h[(i, k + 1)] = -x * s + y * c;
        }
    }
    for k in l..=hi {
        h[(k, k)] += mu;
    }
}

/// `(c, s)` with `[[c, s], [-s̄, c]] · [x, y]ᵀ = [r, 0]ᵀ`, `c` real.
fn givens(x: Complex64, y: Complex64) -> (f64, Complex64) {
    let ax = x.norm();
    let r = sqrt(ax * ax + y.norm_sqr());
    if r == 0.0 {
        return (1.0, Complex64::new(0.0, 0.0));
    }
    if ax == 0.0 {
        return (0.0, Complex64::new(1.0, 0.0));
    }
    (ax / r, (x / ax) * y.conj() / r)
}

fn hessenberg(a: &ComplexMatrix) -> ComplexMatrix {
    let n = a.rows();
    let mut h = a.clone();
    for k in 0..n.saturating_sub(2) {
        let x: Vec<Complex64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let Some(v) = householder_vector(&x) else {
            continue;
        };
        // H ← (I − 2vvᴴ) H on rows k+1..n
        for j in 0..n {
            let dot = (0..v.len()).fold(Complex64::new(0.0, 0.0), |acc, i| {
                acc + v[i].conj() * h[(k + 1 + i, j)]
            });
            for i in 0..v.len() {
                h[(k + 1 + i, j)] -= v[i] * dot * 2.0;
            }
        }
        // H ← H (I − 2vvᴴ) on columns k+1..n
        for i in 0..n {
            let dot = (0..v.len()).fold(Complex64::new(0.0, 0.0), |acc, j| {
                acc + h[(i, k + 1 + j)] * v[j]
            });
            for j in 0..v.len() {
                h[(i, k + 1 + j)] -= dot * v[j].conj() * 2.0;
            }
        }
    }
    h
}

/// Unit `v` with `(I − 2vvᴴ) x ∝ e₁`, or `None` when `x` is already there.
fn householder_vector(x: &[Complex64]) -> Option<Vec<Complex64>> {
    let norm = norm2(x);
    let tail: f64 = x[1..].iter().map(|z| z.norm_sqr()).sum();
    if norm == 0.0 || tail == 0.0 {
        return None;
    }
    let alpha = -x[0].phase() * norm;
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vn = norm2(&v);
    for z in &mut v {
        *z /= vn;
    }
    Some(v)
}

/// Orthonormal basis of `{x : Bx ≈ 0}` via column-pivoted Householder QR.
fn null_space(b: &ComplexMatrix, rank_tol: f64) -> Vec<Vec<Complex64>> {
    let n = b.cols();
    let rows = b.rows();
    let mut r = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    for k in 0..n.min(rows) {
        let col_norm = |r: &ComplexMatrix, j: usize| -> f64 {
            sqrt((k..rows).map(|i| r[(i, j)].norm_sqr()).sum())
        };
        let (best, best_norm) = (k..n)
            .map(|j| (j, col_norm(&r, j)))
            .fold((k, -1.0), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
        if best_norm <= rank_tol {
            break;
        }
        if best != k {
            for i in 0..rows {
                let tmp = r[(i, k)];
                r[(i, k)] = r[(i, best)];
                r[(i, best)] = tmp;
            }
            perm.swap(k, best);
        }
        let x: Vec<Complex64> = (k..rows).map(|i| r[(i, k)]).collect();
        if let Some(v) = householder_vector(&x) {
            for j in k..n {
                let dot = (0..v.len())
                    .fold(Complex64::new(0.0, 0.0), |acc, i| acc + v[i].conj() * r[(k + i, j)]);
                for i in 0..v.len() {
                    r[(k + i, j)] -= v[i] * dot * 2.0;
                }
            }
        }
        rank = k + 1;
    }

    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    for free in rank..n {
        // Solve R11 y1 = −R12 e_free, y2 = e_free.
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        y[free] = Complex64::new(1.0, 0.0);
        for i in (0..rank).rev() {
            let mut s = -r[(i, free)];
            for j in i + 1..rank {
                s -= r[(i, j)] * y[j];
            }
            y[i] = s / r[(i, i)];
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for (j, &p) in perm.iter().enumerate() {
            x[p] = y[j];
        }
        // Two passes of modified Gram–Schmidt.
        for _ in 0..2 {
            for q in &basis {
                let c = inner(q, &x);
                for (xi, qi) in x.iter_mut().zip(q) {
                    *xi -= c * qi;
                }
            }
        }
        let nx = norm2(&x);
        if nx > 0.0 {
            for z in &mut x {
                *z /= nx;
            }
            basis.push(x);
        }
    }
    basis
}
