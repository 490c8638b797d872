//! Dense linear-algebra helpers shared by every module.

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};

const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if !a.is_square() {
        return Err(Error::dim("eigenvalues", "square matrix", format!("{}x{}", a.nrows(), a.ncols())));
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    if !all_finite(a) {
        return Err(Error::Numerical("non-finite entries in eigenvalue problem".into()));
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(Error::NoConvergence {
        solver: "Schur decomposition",
        iterations: SCHUR_MAX_ITER,
    })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest eigenvalue modulus. Zero for the empty matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Largest singular value (induced 2-norm); zero for empty matrices.
pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().max()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Numerical rank: singular values above `rel_tol * sigma_max`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Columns of the identity selected by zero-based `indices` (the selector `e_J`).
pub fn selector(n: usize, indices: &[usize]) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(n, indices.len());
    for (col, &i) in indices.iter().enumerate() {
        e[(i, col)] = 1.0;
    }
    e
}

pub fn hstack(n: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

pub fn columns(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

/// Appends `candidate` to the orthonormal list `basis` unless its residual after
/// projection onto the current span is below `rel_tol` of its norm.
///
/// Uses two passes of modified Gram-Schmidt.
pub fn push_orthonormal(basis: &mut Vec<DVector<f64>>, candidate: &DVector<f64>, rel_tol: f64) -> bool {
    let norm0 = candidate.norm();
    if norm0 == 0.0 || !norm0.is_finite() {
        return false;
    }
    let mut r = candidate / norm0;
    for _ in 0..2 {
        for q in basis.iter() {
            let h = q.dot(&r);
            r.axpy(-h, q, 1.0);
        }
    }
    let res = r.norm();
    if res < rel_tol {
        return false;
    }
    basis.push(r / res);
    true
}

/// Orthonormal basis of the column span of `m` (deduplicated at `rel_tol`).
pub fn orthonormal_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let mut basis = Vec::new();
    for c in m.column_iter() {
        push_orthonormal(&mut basis, &c.into_owned(), rel_tol);
    }
    hstack(m.nrows(), &basis)
}

/// Orthonormal basis of the orthogonal complement of the column span of `q`.
pub fn complement_basis(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let qo = orthonormal_basis(q, 1e-12);
    let k = qo.ncols();
    if k == n {
        return DMatrix::zeros(n, 0);
    }
    let proj = DMatrix::identity(n, n) - &qo * qo.transpose();
    let eig = proj.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let cols: Vec<DVector<f64>> = order[..n - k]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    // re-orthonormalize against qo to clean rounding
    let mut basis: Vec<DVector<f64>> = columns(&qo);
    let start = basis.len();
    for c in &cols {
        push_orthonormal(&mut basis, c, 1e-8);
    }
    hstack(n, &basis[start..])
}

/// Solves `m x = rhs` by LU, reporting singular systems as numerical failures.
pub fn solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .lu()
        .solve(rhs)
        .filter(all_finite)
        .ok_or_else(|| Error::Numerical(format!("singular system in {context}")))
}

pub fn inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    solve(m, &DMatrix::identity(m.nrows(), m.ncols()), context)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}
