use nalgebra::{DMatrix, DVector};

use super::Projection;
use crate::error::{Error, Result};
use crate::linalg::{complement_basis, rank};

/// Relative pivot threshold `|p_j^T q_j| / (‖p_j‖ ‖q_j‖)` below which the
/// process is declared broken down.
pub const BREAKDOWN_TOL: f64 = 1e-12;

/// Biconjugation of two equally sized bases.
///
/// Produces `p_i`, `q_i` with `p_i^T q_j = 0` for `i ≠ j`, `span{p} = span{u}`
/// and `span{q} = span{v}`; the projection is `P = [p_1 ... p_k]` with left
/// inverse `P† = D^{-1} Q^T`, `D = diag(p_i^T q_i)`. Each vector is
/// conjugated twice against its predecessors to hold biorthogonality at
/// working precision.
pub fn biconjugate(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<Projection> {
    let (n, k) = (u.nrows(), u.ncols());
    if v.shape() != (n, k) {
        return Err(Error::dim("biconjugation bases", format!("{n}x{k}"), format!("{}x{}", v.nrows(), v.ncols())));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("{k} vectors cannot be independent in dimension {n}")));
    }
    if k > 0 && (rank(u, 1e-12) < k || rank(v, 1e-12) < k) {
        return Err(Error::InvalidArgument("biconjugation bases must have full column rank".into()));
    }
    let mut ps: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut qs: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut d = DVector::<f64>::zeros(k);
    for i in 0..k {
        let mut p = u.column(i).into_owned();
        let mut q = v.column(i).into_owned();
        for _ in 0..2 {
            for j in 0..i {
                let cp = p.dot(&qs[j]) / d[j];
                p.axpy(-cp, &ps[j], 1.0);
                let cq = ps[j].dot(&q) / d[j];
                q.axpy(-cq, &qs[j], 1.0);
            }
        }
        let pivot = p.dot(&q);
        let scale = p.norm() * q.norm();
        if pivot.is_nan() || pivot.abs() < BREAKDOWN_TOL * scale || scale == 0.0 {
            return Err(Error::Breakdown {
                index: i,
                pivot: pivot.abs(),
            });
        }
        d[i] = pivot;
        ps.push(p);
        qs.push(q);
    }
    let p = crate::linalg::hstack(n, &ps);
    let q = crate::linalg::hstack(n, &qs);
    let mut pdag = q.transpose();
    for (i, mut row) in pdag.row_iter_mut().enumerate() {
        row /= d[i];
    }
    let pbar = complement_basis(&q);
    let pbar_dag = pbar.transpose() * (DMatrix::identity(n, n) - &p * &pdag);
    Ok(Projection {
        p,
        pdag,
        q,
        d,
        pbar,
        pbar_dag,
    })
}
