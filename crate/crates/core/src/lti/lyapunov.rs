use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, symmetrize};

const DOUBLING_TOL: f64 = 1e-14;
const MAX_DOUBLINGS: usize = 200;
const REFINEMENT_STEPS: usize = 2;

/// Solves `Â^T Q Â + I = Q` for a Schur-stable `Â`.
pub fn solve_dlyap(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    solve_dlyap_with(a, &DMatrix::identity(n, n))
}

/// Solves `A^T X A + W = X` by the doubling iteration
/// `A_{k+1} = A_k^2`, `X_{k+1} = A_k^T X_k A_k + X_k`, followed by residual
/// correction sweeps through the same iteration.
pub fn solve_dlyap_with(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || w.shape() != (n, n) {
        return Err(Error::dim("Lyapunov equation", format!("{n}x{n}"), format!("{:?} / {:?}", a.shape(), w.shape())));
    }
    let radius = spectral_radius(a)?;
    if radius >= 1.0 {
        return Err(Error::Unstable { radius });
    }
    let mut x = doubling(a, w)?;
    for _ in 0..REFINEMENT_STEPS {
        let residual = a.transpose() * &x * a + w - &x;
        if residual.norm() <= 1e-15 * x.norm().max(1e-300) {
            break;
        }
        x += doubling(a, &residual)?;
    }
    Ok(symmetrize(&x))
}

fn doubling(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut ak = a.clone();
    let mut x = w.clone();
    for _ in 0..MAX_DOUBLINGS {
        let inc = ak.transpose() * &x * &ak;
        let inc_norm = inc.norm();
        x += inc;
        if !inc_norm.is_finite() {
            return Err(Error::Numerical("Lyapunov doubling overflowed".into()));
        }
        if inc_norm <= DOUBLING_TOL * x.norm() || inc_norm == 0.0 {
            return Ok(x);
        }
        ak = &ak * &ak;
    }
    Err(Error::NoConvergence {
        solver: "Lyapunov doubling",
        iterations: MAX_DOUBLINGS,
    })
}
