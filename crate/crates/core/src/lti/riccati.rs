use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, inverse, lambda_min_sym, solve, spectral_radius, symmetrize};

const DARE_TOL: f64 = 1e-12;
const DARE_MAX_ITER: usize = 100_000;

/// Stabilizing solution of the discrete algebraic Riccati equation
/// `X = A^T X A - A^T X B (R + B^T X B)^{-1} B^T X A + Q`
/// together with the feedback `F = -(R + B^T X B)^{-1} B^T X A`.
#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    pub x: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub iterations: usize,
}

/// LQR gain for cost-to-go `x`: `-(R + B^T X B)^{-1} B^T X A`.
pub fn lqr_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, x: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let btx = b.transpose() * x;
    let lhs = r + &btx * b;
    Ok(-solve(&lhs, &(btx * a), "LQR gain")?)
}

/// One backward Riccati step: `Q + A^T X (A + B F)` with `F = lqr_gain(X)`.
pub fn riccati_update(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let f = lqr_gain(a, b, x, r)?;
    let next = q + a.transpose() * x * (a + b * &f);
    Ok((symmetrize(&next), f))
}

/// Solves the DARE with the structure-preserving doubling iteration on
/// `(A_k, G_k, H_k)`, `G_0 = B R^{-1} B^T`, `H_0 = Q`; `H_k` converges to `X`.
pub fn solve_dare(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DareSolution> {
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::dim(
            "Riccati equation",
            format!("A {n}x{n}, B {n}x{m}, Q {n}x{n}, R {m}x{m}"),
            format!("A {:?}, B {:?}, Q {:?}, R {:?}", a.shape(), b.shape(), q.shape(), r.shape()),
        ));
    }
    if m > 0 && lambda_min_sym(r) <= 0.0 {
        return Err(Error::InvalidArgument("input weight must be positive definite".into()));
    }
    if lambda_min_sym(q) < -1e-12 * q.norm().max(1.0) {
        return Err(Error::InvalidArgument("state weight must be positive semidefinite".into()));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let mut ak = a.clone();
    let mut g = if m > 0 { b * inverse(r, "input weight")? * b.transpose() } else { DMatrix::zeros(n, n) };
    g = symmetrize(&g);
    let mut h = symmetrize(q);
    let mut iterations = 0;
    loop {
        if iterations >= DARE_MAX_ITER {
            return Err(Error::NoConvergence {
                solver: "Riccati doubling",
                iterations,
            });
        }
        iterations += 1;
        let w = &eye + &g * &h;
        // W^{-1} A and W^{-1} G
        let rhs = {
            let mut m = DMatrix::zeros(n, 2 * n);
            m.view_mut((0, 0), (n, n)).copy_from(&ak);
            m.view_mut((0, n), (n, n)).copy_from(&g);
            m
        };
        let sol = solve(&w, &rhs, "Riccati doubling").map_err(|_| Error::NoConvergence {
            solver: "Riccati doubling",
            iterations,
        })?;
        let winv_a = sol.view((0, 0), (n, n)).into_owned();
        let winv_g = sol.view((0, n), (n, n)).into_owned();
        let a_next = &ak * &winv_a;
        let g_next = symmetrize(&(&g + &ak * winv_g * ak.transpose()));
        let h_next = symmetrize(&(&h + ak.transpose() * &h * &winv_a));
        if !(all_finite(&a_next) && all_finite(&g_next) && all_finite(&h_next)) {
            return Err(Error::NoConvergence {
                solver: "Riccati doubling",
                iterations,
            });
        }
        let change = (&h_next - &h).norm();
        let scale = h_next.norm();
        ak = a_next;
        g = g_next;
        h = h_next;
        if change <= DARE_TOL * scale || scale == 0.0 && change == 0.0 {
            break;
        }
    }
    let gain = lqr_gain(a, b, &h, r)?;
    let radius = spectral_radius(&(a + b * &gain))?;
    if radius >= 1.0 {
        return Err(Error::Unstable { radius });
    }
    Ok(DareSolution { x: h, gain, iterations })
}
