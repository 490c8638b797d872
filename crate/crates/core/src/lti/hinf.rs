use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};

use super::DiscreteLti;
use crate::error::{Error, Result};
use crate::linalg::eigenvalues;

/// Points in the coarse frequency grid over `[0, π]`.
pub const HINF_GRID_POINTS: usize = 4096;
const REFINED_PEAKS: usize = 8;
const GOLDEN_TOL: f64 = 1e-12;

/// Largest singular value of `C (e^{jθ} I - A)^{-1} B + D`.
pub fn frequency_gain(sys: &DiscreteLti, theta: f64) -> f64 {
    let n = sys.n();
    let z = Complex::new(theta.cos(), theta.sin());
    let g = if n == 0 {
        sys.d.map(|v| Complex::new(v, 0.0))
    } else {
        let mut resolvent = sys.a.map(|v| Complex::new(-v, 0.0));
        for i in 0..n {
            resolvent[(i, i)] += z;
        }
        let b = sys.b.map(|v| Complex::new(v, 0.0));
        let c = sys.c.map(|v| Complex::new(v, 0.0));
        let d = sys.d.map(|v| Complex::new(v, 0.0));
        match resolvent.lu().solve(&b) {
            Some(x) => c * x + d,
            None => return f64::INFINITY,
        }
    };
    if g.nrows() == 0 || g.ncols() == 0 {
        return 0.0;
    }
    complex_sigma_max(g)
}

fn complex_sigma_max(g: DMatrix<Complex<f64>>) -> f64 {
    // The gain only needs the top singular value; the smaller Gram matrix
    // is cheaper when one side is thin.
    let gram = if g.nrows() >= g.ncols() { g.adjoint() * &g } else { &g * g.adjoint() };
    if gram.nrows() <= 8 {
        return g.singular_values().max();
    }
    gram.symmetric_eigenvalues().max().max(0.0).sqrt()
}

/// Transfer matrix evaluation on a Hessenberg form `A = Q H Q^T`, so each
/// frequency costs a Hessenberg solve instead of a dense factorization.
struct HessenbergGain {
    h: DMatrix<Complex<f64>>,
    qb: DMatrix<Complex<f64>>,
    cq: DMatrix<Complex<f64>>,
    d: DMatrix<Complex<f64>>,
}

impl HessenbergGain {
    fn new(sys: &DiscreteLti) -> Self {
        let hess = sys.a.clone().hessenberg();
        let q = hess.q();
        let h = hess.h();
        let cplx = |m: &DMatrix<f64>| m.map(|v| Complex::new(v, 0.0));
        Self {
            h: cplx(&h),
            qb: cplx(&(q.transpose() * &sys.b)),
            cq: cplx(&(&sys.c * q)),
            d: cplx(&sys.d),
        }
    }

    fn gain(&self, theta: f64) -> f64 {
        let n = self.h.nrows();
        if n == 0 {
            return if self.d.is_empty() { 0.0 } else { complex_sigma_max(self.d.clone()) };
        }
        let z = Complex::new(theta.cos(), theta.sin());
        let mut m = -self.h.clone();
        for i in 0..n {
            m[(i, i)] += z;
        }
        let mut x = self.qb.clone();
        // elimination of the single subdiagonal with adjacent-row pivoting
        for k in 0..n - 1 {
            if m[(k + 1, k)].norm() > m[(k, k)].norm() {
                m.swap_rows(k, k + 1);
                x.swap_rows(k, k + 1);
            }
            let pivot = m[(k, k)];
            if pivot.norm() == 0.0 {
                return f64::INFINITY;
            }
            let l = m[(k + 1, k)] / pivot;
            if l.norm() != 0.0 {
                for j in k..n {
                    let v = m[(k, j)];
                    m[(k + 1, j)] -= l * v;
                }
                for j in 0..x.ncols() {
                    let v = x[(k, j)];
                    x[(k + 1, j)] -= l * v;
                }
            }
        }
        for j in 0..x.ncols() {
            for i in (0..n).rev() {
                let mut acc = x[(i, j)];
                for c in i + 1..n {
                    acc -= m[(i, c)] * x[(c, j)];
                }
                if m[(i, i)].norm() == 0.0 {
                    return f64::INFINITY;
                }
                x[(i, j)] = acc / m[(i, i)];
            }
        }
        let g = &self.cq * x + &self.d;
        if g.nrows() == 0 || g.ncols() == 0 {
            return 0.0;
        }
        complex_sigma_max(g)
    }
}

/// `h∞` norm of a Schur-stable discrete system: the supremum over the unit
/// circle of the largest singular value of its transfer matrix.
///
/// The circle is scanned on a uniform grid over `[0, π]` (real systems are
/// conjugate-symmetric) augmented with the pole angles; the best local maxima
/// are then refined by golden-section search.
pub fn hinf_norm(sys: &DiscreteLti) -> Result<f64> {
    let eig = eigenvalues(&sys.a)?;
    let radius = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if radius >= 1.0 {
        return Err(Error::Unstable { radius });
    }
    let mut thetas: Vec<f64> = (0..HINF_GRID_POINTS)
        .map(|i| PI * i as f64 / (HINF_GRID_POINTS - 1) as f64)
        .collect();
    thetas.extend(eig.iter().map(|z| z.arg().abs()));
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    let eval = HessenbergGain::new(sys);
    let gains: Vec<f64> = thetas.iter().map(|&t| eval.gain(t)).collect();
    if gains.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("transfer matrix evaluation failed on the unit circle".into()));
    }

    let last = gains.len() - 1;
    let mut peaks: Vec<usize> = (0..gains.len())
        .filter(|&i| {
            let left = if i == 0 { f64::NEG_INFINITY } else { gains[i - 1] };
            let right = if i == last { f64::NEG_INFINITY } else { gains[i + 1] };
            gains[i] >= left && gains[i] >= right
        })
        .collect();
    peaks.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    peaks.truncate(REFINED_PEAKS);

    let mut best = gains.iter().copied().fold(0.0, f64::max);
    for i in peaks {
        let lo = thetas[i.saturating_sub(1)];
        let hi = thetas[(i + 1).min(last)];
        best = best.max(golden_max(|t| eval.gain(t), lo, hi));
    }
    Ok(best)
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let mut best = f1.max(f2).max(f(lo)).max(f(hi));
    while hi - lo > GOLDEN_TOL {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
        best = best.max(f1).max(f2);
    }
    best
}
