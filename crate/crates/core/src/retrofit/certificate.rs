use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ReducedModel, RetrofitGains};
use crate::error::{Error, Result};
use crate::linalg::{lambda_max_sym, sigma_max};
use crate::lti::{hinf_norm, solve_dlyap, solve_dlyap_with, DiscreteLti};
use crate::projection::Projection;

/// Performance certificate of a retrofit design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedBound {
    pub epsilon: f64,
    #[serde(rename = "gamma_K")]
    pub gamma_k: Option<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub q0: f64,
}

impl CertifiedBound {
    /// `ε = √((γ₁+γ₂)² + (√q₀ δ₁ + γ₃ δ₂)²)`.
    pub fn compose(gamma1: f64, gamma2: f64, gamma3: f64, delta1: f64, delta2: f64, q0: f64) -> f64 {
        let a = gamma1 + gamma2;
        let b = q0.sqrt() * delta1 + gamma3 * delta2;
        (a * a + b * b).sqrt()
    }

    /// `γ_K ε`, available once `γ_K` has been attached.
    pub fn state_bound(&self) -> Option<f64> {
        self.gamma_k.map(|g| g * self.epsilon)
    }
}

/// Exact certificate for the reduced closed loop.
///
/// `xhat_shape` maps the unit ball onto the set of reduced initial states
/// (`ξ̂₀ = S c`, `‖c‖ ≤ 1`); `z0_map` gives the observer start `ẑ₀ = Z ξ̂₀`.
/// `γ₁`, `γ₂`, `δ₁`, `δ₂` are the largest singular values of the linear maps
/// `c ↦ (ξ̂_t - ẑ_t)_{t<τ}`, `c ↦ (ẑ_t)_{t<τ}`, `c ↦ ξ̂_τ - ẑ_τ` and `c ↦ ẑ_τ`.
pub fn certify(
    model: &ReducedModel,
    gains: &RetrofitGains,
    xhat_shape: &DMatrix<f64>,
    z0_map: &DMatrix<f64>,
) -> Result<CertifiedBound> {
    let nh = model.dim();
    if xhat_shape.nrows() != nh {
        return Err(Error::dim("reduced initial-state shape", nh, xhat_shape.nrows()));
    }
    if z0_map.shape() != (nh, nh) {
        return Err(Error::dim("observer initial map", format!("{nh}x{nh}"), format!("{:?}", z0_map.shape())));
    }
    let tau = gains.tau();
    if gains.h.len() != tau {
        return Err(Error::dim("observer gain sequence", tau, gains.h.len()));
    }
    let k = xhat_shape.ncols();
    let mut xi = xhat_shape.clone();
    let mut z = z0_map * xhat_shape;
    let mut err_stack = DMatrix::zeros(nh * tau, k);
    let mut z_stack = DMatrix::zeros(nh * tau, k);
    for t in 0..tau {
        err_stack.view_mut((t * nh, 0), (nh, k)).copy_from(&(&xi - &z));
        z_stack.view_mut((t * nh, 0), (nh, k)).copy_from(&z);
        let (f, h) = (&gains.f[t], &gains.h[t]);
        let xi_next = &model.ahat * &xi + &model.bhat * f * &z;
        let z_next = h * &model.chat * &xi + (&model.ahat + &model.bhat * f - h * &model.chat) * &z;
        xi = xi_next;
        z = z_next;
    }
    let gamma1 = sigma_max(&err_stack);
    let gamma2 = sigma_max(&z_stack);
    let delta1 = sigma_max(&(&xi - &z));
    let delta2 = sigma_max(&z);
    let closed = &model.ahat + &model.bhat * &gains.g;
    let gamma3 = lambda_max_sym(&solve_dlyap(&closed)?).max(0.0).sqrt();
    let q0 = lambda_max_sym(&solve_dlyap(&model.ahat)?);
    Ok(CertifiedBound {
        epsilon: CertifiedBound::compose(gamma1, gamma2, gamma3, delta1, delta2, q0),
        gamma_k: None,
        gamma1,
        gamma2,
        gamma3,
        delta1,
        delta2,
        q0,
    })
}

/// `γ_K = ‖(zI - A_K)^{-1}(A_K - P P† A) P + P‖_{h∞}` with `A_K = A + B F C`.
pub fn gamma_k(sys: &DiscreteLti, f: &DMatrix<f64>, proj: &Projection) -> Result<f64> {
    let ak = closed_loop(sys, f)?;
    let input = (&ak - proj.projector() * &sys.a) * &proj.p;
    let w = DiscreteLti::new(ak, input, DMatrix::identity(sys.n(), sys.n()), sys.dt)?.with_feedthrough(proj.p.clone())?;
    hinf_norm(&w)
}

fn closed_loop(sys: &DiscreteLti, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if f.shape() != (sys.m(), sys.p()) {
        return Err(Error::dim("static feedback", format!("{}x{}", sys.m(), sys.p()), format!("{}x{}", f.nrows(), f.ncols())));
    }
    Ok(&sys.a + &sys.b * f * &sys.c)
}

/// Split of an initial state into its retrofit-controllable part and the
/// remainder, with the resulting state bound.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedBound {
    /// `P ξ̂₀`.
    pub controllable: DVector<f64>,
    /// `P̄ ξ̂₀'`.
    pub residual: DVector<f64>,
    /// `‖A_K^t P̄ ξ̂₀'‖_{l2}`.
    pub residual_norm: f64,
    /// `‖A_K^t P̄ ξ̂₀'‖_{l2} + γ_K ε`.
    pub bound: f64,
}

/// Bound on `‖x_t‖_{l2}` when `x₀` need not lie in `im P`.
pub fn generalized_bound(
    sys: &DiscreteLti,
    f: &DMatrix<f64>,
    proj: &Projection,
    x0: &DVector<f64>,
    epsilon: f64,
    gamma_k: f64,
) -> Result<GeneralizedBound> {
    if x0.len() != sys.n() {
        return Err(Error::dim("initial state", sys.n(), x0.len()));
    }
    let ak = closed_loop(sys, f)?;
    let controllable = &proj.p * (&proj.pdag * x0);
    let residual = &proj.pbar * (&proj.pbar_dag * x0);
    // ‖A_K^t r‖²_{l2} = r^T X r with A_K^T X A_K + I = X
    let gram = solve_dlyap_with(&ak, &DMatrix::identity(sys.n(), sys.n()))?;
    let residual_norm = residual.dot(&(&gram * &residual)).max(0.0).sqrt();
    Ok(GeneralizedBound {
        controllable,
        residual,
        residual_norm,
        bound: residual_norm + gamma_k * epsilon,
    })
}
