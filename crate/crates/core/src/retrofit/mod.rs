//! Hierarchical state-space expansion, retrofit gain synthesis, performance
//! certificates and the switching retrofit controller.

mod certificate;
mod controller;
mod design;
mod gains;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::DiscreteLti;
use crate::projection::{check_conditions, reduced_triple, PortSet, Projection};

pub use certificate::{certify, gamma_k, generalized_bound, CertifiedBound, GeneralizedBound};
pub use controller::{compose_retrofits, InitialGuess, RetrofitBank, RetrofitController};
pub use design::{design, design_with_projection, DesignOptions, RetrofitDesign};
pub use gains::{design_finite_gains, design_infinite_gain, FiniteGains, RetrofitGains, TerminalCost, Weights};

/// The low-dimensional model `(Â, B̂, Ĉ)` together with the compensator input
/// matrix `P† B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    pub ahat: DMatrix<f64>,
    pub bhat: DMatrix<f64>,
    pub chat: DMatrix<f64>,
    pub pdag_b: DMatrix<f64>,
}

impl ReducedModel {
    pub fn new(sys: &DiscreteLti, proj: &Projection, ports: &PortSet) -> Result<Self> {
        let (ahat, bhat, chat) = reduced_triple(proj, sys, ports)?;
        Ok(Self {
            ahat,
            bhat,
            chat,
            pdag_b: &proj.pdag * &sys.b,
        })
    }

    pub fn dim(&self) -> usize {
        self.ahat.nrows()
    }
}

/// The plant rewritten as the cascade of the reduced state `ξ̂` driving the
/// residual state `ξ` through `A P - P Â`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    /// `Γ = P† A - Â P†`.
    pub gamma: DMatrix<f64>,
    /// `A P - P Â`.
    pub coupling: DMatrix<f64>,
    pub model: ReducedModel,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub proj: Projection,
    pub ports: PortSet,
}

/// Expands `sys` along `proj`. Refuses when `im B e_J ⊆ im P` or
/// `ker P† ⊆ ker e_J^T C` fails.
pub fn expand(sys: &DiscreteLti, proj: &Projection, ports: &PortSet) -> Result<Expansion> {
    let model = ReducedModel::new(sys, proj, ports)?;
    let report = check_conditions(proj, sys, ports, 1, 1, &DMatrix::zeros(sys.n(), 0));
    if !report.con_bc_ok {
        return Err(Error::ConditionViolated(format!(
            "input residual {:.3e}, output residual {:.3e}",
            report.input_residual, report.output_residual
        )));
    }
    let gamma = &proj.pdag * &sys.a - &model.ahat * &proj.pdag;
    let coupling = &sys.a * &proj.p - &proj.p * &model.ahat;
    Ok(Expansion {
        gamma,
        coupling,
        model,
        a: sys.a.clone(),
        b: sys.b.clone(),
        proj: proj.clone(),
        ports: ports.clone(),
    })
}

impl Expansion {
    /// `(x, x̂) ↦ (ξ, ξ̂)` with `ξ = P̄ P̄† x + P x̂`, `ξ̂ = P† x - x̂`.
    pub fn to_cascade(&self, x: &DVector<f64>, xhat: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let p = &self.proj;
        let xi = &p.pbar * (&p.pbar_dag * x) + &p.p * xhat;
        let xi_hat = &p.pdag * x - xhat;
        (xi, xi_hat)
    }

    /// `(ξ, ξ̂) ↦ (x, x̂)` with `x = ξ + P ξ̂`, `x̂ = P† ξ`.
    pub fn from_cascade(&self, xi: &DVector<f64>, xi_hat: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (xi + &self.proj.p * xi_hat, &self.proj.pdag * xi)
    }

    /// One step of the redundant pair: the plant driven by `v + e_J v̂` and the
    /// ideal compensator `x̂⁺ = Â x̂ + P† B v + Γ x`.
    pub fn redundant_step(
        &self,
        x: &DVector<f64>,
        xhat: &DVector<f64>,
        v: &DVector<f64>,
        vhat: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let u = v + self.ports.selector(self.b.ncols()) * vhat;
        let x_next = &self.a * x + &self.b * u;
        let xhat_next = &self.model.ahat * xhat + &self.model.pdag_b * v + &self.gamma * x;
        (x_next, xhat_next)
    }

    /// One step of the cascade `ξ̂⁺ = Â ξ̂ + B̂ v̂`, `ξ⁺ = A ξ + B v + (A P - P Â) ξ̂`.
    pub fn cascade_step(
        &self,
        xi: &DVector<f64>,
        xi_hat: &DVector<f64>,
        v: &DVector<f64>,
        vhat: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let xi_hat_next = &self.model.ahat * xi_hat + &self.model.bhat * vhat;
        let xi_next = &self.a * xi + &self.b * v + &self.coupling * xi_hat;
        (xi_next, xi_hat_next)
    }

    /// `‖Ĉ d_t‖` for `t = 0..=xs.len()`, where `d` is the part of the
    /// compensator state driven only by `Γ x_t`. This is the gap between the
    /// compensator outputs with and without the `Γ x` signal.
    pub fn output_gap(&self, xs: &[DVector<f64>]) -> Vec<f64> {
        let mut d = DVector::zeros(self.model.dim());
        let mut gaps = Vec::with_capacity(xs.len() + 1);
        gaps.push(0.0);
        for x in xs {
            d = &self.model.ahat * d + &self.gamma * x;
            gaps.push((&self.model.chat * &d).norm());
        }
        gaps
    }
}

/// Largest output gap over `t < τ` for the state sequence `xs`.
pub fn finite_time_output_matching_check(exp: &Expansion, tau: usize, xs: &[DVector<f64>]) -> f64 {
    let steps = tau.saturating_sub(1).min(xs.len());
    exp.output_gap(&xs[..steps]).into_iter().fold(0.0, f64::max)
}
