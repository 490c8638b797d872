use log::info;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    certify, design_finite_gains, design_infinite_gain, gamma_k, CertifiedBound, InitialGuess, ReducedModel,
    RetrofitController, RetrofitGains, TerminalCost, Weights,
};
use crate::error::Result;
use crate::linalg::orthonormal_basis;
use crate::lti::DiscreteLti;
use crate::projection::{build_projection, projection_of_rank, BuiltProjection, PortSet};

/// Knobs of the design pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignOptions {
    /// Initial input Krylov depth.
    pub nu: usize,
    /// Initial output Krylov depth; the final depth is also the switching horizon.
    pub tau: usize,
    /// Upper limit on the reduced order during escalation (defaults to `n`).
    pub max_rank: Option<usize>,
    /// Use exactly this reduced order instead of escalating.
    pub rank: Option<usize>,
    pub weights: Weights,
    pub terminal: TerminalCost,
    pub initial_guess: InitialGuess,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            nu: 2,
            tau: 2,
            max_rank: None,
            rank: None,
            weights: Weights::default(),
            terminal: TerminalCost::default(),
            initial_guess: InitialGuess::default(),
        }
    }
}

/// Everything produced by the design pipeline for one port set.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrofitDesign {
    pub ports: PortSet,
    pub built: BuiltProjection,
    pub model: ReducedModel,
    pub gains: RetrofitGains,
    pub certificate: CertifiedBound,
    pub initial_guess: InitialGuess,
}

/// Projection, gains and certificate for a retrofit controller on `ports`
/// handling initial states in the span of `x_basis`.
pub fn design(sys: &DiscreteLti, ports: &PortSet, x_basis: &DMatrix<f64>, opts: &DesignOptions) -> Result<RetrofitDesign> {
    let n = sys.n();
    let built = match opts.rank {
        Some(r) => projection_of_rank(sys, ports, r, x_basis)?,
        None => build_projection(sys, ports, opts.nu, opts.tau, x_basis, opts.max_rank.unwrap_or(n))?,
    };
    design_with_projection(sys, ports, built, x_basis, opts)
}

/// The design pipeline on an already chosen projection; `opts.nu`, `opts.tau`,
/// `opts.rank` and `opts.max_rank` are not used.
pub fn design_with_projection(
    sys: &DiscreteLti,
    ports: &PortSet,
    built: BuiltProjection,
    x_basis: &DMatrix<f64>,
    opts: &DesignOptions,
) -> Result<RetrofitDesign> {
    let proj = &built.projection;
    let model = ReducedModel::new(sys, proj, ports)?;
    let tau = built.tau;
    let g = design_infinite_gain(&model.ahat, &model.bhat, &proj.p, &opts.weights)?;
    let finite = design_finite_gains(&model.ahat, &model.bhat, &model.chat, &proj.p, tau, &opts.weights, opts.terminal)?;
    let gains = RetrofitGains {
        f: finite.f,
        g,
        h: finite.h,
    };
    let shape = if x_basis.ncols() == 0 {
        DMatrix::identity(proj.rank(), proj.rank())
    } else {
        &proj.pdag * orthonormal_basis(x_basis, 1e-12)
    };
    let certificate = certify(&model, &gains, &shape, &opts.initial_guess.map(proj)?)?;
    info!(
        "retrofit design: rank {}, nu {}, tau {}, reduced radius {:.4}, epsilon {:.4e}",
        proj.rank(),
        built.nu,
        tau,
        built.spectral_radius,
        certificate.epsilon
    );
    Ok(RetrofitDesign {
        ports: ports.clone(),
        built,
        model,
        gains,
        certificate,
        initial_guess: opts.initial_guess.clone(),
    })
}

impl RetrofitDesign {
    pub fn rank(&self) -> usize {
        self.built.projection.rank()
    }

    pub fn tau(&self) -> usize {
        self.gains.tau()
    }

    /// A fresh controller for the initial state `x0`, with `ẑ₀` chosen by the
    /// configured guess rule.
    pub fn controller(&self, x0: &DVector<f64>) -> Result<RetrofitController> {
        let z0 = self.initial_guess.observer_start(&self.built.projection, x0)?;
        RetrofitController::new(self.model.clone(), self.gains.clone(), self.ports.clone(), z0)
    }

    /// Attaches `γ_K` for the static preexisting gain `f`.
    pub fn attach_gamma_k(&mut self, sys: &DiscreteLti, f: &DMatrix<f64>) -> Result<f64> {
        let g = gamma_k(sys, f, &self.built.projection)?;
        self.certificate.gamma_k = Some(g);
        Ok(g)
    }
}
