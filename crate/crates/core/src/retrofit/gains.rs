use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve;
use crate::lti::{riccati_update, solve_dare};

/// Quadratic weights on the full state `P ξ̂` and on the retrofit input.
/// `None` stands for the identity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub state: Option<DMatrix<f64>>,
    pub input: Option<DMatrix<f64>>,
}

impl Weights {
    /// Identity state weight and `r I` input weight.
    pub fn scaled_input(r: f64) -> Self {
        Self {
            state: None,
            input: Some(DMatrix::identity(1, 1) * r),
        }
    }

    fn state_weight(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.state {
            None => Ok(p.transpose() * p),
            Some(w) if w.shape() == (p.nrows(), p.nrows()) => Ok(p.transpose() * w * p),
            Some(w) if w.shape() == (p.ncols(), p.ncols()) => Ok(w.clone()),
            Some(w) => Err(Error::dim("state weight", format!("{0}x{0}", p.nrows()), format!("{}x{}", w.nrows(), w.ncols()))),
        }
    }

    fn input_weight(&self, m: usize) -> Result<DMatrix<f64>> {
        match &self.input {
            None => Ok(DMatrix::identity(m, m)),
            // a 1x1 weight is broadcast as a multiple of the identity
            Some(r) if r.shape() == (1, 1) => Ok(DMatrix::identity(m, m) * r[(0, 0)]),
            Some(r) if r.shape() == (m, m) => Ok(r.clone()),
            Some(r) => Err(Error::dim("input weight", format!("{m}x{m}"), format!("{}x{}", r.nrows(), r.ncols()))),
        }
    }
}

/// Terminal cost of the finite-horizon regulator recursion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalCost {
    /// The stabilizing Riccati solution; the finite gains then coincide with `Ĝ`.
    #[default]
    Dare,
    /// The stage state weight only.
    StateWeight,
}

/// Time-varying gains for the observation interval `t < τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteGains {
    pub f: Vec<DMatrix<f64>>,
    pub h: Vec<DMatrix<f64>>,
}

/// All gains of a retrofit controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrofitGains {
    pub f: Vec<DMatrix<f64>>,
    pub g: DMatrix<f64>,
    pub h: Vec<DMatrix<f64>>,
}

impl RetrofitGains {
    pub fn tau(&self) -> usize {
        self.f.len()
    }

    /// All-zero gains of horizon `tau`.
    pub fn zero(nhat: usize, m: usize, p: usize, tau: usize) -> Self {
        Self {
            f: vec![DMatrix::zeros(m, nhat); tau],
            g: DMatrix::zeros(m, nhat),
            h: vec![DMatrix::zeros(nhat, p); tau],
        }
    }
}

/// `Ĝ` from the discrete Riccati equation with state weight `P^T W P`.
pub fn design_infinite_gain(
    ahat: &DMatrix<f64>,
    bhat: &DMatrix<f64>,
    p: &DMatrix<f64>,
    weights: &Weights,
) -> Result<DMatrix<f64>> {
    let q = weights.state_weight(p)?;
    let r = weights.input_weight(bhat.ncols())?;
    Ok(solve_dare(ahat, bhat, &q, &r)?.gain)
}

/// `F̂_t` from the backward regulator recursion and `Ĥ_t` from the forward
/// predictor recursion with unit covariances, `t = 0..τ`.
pub fn design_finite_gains(
    ahat: &DMatrix<f64>,
    bhat: &DMatrix<f64>,
    chat: &DMatrix<f64>,
    p: &DMatrix<f64>,
    tau: usize,
    weights: &Weights,
    terminal: TerminalCost,
) -> Result<FiniteGains> {
    let n = ahat.nrows();
    let q = weights.state_weight(p)?;
    let r = weights.input_weight(bhat.ncols())?;
    let mut x = match terminal {
        TerminalCost::Dare => solve_dare(ahat, bhat, &q, &r)?.x,
        TerminalCost::StateWeight => q.clone(),
    };
    let mut f = vec![DMatrix::zeros(bhat.ncols(), n); tau];
    for t in (0..tau).rev() {
        let (next, gain) = riccati_update(ahat, bhat, &q, &r, &x)?;
        f[t] = gain;
        x = next;
    }

    let pc = chat.nrows();
    let mut sigma = DMatrix::<f64>::identity(n, n);
    let mut h = Vec::with_capacity(tau);
    for _ in 0..tau {
        let s = chat * &sigma * chat.transpose() + DMatrix::identity(pc, pc);
        // H = A Σ C^T S^{-1}, computed as (S^{-1} C Σ A^T)^T
        let gain = solve(&s, &(chat * &sigma * ahat.transpose()), "observer gain")?.transpose();
        let closed = ahat - &gain * chat;
        sigma = &closed * &sigma * ahat.transpose() + DMatrix::identity(n, n);
        sigma = crate::linalg::symmetrize(&sigma);
        h.push(gain);
    }
    Ok(FiniteGains { f, h })
}
