use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ReducedModel, RetrofitGains};
use crate::error::{Error, Result};
use crate::linalg::spectral_radius;
use crate::projection::{PortSet, Projection};

/// Rule for the observer's initial state `ẑ₀`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum InitialGuess {
    /// `ẑ₀ = 0`.
    #[default]
    Zero,
    /// `ẑ₀ = P† x₀`: the observer starts on the true reduced state.
    Exact,
    /// `ẑ₀ = P† x̃₀` where `x̃₀` keeps the entries of `x₀` flagged in `keep`
    /// and zeroes the rest.
    Masked { keep: Vec<bool> },
}

impl InitialGuess {
    /// The linear map `Z` with `ẑ₀ = Z ξ̂₀` whenever `x₀ = P ξ̂₀`.
    pub fn map(&self, proj: &Projection) -> Result<DMatrix<f64>> {
        let nh = proj.rank();
        match self {
            InitialGuess::Zero => Ok(DMatrix::zeros(nh, nh)),
            InitialGuess::Exact => Ok(DMatrix::identity(nh, nh)),
            InitialGuess::Masked { keep } => {
                check_mask(keep, proj.n())?;
                let mut masked = proj.p.clone();
                for (i, &k) in keep.iter().enumerate() {
                    if !k {
                        masked.row_mut(i).fill(0.0);
                    }
                }
                Ok(&proj.pdag * masked)
            }
        }
    }

    pub fn observer_start(&self, proj: &Projection, x0: &DVector<f64>) -> Result<DVector<f64>> {
        if x0.len() != proj.n() {
            return Err(Error::dim("initial state", proj.n(), x0.len()));
        }
        match self {
            InitialGuess::Zero => Ok(DVector::zeros(proj.rank())),
            InitialGuess::Exact => Ok(&proj.pdag * x0),
            InitialGuess::Masked { keep } => {
                check_mask(keep, proj.n())?;
                let guess = DVector::from_iterator(x0.len(), x0.iter().zip(keep).map(|(v, &k)| if k { *v } else { 0.0 }));
                Ok(&proj.pdag * guess)
            }
        }
    }
}

fn check_mask(keep: &[bool], n: usize) -> Result<()> {
    if keep.len() != n {
        return Err(Error::dim("initial-guess mask", n, keep.len()));
    }
    Ok(())
}

/// The switching retrofit controller: compensator `x̂`, observer `ẑ`, and
/// the step counter deciding between the observation phase `t < τ` and
/// state feedback afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrofitController {
    pub model: ReducedModel,
    pub gains: RetrofitGains,
    pub ports: PortSet,
    pub xhat: DVector<f64>,
    pub zhat: DVector<f64>,
    pub t: usize,
}

impl RetrofitController {
    /// Assembles a controller with `x̂₀ = 0` and the given observer start.
    pub fn new(model: ReducedModel, gains: RetrofitGains, ports: PortSet, zhat0: DVector<f64>) -> Result<Self> {
        let nh = model.dim();
        let nj = ports.len();
        let tau = gains.tau();
        let shape_ok = model.bhat.shape() == (nh, nj)
            && model.chat.shape() == (nj, nh)
            && model.pdag_b.nrows() == nh
            && gains.g.shape() == (nj, nh)
            && gains.h.len() == tau
            && gains.f.iter().all(|f| f.shape() == (nj, nh))
            && gains.h.iter().all(|h| h.shape() == (nh, nj));
        if !shape_ok {
            return Err(Error::dim("retrofit controller", format!("reduced order {nh} with {nj} ports"), "inconsistent gain or model shapes"));
        }
        if zhat0.len() != nh {
            return Err(Error::dim("observer initial state", nh, zhat0.len()));
        }
        let radius = spectral_radius(&model.ahat)?;
        if radius >= 1.0 {
            return Err(Error::Unstable { radius });
        }
        let radius = spectral_radius(&(&model.ahat + &model.bhat * &gains.g))?;
        if radius >= 1.0 {
            return Err(Error::Unstable { radius });
        }
        Ok(Self {
            xhat: DVector::zeros(nh),
            zhat: zhat0,
            t: 0,
            model,
            gains,
            ports,
        })
    }

    pub fn tau(&self) -> usize {
        self.gains.tau()
    }

    /// Whether the output injection is active at the current step.
    pub fn observing(&self) -> bool {
        self.t < self.tau()
    }

    /// Number of plant inputs the compensator expects in `v`.
    pub fn plant_inputs(&self) -> usize {
        self.model.pdag_b.ncols()
    }

    /// `v̂_t`, depending only on the current observer state.
    pub fn output(&self) -> DVector<f64> {
        if self.observing() {
            &self.gains.f[self.t] * &self.zhat
        } else {
            &self.gains.g * &self.zhat
        }
    }

    /// Advances the internal states with the port measurement `e_J^T y_t`
    /// and the input `v_t` applied by everything except this controller.
    pub fn advance(&mut self, y_ports: &DVector<f64>, v: &DVector<f64>) -> Result<()> {
        if y_ports.len() != self.ports.len() {
            return Err(Error::dim("port measurement", self.ports.len(), y_ports.len()));
        }
        if v.len() != self.plant_inputs() {
            return Err(Error::dim("preexisting input", self.plant_inputs(), v.len()));
        }
        let vhat = self.output();
        let m = &self.model;
        let mut z_next = &m.ahat * &self.zhat + &m.bhat * &vhat;
        if self.observing() {
            let innovation = y_ports - &m.chat * (&self.zhat + &self.xhat);
            z_next += &self.gains.h[self.t] * innovation;
        }
        self.xhat = &m.ahat * &self.xhat + &m.pdag_b * v;
        self.zhat = z_next;
        self.t += 1;
        Ok(())
    }

    /// Emits `v̂_t` and advances.
    pub fn step(&mut self, y_ports: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        let vhat = self.output();
        self.advance(y_ports, v)?;
        Ok(vhat)
    }
}

/// Several retrofit controllers acting on disjoint port sets.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrofitBank {
    pub controllers: Vec<RetrofitController>,
}

pub fn compose_retrofits(controllers: Vec<RetrofitController>) -> Result<RetrofitBank> {
    for (i, a) in controllers.iter().enumerate() {
        for b in &controllers[..i] {
            if let Some(port) = a.ports.overlaps(&b.ports) {
                return Err(Error::OverlappingPorts { port });
            }
        }
        if a.plant_inputs() != controllers[0].plant_inputs() {
            return Err(Error::dim("retrofit bank", controllers[0].plant_inputs(), a.plant_inputs()));
        }
    }
    Ok(RetrofitBank { controllers })
}

impl RetrofitBank {
    /// Total retrofit input `Σ_α e_{J_α} v̂_α` for the current step.
    pub fn output(&self, m: usize) -> DVector<f64> {
        let mut total = DVector::zeros(m);
        for c in &self.controllers {
            total += c.ports.selector(m) * c.output();
        }
        total
    }

    /// Returns the total retrofit input and advances every controller. Each
    /// compensator sees `v` plus the injections of the other controllers.
    pub fn step(&mut self, y: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        let m = v.len();
        let injections: Vec<DVector<f64>> = self.controllers.iter().map(|c| c.ports.selector(m) * c.output()).collect();
        let total = injections.iter().fold(DVector::zeros(m), |acc, u| acc + u);
        for (c, own) in self.controllers.iter_mut().zip(&injections) {
            let y_ports = c.ports.selector(y.len()).transpose() * y;
            let v_eff = v + &total - own;
            c.advance(&y_ports, &v_eff)?;
        }
        Ok(total)
    }
}
