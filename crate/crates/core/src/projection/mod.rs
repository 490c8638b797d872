//! Left-invertible projections that match the controllable and unobservable
//! subspaces seen from a set of ports.

mod biconj;
mod build;
mod krylov;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::selector;
use crate::lti::DiscreteLti;

pub use biconj::{biconjugate, BREAKDOWN_TOL};
pub use build::{build_projection, projection_of_rank, BuiltProjection};
pub use krylov::{controllability_stack, input_basis, observability_stack, output_basis, DEDUP_TOL};

/// Residual threshold under which a subspace inclusion counts as satisfied.
pub const CONDITION_TOL: f64 = 1e-8;

/// Ordered, duplicate-free set of zero-based port indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct PortSet {
    indices: Vec<usize>,
}

impl PortSet {
    pub fn new(indices: Vec<usize>, universe: usize) -> Result<Self> {
        let ports = Self::unchecked(indices)?;
        if let Some(&bad) = ports.indices.iter().find(|&&j| j >= universe) {
            return Err(Error::InvalidArgument(format!("port {bad} out of range 0..{universe}")));
        }
        Ok(ports)
    }

    fn unchecked(indices: Vec<usize>) -> Result<Self> {
        for (i, j) in indices.iter().enumerate() {
            if indices[..i].contains(j) {
                return Err(Error::InvalidArgument(format!("port {j} listed twice")));
            }
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `e_J`: the columns of the `dim x dim` identity picked by the ports.
    pub fn selector(&self, dim: usize) -> DMatrix<f64> {
        selector(dim, &self.indices)
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.contains(&j)
    }

    pub fn overlaps(&self, other: &PortSet) -> Option<usize> {
        self.indices.iter().copied().find(|&j| other.contains(j))
    }
}

impl TryFrom<Vec<usize>> for PortSet {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::unchecked(v)
    }
}

impl From<PortSet> for Vec<usize> {
    fn from(p: PortSet) -> Self {
        p.indices
    }
}

/// A projection `P` with left inverse `P†` and the complementary pair
/// `P̄`, `P̄†` such that `P P† + P̄ P̄† = I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub p: DMatrix<f64>,
    pub pdag: DMatrix<f64>,
    /// Conjugate basis from biconjugation; `P† = D^{-1} Q^T`.
    pub q: DMatrix<f64>,
    /// Biconjugation pivots `p_i^T q_i`.
    pub d: DVector<f64>,
    pub pbar: DMatrix<f64>,
    pub pbar_dag: DMatrix<f64>,
}

impl Projection {
    pub fn identity(n: usize) -> Self {
        let eye = DMatrix::identity(n, n);
        Self {
            p: eye.clone(),
            pdag: eye.clone(),
            q: eye,
            d: DVector::from_element(n, 1.0),
            pbar: DMatrix::zeros(n, 0),
            pbar_dag: DMatrix::zeros(0, n),
        }
    }

    /// Full-state dimension `n`.
    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    /// Reduced dimension `n̂`.
    pub fn rank(&self) -> usize {
        self.p.ncols()
    }

    /// `P P†`, the oblique projector onto `im P` along `ker P†`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.p * &self.pdag
    }

    /// `‖P† P - I‖_F`.
    pub fn left_inverse_error(&self) -> f64 {
        (&self.pdag * &self.p - DMatrix::identity(self.rank(), self.rank())).norm()
    }

    /// `‖P P† + P̄ P̄† - I‖_F`.
    pub fn resolution_error(&self) -> f64 {
        let n = self.n();
        (self.projector() + &self.pbar * &self.pbar_dag - DMatrix::identity(n, n)).norm()
    }
}

/// `Â = P† A P`, `B̂ = P† B e_J`, `Ĉ = e_J^T C P`.
pub fn reduced_triple(
    proj: &Projection,
    sys: &DiscreteLti,
    ports: &PortSet,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if proj.n() != sys.n() {
        return Err(Error::dim("projection rows", sys.n(), proj.n()));
    }
    if ports.indices().iter().any(|&j| j >= sys.m() || j >= sys.p()) {
        return Err(Error::InvalidArgument("ports exceed the system's inputs or outputs".into()));
    }
    let ahat = &proj.pdag * &sys.a * &proj.p;
    let bhat = &proj.pdag * &sys.b * ports.selector(sys.m());
    let chat = ports.selector(sys.p()).transpose() * &sys.c * &proj.p;
    Ok((ahat, bhat, chat))
}

/// Residuals of the subspace inclusions a projection should satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `im B e_J ⊆ im P` and `ker P† ⊆ ker e_J^T C`.
    pub con_bc_ok: bool,
    /// `ker P†` inside the kernel of the depth-τ observability stack.
    pub con_c_ok: bool,
    /// `X + im[B e_J, ..., A^{ν-1} B e_J] ⊆ im P`.
    pub con_b_ok: bool,
    pub input_residual: f64,
    pub output_residual: f64,
    pub krylov_input_residual: f64,
    pub krylov_output_residual: f64,
}

impl ConditionReport {
    pub fn all_ok(&self) -> bool {
        self.con_bc_ok && self.con_c_ok && self.con_b_ok
    }
}

fn image_residual(comp: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        0.0
    } else {
        (comp * m).norm() / scale
    }
}

fn kernel_residual(comp: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        0.0
    } else {
        (m * comp).norm() / scale
    }
}

pub fn check_conditions(
    proj: &Projection,
    sys: &DiscreteLti,
    ports: &PortSet,
    nu: usize,
    tau: usize,
    x_basis: &DMatrix<f64>,
) -> ConditionReport {
    let n = sys.n();
    let comp = DMatrix::identity(n, n) - proj.projector();
    let bj = &sys.b * ports.selector(sys.m());
    let cj = ports.selector(sys.p()).transpose() * &sys.c;
    let input_residual = image_residual(&comp, &bj);
    let output_residual = kernel_residual(&comp, &cj);
    let krylov_input_residual = image_residual(&comp, &controllability_stack(sys, ports, nu, x_basis));
    let krylov_output_residual = kernel_residual(&comp, &observability_stack(sys, ports, tau));
    ConditionReport {
        con_bc_ok: input_residual <= CONDITION_TOL && output_residual <= CONDITION_TOL,
        con_c_ok: krylov_output_residual <= CONDITION_TOL,
        con_b_ok: krylov_input_residual <= CONDITION_TOL,
        input_residual,
        output_residual,
        krylov_input_residual,
        krylov_output_residual,
    }
}
