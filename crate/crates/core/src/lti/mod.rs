//! State-space systems, discretization, matrix equations and norms.
//!
//! Every other module builds on the types here: [`ContinuousLti`] for the
//! physical model, [`DiscreteLti`] for the sampled plant, and the solvers for
//! the Lyapunov and Riccati equations that show up in design and
//! certification.

mod expm;
mod hinf;
mod lyapunov;
mod riccati;

pub use expm::{expm, zoh_discretize};
pub use hinf::{frequency_gain, hinf_norm, HINF_GRID_POINTS};
pub use lyapunov::{solve_dlyap, solve_dlyap_with};
pub use riccati::{lqr_gain, riccati_update, solve_dare, DareSolution};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::all_finite;

/// Continuous-time triple `(A_c, B_c, C_c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousLti {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl ContinuousLti {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        check_triple(&a, &b, &c)?;
        Ok(Self { a, b, c })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }
}

/// Sampled plant `x_{t+1} = A x_t + B u_t`, `y_t = C x_t + D u_t`.
///
/// The feedthrough `D` is zero for every plant built by this crate; it exists
/// so transfer matrices such as `W_K(z)` can be expressed as a `DiscreteLti`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLti {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub dt: f64,
}

impl DiscreteLti {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, dt: f64) -> Result<Self> {
        check_triple(&a, &b, &c)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("sampling period must be positive, got {dt}")));
        }
        let d = DMatrix::zeros(c.nrows(), b.ncols());
        Ok(Self { a, b, c, d, dt })
    }

    pub fn with_feedthrough(mut self, d: DMatrix<f64>) -> Result<Self> {
        if d.shape() != (self.c.nrows(), self.b.ncols()) {
            return Err(Error::dim(
                "feedthrough",
                format!("{}x{}", self.c.nrows(), self.b.ncols()),
                format!("{}x{}", d.nrows(), d.ncols()),
            ));
        }
        if !all_finite(&d) {
            return Err(Error::InvalidArgument("non-finite feedthrough".into()));
        }
        self.d = d;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        crate::linalg::spectral_radius(&self.a)
    }
}

fn check_triple(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim("state matrix", "square", format!("{}x{}", a.nrows(), a.ncols())));
    }
    if b.nrows() != n {
        return Err(Error::dim("input matrix rows", n, b.nrows()));
    }
    if c.ncols() != n {
        return Err(Error::dim("output matrix columns", n, c.ncols()));
    }
    if !(all_finite(a) && all_finite(b) && all_finite(c)) {
        return Err(Error::InvalidArgument("system matrices contain non-finite entries".into()));
    }
    Ok(())
}

/// Recorded signals of a simulation. `states` holds one more entry than
/// `inputs` (the terminal state); `outputs[t] = C x_t` for every stored state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    pub dt: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Open-loop simulation of the exact recursion.
pub fn simulate(sys: &DiscreteLti, x0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Trajectory> {
    if x0.len() != sys.n() {
        return Err(Error::dim("initial state", sys.n(), x0.len()));
    }
    let mut traj = Trajectory {
        states: Vec::with_capacity(inputs.len() + 1),
        inputs: Vec::with_capacity(inputs.len()),
        outputs: Vec::with_capacity(inputs.len() + 1),
        dt: sys.dt,
    };
    let mut x = x0.clone();
    for (t, u) in inputs.iter().enumerate() {
        if u.len() != sys.m() {
            return Err(Error::dim("input sample", sys.m(), format!("{} at t={t}", u.len())));
        }
        traj.outputs.push(&sys.c * &x + &sys.d * u);
        let next = &sys.a * &x + &sys.b * u;
        traj.states.push(std::mem::replace(&mut x, next));
        traj.inputs.push(u.clone());
    }
    traj.outputs.push(&sys.c * &x);
    traj.states.push(x);
    Ok(traj)
}

/// Horizon for [`l2_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    /// `t = 0, ..., T` inclusive.
    Finite(usize),
    /// Whole sequence; its tail must have decayed.
    Unbounded,
}

/// Relative tail-energy threshold for unbounded-horizon norms.
pub const TAIL_ENERGY_TOL: f64 = 1e-12;

/// `l2` norm of a vector sequence.
///
/// With [`Horizon::Unbounded`] the sequence is treated as a truncation of an
/// infinite one: the energy of its last tenth must be below
/// [`TAIL_ENERGY_TOL`] of the total, otherwise [`Error::Divergent`].
pub fn l2_norm(seq: &[DVector<f64>], horizon: Horizon) -> Result<f64> {
    match horizon {
        Horizon::Finite(t_max) => {
            let end = (t_max + 1).min(seq.len());
            Ok(seq[..end].iter().map(|f| f.norm_squared()).sum::<f64>().sqrt())
        }
        Horizon::Unbounded => {
            let total: f64 = seq.iter().map(|f| f.norm_squared()).sum();
            if !total.is_finite() {
                return Err(Error::Divergent);
            }
            if total == 0.0 {
                return Ok(0.0);
            }
            let window = (seq.len() / 10).max(1);
            let tail: f64 = seq[seq.len() - window..].iter().map(|f| f.norm_squared()).sum();
            if tail > TAIL_ENERGY_TOL * total {
                return Err(Error::Divergent);
            }
            Ok(total.sqrt())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn accumulator() -> DiscreteLti {
        DiscreteLti::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), DMatrix::identity(2, 2), 1.0).unwrap()
    }

    #[test]
    fn zero_input_zero_state_stays_zero() {
        let sys = accumulator();
        let inputs = vec![DVector::zeros(2); 10];
        let traj = simulate(&sys, &DVector::zeros(2), &inputs).unwrap();
        assert_eq!(traj.states.len(), 11);
        assert!(traj.states.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn accumulator_integrates_constant_input() {
        let sys = accumulator();
        let u = dvector![0.5, -2.0];
        let traj = simulate(&sys, &DVector::zeros(2), &vec![u.clone(); 7]).unwrap();
        assert_eq!(traj.states[7], u * 7.0);
    }

    #[test]
    fn simulate_rejects_bad_dimensions() {
        let sys = accumulator();
        assert!(simulate(&sys, &DVector::zeros(3), &[]).is_err());
        assert!(simulate(&sys, &DVector::zeros(2), &[DVector::zeros(1)]).is_err());
    }

    #[test]
    fn l2_norm_examples() {
        assert_eq!(l2_norm(&vec![DVector::zeros(3); 4], Horizon::Unbounded).unwrap(), 0.0);
        assert_eq!(l2_norm(&[dvector![3.0, 4.0], dvector![1.0, 1.0]], Horizon::Finite(0)).unwrap(), 5.0);
        let geo: Vec<_> = (0..200).map(|t| dvector![0.5f64.powi(t)]).collect();
        let expected = (1.0f64 / (1.0 - 0.25)).sqrt();
        assert!((l2_norm(&geo, Horizon::Unbounded).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn l2_norm_flags_non_decaying_tail() {
        let flat = vec![dvector![1.0]; 50];
        assert_eq!(l2_norm(&flat, Horizon::Unbounded), Err(Error::Divergent));
    }

    #[test]
    fn constructor_validates() {
        let a = DMatrix::zeros(2, 3);
        assert!(DiscreteLti::new(a, DMatrix::zeros(2, 1), DMatrix::zeros(1, 2), 1.0).is_err());
        let a = DMatrix::zeros(2, 2);
        assert!(DiscreteLti::new(a.clone(), DMatrix::zeros(2, 1), DMatrix::zeros(1, 2), 0.0).is_err());
        assert!(ContinuousLti::new(a, DMatrix::zeros(3, 1), DMatrix::zeros(1, 2)).is_err());
    }
}
