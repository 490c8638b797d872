//! Closed-loop simulation of the plant with its preexisting controller and
//! any number of retrofit controllers, plus the experiment drivers.

mod experiment;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::spectral_radius;
use crate::lti::{l2_norm, DiscreteLti, Horizon, Trajectory};
use crate::powergrid::IndexMap;
use crate::retrofit::{compose_retrofits, CertifiedBound, RetrofitController};

pub use experiment::{
    common_stable_rank, match_input_energy, naive_baseline, rank_sweep, DesignKnobs, EnergyMatch, Experiment, FaultSpec, GuessRule,
    NetworkSource, Prepared, SweepRow,
};

/// The controller already stabilizing the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PreexistingController {
    /// `v_t = F y_t`.
    Static { f: DMatrix<f64> },
    /// `η_{m(t+1)} = G η_{mt} + H y_{mt}`, `w_{mt} = F η_{mt}`, with `v` holding
    /// `w_{mt}` over the `m_rate` base steps that follow.
    Dynamic {
        g: DMatrix<f64>,
        h: DMatrix<f64>,
        f: DMatrix<f64>,
        m_rate: usize,
    },
}

impl PreexistingController {
    pub fn zero(sys: &DiscreteLti) -> Self {
        PreexistingController::Static {
            f: DMatrix::zeros(sys.m(), sys.p()),
        }
    }

    /// Base steps per controller update.
    pub fn rate(&self) -> usize {
        match self {
            PreexistingController::Static { .. } => 1,
            PreexistingController::Dynamic { m_rate, .. } => *m_rate,
        }
    }

    fn order(&self) -> usize {
        match self {
            PreexistingController::Static { .. } => 0,
            PreexistingController::Dynamic { g, .. } => g.nrows(),
        }
    }

    pub fn check(&self, sys: &DiscreteLti) -> Result<()> {
        let (m, p) = (sys.m(), sys.p());
        let shape = |what: &'static str, mat: &DMatrix<f64>, r: usize, c: usize| {
            if mat.shape() == (r, c) {
                Ok(())
            } else {
                Err(Error::dim(what, format!("{r}x{c}"), format!("{}x{}", mat.nrows(), mat.ncols())))
            }
        };
        match self {
            PreexistingController::Static { f } => shape("static gain F", f, m, p),
            PreexistingController::Dynamic { g, h, f, m_rate } => {
                if *m_rate == 0 {
                    return Err(Error::InvalidArgument("rate multiplier must be at least 1".into()));
                }
                let q = g.nrows();
                shape("controller matrix G", g, q, q)?;
                shape("controller matrix H", h, q, p)?;
                shape("controller matrix F", f, m, q)
            }
        }
    }

    /// Closed loop over one controller period: `A + B F C` for the static
    /// variant, `[[A^m, (Σ_k A^k B) F], [H C, G]]` for the dynamic one.
    pub fn lifted_matrix(&self, sys: &DiscreteLti) -> Result<DMatrix<f64>> {
        self.check(sys)?;
        match self {
            PreexistingController::Static { f } => Ok(&sys.a + &sys.b * f * &sys.c),
            PreexistingController::Dynamic { g, h, f, m_rate } => {
                let n = sys.n();
                let q = g.nrows();
                let mut power = DMatrix::identity(n, n);
                let mut held = DMatrix::zeros(n, sys.m());
                for _ in 0..*m_rate {
                    held += &power * &sys.b;
                    power = &sys.a * power;
                }
                let mut lifted = DMatrix::zeros(n + q, n + q);
                lifted.view_mut((0, 0), (n, n)).copy_from(&power);
                lifted.view_mut((0, n), (n, q)).copy_from(&(held * f));
                lifted.view_mut((n, 0), (q, n)).copy_from(&(h * &sys.c));
                lifted.view_mut((n, n), (q, q)).copy_from(g);
                Ok(lifted)
            }
        }
    }

    /// Per-base-step spectral radius of the closed loop without retrofits.
    pub fn closed_loop_radius(&self, sys: &DiscreteLti) -> Result<f64> {
        Ok(spectral_radius(&self.lifted_matrix(sys)?)?.powf(1.0 / self.rate() as f64))
    }
}

#[derive(Debug, Clone)]
struct KState {
    eta: DVector<f64>,
    held: DVector<f64>,
}

impl KState {
    fn output(&mut self, k: &PreexistingController, t: usize, y: &DVector<f64>) -> DVector<f64> {
        match k {
            PreexistingController::Static { f } => f * y,
            PreexistingController::Dynamic { g, h, f, m_rate } => {
                if t % m_rate == 0 {
                    self.held = f * &self.eta;
                    self.eta = g * &self.eta + h * y;
                }
                self.held.clone()
            }
        }
    }
}

/// Coordinates of the composite closed-loop state `(x, η, w, (x̂_α, ẑ_α)_α)`.
struct Layout {
    n: usize,
    q: usize,
    m: usize,
    retro: Vec<usize>,
}

impl Layout {
    fn eta(&self) -> usize {
        self.n
    }
    fn held(&self) -> usize {
        self.n + self.q
    }
    fn xhat(&self, k: usize) -> usize {
        self.n + self.q + self.m + self.retro[..k].iter().map(|r| 2 * r).sum::<usize>()
    }
    fn zhat(&self, k: usize) -> usize {
        self.xhat(k) + self.retro[k]
    }
    fn dim(&self) -> usize {
        self.xhat(self.retro.len())
    }
}

/// Product of the per-step closed-loop matrices over one controller period,
/// for the time-invariant regime after every retrofit has switched to state
/// feedback. Static controllers give a single step.
pub fn closed_loop_monodromy(sys: &DiscreteLti, k: &PreexistingController, retrofits: &[RetrofitController]) -> Result<DMatrix<f64>> {
    k.check(sys)?;
    let (n, m) = (sys.n(), sys.m());
    let dynamic = matches!(k, PreexistingController::Dynamic { .. });
    let layout = Layout {
        n,
        q: k.order(),
        m: if dynamic { m } else { 0 },
        retro: retrofits.iter().map(|r| r.model.dim()).collect(),
    };
    for r in retrofits {
        if r.plant_inputs() != m {
            return Err(Error::dim("retrofit plant inputs", m, r.plant_inputs()));
        }
    }
    let dim = layout.dim();
    let mut total = DMatrix::identity(dim, dim);
    for phase in 0..k.rate() {
        // rows of v (preexisting input) and of each retrofit injection as maps of the state
        let mut v = DMatrix::zeros(m, dim);
        let mut step = DMatrix::zeros(dim, dim);
        match k {
            PreexistingController::Static { f } => {
                v.view_mut((0, 0), (m, n)).copy_from(&(f * &sys.c));
            }
            PreexistingController::Dynamic { g, h, f, .. } => {
                let q = layout.q;
                if phase == 0 {
                    v.view_mut((0, layout.eta()), (m, q)).copy_from(f);
                    step.view_mut((layout.eta(), 0), (q, n)).copy_from(&(h * &sys.c));
                    step.view_mut((layout.eta(), layout.eta()), (q, q)).copy_from(g);
                } else {
                    v.view_mut((0, layout.held()), (m, m)).copy_from(&DMatrix::identity(m, m));
                    step.view_mut((layout.eta(), layout.eta()), (q, q)).copy_from(&DMatrix::identity(q, q));
                }
                let vv = v.clone();
                step.view_mut((layout.held(), 0), (m, dim)).copy_from(&vv);
            }
        }
        let injections: Vec<DMatrix<f64>> = retrofits
            .iter()
            .enumerate()
            .map(|(a, r)| {
                let mut inj = DMatrix::zeros(m, dim);
                let e = r.ports.selector(m);
                inj.view_mut((0, layout.zhat(a)), (m, layout.retro[a])).copy_from(&(e * &r.gains.g));
                inj
            })
            .collect();
        let retro_total = injections.iter().fold(DMatrix::zeros(m, dim), |acc, i| acc + i);
        let u = &v + &retro_total;
        let mut xrows = &sys.b * &u;
        let mut xa = xrows.view_mut((0, 0), (n, n));
        xa += &sys.a;
        step.view_mut((0, 0), (n, dim)).copy_from(&xrows);
        for (a, r) in retrofits.iter().enumerate() {
            let nh = layout.retro[a];
            let md = &r.model;
            let mut xh = &md.pdag_b * (&u - &injections[a]);
            let mut xa = xh.view_mut((0, layout.xhat(a)), (nh, nh));
            xa += &md.ahat;
            step.view_mut((layout.xhat(a), 0), (nh, dim)).copy_from(&xh);
            let zz = &md.ahat + &md.bhat * &r.gains.g;
            step.view_mut((layout.zhat(a), layout.zhat(a)), (nh, nh)).copy_from(&zz);
        }
        total = step * total;
    }
    Ok(total)
}

/// Per-base-step spectral radius of the assembled closed loop.
pub fn closed_loop_radius(sys: &DiscreteLti, k: &PreexistingController, retrofits: &[RetrofitController]) -> Result<f64> {
    let mono = closed_loop_monodromy(sys, k, retrofits)?;
    if mono.is_empty() {
        return Ok(0.0);
    }
    Ok(spectral_radius(&mono)?.powf(1.0 / k.rate() as f64))
}

/// When to stop a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HorizonPolicy {
    /// Stop once the closed-loop state energy drops below `rel_energy` of
    /// its running peak, after at most `max_steps` steps.
    Decay { rel_energy: f64, max_steps: usize },
    /// Exactly this many steps.
    Fixed { steps: usize },
}

impl Default for HorizonPolicy {
    fn default() -> Self {
        HorizonPolicy::Decay {
            rel_energy: 1e-12,
            max_steps: 100_000,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub horizon: HorizonPolicy,
    /// Needed for the angle and frequency norms.
    pub index_map: Option<IndexMap>,
    /// Certificate to check the recorded state norm against; the limit is
    /// `γ_K ε ‖x₀‖`.
    pub certificate: Option<CertifiedBound>,
}

/// `l2` norms of the recorded signals, `t = 0..=T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub state: f64,
    pub theta: Option<f64>,
    pub omega: Option<f64>,
    /// Total retrofit injection.
    pub retrofit_input: f64,
    /// Preexisting controller output.
    pub preexisting_input: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub limit: f64,
    pub pass: bool,
}

/// Relative slack allowed when comparing a truncated norm with a bound.
pub const BOUND_SLACK: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct RunResult {
    /// States, plant inputs `u_t` and outputs.
    pub trajectory: Trajectory,
    pub preexisting: Vec<DVector<f64>>,
    /// Total retrofit injection `Σ_α e_{J_α} v̂_α` at each step.
    pub retrofit: Vec<DVector<f64>>,
    /// `None` when the closed loop diverges.
    pub norms: Option<Norms>,
    pub bound: Option<BoundCheck>,
    /// Per-step spectral radius of the assembled closed loop.
    pub spectral_radius: f64,
    /// The step cap was hit before the decay criterion.
    pub truncated: bool,
}

impl RunResult {
    pub fn diverged(&self) -> bool {
        self.norms.is_none()
    }
}

/// Simulates `x_{t+1} = A x_t + B u_t` with `u_t = v_t + Σ_α e_{J_α} v̂_{α,t}`.
pub fn run(
    sys: &DiscreteLti,
    k: &PreexistingController,
    retrofits: Vec<RetrofitController>,
    x0: &DVector<f64>,
    opts: &RunOptions,
) -> Result<RunResult> {
    k.check(sys)?;
    if x0.len() != sys.n() {
        return Err(Error::dim("initial state", sys.n(), x0.len()));
    }
    if sys.d.iter().any(|&v| v != 0.0) {
        return Err(Error::InvalidArgument("closed-loop simulation needs a plant without feedthrough".into()));
    }
    if let Some(map) = &opts.index_map {
        if map.state_dim() != sys.n() {
            return Err(Error::dim("index map", sys.n(), map.state_dim()));
        }
    }
    let radius = closed_loop_radius(sys, k, &retrofits)?;
    let mut bank = compose_retrofits(retrofits)?;
    let rate = k.rate();
    let (max_steps, rel_energy, fixed) = match opts.horizon {
        HorizonPolicy::Decay { rel_energy, max_steps } => (max_steps, rel_energy, false),
        HorizonPolicy::Fixed { steps } => (steps, 0.0, true),
    };
    let stable = radius < 1.0;
    if !stable {
        warn!("assembled closed loop is unstable (spectral radius {radius:.6})");
    }

    let mut kstate = KState {
        eta: DVector::zeros(k.order()),
        held: DVector::zeros(sys.m()),
    };
    let mut traj = Trajectory {
        dt: sys.dt,
        ..Default::default()
    };
    let mut pre = Vec::new();
    let mut retro = Vec::new();
    let mut x = x0.clone();
    // retrofit states are left out so that an inert retrofit cannot change the horizon
    let energy = |x: &DVector<f64>, ks: &KState| x.norm_squared() + ks.eta.norm_squared();
    let mut peak = energy(&x, &kstate);
    let mut truncated = false;
    let mut t = 0;
    loop {
        let e = energy(&x, &kstate);
        if !e.is_finite() {
            break;
        }
        peak = peak.max(e);
        if fixed {
            if t == max_steps {
                break;
            }
        } else if t % rate == 0 && e <= rel_energy * peak {
            break;
        } else if t >= max_steps {
            truncated = stable;
            break;
        } else if !stable && e > 1e24 * peak.max(f64::MIN_POSITIVE) {
            break;
        }
        let y = &sys.c * &x;
        let v = kstate.output(k, t, &y);
        let injection = bank.step(&y, &v)?;
        let u = &v + &injection;
        let next = &sys.a * &x + &sys.b * &u;
        traj.outputs.push(y);
        traj.states.push(std::mem::replace(&mut x, next));
        traj.inputs.push(u);
        pre.push(v);
        retro.push(injection);
        t += 1;
    }
    traj.outputs.push(&sys.c * &x);
    traj.states.push(x);
    if truncated {
        warn!("simulation truncated at {max_steps} steps before the state decayed");
    }
    debug!("simulated {t} steps, closed-loop radius {radius:.6}");

    let norms = if stable {
        let h = Horizon::Finite(traj.states.len());
        let pick = |idx: &[usize]| -> Vec<DVector<f64>> {
            traj.states.iter().map(|s| DVector::from_iterator(idx.len(), idx.iter().map(|&i| s[i]))).collect()
        };
        let (theta, omega) = match &opts.index_map {
            Some(map) => (Some(l2_norm(&pick(&map.theta), h)?), Some(l2_norm(&pick(&map.omega), h)?)),
            None => (None, None),
        };
        Some(Norms {
            state: l2_norm(&traj.states, h)?,
            theta,
            omega,
            retrofit_input: l2_norm(&retro, h)?,
            preexisting_input: l2_norm(&pre, h)?,
        })
    } else {
        None
    };
    let bound = opts.certificate.as_ref().and_then(|c| c.state_bound()).map(|b| {
        let limit = b * x0.norm();
        let pass = norms.is_some_and(|n| n.state <= limit * (1.0 + BOUND_SLACK));
        BoundCheck { limit, pass }
    });
    Ok(RunResult {
        trajectory: traj,
        preexisting: pre,
        retrofit: retro,
        norms,
        bound,
        spectral_radius: radius,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::PortSet;
    use crate::retrofit::{ReducedModel, RetrofitGains};
    use nalgebra::dmatrix;

    fn plant() -> DiscreteLti {
        DiscreteLti::new(
            dmatrix![0.9, 0.2, 0.0; -0.1, 0.8, 0.1; 0.0, 0.3, 0.7],
            dmatrix![1.0, 0.0; 0.0, 0.0; 0.0, 1.0],
            dmatrix![1.0, 0.0, 0.0; 0.0, 0.0, 1.0],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_state_stays_zero() {
        let sys = plant();
        let r = run(&sys, &PreexistingController::zero(&sys), vec![], &DVector::zeros(3), &RunOptions::default()).unwrap();
        assert!(r.trajectory.states.iter().all(|x| x.norm() == 0.0));
        assert_eq!(r.norms.unwrap().state, 0.0);
    }

    #[test]
    fn inert_retrofit_is_invisible() {
        let sys = plant();
        let k = PreexistingController::Static {
            f: dmatrix![-0.1, 0.0; 0.0, -0.05],
        };
        let model = ReducedModel {
            ahat: dmatrix![0.3],
            bhat: dmatrix![1.0],
            chat: dmatrix![1.0],
            pdag_b: dmatrix![0.5, 0.1],
        };
        let c = RetrofitController::new(model, RetrofitGains::zero(1, 1, 1, 2), PortSet::new(vec![0], 2).unwrap(), DVector::from_element(1, 1.0))
            .unwrap();
        let x0 = DVector::from_vec(vec![1.0, -0.5, 0.2]);
        let a = run(&sys, &k, vec![], &x0, &RunOptions::default()).unwrap();
        let b = run(&sys, &k, vec![c], &x0, &RunOptions::default()).unwrap();
        assert_eq!(a.trajectory.states, b.trajectory.states);
    }

    #[test]
    fn fixed_horizon_length() {
        let sys = plant();
        let opts = RunOptions {
            horizon: HorizonPolicy::Fixed { steps: 7 },
            ..Default::default()
        };
        let r = run(&sys, &PreexistingController::zero(&sys), vec![], &DVector::from_element(3, 1.0), &opts).unwrap();
        assert_eq!(r.trajectory.states.len(), 8);
        assert_eq!(r.trajectory.inputs.len(), 7);
    }

    #[test]
    fn static_monodromy_is_closed_loop() {
        let sys = plant();
        let f = dmatrix![-0.2, 0.1; 0.0, -0.3];
        let k = PreexistingController::Static { f: f.clone() };
        let m = closed_loop_monodromy(&sys, &k, &[]).unwrap();
        assert_eq!(m, &sys.a + &sys.b * f * &sys.c);
    }

    #[test]
    fn dynamic_monodromy_matches_lifted_matrix() {
        let sys = plant();
        let k = PreexistingController::Dynamic {
            g: dmatrix![0.5, 0.0; 0.1, 0.2],
            h: dmatrix![-0.1, 0.0; 0.0, -0.2],
            f: dmatrix![1.0, 0.0; 0.0, 0.5],
            m_rate: 3,
        };
        let mono = closed_loop_monodromy(&sys, &k, &[]).unwrap();
        let lifted = k.lifted_matrix(&sys).unwrap();
        // the monodromy also carries the held input, which is overwritten at phase 0
        let n = 5;
        assert!((mono.view((0, 0), (n, n)) - &lifted).norm() < 1e-14);
        assert!((closed_loop_radius(&sys, &k, &[]).unwrap() - k.closed_loop_radius(&sys).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn dynamic_simulation_holds_input() {
        let sys = plant();
        let k = PreexistingController::Dynamic {
            g: dmatrix![0.5],
            h: dmatrix![1.0, 1.0],
            f: dmatrix![-0.1; -0.1],
            m_rate: 2,
        };
        let opts = RunOptions {
            horizon: HorizonPolicy::Fixed { steps: 6 },
            ..Default::default()
        };
        let r = run(&sys, &k, vec![], &DVector::from_element(3, 1.0), &opts).unwrap();
        for pair in r.preexisting.chunks(2) {
            assert_eq!(pair[0], pair[1]);
        }
        // w_0 = F η_0 = 0, then η_2 = H y_0 = 2, so w_2 = -0.2
        assert_eq!(r.preexisting[0].norm(), 0.0);
        assert!((r.preexisting[2][0] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn unstable_loop_reports_divergence() {
        let sys = DiscreteLti::new(dmatrix![0.9], dmatrix![1.0], dmatrix![1.0], 1.0).unwrap();
        let k = PreexistingController::Static { f: dmatrix![0.5] };
        let r = run(&sys, &k, vec![], &DVector::from_element(1, 1.0), &RunOptions::default()).unwrap();
        assert!(r.diverged());
        assert!(r.spectral_radius > 1.0);
    }

    #[test]
    fn decay_horizon_stops_early() {
        let sys = DiscreteLti::new(dmatrix![0.5], dmatrix![1.0], dmatrix![1.0], 1.0).unwrap();
        let r = run(&sys, &PreexistingController::zero(&sys), vec![], &DVector::from_element(1, 1.0), &RunOptions::default()).unwrap();
        assert!(!r.truncated);
        // 0.25^t <= 1e-12 first at t = 20
        assert_eq!(r.trajectory.states.len(), 21);
        assert!((r.norms.unwrap().state - (1.0f64 / 0.75).sqrt()).abs() < 1e-12);
    }
}
