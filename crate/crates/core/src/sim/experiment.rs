use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{run, HorizonPolicy, PreexistingController, RunOptions, RunResult};
use crate::error::{Error, Result};
use crate::lti::{solve_dare, zoh_discretize, DiscreteLti};
use crate::powergrid::{
    assemble, broadcast_agc, fault_domain, isolated_area_model, random_network, read_network, FaultScenario, IndexMap,
    Network, RandomNetworkParams,
};
use crate::projection::{build_projection, projection_of_rank, BuiltProjection, PortSet};
use crate::retrofit::{design, design_with_projection, DesignOptions, InitialGuess, RetrofitDesign, TerminalCost, Weights};

/// Where the network comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSource {
    File {
        path: PathBuf,
    },
    Random {
        seed: u64,
        generators: usize,
        loads: usize,
        #[serde(default)]
        params: RandomNetworkParams,
    },
}

impl NetworkSource {
    pub fn load(&self) -> Result<Network> {
        match self {
            NetworkSource::File { path } => read_network(path),
            NetworkSource::Random {
                seed,
                generators,
                loads,
                params,
            } => random_network(*seed, *generators, *loads, params),
        }
    }
}

/// Rule for the observer start `ẑ₀ = P† x̃₀`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessRule {
    /// `x̃₀` keeps the frequencies of `x₀` and zeroes every angle.
    #[default]
    Frequency,
    Zero,
    /// `x̃₀ = x₀`.
    Exact,
}

/// Scalar design knobs; the state weight multiplies `P^T P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignKnobs {
    pub nu: usize,
    pub tau: usize,
    pub max_rank: Option<usize>,
    pub rank: Option<usize>,
    pub state_weight: f64,
    pub input_weight: f64,
    pub terminal: TerminalCost,
}

impl Default for DesignKnobs {
    fn default() -> Self {
        let d = DesignOptions::default();
        Self {
            nu: d.nu,
            tau: d.tau,
            max_rank: None,
            rank: None,
            state_weight: 1.0,
            input_weight: 1.0,
            terminal: d.terminal,
        }
    }
}

/// Fault location and size. `alpha` is a zero-based generator position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultSpec {
    pub alpha: usize,
    /// Initial `(θ_α, ω_α)` deflection.
    pub delta0: [f64; 2],
    pub guess: GuessRule,
}

impl Default for FaultSpec {
    fn default() -> Self {
        Self {
            alpha: 0,
            delta0: [1.0, 0.0],
            guess: GuessRule::default(),
        }
    }
}

/// A full retrofit experiment on a power network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub network: NetworkSource,
    pub dt: f64,
    pub kappa: f64,
    /// Defaults to uniform participation.
    pub participation: Option<Vec<f64>>,
    pub fault: FaultSpec,
    /// Zero-based generator positions used as retrofit ports; defaults to `[alpha]`.
    pub ports: Option<Vec<usize>>,
    pub design: DesignKnobs,
    pub horizon: HorizonPolicy,
    /// Target `l2` norm of the retrofit input; the input weight is then tuned.
    pub input_energy: Option<f64>,
    /// Generators of the area used by the naive LQR baseline; defaults to the ports.
    pub naive_area: Option<Vec<usize>>,
    pub output_dir: Option<PathBuf>,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            network: NetworkSource::Random {
                seed: 0,
                generators: 10,
                loads: 12,
                params: RandomNetworkParams::default(),
            },
            dt: 1.0,
            kappa: 0.01,
            participation: None,
            fault: FaultSpec::default(),
            ports: None,
            design: DesignKnobs::default(),
            horizon: HorizonPolicy::default(),
            input_energy: None,
            naive_area: None,
            output_dir: None,
        }
    }
}

impl Experiment {
    /// Parses an experiment document; `source_name` prefixes error locations.
    pub fn from_toml(text: &str, source_name: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::schema(text, source_name, e.span(), e.message().trim_end()))
    }

    /// Reads an experiment file. A relative network path is taken relative
    /// to the file's directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut exp = Self::from_toml(&text, &path.display().to_string())?;
        if let NetworkSource::File { path: net } = &mut exp.network {
            if net.is_relative() {
                if let Some(dir) = path.parent() {
                    *net = dir.join(&*net);
                }
            }
        }
        Ok(exp)
    }

    /// Loads the network and builds the sampled plant, the broadcast
    /// controller and the fault data.
    pub fn prepare(&self) -> Result<Prepared> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        let network = self.network.load()?;
        let (csys, map) = assemble(&network)?;
        let sys = zoh_discretize(&csys, self.dt)?;
        let n_gen = network.generators();
        let f = broadcast_agc(n_gen, self.kappa, self.participation.as_deref())?;
        let k = PreexistingController::Static { f: f.clone() };
        let radius = k.closed_loop_radius(&sys)?;
        if radius >= 1.0 {
            return Err(Error::Unstable { radius });
        }
        let scenario = FaultScenario { alpha: self.fault.alpha };
        let x_basis = fault_domain(&network, &map, &scenario)?;
        let x0 = &x_basis * DVector::from_row_slice(&self.fault.delta0);
        let ports = PortSet::new(self.ports.clone().unwrap_or_else(|| vec![self.fault.alpha]), n_gen)?;
        let initial_guess = match self.fault.guess {
            GuessRule::Frequency => InitialGuess::Masked {
                keep: network.frequency_mask(&map),
            },
            GuessRule::Zero => InitialGuess::Zero,
            GuessRule::Exact => InitialGuess::Exact,
        };
        let knobs = &self.design;
        let options = DesignOptions {
            nu: knobs.nu,
            tau: knobs.tau,
            max_rank: knobs.max_rank,
            rank: knobs.rank,
            weights: Weights {
                state: (knobs.state_weight != 1.0).then(|| DMatrix::identity(sys.n(), sys.n()) * knobs.state_weight),
                input: Some(DMatrix::identity(1, 1) * knobs.input_weight),
            },
            terminal: knobs.terminal,
            initial_guess,
        };
        Ok(Prepared {
            network,
            map,
            sys,
            f,
            k,
            x_basis,
            x0,
            ports,
            options,
            horizon: self.horizon,
        })
    }
}

/// Everything derived from an [`Experiment`] before any retrofit design.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub network: Network,
    pub map: IndexMap,
    pub sys: DiscreteLti,
    pub f: DMatrix<f64>,
    pub k: PreexistingController,
    pub x_basis: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub ports: PortSet,
    pub options: DesignOptions,
    pub horizon: HorizonPolicy,
}

impl Prepared {
    pub fn with_ports(&self, ports: PortSet) -> Self {
        Self { ports, ..self.clone() }
    }

    pub fn with_input_weight(&self, r: f64) -> Self {
        let mut out = self.clone();
        out.options.weights.input = Some(DMatrix::identity(1, 1) * r);
        out
    }

    pub fn run_options(&self, design: Option<&RetrofitDesign>) -> RunOptions {
        RunOptions {
            horizon: self.horizon,
            index_map: Some(self.map.clone()),
            certificate: design.map(|d| d.certificate),
        }
    }

    /// Retrofit design with `γ_K` attached.
    pub fn design(&self) -> Result<RetrofitDesign> {
        let mut d = design(&self.sys, &self.ports, &self.x_basis, &self.options)?;
        d.attach_gamma_k(&self.sys, &self.f)?;
        Ok(d)
    }

    /// The projection the design pipeline would use (fixed rank or escalation).
    pub fn projection(&self) -> Result<BuiltProjection> {
        let o = &self.options;
        match o.rank {
            Some(r) => projection_of_rank(&self.sys, &self.ports, r, &self.x_basis),
            None => build_projection(&self.sys, &self.ports, o.nu, o.tau, &self.x_basis, o.max_rank.unwrap_or(self.sys.n())),
        }
    }

    /// Broadcast control only.
    pub fn baseline(&self) -> Result<RunResult> {
        run(&self.sys, &self.k, vec![], &self.x0, &self.run_options(None))
    }

    pub fn run_design(&self, design: &RetrofitDesign) -> Result<RunResult> {
        let controller = design.controller(&self.x0)?;
        run(&self.sys, &self.k, vec![controller], &self.x0, &self.run_options(Some(design)))
    }
}

/// One rank of a sweep. Norm columns are empty when `Â` is unstable or the
/// design failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rank: usize,
    pub nu: Option<usize>,
    pub tau: Option<usize>,
    pub reduced_radius: Option<f64>,
    pub stable: bool,
    pub omega: Option<f64>,
    pub theta: Option<f64>,
    pub state: Option<f64>,
    pub input: Option<f64>,
    pub epsilon: Option<f64>,
    pub gamma_k: Option<f64>,
    pub bound_pass: Option<bool>,
    pub closed_loop_radius: Option<f64>,
    pub note: Option<String>,
}

impl SweepRow {
    fn empty(rank: usize) -> Self {
        Self {
            rank,
            nu: None,
            tau: None,
            reduced_radius: None,
            stable: false,
            omega: None,
            theta: None,
            state: None,
            input: None,
            epsilon: None,
            gamma_k: None,
            bound_pass: None,
            closed_loop_radius: None,
            note: None,
        }
    }
}

fn sweep_row(prep: &Prepared, rank: usize) -> SweepRow {
    let mut row = SweepRow::empty(rank);
    let built = match projection_of_rank(&prep.sys, &prep.ports, rank, &prep.x_basis) {
        Ok(b) => b,
        Err(e) => {
            row.note = Some(e.to_string());
            return row;
        }
    };
    row.nu = Some(built.nu);
    row.tau = Some(built.tau);
    row.reduced_radius = Some(built.spectral_radius);
    if built.spectral_radius >= 1.0 {
        row.note = Some("reduced model unstable".into());
        return row;
    }
    row.stable = true;
    let result = design_with_projection(&prep.sys, &prep.ports, built, &prep.x_basis, &prep.options).and_then(|mut d| {
        d.attach_gamma_k(&prep.sys, &prep.f)?;
        let r = prep.run_design(&d)?;
        Ok((d, r))
    });
    match result {
        Ok((d, r)) => {
            row.epsilon = Some(d.certificate.epsilon);
            row.gamma_k = d.certificate.gamma_k;
            row.closed_loop_radius = Some(r.spectral_radius);
            row.bound_pass = r.bound.map(|b| b.pass);
            if let Some(n) = r.norms {
                row.omega = n.omega;
                row.theta = n.theta;
                row.state = Some(n.state);
                row.input = Some(n.retrofit_input);
            }
            if r.truncated {
                row.note = Some("horizon truncated".into());
            }
        }
        Err(e) => row.note = Some(e.to_string()),
    }
    row
}

/// Designs and simulates a retrofit controller of each rank in `ranks`.
/// Failures are recorded per row.
pub fn rank_sweep(prep: &Prepared, ranks: &[usize]) -> Vec<SweepRow> {
    let rows: Vec<SweepRow> = std::thread::scope(|s| {
        let handles: Vec<_> = ranks.iter().map(|&r| s.spawn(move || sweep_row(prep, r))).collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    for r in &rows {
        info!("sweep rank {}: stable {}, omega {:?}, theta {:?}", r.rank, r.stable, r.omega, r.theta);
    }
    rows
}

/// Smallest rank `>= start` at which [`projection_of_rank`] yields a stable
/// reduced model for every experiment, so that port sets can be compared at
/// equal controller order.
pub fn common_stable_rank(preps: &[&Prepared], start: usize) -> Option<usize> {
    let n = preps.first()?.sys.n();
    (start.max(1)..=n).find(|&r| {
        preps.iter().all(|p| {
            projection_of_rank(&p.sys, &p.ports, r, &p.x_basis).is_ok_and(|b| b.spectral_radius < 1.0)
        })
    })
}

/// Outcome of [`match_input_energy`].
#[derive(Debug, Clone)]
pub struct EnergyMatch {
    pub input_weight: f64,
    pub input_norm: f64,
    pub matched: bool,
    pub design: RetrofitDesign,
    pub run: RunResult,
}

/// Tunes the input weight `r` (bisection on `log r`) until the retrofit input
/// `l2` norm is within `rel_tol` of `target`.
pub fn match_input_energy(prep: &Prepared, target: f64, rel_tol: f64) -> Result<EnergyMatch> {
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::InvalidArgument(format!("input energy target must be positive, got {target}")));
    }
    let built = prep.projection()?;
    let eval = |log_r: f64| -> Result<EnergyMatch> {
        let r = 10f64.powf(log_r);
        let p = prep.with_input_weight(r);
        let d = design_with_projection(&p.sys, &p.ports, built.clone(), &p.x_basis, &p.options)?;
        let run = p.run_design(&d)?;
        let input_norm = run.norms.map_or(f64::INFINITY, |n| n.retrofit_input);
        Ok(EnergyMatch {
            input_weight: r,
            input_norm,
            matched: (input_norm - target).abs() <= rel_tol * target,
            design: d,
            run,
        })
    };
    // larger input weights give smaller inputs
    let (mut lo, mut hi) = (-8.0f64, 8.0f64);
    let mut log_r = 0.0;
    let mut best: Option<EnergyMatch> = None;
    for _ in 0..60 {
        let cand = eval(log_r)?;
        let too_large = cand.input_norm > target;
        let matched = cand.matched;
        if best.as_ref().map_or(true, |b| (cand.input_norm - target).abs() < (b.input_norm - target).abs()) {
            best = Some(cand);
        }
        if matched {
            break;
        }
        if too_large {
            lo = log_r;
        } else {
            hi = log_r;
        }
        log_r = 0.5 * (lo + hi);
    }
    let mut best = best.expect("at least one evaluation");
    best.design.attach_gamma_k(&prep.sys, &prep.f)?;
    let p = prep.with_input_weight(best.input_weight);
    best.run = p.run_design(&best.design)?;
    if !best.matched {
        warn!("input energy {} not matched to target {target} (weight {})", best.input_norm, best.input_weight);
    }
    Ok(best)
}

/// Naive local LQR: a state feedback designed on the isolated area (boundary
/// edges dropped) and applied at the ports of the full plant together with
/// the broadcast controller.
pub fn naive_baseline(prep: &Prepared, area_generators: &[usize], weights: &Weights) -> Result<(RunResult, DMatrix<f64>)> {
    let net = &prep.network;
    let n_gen = net.generators();
    for &j in prep.ports.indices() {
        if !area_generators.contains(&j) {
            return Err(Error::InvalidArgument(format!("port {j} lies outside the LQR area")));
        }
    }
    let loads: Vec<usize> = (0..net.loads()).filter(|&l| area_generators.contains(&net.partition()[l])).map(|l| n_gen + l).collect();
    let (csys, amap, _) = isolated_area_model(net, area_generators, &loads)?;
    let area = zoh_discretize(&csys, prep.sys.dt)?;
    let local_ports: Vec<usize> = prep
        .ports
        .indices()
        .iter()
        .map(|j| area_generators.iter().position(|g| g == j).expect("checked above"))
        .collect();
    let b = PortSet::new(local_ports, area.m())?.selector(area.m());
    let b_area = &area.b * b;
    let na = area.n();
    let q = match &weights.state {
        None => DMatrix::identity(na, na),
        Some(w) if w.shape() == (1, 1) => DMatrix::identity(na, na) * w[(0, 0)],
        Some(w) if w.shape() == (na, na) => w.clone(),
        Some(w) => return Err(Error::dim("naive LQR state weight", na, w.nrows())),
    };
    let mj = prep.ports.len();
    let r = match &weights.input {
        None => DMatrix::identity(mj, mj),
        Some(w) if w.shape() == (1, 1) => DMatrix::identity(mj, mj) * w[(0, 0)],
        Some(w) => w.clone(),
    };
    let gain = solve_dare(&area.a, &b_area, &q, &r)?.gain;
    // area coordinates -> global coordinates
    let positions: Vec<usize> = area_generators.iter().copied().chain(loads.iter().copied()).collect();
    let mut select = DMatrix::zeros(na, prep.sys.n());
    for (k, &global) in positions.iter().enumerate() {
        select[(amap.theta[k], prep.map.theta[global])] = 1.0;
        select[(amap.omega[k], prep.map.omega[global])] = 1.0;
    }
    let full_gain = prep.ports.selector(prep.sys.m()) * &gain * select;
    let mut closed = prep.sys.clone();
    closed.a += &prep.sys.b * &full_gain;
    let result = run(&closed, &prep.k, vec![], &prep.x0, &prep.run_options(None))?;
    Ok((result, full_gain))
}
