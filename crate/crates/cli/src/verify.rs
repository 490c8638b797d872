use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use retrofit::linalg::{orthonormal_basis, spectral_radius};
use retrofit::lti::DiscreteLti;
use retrofit::projection::{biconjugate, build_projection, PortSet};
use retrofit::retrofit::{design, expand, finite_time_output_matching_check, DesignOptions, InitialGuess, RetrofitController};
use retrofit::sim::{closed_loop_radius, run, Experiment, PreexistingController, RunOptions};
use retrofit::Result;

use crate::Outcome;

const CASCADE_TOL: f64 = 1e-8;
const MATCHING_TOL: f64 = 1e-9;
const INVERSE_TOL: f64 = 1e-10;
const BOUND_SLACK: f64 = 1e-6;
const STEPS: usize = 100;
const SAMPLES: usize = 50;

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.name, if self.pass { "PASS" } else { "FAIL" }, self.detail)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn ball(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    let r = rng.random::<f64>().powf(1.0 / dim as f64);
    gaussian_vec(rng, dim).normalize() * r
}

struct Instance {
    sys: DiscreteLti,
    ports: PortSet,
    x_basis: DMatrix<f64>,
    opts: DesignOptions,
}

fn instance(rng: &mut ChaCha8Rng) -> Result<Instance> {
    let n = rng.random_range(4..=12);
    let m = rng.random_range(2..=4);
    let radius = rng.random_range(0.5..0.95);
    let a = gaussian(rng, n, n);
    let a = &a * (radius / spectral_radius(&a)?);
    let sys = DiscreteLti::new(a, gaussian(rng, n, m), gaussian(rng, m, n), 1.0)?;
    let ports = PortSet::new(vec![rng.random_range(0..m)], m)?;
    let x_dim = rng.random_range(1..=2);
    let x_basis = gaussian(rng, n, x_dim);
    let opts = DesignOptions {
        nu: rng.random_range(1..=3),
        tau: rng.random_range(1..=3),
        initial_guess: if rng.random_bool(0.5) { InitialGuess::Zero } else { InitialGuess::Exact },
        ..Default::default()
    };
    Ok(Instance { sys, ports, x_basis, opts })
}

fn stabilizing_gain(rng: &mut ChaCha8Rng, sys: &DiscreteLti) -> Result<DMatrix<f64>> {
    loop {
        let f = gaussian(rng, sys.m(), sys.p()) * rng.random_range(0.01..0.3);
        if (PreexistingController::Static { f: f.clone() }).closed_loop_radius(sys)? < 1.0 {
            return Ok(f);
        }
    }
}

#[derive(Default)]
struct Worst {
    cascade: f64,
    matching: f64,
    radius: f64,
    lemma: f64,
    inverse: f64,
}

fn trial(rng: &mut ChaCha8Rng, w: &mut Worst) -> Result<()> {
    let inst = instance(rng)?;
    let (sys, ports) = (&inst.sys, &inst.ports);
    let n = sys.n();

    let built = build_projection(sys, ports, inst.opts.nu, inst.opts.tau, &inst.x_basis, n)?;
    let exp = expand(sys, &built.projection, ports)?;
    let mut x = gaussian_vec(rng, n);
    let mut xhat = DVector::zeros(built.projection.rank());
    let (mut xi, mut xi_hat) = exp.to_cascade(&x, &xhat);
    let mut xs = Vec::with_capacity(STEPS);
    for _ in 0..STEPS {
        xs.push(x.clone());
        let v = gaussian_vec(rng, sys.m());
        let vhat = gaussian_vec(rng, ports.len());
        (x, xhat) = exp.redundant_step(&x, &xhat, &v, &vhat);
        (xi, xi_hat) = exp.cascade_step(&xi, &xi_hat, &v, &vhat);
        let (xb, _) = exp.from_cascade(&xi, &xi_hat);
        w.cascade = w.cascade.max((&x - xb).amax() / x.amax().max(1.0));
    }
    let scale = xs.iter().map(|x| x.norm()).fold(1.0, f64::max);
    w.matching = w.matching.max(finite_time_output_matching_check(&exp, built.tau, &xs) / scale);

    let d = design(sys, ports, &inst.x_basis, &inst.opts)?;
    let x0 = DVector::zeros(n);
    for _ in 0..3 {
        let k = PreexistingController::Static {
            f: stabilizing_gain(rng, sys)?,
        };
        w.radius = w.radius.max(closed_loop_radius(sys, &k, &[d.controller(&x0)?])?);
    }

    let proj = &d.built.projection;
    let shape = &proj.pdag * orthonormal_basis(&inst.x_basis, 1e-12);
    let z_map = d.initial_guess.map(proj)?;
    let v = DVector::zeros(sys.m());
    for _ in 0..SAMPLES {
        let mut state = &shape * ball(rng, shape.ncols());
        let mut ctl = RetrofitController::new(d.model.clone(), d.gains.clone(), ports.clone(), &z_map * &state)?;
        let (mut energy, mut peak) = (0.0, 0.0f64);
        for t in 0..100_000 {
            let e = state.norm_squared() + ctl.zhat.norm_squared();
            energy += state.norm_squared();
            peak = peak.max(e);
            if t > ctl.tau() && e <= 1e-30 * peak.max(f64::MIN_POSITIVE) {
                break;
            }
            let vhat = ctl.step(&(&d.model.chat * &state), &v)?;
            state = &d.model.ahat * &state + &d.model.bhat * vhat;
        }
        w.lemma = w.lemma.max(energy.sqrt() / d.certificate.epsilon);
    }

    let k = rng.random_range(1..=n.div_ceil(2));
    let p = biconjugate(&gaussian(rng, n, k), &gaussian(rng, n, k))?;
    w.inverse = w.inverse.max((&p.pdag * &p.p - DMatrix::identity(k, k)).amax());
    Ok(())
}

/// Structural checks on `trials` random stable plants.
pub fn random_instance_checks(seed: u64, trials: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Worst::default();
    let mut errors = Vec::new();
    for i in 0..trials {
        if let Err(e) = trial(&mut rng, &mut w) {
            errors.push(format!("trial {i}: {e}"));
        }
    }
    let mut checks = vec![
        Check {
            name: "cascade equivalence",
            pass: w.cascade <= CASCADE_TOL,
            detail: format!("worst gap {:.2e}", w.cascade),
        },
        Check {
            name: "finite-time output matching",
            pass: w.matching <= MATCHING_TOL,
            detail: format!("worst deviation {:.2e}", w.matching),
        },
        Check {
            name: "stability under fresh preexisting gains",
            pass: w.radius < 1.0,
            detail: format!("largest closed-loop radius {:.6}", w.radius),
        },
        Check {
            name: "reduced-loop certificate",
            pass: w.lemma <= 1.0 + BOUND_SLACK,
            detail: format!("largest norm / epsilon {:.4}", w.lemma),
        },
        Check {
            name: "biconjugation left inverse",
            pass: w.inverse <= INVERSE_TOL,
            detail: format!("worst entry {:.2e}", w.inverse),
        },
    ];
    checks.push(Check {
        name: "instance setup",
        pass: errors.is_empty(),
        detail: if errors.is_empty() { format!("{trials} trials") } else { errors.join("; ") },
    });
    checks
}

/// The configured fault and random states of the fault domain stay within
/// `γ_K ε ‖x₀‖`.
pub fn experiment_bound(exp: &Experiment) -> Outcome<Check> {
    let prep = exp.prepare()?;
    let d = prep.design()?;
    let opts: RunOptions = prep.run_options(Some(&d));
    let orth = orthonormal_basis(&prep.x_basis, 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut starts = vec![prep.x0.clone()];
    starts.extend((0..SAMPLES).map(|_| &orth * ball(&mut rng, orth.ncols())));
    let (mut worst, mut pass) = (0.0f64, true);
    for x0 in &starts {
        let r = run(&prep.sys, &prep.k, vec![d.controller(x0)?], x0, &opts)?;
        match (r.norms, r.bound) {
            (Some(n), Some(b)) => {
                pass &= b.pass;
                if b.limit > 0.0 {
                    worst = worst.max(n.state / b.limit);
                }
            }
            _ => pass = false,
        }
    }
    Ok(Check {
        name: "plant-level certificate",
        pass,
        detail: format!("{} initial states, largest norm / bound {worst:.4}", starts.len()),
    })
}
