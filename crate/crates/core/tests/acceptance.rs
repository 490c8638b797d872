//! End-to-end acceptance checks. Each test prints one `[k/8] name: PASS|FAIL`
//! line (visible with `--nocapture`) before asserting.

use std::time::Instant;

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use retrofit::linalg::{orthonormal_basis, spectral_radius};
use retrofit::lti::{hinf_norm, solve_dlyap_with, zoh_discretize, ContinuousLti, DiscreteLti};
use retrofit::projection::{biconjugate, build_projection, projection_of_rank, PortSet, Projection};
use retrofit::retrofit::{
    design, design_with_projection, expand, finite_time_output_matching_check, DesignOptions, InitialGuess, RetrofitDesign,
};
use retrofit::sim::{
    closed_loop_radius, common_stable_rank, match_input_energy, rank_sweep, run, Experiment, HorizonPolicy, PreexistingController,
    RunOptions,
};

fn report(k: usize, name: &str, pass: bool, detail: String) {
    println!("[{k}/8] {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Random matrix rescaled to a spectral radius drawn from `range`.
fn with_radius(rng: &mut ChaCha8Rng, n: usize, range: std::ops::Range<f64>) -> DMatrix<f64> {
    let radius = rng.random_range(range);
    let a = gaussian(rng, n, n);
    let r = spectral_radius(&a).unwrap();
    a * (radius / r)
}

/// Uniform sample of the unit ball in `dim` dimensions.
fn ball(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    let g = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let r: f64 = rng.random::<f64>().powf(1.0 / dim as f64);
    g.normalize() * r
}

struct Instance {
    sys: DiscreteLti,
    ports: PortSet,
    x_basis: DMatrix<f64>,
}

/// Stable plant with `m = p` channels, a random port set and a random
/// (possibly empty) initial-state subspace.
fn instance(rng: &mut ChaCha8Rng, max_n: usize) -> Instance {
    let n = rng.random_range(4..=max_n);
    let m = rng.random_range(2..=4.min(n));
    let a = with_radius(rng, n, 0.5..0.97);
    let sys = DiscreteLti::new(a, gaussian(rng, n, m), gaussian(rng, m, n), 1.0).unwrap();
    let mut idx: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        idx.swap(i, rng.random_range(0..=i));
    }
    idx.truncate(rng.random_range(1..=2));
    let x_dim = rng.random_range(0..=2);
    Instance {
        sys,
        ports: PortSet::new(idx, m).unwrap(),
        x_basis: gaussian(rng, n, x_dim),
    }
}

/// Static output feedback `F` with `ρ(A + B F C) < 1`, drawn at random.
fn stabilizing_gain(rng: &mut ChaCha8Rng, sys: &DiscreteLti) -> DMatrix<f64> {
    loop {
        let scale = rng.random_range(0.01..0.3);
        let f = gaussian(rng, sys.m(), sys.p()) * scale;
        let k = PreexistingController::Static { f: f.clone() };
        if k.closed_loop_radius(sys).unwrap() < 1.0 {
            return f;
        }
    }
}

fn random_options(rng: &mut ChaCha8Rng) -> DesignOptions {
    DesignOptions {
        nu: rng.random_range(1..=3),
        tau: rng.random_range(1..=3),
        initial_guess: if rng.random_bool(0.5) { InitialGuess::Zero } else { InitialGuess::Exact },
        ..Default::default()
    }
}

#[test]
fn cascade_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < 100 {
        let inst = instance(&mut rng, 20);
        let opts = random_options(&mut rng);
        let n = inst.sys.n();
        let built = build_projection(&inst.sys, &inst.ports, opts.nu, opts.tau, &inst.x_basis, n).unwrap();
        let exp = expand(&inst.sys, &built.projection, &inst.ports).unwrap();
        let (m, j) = (inst.sys.m(), inst.ports.len());
        let mut x = gaussian(&mut rng, n, 1).column(0).into_owned();
        let mut xhat = gaussian(&mut rng, built.projection.rank(), 1).column(0).into_owned();
        let (mut xi, mut xi_hat) = exp.to_cascade(&x, &xhat);
        for _ in 0..200 {
            let v = gaussian(&mut rng, m, 1).column(0).into_owned();
            let vhat = gaussian(&mut rng, j, 1).column(0).into_owned();
            (x, xhat) = exp.redundant_step(&x, &xhat, &v, &vhat);
            (xi, xi_hat) = exp.cascade_step(&xi, &xi_hat, &v, &vhat);
            let (x_back, xhat_back) = exp.from_cascade(&xi, &xi_hat);
            let scale = 1.0f64.max(x.amax()).max(xhat.amax());
            worst = worst.max((&x - &x_back).amax() / scale).max((&xhat - &xhat_back).amax() / scale);
        }
        cases += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-8 && secs < 10.0;
    report(1, "cascade equivalence", pass, format!("{cases} instances, worst gap {worst:.2e}, {secs:.2} s"));
    assert!(pass);
}

#[test]
fn stability_separation() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut checked, mut failures, mut worst) = (0, 0, 0.0f64);
    for _ in 0..100 {
        let inst = instance(&mut rng, 16);
        let d = design(&inst.sys, &inst.ports, &inst.x_basis, &random_options(&mut rng)).unwrap();
        let reduced_loop = spectral_radius(&(&d.model.ahat + &d.model.bhat * &d.gains.g)).unwrap();
        let x0 = DVector::zeros(inst.sys.n());
        for _ in 0..6 {
            let f = stabilizing_gain(&mut rng, &inst.sys);
            let k = PreexistingController::Static { f };
            if k.closed_loop_radius(&inst.sys).unwrap() >= 1.0 || reduced_loop >= 1.0 {
                continue;
            }
            let radius = closed_loop_radius(&inst.sys, &k, &[d.controller(&x0).unwrap()]).unwrap();
            checked += 1;
            worst = worst.max(radius);
            if radius >= 1.0 {
                failures += 1;
            }
        }
    }
    let pass = failures == 0 && checked == 600;
    report(2, "stability separation", pass, format!("{checked} loops, {failures} unstable, largest radius {worst:.4}"));
    assert!(pass);
}

#[test]
fn finite_time_output_matching() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let inst = instance(&mut rng, 16);
        let tau = 1 + case % 3;
        let n = inst.sys.n();
        let built = build_projection(&inst.sys, &inst.ports, 2, tau, &inst.x_basis, n).unwrap();
        let exp = expand(&inst.sys, &built.projection, &inst.ports).unwrap();
        let mut x = gaussian(&mut rng, n, 1).column(0).into_owned();
        let mut xs = Vec::new();
        for _ in 0..built.tau.max(tau) {
            xs.push(x.clone());
            x = &inst.sys.a * &x + &inst.sys.b * gaussian(&mut rng, inst.sys.m(), 1).column(0);
        }
        let scale = xs.iter().map(|x| x.norm()).fold(1.0, f64::max);
        for t in [tau, built.tau] {
            worst = worst.max(finite_time_output_matching_check(&exp, t, &xs) / scale);
        }
    }
    let pass = worst <= 1e-9;
    report(3, "finite-time output matching", pass, format!("100 instances, worst deviation {worst:.2e}"));
    assert!(pass);
}

/// `‖ξ̂‖_l2` of the reduced loop started at `ξ̂₀ = S c` with the controller's
/// own observer start.
fn reduced_loop_norm(d: &RetrofitDesign, shape: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    let xi0 = shape * c;
    let z0 = d.initial_guess.map(&d.built.projection).unwrap() * &xi0;
    let mut ctl = retrofit::retrofit::RetrofitController::new(d.model.clone(), d.gains.clone(), d.ports.clone(), z0).unwrap();
    let v = DVector::zeros(ctl.plant_inputs());
    let mut xi = xi0;
    let mut energy = 0.0;
    let mut peak = 0.0f64;
    for t in 0..200_000 {
        let e = xi.norm_squared() + ctl.zhat.norm_squared();
        energy += xi.norm_squared();
        peak = peak.max(e);
        if t > ctl.tau() && e <= 1e-30 * peak.max(1e-300) {
            break;
        }
        let y = &d.model.chat * &xi;
        let vhat = ctl.step(&y, &v).unwrap();
        xi = &d.model.ahat * &xi + &d.model.bhat * vhat;
    }
    energy.sqrt()
}

fn bound_samples(d: &RetrofitDesign, sys: &DiscreteLti, k: &PreexistingController, x_basis: &DMatrix<f64>, rng: &mut ChaCha8Rng, map: Option<retrofit::powergrid::IndexMap>) -> (usize, usize, f64, f64) {
    let proj = &d.built.projection;
    let orth = if x_basis.ncols() == 0 { DMatrix::identity(sys.n(), sys.n()) } else { orthonormal_basis(x_basis, 1e-12) };
    let eps = d.certificate.epsilon;
    let (mut lemma_bad, mut theorem_bad) = (0, 0);
    let (mut lemma_ratio, mut theorem_ratio) = (0.0f64, 0.0f64);
    let shape = if x_basis.ncols() == 0 { DMatrix::identity(proj.rank(), proj.rank()) } else { &proj.pdag * &orth };
    for _ in 0..1000 {
        let c = ball(rng, shape.ncols());
        let norm = reduced_loop_norm(d, &shape, &c);
        lemma_ratio = lemma_ratio.max(norm / eps);
        if norm > eps * (1.0 + 1e-6) {
            lemma_bad += 1;
        }
    }
    if x_basis.ncols() > 0 {
        let opts = RunOptions {
            horizon: HorizonPolicy::default(),
            index_map: map,
            certificate: Some(d.certificate),
        };
        for _ in 0..1000 {
            let x0 = &orth * ball(rng, orth.ncols());
            let r = run(sys, k, vec![d.controller(&x0).unwrap()], &x0, &opts).unwrap();
            let b = r.bound.unwrap();
            let state = r.norms.map_or(f64::INFINITY, |n| n.state);
            theorem_ratio = theorem_ratio.max(state / d.certificate.state_bound().unwrap());
            if !b.pass || state > d.certificate.state_bound().unwrap() * (1.0 + 1e-6) {
                theorem_bad += 1;
            }
        }
    }
    (lemma_bad, theorem_bad, lemma_ratio, theorem_ratio)
}

#[test]
fn certified_bounds_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut lemma_bad, mut theorem_bad) = (0, 0);
    let (mut lemma_ratio, mut theorem_ratio) = (0.0f64, 0.0f64);
    let mut designs = 0;
    let mut tally = |r: (usize, usize, f64, f64)| {
        lemma_bad += r.0;
        theorem_bad += r.1;
        lemma_ratio = lemma_ratio.max(r.2);
        theorem_ratio = theorem_ratio.max(r.3);
        designs += 1;
    };
    for _ in 0..8 {
        let mut inst = instance(&mut rng, 12);
        if inst.x_basis.ncols() == 0 {
            inst.x_basis = gaussian(&mut rng, inst.sys.n(), 1);
        }
        let f = stabilizing_gain(&mut rng, &inst.sys);
        let mut d = design(&inst.sys, &inst.ports, &inst.x_basis, &random_options(&mut rng)).unwrap();
        d.attach_gamma_k(&inst.sys, &f).unwrap();
        let k = PreexistingController::Static { f };
        tally(bound_samples(&d, &inst.sys, &k, &inst.x_basis, &mut rng, None));
    }
    let prep = Experiment::default().prepare().unwrap();
    let d = prep.design().unwrap();
    tally(bound_samples(&d, &prep.sys, &prep.k, &prep.x_basis, &mut rng, Some(prep.map.clone())));

    let pass = lemma_bad == 0 && theorem_bad == 0;
    report(
        4,
        "certified bounds",
        pass,
        format!(
            "{designs} designs x 1000 samples, reduced-loop violations {lemma_bad} (max ratio {lemma_ratio:.3}), plant violations {theorem_bad} (max ratio {theorem_ratio:.3})"
        ),
    );
    assert!(pass);
}

/// Numerator and denominator coefficients (highest power first) of a
/// single-input transfer function by the Faddeev–LeVerrier recursion.
fn rational(sys: &DiscreteLti) -> (Vec<DVector<f64>>, Vec<f64>) {
    let n = sys.n();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut den = vec![1.0];
    let mut num = Vec::with_capacity(n);
    let mut mk = DMatrix::zeros(n, n);
    for k in 1..=n {
        mk = &sys.a * &mk + &eye * den[k - 1];
        num.push(&sys.c * &mk * sys.b.column(0));
        den.push(-(&sys.a * &mk).trace() / k as f64);
    }
    (num, den)
}

fn grid_peak(sys: &DiscreteLti, points: usize) -> f64 {
    let (num, den) = rational(sys);
    let d = sys.d.column(0).into_owned();
    let mut peak = 0.0f64;
    let mut acc = vec![Complex::new(0.0, 0.0); sys.p()];
    for i in 0..points {
        let theta = std::f64::consts::PI * i as f64 / (points - 1) as f64;
        let z = Complex::from_polar(1.0, theta);
        let dz = den.iter().fold(Complex::new(0.0, 0.0), |s, &c| s * z + c);
        acc.iter_mut().for_each(|a| *a = Complex::new(0.0, 0.0));
        for coeffs in &num {
            for (a, &c) in acc.iter_mut().zip(coeffs.iter()) {
                *a = *a * z + c;
            }
        }
        let g: f64 = acc.iter().zip(d.iter()).map(|(a, &dj)| (a / dz + dj).norm_sqr()).sum();
        peak = peak.max(g);
    }
    peak.sqrt()
}

#[test]
fn oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut lyap, mut hinf, mut zoh) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.random_range(2..=8);
        let a = with_radius(&mut rng, n, 0.1..0.9);
        let g = gaussian(&mut rng, n, n);
        let w = &g * g.transpose() + DMatrix::identity(n, n);
        let x = solve_dlyap_with(&a, &w).unwrap();
        let at = a.transpose();
        let kron = DMatrix::identity(n * n, n * n) - at.kronecker(&at);
        let vec_w = DVector::from_column_slice(w.as_slice());
        let direct = kron.lu().solve(&vec_w).unwrap();
        let direct = DMatrix::from_column_slice(n, n, direct.as_slice());
        lyap = lyap.max((&x - &direct).amax() / direct.amax().max(1.0));
    }
    for _ in 0..20 {
        let n = rng.random_range(2..=6);
        let p = rng.random_range(1..=2);
        let a = with_radius(&mut rng, n, 0.3..0.85);
        let sys = DiscreteLti::new(a, gaussian(&mut rng, n, 1), gaussian(&mut rng, p, n), 1.0)
            .unwrap()
            .with_feedthrough(gaussian(&mut rng, p, 1) * 0.1)
            .unwrap();
        let h = hinf_norm(&sys).unwrap();
        let grid = grid_peak(&sys, 1_000_000);
        hinf = hinf.max((h - grid).abs() / grid);
    }
    for _ in 0..20 {
        let n = rng.random_range(2..=8);
        let m = rng.random_range(1..=3);
        let a = gaussian(&mut rng, n, n);
        let a = &a * (rng.random_range(0.2..2.0) / a.norm());
        let dt = rng.random_range(0.05..1.0);
        let csys = ContinuousLti::new(a.clone(), gaussian(&mut rng, n, m), gaussian(&mut rng, 1, n)).unwrap();
        let d = zoh_discretize(&csys, dt).unwrap();
        let (mut ad, mut integral) = (DMatrix::identity(n, n), DMatrix::identity(n, n) * dt);
        let mut term = DMatrix::identity(n, n);
        for k in 1..60 {
            term = &term * &a * (dt / k as f64);
            ad += &term;
            integral += &term * (dt / (k + 1) as f64);
        }
        let bd = integral * &csys.b;
        zoh = zoh.max((&d.a - ad).amax()).max((&d.b - bd).amax());
    }
    let pass = lyap <= 1e-9 && hinf <= 1e-6 && zoh <= 1e-10;
    report(5, "oracle equivalence", pass, format!("lyapunov {lyap:.2e}, h-infinity {hinf:.2e}, zoh {zoh:.2e}"));
    assert!(pass);
}

/// `‖(I - Π_U) X‖ / ‖X‖` with `Π_U` the orthogonal projector onto `span U`.
fn outside_span(u: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    let q = orthonormal_basis(u, 1e-12);
    (x - &q * (q.transpose() * x)).norm() / x.norm()
}

#[test]
fn biconjugation_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut offdiag, mut inverse, mut span) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.random_range(3..=16);
        let k = rng.random_range(1..=n / 2 + 1);
        let u = gaussian(&mut rng, n, k);
        let v = gaussian(&mut rng, n, k);
        let proj: Projection = biconjugate(&u, &v).unwrap();
        let qp = proj.q.transpose() * &proj.p;
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    offdiag = offdiag.max(qp[(i, j)].abs() / (proj.q.column(i).norm() * proj.p.column(j).norm()));
                }
            }
        }
        inverse = inverse.max((&proj.pdag * &proj.p - DMatrix::identity(k, k)).amax());
        span = span.max(outside_span(&u, &proj.p)).max(outside_span(&proj.p, &u));
        span = span.max(outside_span(&v, &proj.q)).max(outside_span(&proj.q, &v));
    }
    let pass = offdiag <= 1e-12 && inverse <= 1e-10 && span <= 1e-10;
    report(6, "biconjugation", pass, format!("off-diagonal {offdiag:.2e}, left inverse {inverse:.2e}, span {span:.2e}"));
    assert!(pass);
}

#[test]
fn full_rank_limit() {
    let prep = Experiment::default().prepare().unwrap();
    let n = prep.sys.n();
    let row = rank_sweep(&prep, &[n]).remove(0);
    let built = projection_of_rank(&prep.sys, &prep.ports, n, &prep.x_basis).unwrap();
    let identity = built.projection == Projection::identity(n);
    let mut d = design_with_projection(&prep.sys, &prep.ports, built, &prep.x_basis, &prep.options).unwrap();
    d.attach_gamma_k(&prep.sys, &prep.f).unwrap();
    let norms = prep.run_design(&d).unwrap().norms.unwrap();
    let pairs = [
        (row.omega, norms.omega),
        (row.theta, norms.theta),
        (row.state, Some(norms.state)),
        (row.input, Some(norms.retrofit_input)),
    ];
    let gap = pairs
        .iter()
        .map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() / b.abs().max(1.0),
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max);
    let pass = identity && gap <= 1e-10;
    report(7, "full-rank limit", pass, format!("rank {n}, identity projection {identity}, largest gap {gap:.2e}"));
    assert!(pass);
}

#[test]
fn desk_network_reproduction() {
    let start = Instant::now();
    let one = Experiment::default().prepare().unwrap();
    assert_eq!((one.network.generators(), one.network.loads()), (10, 12));
    let three = one.with_ports(PortSet::new(vec![0, 1, 2], 10).unwrap());
    let base = one.baseline().unwrap().norms.unwrap();

    let escalated = one.design().unwrap();
    let esc = one.run_design(&escalated).unwrap().norms.unwrap();
    let start_rank = escalated.rank().max(three.projection().unwrap().projection.rank());
    let rank = common_stable_rank(&[&one, &three], start_rank).expect("a common stable rank exists");
    let at_rank = |p: &retrofit::sim::Prepared| {
        let mut p = p.clone();
        p.options.rank = Some(rank);
        p
    };
    let (one_r, three_r) = (at_rank(&one), at_rank(&three));
    let d1 = one_r.design().unwrap();
    let r1 = one_r.run_design(&d1).unwrap().norms.unwrap();
    let m3 = match_input_energy(&three_r, r1.retrofit_input, 0.1).unwrap();
    let r3 = m3.run.norms.unwrap();
    let (base_w, base_t) = (base.omega.unwrap(), base.theta.unwrap());
    let secs = start.elapsed().as_secs_f64();

    let improves = esc.omega.unwrap() < base_w && esc.theta.unwrap() < base_t && r1.omega.unwrap() < base_w && r1.theta.unwrap() < base_t;
    let more_ports = m3.matched && r3.omega.unwrap() <= r1.omega.unwrap() && r3.theta.unwrap() <= r1.theta.unwrap();
    let pass = improves && more_ports && secs < 60.0;
    report(
        8,
        "desk network",
        pass,
        format!(
            "broadcast omega {base_w:.3} theta {base_t:.3}; 1 port rank {} omega {:.3} theta {:.3}; at rank {rank}: 1 port omega {:.3} theta {:.3} input {:.3}, 3 ports omega {:.3} theta {:.3} input {:.3}; {secs:.1} s",
            escalated.rank(),
            esc.omega.unwrap(),
            esc.theta.unwrap(),
            r1.omega.unwrap(),
            r1.theta.unwrap(),
            r1.retrofit_input,
            r3.omega.unwrap(),
            r3.theta.unwrap(),
            r3.retrofit_input,
        ),
    );
    assert!(pass);
}
