use log::debug;
use nalgebra::{DMatrix, DVector};

use super::krylov::{input_blocks, output_blocks};
use super::{biconjugate, controllability_stack, observability_stack, PortSet, Projection};
use crate::error::{Error, Result};
use crate::linalg::{complement_basis, hstack, push_orthonormal, spectral_radius};
use crate::lti::DiscreteLti;

/// A projection together with the Krylov depths that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltProjection {
    pub projection: Projection,
    pub nu: usize,
    pub tau: usize,
    /// `ρ(P† A P)`.
    pub spectral_radius: f64,
}

/// Extends `basis` (orthonormal) to `target` vectors. Candidates are taken in
/// order from `pools`, each projected onto the complement of the current span.
fn pad(n: usize, basis: &mut Vec<DVector<f64>>, target: usize, pools: &[Vec<DVector<f64>>]) {
    for pool in pools {
        for cand in pool {
            if basis.len() >= target {
                return;
            }
            push_orthonormal(basis, cand, super::DEDUP_TOL);
        }
    }
    if basis.len() < target {
        let comp = complement_basis(&hstack(n, basis));
        for c in comp.column_iter() {
            if basis.len() >= target {
                break;
            }
            basis.push(c.into_owned());
        }
    }
}

/// Leading left singular vectors of `stack` restricted to the complement of `span`.
fn complement_directions(n: usize, span: &[DVector<f64>], stack: &DMatrix<f64>) -> Vec<DVector<f64>> {
    if stack.ncols() == 0 {
        return Vec::new();
    }
    let q = hstack(n, span);
    let restricted = stack - &q * (q.transpose() * stack);
    let scale = stack.norm();
    if scale == 0.0 {
        return Vec::new();
    }
    let svd = restricted.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    order
        .into_iter()
        .filter(|&i| svd.singular_values[i] > super::DEDUP_TOL * scale)
        .map(|i| u.column(i).into_owned())
        .collect()
}

/// Squares up the two lists to `k` vectors each and biconjugates them.
///
/// The shorter side is extended first with directions of its own full
/// reachability (observability) stack outside its span, then with the other
/// side's vectors, and finally with an arbitrary complement. On breakdown the
/// other side's vectors are tried first.
fn square_and_biconjugate(
    sys: &DiscreteLti,
    ports: &PortSet,
    x_basis: &DMatrix<f64>,
    u: &[DVector<f64>],
    v: &[DVector<f64>],
    k: usize,
) -> Result<Projection> {
    let n = sys.n();
    let reach = controllability_stack(sys, ports, n, x_basis);
    let obs = observability_stack(sys, ports, n).transpose();
    let u_own = complement_directions(n, u, &reach);
    let v_own = complement_directions(n, v, &obs);
    let mut last_err = None;
    for other_first in [false, true] {
        let mut uu = u.to_vec();
        let mut vv = v.to_vec();
        let (u_pools, v_pools) = if other_first {
            (vec![v.to_vec(), u_own.clone()], vec![u.to_vec(), v_own.clone()])
        } else {
            (vec![u_own.clone(), v.to_vec()], vec![v_own.clone(), u.to_vec()])
        };
        pad(n, &mut uu, k, &u_pools);
        pad(n, &mut vv, k, &v_pools);
        let (um, vm) = (hstack(n, &uu[..k]), hstack(n, &vv[..k]));
        match biconjugate(&um, &vm) {
            Ok(p) => return Ok(p),
            Err(Error::Breakdown { .. }) => {}
            Err(e) => return Err(e),
        }
        match biconjugate(&um, &pivoted(&um, &vm)) {
            Ok(p) => return Ok(p),
            Err(e @ Error::Breakdown { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Reorders the columns of `v` by partial pivoting on `V^T U`, so that the
/// pairing breaks down only when `V^T U` is singular. The spans, and hence
/// `P P†`, are unchanged.
fn pivoted(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let k = v.ncols();
    let mut order = DMatrix::from_fn(k, 1, |i, _| i as f64);
    (v.transpose() * u).lu().p().permute_rows(&mut order);
    DMatrix::from_fn(v.nrows(), k, |r, c| v[(r, order[(c, 0)] as usize)])
}

fn reduced_radius(sys: &DiscreteLti, proj: &Projection) -> Result<f64> {
    spectral_radius(&(&proj.pdag * &sys.a * &proj.p))
}

/// Builds a projection from depth-`ν` input and depth-`τ` output Krylov
/// bases, escalating both depths until `P† A P` is Schur stable.
pub fn build_projection(
    sys: &DiscreteLti,
    ports: &PortSet,
    nu: usize,
    tau: usize,
    x_basis: &DMatrix<f64>,
    max_rank: usize,
) -> Result<BuiltProjection> {
    let n = sys.n();
    if max_rank > n {
        return Err(Error::InvalidArgument(format!("max_rank {max_rank} exceeds state dimension {n}")));
    }
    let (mut nu, mut tau) = (nu, tau);
    let mut forced = 0;
    let mut last_radius = f64::INFINITY;
    let mut prev = (usize::MAX, usize::MAX);
    let mut prev_k = 0;
    loop {
        let u: Vec<DVector<f64>> = input_blocks(sys, ports, nu, x_basis)?.into_iter().flatten().collect();
        let v: Vec<DVector<f64>> = output_blocks(sys, ports, tau)?.into_iter().flatten().collect();
        if (u.len(), v.len()) == prev {
            forced = prev_k + 1;
        }
        prev = (u.len(), v.len());
        let k = u.len().max(v.len()).max(forced).min(n);
        prev_k = k;
        if k > max_rank {
            return Err(Error::EscalationFailed {
                max_rank,
                rank: k,
                radius: last_radius,
            });
        }
        let attempt = if k == n {
            Ok(Projection::identity(n))
        } else {
            square_and_biconjugate(sys, ports, x_basis, &u, &v, k)
        };
        match attempt {
            Ok(projection) => {
                let radius = reduced_radius(sys, &projection)?;
                debug!("projection rank {k} (nu {nu}, tau {tau}): reduced spectral radius {radius:.6}");
                if radius < 1.0 {
                    return Ok(BuiltProjection {
                        projection,
                        nu,
                        tau,
                        spectral_radius: radius,
                    });
                }
                last_radius = radius;
            }
            Err(Error::Breakdown { index, .. }) => {
                debug!("biconjugation broke down at index {index} (nu {nu}, tau {tau}); escalating");
            }
            Err(e) => return Err(e),
        }
        if k == n {
            return Err(Error::EscalationFailed {
                max_rank,
                rank: k,
                radius: last_radius,
            });
        }
        nu += 1;
        tau += 1;
    }
}

/// Projection of exactly `rank` columns: the leading `rank` vectors of the
/// input and output Krylov sequences (run to depth `n`), squared up as in
/// [`build_projection`]. The reported `nu`/`tau` count the Krylov blocks that
/// fit entirely. `rank == n` yields `P = I`.
pub fn projection_of_rank(
    sys: &DiscreteLti,
    ports: &PortSet,
    rank: usize,
    x_basis: &DMatrix<f64>,
) -> Result<BuiltProjection> {
    let n = sys.n();
    if rank == 0 || rank > n {
        return Err(Error::InvalidArgument(format!("rank {rank} outside 1..={n}")));
    }
    let in_blocks = input_blocks(sys, ports, n, x_basis)?;
    let out_blocks = output_blocks(sys, ports, n)?;
    let full_blocks = |blocks: &[Vec<DVector<f64>>], skip: usize| {
        let mut used = 0;
        let mut count = 0;
        for (i, b) in blocks.iter().enumerate() {
            if b.is_empty() && i >= skip {
                break;
            }
            used += b.len();
            if used > rank {
                break;
            }
            if i >= skip {
                count += 1;
            }
        }
        count
    };
    let nu = if in_blocks[0].len() > rank { 0 } else { full_blocks(&in_blocks, 1) };
    let tau = full_blocks(&out_blocks, 0);
    let projection = if rank == n {
        Projection::identity(n)
    } else {
        let u: Vec<DVector<f64>> = in_blocks.into_iter().flatten().take(rank).collect();
        let v: Vec<DVector<f64>> = out_blocks.into_iter().flatten().take(rank).collect();
        square_and_biconjugate(sys, ports, x_basis, &u, &v, rank)?
    };
    let radius = reduced_radius(sys, &projection)?;
    Ok(BuiltProjection {
        projection,
        nu,
        tau,
        spectral_radius: radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigenvalues;
    use crate::projection::check_conditions;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stable(n: usize, m: usize, seed: u64) -> DiscreteLti {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let r = spectral_radius(&a).unwrap();
        a *= 0.9 / r;
        let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let c = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        DiscreteLti::new(a, b, c, 1.0).unwrap()
    }

    #[test]
    fn stable_system_small_depth() {
        let sys = random_stable(6, 2, 7);
        let ports = PortSet::new(vec![0], 2).unwrap();
        let x = DMatrix::zeros(6, 0);
        let built = build_projection(&sys, &ports, 2, 2, &x, 6).unwrap();
        assert!(built.spectral_radius < 1.0);
        let proj = &built.projection;
        assert!(proj.left_inverse_error() < 1e-10);
        assert!(proj.resolution_error() < 1e-10);
        let report = check_conditions(proj, &sys, &ports, built.nu, built.tau, &x);
        assert!(report.all_ok(), "{report:?}");
    }

    #[test]
    fn unequal_depths_are_padded() {
        let sys = random_stable(8, 2, 11);
        let ports = PortSet::new(vec![0, 1], 2).unwrap();
        let x = DMatrix::zeros(8, 0);
        let built = build_projection(&sys, &ports, 1, 3, &x, 8).unwrap();
        let report = check_conditions(&built.projection, &sys, &ports, built.nu, built.tau, &x);
        assert!(report.all_ok(), "{report:?}");
        assert!(built.projection.rank() >= 6);
    }

    #[test]
    fn full_rank_escalation_preserves_spectrum() {
        let sys = random_stable(5, 1, 3);
        let ports = PortSet::new(vec![0], 1).unwrap();
        let x = DMatrix::zeros(5, 0);
        let built = projection_of_rank(&sys, &ports, 5, &x).unwrap();
        let mut a: Vec<f64> = eigenvalues(&sys.a).unwrap().iter().map(|z| z.norm()).collect();
        let ahat = &built.projection.pdag * &sys.a * &built.projection.p;
        let mut b: Vec<f64> = eigenvalues(&ahat).unwrap().iter().map(|z| z.norm()).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn rank_cap_reports_failure() {
        // an unstable mode visible from the port can never be removed below full rank
        let a = dmatrix![1.2, 0.0, 0.0; 0.0, 0.1, 0.0; 0.0, 0.0, 0.2];
        let sys = DiscreteLti::new(a, dmatrix![1.0; 0.0; 0.0], dmatrix![1.0, 0.0, 0.0], 1.0).unwrap();
        let ports = PortSet::new(vec![0], 1).unwrap();
        let err = build_projection(&sys, &ports, 1, 1, &DMatrix::zeros(3, 0), 2).unwrap_err();
        assert!(matches!(err, Error::EscalationFailed { .. }));
    }

    #[test]
    fn rank_driven_projection_has_requested_size() {
        let sys = random_stable(8, 3, 5);
        let ports = PortSet::new(vec![0, 2], 3).unwrap();
        let x = DMatrix::zeros(8, 0);
        for r in 2..=8 {
            let built = projection_of_rank(&sys, &ports, r, &x).unwrap();
            assert_eq!(built.projection.rank(), r);
            assert!(built.projection.left_inverse_error() < 1e-10);
            let report = check_conditions(&built.projection, &sys, &ports, built.nu.max(1), built.tau.max(1), &x);
            assert!(report.con_bc_ok, "rank {r}: {report:?}");
        }
    }
}
