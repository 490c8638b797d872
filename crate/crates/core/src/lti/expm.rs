use nalgebra::DMatrix;

use super::{ContinuousLti, DiscreteLti};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, solve};

// Degree-13 Padé coefficients and the matching 1-norm threshold
// (Higham, "The scaling and squaring method for the matrix exponential revisited").
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a [13/13] Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::dim("expm", "square matrix", format!("{}x{}", a.nrows(), a.ncols())));
    }
    if !all_finite(a) {
        return Err(Error::Numerical("non-finite entries in matrix exponential".into()));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let nrm = norm1(a);
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    if s > 1000 {
        return Err(Error::Numerical(format!("matrix exponential overflow (1-norm {nrm:.3e})")));
    }
    let a = a * 2f64.powi(-s);
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &eye * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &eye * b[0];
    let mut r = solve(&(&v - &u), &(&v + &u), "Padé denominator")?;
    for _ in 0..s {
        r = &r * &r;
    }
    if !all_finite(&r) {
        return Err(Error::Numerical("matrix exponential overflowed".into()));
    }
    Ok(r)
}

/// Zero-order-hold discretization: `A = e^{A_c dt}`, `B = (∫_0^dt e^{A_c s} ds) B_c`.
///
/// Both blocks come from one exponential of the augmented matrix
/// `[[A_c, B_c], [0, 0]] dt`.
pub fn zoh_discretize(sys: &ContinuousLti, dt: f64) -> Result<DiscreteLti> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("sampling period must be positive, got {dt}")));
    }
    let (n, m) = (sys.n(), sys.m());
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&sys.a * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(&sys.b * dt));
    let e = expm(&aug)?;
    let a = e.view((0, 0), (n, n)).into_owned();
    let b = e.view((0, n), (n, m)).into_owned();
    DiscreteLti::new(a, b, sys.c.clone(), dt)
}
