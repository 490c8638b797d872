use nalgebra::{DMatrix, DVector};

use super::PortSet;
use crate::error::{Error, Result};
use crate::linalg::{columns, hstack, push_orthonormal};
use crate::lti::DiscreteLti;

/// Candidates whose residual against the accumulated span falls below this
/// fraction of their norm are dropped.
pub const DEDUP_TOL: f64 = 1e-10;

/// Block Krylov chain `[M, A M, ..., A^{depth-1} M]` as orthonormal vectors,
/// grouped by block. Deflated directions are dropped.
pub(crate) fn krylov_blocks(a: &DMatrix<f64>, start: &DMatrix<f64>, depth: usize) -> Vec<Vec<DVector<f64>>> {
    let mut all: Vec<DVector<f64>> = Vec::new();
    let mut blocks = Vec::with_capacity(depth);
    let mut frontier: Vec<DVector<f64>> = columns(start);
    for _ in 0..depth {
        let mut block = Vec::new();
        for cand in &frontier {
            if push_orthonormal(&mut all, cand, DEDUP_TOL) {
                block.push(all.last().unwrap().clone());
            }
        }
        if block.is_empty() {
            blocks.push(block);
            break;
        }
        frontier = block.iter().map(|q| a * q).collect();
        blocks.push(block);
    }
    blocks
}

fn check_ports(sys: &DiscreteLti, ports: &PortSet) -> Result<()> {
    if let Some(&bad) = ports.indices().iter().find(|&&j| j >= sys.m() || j >= sys.p()) {
        return Err(Error::InvalidArgument(format!(
            "port {bad} outside the {} inputs / {} outputs",
            sys.m(),
            sys.p()
        )));
    }
    Ok(())
}

/// Orthonormal vectors spanning `X + im[B e_J, A B e_J, ..., A^{ν-1} B e_J]`.
///
/// The fault-domain columns come first, then the Krylov blocks in order.
pub fn input_basis(sys: &DiscreteLti, ports: &PortSet, nu: usize, x_basis: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
    Ok(input_blocks(sys, ports, nu, x_basis)?.into_iter().flatten().collect())
}

/// Same span as [`input_basis`], grouped as `[X-part, block 0, block 1, ...]`.
pub(crate) fn input_blocks(
    sys: &DiscreteLti,
    ports: &PortSet,
    nu: usize,
    x_basis: &DMatrix<f64>,
) -> Result<Vec<Vec<DVector<f64>>>> {
    if nu == 0 {
        return Err(Error::InvalidArgument("Krylov depth nu must be at least 1".into()));
    }
    check_ports(sys, ports)?;
    if x_basis.ncols() > 0 && x_basis.nrows() != sys.n() {
        return Err(Error::dim("fault-domain basis rows", sys.n(), x_basis.nrows()));
    }
    let bj = &sys.b * ports.selector(sys.m());
    let chain = krylov_blocks(&sys.a, &bj, nu);
    let mut acc: Vec<DVector<f64>> = Vec::new();
    let mut grouped = Vec::with_capacity(chain.len() + 1);
    let mut x_part = Vec::new();
    for c in x_basis.column_iter() {
        if push_orthonormal(&mut acc, &c.into_owned(), DEDUP_TOL) {
            x_part.push(acc.last().unwrap().clone());
        }
    }
    grouped.push(x_part);
    for block in chain {
        let mut g = Vec::new();
        for v in &block {
            if push_orthonormal(&mut acc, v, DEDUP_TOL) {
                g.push(acc.last().unwrap().clone());
            }
        }
        grouped.push(g);
    }
    Ok(grouped)
}

/// Orthonormal vectors spanning the row space of
/// `[e_J^T C; e_J^T C A; ...; e_J^T C A^{τ-1}]`, returned as columns.
pub fn output_basis(sys: &DiscreteLti, ports: &PortSet, tau: usize) -> Result<Vec<DVector<f64>>> {
    Ok(output_blocks(sys, ports, tau)?.into_iter().flatten().collect())
}

pub(crate) fn output_blocks(sys: &DiscreteLti, ports: &PortSet, tau: usize) -> Result<Vec<Vec<DVector<f64>>>> {
    if tau == 0 {
        return Err(Error::InvalidArgument("observability depth tau must be at least 1".into()));
    }
    check_ports(sys, ports)?;
    let cj_t = sys.c.transpose() * ports.selector(sys.p());
    Ok(krylov_blocks(&sys.a.transpose(), &cj_t, tau))
}

/// Stacked observability rows `e_J^T C A^k`, `k < depth`, as an `(depth·|J|) x n` matrix.
pub fn observability_stack(sys: &DiscreteLti, ports: &PortSet, depth: usize) -> DMatrix<f64> {
    let cj = ports.selector(sys.p()).transpose() * &sys.c;
    let rows = cj.nrows();
    let mut out = DMatrix::zeros(rows * depth, sys.n());
    let mut block = cj;
    for k in 0..depth {
        out.view_mut((k * rows, 0), (rows, sys.n())).copy_from(&block);
        block = &block * &sys.a;
    }
    out
}

/// Controllability stack `[X, B e_J, A B e_J, ..., A^{depth-1} B e_J]`.
pub fn controllability_stack(sys: &DiscreteLti, ports: &PortSet, depth: usize, x_basis: &DMatrix<f64>) -> DMatrix<f64> {
    let bj = &sys.b * ports.selector(sys.m());
    let mut cols: Vec<DVector<f64>> = columns(x_basis);
    let mut block = bj;
    for _ in 0..depth {
        cols.extend(columns(&block));
        block = &sys.a * &block;
    }
    hstack(sys.n(), &cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rank;
    use nalgebra::dmatrix;

    fn sys3() -> DiscreteLti {
        let a = dmatrix![0.2, 0.5, 0.0; 0.0, 0.3, 0.4; 0.1, 0.0, 0.6];
        let b = dmatrix![1.0, 0.0; 0.0, 0.0; 0.0, 1.0];
        let c = dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 1.0];
        DiscreteLti::new(a, b, c, 1.0).unwrap()
    }

    #[test]
    fn single_block_is_selected_inputs() {
        let sys = sys3();
        let ports = PortSet::new(vec![1], 2).unwrap();
        let basis = input_basis(&sys, &ports, 1, &DMatrix::zeros(3, 0)).unwrap();
        assert_eq!(basis.len(), 1);
        assert!((basis[0].clone() - DVector::from_vec(vec![0.0, 0.0, 1.0])).norm() < 1e-15);
    }

    #[test]
    fn identity_dynamics_stagnate() {
        let mut sys = sys3();
        sys.a = DMatrix::identity(3, 3);
        let ports = PortSet::new(vec![0], 2).unwrap();
        let x = dmatrix![0.0; 1.0; 0.0];
        let basis = input_basis(&sys, &ports, 5, &x).unwrap();
        assert_eq!(basis.len(), 2);
    }

    #[test]
    fn zero_output_has_empty_basis() {
        let mut sys = sys3();
        sys.c = DMatrix::zeros(2, 3);
        let ports = PortSet::new(vec![0, 1], 2).unwrap();
        assert!(output_basis(&sys, &ports, 3).unwrap().is_empty());
    }

    #[test]
    fn first_output_block_spans_port_rows() {
        let sys = sys3();
        let ports = PortSet::new(vec![1], 2).unwrap();
        let basis = output_basis(&sys, &ports, 1).unwrap();
        assert_eq!(basis.len(), 1);
        let expected = DVector::from_vec(vec![0.0, 1.0, 1.0]) / 2f64.sqrt();
        assert!((basis[0].clone() - expected).norm() < 1e-15);
    }

    #[test]
    fn bases_match_stack_rank() {
        let sys = sys3();
        let ports = PortSet::new(vec![0], 2).unwrap();
        let x = DMatrix::zeros(3, 0);
        for depth in 1..4 {
            let ub = input_basis(&sys, &ports, depth, &x).unwrap();
            assert_eq!(ub.len(), rank(&controllability_stack(&sys, &ports, depth, &x), 1e-10));
            let vb = output_basis(&sys, &ports, depth).unwrap();
            assert_eq!(vb.len(), rank(&observability_stack(&sys, &ports, depth), 1e-10));
        }
    }

    #[test]
    fn zero_depth_rejected() {
        let sys = sys3();
        let ports = PortSet::new(vec![0], 2).unwrap();
        assert!(input_basis(&sys, &ports, 0, &DMatrix::zeros(3, 0)).is_err());
        assert!(output_basis(&sys, &ports, 0).is_err());
    }
}
