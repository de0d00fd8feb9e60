//! Dense linear-algebra helpers. The symmetric eigensolver is faer's
//! self-adjoint decomposition; everything here works on `ndarray` matrices.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// `X′X/(NT)` for an `N×T` matrix, symmetrized as `(G + G′)/2`.
pub fn gram(x: &Array2<f64>) -> Array2<f64> {
    let (n, t) = x.dim();
    let mut g = x.t().dot(x);
    g /= (n * t) as f64;
    symmetrize(&mut g);
    g
}

pub(crate) fn symmetrize(m: &mut Array2<f64>) {
    let k = m.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = avg;
            m[[j, i]] = avg;
        }
    }
}

/// Full symmetric eigendecomposition, eigenvalues nonincreasing.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Array1<f64>,
    /// Columns are unit eigenvectors matching `values`.
    pub vectors: Array2<f64>,
}

fn to_faer(m: &Array2<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

/// Decomposes a symmetric matrix, sorts by nonincreasing eigenvalue and
/// flips each eigenvector so that its largest-magnitude entry is positive
/// (ties go to the lowest index).
pub fn eig_sym_desc(m: &Array2<f64>) -> Result<SymEig> {
    let k = m.nrows();
    if m.ncols() != k {
        return Err(Error::Dimension(format!("{}×{} matrix is not square", k, m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigendecomposition input".into()));
    }
    if k == 0 {
        return Ok(SymEig {
            values: Array1::zeros(0),
            vectors: Array2::zeros((0, 0)),
        });
    }
    let evd = to_faer(m)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("symmetric eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();

    // faer returns ascending eigenvalues
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));

    let mut values = Array1::zeros(k);
    let mut vectors = Array2::zeros((k, k));
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = s[src];
        let mut pivot = 0;
        for i in 1..k {
            if u[(i, src)].abs() > u[(pivot, src)].abs() {
                pivot = i;
            }
        }
        let sign = if u[(pivot, src)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..k {
            vectors[[i, dst]] = sign * u[(i, src)];
        }
    }
    Ok(SymEig { values, vectors })
}

/// Solves `A Z = B` for symmetric positive definite `A` by Cholesky.
pub fn spd_solve(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let llt = to_faer(a)
        .llt(Side::Lower)
        .map_err(|_| Error::Singular(format!("{}×{} matrix is not positive definite", a.nrows(), a.ncols())))?;
    let mut z = to_faer(b);
    llt.solve_in_place(&mut z);
    Ok(Array2::from_shape_fn((z.nrows(), z.ncols()), |(i, j)| z[(i, j)]))
}

/// Singular values in nonincreasing order.
pub fn singular_values(m: &Array2<f64>) -> Result<Vec<f64>> {
    let mut sv = to_faer(m)
        .singular_values()
        .map_err(|e| Error::Linalg(format!("singular values: {e:?}")))?;
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}
