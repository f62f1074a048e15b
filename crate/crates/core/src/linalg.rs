//! Dense symmetric positive-definite kernels.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const BLOCK: usize = 128;

/// Lower Cholesky factor of a symmetric positive-definite matrix.
///
/// Right-looking blocked factorization: diagonal blocks are factored
/// directly and the trailing submatrix is updated with one matrix product
/// per block column, which keeps large factorizations in the fast GEMM path.
/// Only the lower triangle of `a` is read.
pub fn cholesky_lower(mut a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!(
            "{}x{} matrix is not square",
            n,
            a.ncols()
        )));
    }
    let mut k = 0;
    while k < n {
        let b = BLOCK.min(n - k);
        let mut diag = a.view((k, k), (b, b)).clone_owned();
        diag.fill_upper_triangle_with_lower_triangle();
        let l11 = diag
            .cholesky()
            .ok_or_else(|| Error::Decomposition(format!("{n}x{n} matrix, pivot block at {k}")))?
            .l();
        a.view_mut((k, k), (b, b)).copy_from(&l11);
        let rest = n - k - b;
        if rest > 0 {
            let mut a21t = a.view((k + b, k), (rest, b)).transpose();
            if !l11.solve_lower_triangular_mut(&mut a21t) {
                return Err(Error::Decomposition(format!("singular pivot block at {k}")));
            }
            let a21 = a21t.transpose();
            a.view_mut((k + b, k), (rest, b)).copy_from(&a21);
            a.view_mut((k + b, k + b), (rest, rest))
                .gemm(-1.0, &a21, &a21t, 1.0);
        }
        k += b;
    }
    a.fill_upper_triangle(0.0, 1);
    Ok(a)
}

/// Solves `L Lᵀ x = h` given the lower factor `L`.
pub fn cholesky_solve(l: &DMatrix<f64>, h: &DVector<f64>) -> Result<DVector<f64>> {
    let y = l
        .solve_lower_triangular(h)
        .ok_or_else(|| Error::Decomposition("singular Cholesky factor".into()))?;
    l.tr_solve_lower_triangular(&y)
        .ok_or_else(|| Error::Decomposition("singular Cholesky factor".into()))
}
