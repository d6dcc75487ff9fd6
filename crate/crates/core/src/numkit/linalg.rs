//! Cholesky factorization and triangular solves.

use super::matrix::Matrix;
use crate::error::{Result, VipError};

const SYMMETRY_TOL: f64 = 1e-10;

/// Lower Cholesky factor `L` with `L·Lᵀ = a`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(VipError::dim("cholesky", format!("{}x{} is not square", a.rows(), a.cols())));
    }
    let n = a.rows();
    let scale = a.as_slice().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(VipError::dim("cholesky", format!("input not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(VipError::NotPositiveDefinite { pivot: j });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Cholesky with escalating diagonal jitter, starting at `start` and
/// multiplying by 10 until `max` is exceeded.
pub fn cholesky_jittered(a: &Matrix, start: f64, max: f64) -> Result<Matrix> {
    let mut jitter = start;
    loop {
        match cholesky(&a.add_diag(jitter)) {
            Ok(l) => return Ok(l),
            Err(e @ VipError::NotPositiveDefinite { .. }) => {
                jitter *= 10.0;
                if jitter > max * (1.0 + 1e-12) {
                    return Err(e);
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Solves `L·x = b`, or `Lᵀ·x = b` when `transposed`, for lower-triangular `L`.
pub fn solve_triangular(l: &Matrix, b: &[f64], transposed: bool) -> Result<Vec<f64>> {
    if !l.is_square() || l.rows() != b.len() {
        return Err(VipError::dim(
            "solve_triangular",
            format!("{}x{} system with rhs of length {}", l.rows(), l.cols(), b.len()),
        ));
    }
    let n = b.len();
    if let Some(index) = (0..n).find(|&i| l[(i, i)] == 0.0) {
        return Err(VipError::Singular { index });
    }
    let mut x = b.to_vec();
    if !transposed {
        for i in 0..n {
            let row = l.row_slice(i);
            let mut s = x[i];
            for k in 0..i {
                s -= row[k] * x[k];
            }
            x[i] = s / row[i];
        }
    } else {
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Applies `solve_triangular` to every column of `b`.
pub fn solve_triangular_matrix(l: &Matrix, b: &Matrix, transposed: bool) -> Result<Matrix> {
    let mut out = Matrix::zeros(b.rows(), b.cols());
    for j in 0..b.cols() {
        let x = solve_triangular(l, &b.col_vec(j), transposed)?;
        for (i, v) in x.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Solves `(L·Lᵀ)·x = b` given the Cholesky factor.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let y = solve_triangular(l, b, false)?;
    solve_triangular(l, &y, true)
}

/// `(L·Lᵀ)⁻¹` from the Cholesky factor.
pub fn cholesky_inverse(l: &Matrix) -> Result<Matrix> {
    let n = l.rows();
    let linv = solve_triangular_matrix(l, &Matrix::identity(n), false)?;
    let inv = linv.t_matmul(&linv)?;
    Ok(inv.symmetrize())
}

/// `log det(L·Lᵀ)`.
pub fn cholesky_log_det(l: &Matrix) -> f64 {
    2.0 * l.diag().iter().map(|d| d.ln()).sum::<f64>()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(VipError::dim("symmetric_eigenvalues", "matrix is not square"));
    }
    let n = a.rows();
    let mut m = a.symmetrize();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let total = m.frobenius_norm().powi(2);
        if off <= 1e-30 * total.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig = m.diag();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}
