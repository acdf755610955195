use nalgebra::{DMatrix, DVector};

use super::sparse::{axpy, CsrMatrix};
use crate::error::{Error, Result};

/// Relative threshold below which a projected vector counts as linearly dependent.
pub const DROP_TOLERANCE: f64 = 1e-10;

/// Output of [`modified_gram_schmidt`].
#[derive(Debug, Clone)]
pub struct Orthonormalized {
    pub basis: Vec<Vec<f64>>,
    /// Input positions that were discarded as (numerically) dependent.
    pub dropped: Vec<usize>,
}

/// Orthonormalizes `vectors` in the inner product `x^T M y`, first against
/// the already orthonormal `against` set, then among themselves.
///
/// Each vector gets a modified Gram-Schmidt sweep followed by a second full
/// sweep. The drop threshold is relative to the norm of the first input.
pub fn orthonormalize_against(
    against: &[Vec<f64>],
    vectors: &[Vec<f64>],
    inner: &CsrMatrix,
) -> Orthonormalized {
    let reference = vectors
        .first()
        .map(|v| inner.bilinear(v, v).max(0.0).sqrt())
        .unwrap_or(0.0);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    let mut dropped = Vec::new();
    for (idx, v) in vectors.iter().enumerate() {
        let mut w = v.clone();
        for _sweep in 0..2 {
            for z in against.iter().chain(basis.iter()) {
                let mz = inner.matvec(z);
                let c = dot(&w, &mz);
                axpy(-c, z, &mut w);
            }
        }
        let nrm = inner.bilinear(&w, &w).max(0.0).sqrt();
        if reference == 0.0 || nrm <= DROP_TOLERANCE * reference {
            dropped.push(idx);
            continue;
        }
        w.iter_mut().for_each(|x| *x /= nrm);
        basis.push(w);
    }
    Orthonormalized { basis, dropped }
}

pub fn modified_gram_schmidt(vectors: &[Vec<f64>], inner: &CsrMatrix) -> Orthonormalized {
    orthonormalize_against(&[], vectors, inner)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Smallest generalized singular value
/// `min_q sqrt(q^T B Xu^{-1} B^T q / q^T Xp q)`.
pub fn smallest_gsv(b: &DMatrix<f64>, xu: &DMatrix<f64>, xp: &DMatrix<f64>) -> Result<f64> {
    let (np, nu) = b.shape();
    if xu.shape() != (nu, nu) || xp.shape() != (np, np) {
        return Err(Error::DimensionMismatch(format!(
            "B is {np}x{nu}, Xu {:?}, Xp {:?}",
            xu.shape(),
            xp.shape()
        )));
    }
    if np == 0 {
        return Ok(0.0);
    }
    let eig = generalized_symmetric_eigenvalues(&schur_form(b, xu)?, xp)?;
    Ok(eig.iter().fold(f64::INFINITY, |m, &l| m.min(l)).max(0.0).sqrt())
}

/// `B Xu^{-1} B^T`, symmetrized.
pub fn schur_form(b: &DMatrix<f64>, xu: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.ncols() == 0 {
        return Ok(DMatrix::zeros(b.nrows(), b.nrows()));
    }
    let chol = xu
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("velocity Gram matrix".into()))?;
    let bt = b.transpose();
    let y = chol.solve(&bt);
    let m = b * y;
    Ok((&m + m.transpose()) * 0.5)
}

/// Eigenvalues of `M v = lambda X v` for symmetric `M` and SPD `X`.
pub fn generalized_symmetric_eigenvalues(m: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(generalized_symmetric_eigen(m, x)?.0)
}

/// Eigenpairs of `M v = lambda X v`; eigenvectors are `X`-orthonormal columns.
pub fn generalized_symmetric_eigen(
    m: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = x
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("pressure Gram matrix".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(l.nrows(), l.nrows()))
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let c = &linv * m * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let vecs = linv.transpose() * eig.eigenvectors;
    Ok((eig.eigenvalues, vecs))
}

/// Dense LU solve returning `None` when the matrix is numerically singular.
pub fn dense_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    let lu = a.clone().lu();
    let u = lu.u();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_pivot = (0..n).fold(f64::INFINITY, |m, i| m.min(u[(i, i)].abs()));
    if n > 0 && (scale == 0.0 || min_pivot <= 1e-14 * scale) {
        return None;
    }
    lu.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn single_vector_is_normalized() {
        let id = CsrMatrix::identity(2);
        let r = modified_gram_schmidt(&[vec![3.0, 4.0]], &id);
        assert!(close(&r.basis[0], &[0.6, 0.8], 1e-15));
    }

    #[test]
    fn duplicate_is_dropped() {
        let id = CsrMatrix::identity(3);
        let v = vec![1.0, 2.0, 2.0];
        let r = modified_gram_schmidt(&[v.clone(), v], &id);
        assert_eq!(r.basis.len(), 1);
        assert_eq!(r.dropped, vec![1]);
    }

    #[test]
    fn hand_orthogonalization() {
        let id = CsrMatrix::identity(2);
        let r = modified_gram_schmidt(&[vec![1.0, 0.0], vec![1.0, 1.0]], &id);
        assert!(close(&r.basis[0], &[1.0, 0.0], 1e-15));
        assert!(close(&r.basis[1], &[0.0, 1.0], 1e-15));
    }

    #[test]
    fn weighted_inner_product() {
        let m = CsrMatrix::from_dense(&[vec![2.0, 0.0], vec![0.0, 8.0]]);
        let r = modified_gram_schmidt(&[vec![1.0, 1.0], vec![1.0, -1.0]], &m);
        for (i, a) in r.basis.iter().enumerate() {
            for (j, b) in r.basis.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((m.bilinear(a, b) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reorthonormalizing_is_idempotent() {
        let id = CsrMatrix::identity(4);
        let first = modified_gram_schmidt(
            &[vec![1.0, 2.0, 0.0, 1.0], vec![0.0, 1.0, 3.0, 1.0], vec![2.0, 0.0, 1.0, 5.0]],
            &id,
        );
        let again = modified_gram_schmidt(&first.basis, &id);
        for (a, b) in first.basis.iter().zip(&again.basis) {
            assert!(close(a, b, 1e-12));
        }
    }

    #[test]
    fn gsv_examples() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert!((smallest_gsv(&i2, &i2, &i2).unwrap() - 1.0).abs() < 1e-14);
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]));
        assert!((smallest_gsv(&b, &i2, &i2).unwrap() - 0.5).abs() < 1e-14);
        let z = DMatrix::<f64>::zeros(2, 2);
        assert_eq!(smallest_gsv(&z, &i2, &i2).unwrap(), 0.0);
    }

    #[test]
    fn gsv_rejects_indefinite_gram() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(smallest_gsv(&i2, &bad, &i2).is_err());
    }

    #[test]
    fn dense_solve_flags_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(dense_solve(&a, &DVector::from_vec(vec![1.0, 1.0])).is_none());
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let x = dense_solve(&a, &DVector::from_vec(vec![3.0, 4.0])).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }
}
