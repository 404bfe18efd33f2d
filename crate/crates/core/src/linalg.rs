//! Dense helpers: jittered Cholesky, log-determinants, index-based slicing.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative tolerance for symmetry checks, never tighter than the scalar allows.
pub(crate) fn symmetry_tolerance<T: Real>() -> T {
    T::lit(1e-10).max(T::default_epsilon() * T::lit(100.0))
}

/// Checks symmetry relative to the largest entry and returns the symmetrized matrix.
pub(crate) fn symmetrize_checked<T: Real>(m: DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    if !m.is_square() {
        return Err(Error::NotSymmetric(format!(
            "{what} is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let tol = symmetry_tolerance::<T>() * scale.max(T::one());
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(Error::NotSymmetric(format!(
                    "{what}: entry ({i},{j}) differs from ({j},{i})"
                )));
            }
        }
    }
    Ok(symmetrize(m))
}

pub(crate) fn symmetrize<T: Real>(m: DMatrix<T>) -> DMatrix<T> {
    let t = m.transpose();
    (m + t) * T::lit(0.5)
}

/// Cholesky with one retry after adding `1e-9·trace(Σ)/D` to the diagonal.
///
/// Returns the matrix actually factorized alongside its factor.
pub(crate) fn jittered_cholesky<T: Real>(
    m: DMatrix<T>,
    what: &str,
) -> Result<(DMatrix<T>, Cholesky<T, Dyn>)> {
    if m.nrows() == 0 {
        return Ok((m.clone(), Cholesky::new_unchecked(m)));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(format!("{what} has non-finite entries")));
    }
    if let Some(chol) = Cholesky::new(m.clone()) {
        if chol.l_dirty().diagonal().iter().all(|d| *d > T::zero()) {
            return Ok((m, chol));
        }
    }
    let n = m.nrows();
    let jitter = T::lit(1e-9) * m.trace() / T::from_count(n);
    if !(jitter > T::zero()) {
        return Err(Error::NotPositiveDefinite(format!("{what} has non-positive trace")));
    }
    let mut jittered = m;
    for i in 0..n {
        jittered[(i, i)] += jitter;
    }
    match Cholesky::new(jittered.clone()) {
        Some(chol) if chol.l_dirty().diagonal().iter().all(|d| *d > T::zero()) => {
            Ok((jittered, chol))
        }
        _ => Err(Error::NotPositiveDefinite(what.to_string())),
    }
}

pub(crate) fn chol_log_det<T: Real>(chol: &Cholesky<T, Dyn>) -> T {
    chol.l_dirty()
        .diagonal()
        .iter()
        .fold(T::zero(), |acc, d| acc + d.ln())
        * T::lit(2.0)
}

/// `ln det` of a symmetric positive-definite matrix: Cholesky first, eigenvalues
/// as the fallback when round-off breaks the factorization.
pub(crate) fn spd_log_det<T: Real>(m: &DMatrix<T>, what: &str) -> Result<T> {
    if m.nrows() == 0 {
        return Ok(T::zero());
    }
    if let Some(chol) = Cholesky::new(m.clone()) {
        if chol.l_dirty().diagonal().iter().all(|d| *d > T::zero()) {
            return Ok(chol_log_det(&chol));
        }
    }
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|v| *v > T::zero()) {
        return Ok(eig.eigenvalues.iter().fold(T::zero(), |acc, v| acc + v.ln()));
    }
    let (_, chol) = jittered_cholesky(m.clone(), what)?;
    Ok(chol_log_det(&chol))
}

pub(crate) fn select_vector<T: Real>(v: &DVector<T>, idx: &[usize]) -> DVector<T> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

pub(crate) fn select_block<T: Real>(m: &DMatrix<T>, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// Schur complement `Σ_AA − Σ_AB Σ_BB⁻¹ Σ_BA` and the gain `Σ_AB Σ_BB⁻¹`.
pub(crate) fn schur_condition<T: Real>(
    cov: &DMatrix<T>,
    target: &[usize],
    given: &[usize],
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let saa = select_block(cov, target, target);
    if given.is_empty() {
        return Ok((saa, DMatrix::zeros(target.len(), 0)));
    }
    let sab = select_block(cov, target, given);
    let sbb = select_block(cov, given, given);
    let (_, chol) = jittered_cholesky(sbb, "conditioning covariance")?;
    // gainᵀ = Σ_BB⁻¹ Σ_BA
    let gain = chol.solve(&sab.transpose()).transpose();
    let cond = symmetrize(saa - &gain * sab.transpose());
    Ok((cond, gain))
}

/// Row-major copy, used by hot loops that avoid nalgebra indexing.
pub(crate) fn row_major<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_borderline_matrix() {
        // rank-deficient by a hair: PSD with a zero eigenvalue
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (used, _) = jittered_cholesky(m, "test").unwrap();
        assert!(used[(0, 0)] > 1.0);
    }

    #[test]
    fn indefinite_matrix_fails_after_jitter() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            jittered_cholesky(m, "test"),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn schur_matches_hand_computation() {
        // cov over (x, z) with z = x + v: [[1,1],[1,2]] -> var(x|z) = 1/2
        let cov = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        let (cond, gain) = schur_condition(&cov, &[0], &[1]).unwrap();
        assert!((cond[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((gain[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn log_det_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 4.0]));
        assert!((spd_log_det(&m, "d").unwrap() - 24f64.ln()).abs() < 1e-14);
    }
}
