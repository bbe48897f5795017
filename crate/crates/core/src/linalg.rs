//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry accepted by [`psd_sqrt`].
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Negative eigenvalues down to `-PSD_CLAMP_TOL * spectral_norm` are clamped to zero.
pub const PSD_CLAMP_TOL: f64 = 1e-8;

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim("square matrix columns", m.nrows(), m.ncols()));
    }
    Ok(())
}

/// Eigendecomposition of a symmetric PSD matrix with near-zero negative
/// eigenvalues clamped to zero.
pub fn psd_eigen(v: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    check_square(v)?;
    let scale = max_abs(v);
    let asym = max_asymmetry(v);
    if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric { asym });
    }
    let mut eig = SymmetricEigen::new(symmetrize(v));
    let spectral = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let tol = PSD_CLAMP_TOL * spectral;
    for l in eig.eigenvalues.iter_mut() {
        if *l < 0.0 {
            if *l < -tol {
                return Err(Error::NotPsd { min_eig: *l, tol });
            }
            *l = 0.0;
        }
    }
    Ok(eig)
}

/// Symmetric PSD square root `R` with `R * R = V`.
pub fn psd_sqrt(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = psd_eigen(v)?;
    let mut scaled = eig.eigenvectors.clone();
    for (j, l) in eig.eigenvalues.iter().enumerate() {
        let s = l.sqrt();
        scaled.column_mut(j).scale_mut(s);
    }
    let r = &scaled * eig.eigenvectors.transpose();
    Ok(symmetrize(&r))
}

/// Lower-triangular `L` with `L * L^T = G` for a PSD Gram matrix.
///
/// Pivots below `rel_tol * max(diag)` are treated as exact zeros and their
/// columns left empty, so rank-deficient Gram matrices are accepted.
pub fn semidefinite_cholesky(g: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    check_square(g)?;
    let n = g.nrows();
    let max_diag = (0..n).map(|i| g[(i, i)]).fold(0.0f64, f64::max);
    let tol = rel_tol * max_diag;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = g[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !d.is_finite() {
            return Err(Error::Numerical("non-finite pivot in Cholesky factorisation".into()));
        }
        if d <= tol {
            continue;
        }
        let pivot = d.sqrt();
        l[(j, j)] = pivot;
        for i in (j + 1)..n {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    Ok(l)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}
