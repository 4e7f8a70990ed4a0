//! Small dense helpers shared across the crate.

use nalgebra::linalg::Schur;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{LssError, Result};
use crate::model::Matrix;

const SCHUR_MAX_ITER: usize = 100_000;

pub fn is_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn block_diag<'a>(blocks: impl IntoIterator<Item = &'a Matrix>) -> Matrix {
    let blocks: Vec<&Matrix> = blocks.into_iter().collect();
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Real Schur form `A = Q T Q^T` with `T` quasi upper triangular.
pub fn real_schur(a: &Matrix) -> Result<(Matrix, Matrix)> {
    if a.nrows() == 0 {
        return Ok((Matrix::zeros(0, 0), Matrix::zeros(0, 0)));
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| LssError::Solver("real Schur decomposition did not converge".into()))?;
    Ok(schur.unpack())
}

/// Diagonal block boundaries of a quasi triangular matrix: `(start, size)`
/// with size 1 or 2.
pub fn quasi_blocks(t: &Matrix) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

pub fn schur_eigenvalues(t: &Matrix) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(t.nrows());
    for (i, size) in quasi_blocks(t) {
        if size == 1 {
            out.push(Complex64::new(t[(i, i)], 0.0));
        } else {
            let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let half_tr = 0.5 * (a + d);
            let disc = 0.25 * (a - d) * (a - d) + b * c;
            if disc >= 0.0 {
                let s = disc.sqrt();
                out.push(Complex64::new(half_tr + s, 0.0));
                out.push(Complex64::new(half_tr - s, 0.0));
            } else {
                let s = (-disc).sqrt();
                out.push(Complex64::new(half_tr, s));
                out.push(Complex64::new(half_tr, -s));
            }
        }
    }
    out
}

pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex64>> {
    let (_, t) = real_schur(a)?;
    Ok(schur_eigenvalues(&t))
}

pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// Condition number of `a` in the 2-norm.
pub fn condition_number(a: &Matrix) -> f64 {
    let sv = a.clone().singular_values();
    let (max, min) = (sv.max(), sv.min());
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// 2-norm condition number of the unit-column eigenvector matrix of `a`.
///
/// Eigenvectors come from back substitution on the complex Schur form, with
/// tiny pivots replaced by a floor (as LAPACK's `trevc` does). Defective
/// matrices give huge or infinite values.
pub fn eigenvector_condition(a: &Matrix) -> Result<f64> {
    let (max, min) = eigenvector_singular_range(a)?;
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

/// Largest and smallest singular value of the unit-column eigenvector matrix.
pub fn eigenvector_singular_range(a: &Matrix) -> Result<(f64, f64)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((1.0, 1.0));
    }
    let ac: DMatrix<Complex64> = a.map(|v| Complex64::new(v, 0.0));
    let schur = Schur::try_new(ac, f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| LssError::Solver("complex Schur decomposition did not converge".into()))?;
    let (q, t) = schur.unpack();
    let tnorm = t.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let floor = (f64::EPSILON * tnorm).max(f64::MIN_POSITIVE);
    let mut v = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        x[k] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in i + 1..=k {
                acc += t[(i, j)] * x[j];
            }
            let mut d = t[(i, i)] - lambda;
            if d.norm() < floor {
                d = Complex64::new(floor, 0.0);
            }
            x[i] = -acc / d;
        }
        let xv = DMatrix::from_vec(n, 1, x);
        let col = &q * xv;
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            v[(i, k)] = col[(i, 0)] / norm;
        }
    }
    let sv = v.singular_values();
    Ok((sv.max(), sv.min()))
}

/// Sorts eigenvalues by real part, then imaginary part.
pub fn sort_eigenvalues(mut vals: Vec<Complex64>) -> Vec<Complex64> {
    vals.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    vals
}

/// Largest elementwise distance between two sorted spectra. Infinite when the
/// lengths differ.
pub fn eigenvalue_offset(prev: &[Complex64], next: &[Complex64]) -> f64 {
    if prev.len() != next.len() {
        return f64::INFINITY;
    }
    prev.iter().zip(next).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

/// Relative Frobenius distance `||a - b|| / max(||a||, ||b||)`, zero when
/// both vanish.
pub fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvector_condition_of_normal_matrix_is_one() {
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 2.0, -2.0, -1.0]);
        assert!((eigenvector_condition(&a).unwrap() - 1.0).abs() < 1e-12);
        let a = -Matrix::identity(3, 3);
        assert!((eigenvector_condition(&a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvector_condition_of_jordan_block_is_huge() {
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        assert!(eigenvector_condition(&a).unwrap() > 1e12);
    }

    #[test]
    fn eigenvalues_of_rotation() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let ev = sort_eigenvalues(eigenvalues(&a).unwrap());
        assert!((ev[0] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
        assert!((ev[1] - Complex64::new(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn block_diag_places_blocks() {
        let a = Matrix::from_element(1, 2, 1.0);
        let b = Matrix::from_element(2, 1, 2.0);
        let d = block_diag([&a, &b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(1, 2)], 2.0);
        assert_eq!(d[(0, 2)], 0.0);
    }
}
