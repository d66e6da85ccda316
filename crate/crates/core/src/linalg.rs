//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative cutoff below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Eigenvalues of a symmetric matrix in ascending order, with matching eigenvector columns.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (j, &i) in idx.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(m);
    vals[vals.len() - 1]
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).0[0]
}

/// Singular values of `d` obtained from the eigenvalues of DᵀD, descending.
pub fn singular_values(d: &DMatrix<f64>) -> Vec<f64> {
    let (vals, _) = sym_eigen(&(d.transpose() * d));
    let mut s: Vec<f64> = vals.iter().map(|&v| v.max(0.0).sqrt()).collect();
    s.reverse();
    s
}

pub fn spectral_norm(d: &DMatrix<f64>) -> f64 {
    if d.nrows() == 0 || d.ncols() == 0 {
        return 0.0;
    }
    singular_values(d)[0]
}

/// Largest and least positive singular value, `None` when the map vanishes.
pub fn extreme_singular_values(d: &DMatrix<f64>) -> Option<(f64, f64)> {
    let s = singular_values(d);
    let top = *s.first()?;
    if top <= 0.0 || !top.is_finite() {
        return None;
    }
    let least = s.iter().copied().filter(|&v| v > RANK_TOL * top).fold(top, f64::min);
    Some((top, least))
}

pub fn rank(d: &DMatrix<f64>) -> usize {
    let s = singular_values(d);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > RANK_TOL * top).count(),
        _ => 0,
    }
}

/// Symmetric square root through the eigendecomposition; `None` when an eigenvalue is below `floor`.
pub fn sqrt_spd(p: &DMatrix<f64>, floor: f64) -> Option<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen(p);
    if vals[0] < floor {
        return None;
    }
    let roots = DMatrix::from_diagonal(&vals.map(f64::sqrt));
    let r = &vecs * roots * vecs.transpose();
    Some((&r + r.transpose()) * 0.5)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_of_coupled_matrix() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r = sqrt_spd(&p, 1e-10).unwrap();
        assert!((&r * &r - &p).abs().max() < 1e-12);
        let (vals, _) = sym_eigen(&r);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn singular_extremes_of_diagonal() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        assert_eq!(extreme_singular_values(&d), Some((2.0, 1.0)));
        assert_eq!(extreme_singular_values(&DMatrix::zeros(2, 2)), None);
        let rank_one = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(rank(&rank_one), 1);
    }
}
