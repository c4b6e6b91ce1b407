//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

/// QR factorisation by twice-iterated classical Gram-Schmidt with a positive
/// diagonal in R. Fails when a column collapses below 1e-300.
pub fn qr_positive(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, k) = m.shape();
    let mut q = DMatrix::<f64>::zeros(n, k);
    let mut r = DMatrix::<f64>::zeros(k, k);
    for j in 0..k {
        let mut v: DVector<f64> = m.column(j).into_owned();
        for _pass in 0..2 {
            for i in 0..j {
                let c = q.column(i).dot(&v);
                r[(i, j)] += c;
                v.axpy(-c, &q.column(i), 1.0);
            }
        }
        let nv = v.norm();
        if !(nv > 1e-300) || !nv.is_finite() {
            return Err(Error::Degeneracy(format!(
                "column {j} collapsed (norm {nv:e})"
            )));
        }
        r[(j, j)] = nv;
        q.set_column(j, &(v / nv));
    }
    Ok((q, r))
}

/// Largest absolute entry of QᵀQ − I.
pub fn gram_deviation(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    let k = g.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Singular values in ascending order together with the matching right
/// singular vectors (as columns).
pub fn svd_ascending(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let svd = m
        .clone()
        .try_svd(false, true, 1e-15, 10_000)
        .ok_or_else(|| Error::Numeric("singular value decomposition did not converge".into()))?;
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Numeric("missing right singular vectors".into()))?;
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let n = m.ncols();
    let mut v = DMatrix::<f64>::zeros(n, order.len());
    for (c, &i) in order.iter().enumerate() {
        v.set_column(c, &vt.row(i).transpose());
    }
    Ok((order.iter().map(|&i| s[i]).collect(), v))
}

/// Orthonormal basis of the orthogonal complement of the column space of an
/// orthonormal `basis` in R^d.
pub fn complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let d = basis.nrows();
    let k = basis.ncols();
    let proj = DMatrix::<f64>::identity(d, d) - basis * basis.transpose();
    let eig = nalgebra::SymmetricEigen::new(proj);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut out = DMatrix::<f64>::zeros(d, d - k);
    for (c, &i) in order.iter().take(d - k).enumerate() {
        out.set_column(c, &eig.eigenvectors.column(i));
    }
    out
}

/// Top-`k` eigenvectors (descending eigenvalue) of a symmetric matrix.
pub fn top_eigenvectors(sym: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let eig = nalgebra::SymmetricEigen::new(sym.clone());
    let n = sym.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut out = DMatrix::<f64>::zeros(n, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        out.set_column(c, &eig.eigenvectors.column(i));
    }
    out
}

/// Largest principal angle (radians) between the column spaces of two
/// matrices with orthonormal columns and equal rank.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let m = a.transpose() * b;
    let s = m.singular_values();
    let smallest = s.iter().cloned().fold(f64::INFINITY, f64::min);
    smallest.clamp(-1.0, 1.0).acos()
}

/// Angle (radians) between a vector and the column space of an orthonormal basis.
pub fn angle_to_subspace(v: &DVector<f64>, basis: &DMatrix<f64>) -> f64 {
    let nv = v.norm();
    if nv == 0.0 {
        return 0.0;
    }
    let proj = basis * (basis.transpose() * v);
    let residual = (v - &proj).norm();
    residual.atan2(proj.norm())
}

/// Second compound matrix: entry ((i,j),(k,l)) is the 2×2 minor on rows
/// i<j and columns k<l, pairs enumerated lexicographically.
pub fn compound2(m: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = pairs(m.nrows());
    let cols = pairs(m.ncols());
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
        let (i, j) = rows[r];
        let (k, l) = cols[c];
        m[(i, k)] * m[(j, l)] - m[(i, l)] * m[(j, k)]
    })
}

/// Lexicographic list of index pairs i<j below n.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push((i, j));
        }
    }
    out
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Least-squares line y = slope·x + intercept; returns (slope, intercept, r²).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    (slope, intercept, r2)
}

/// Linear-interpolated percentile (`p` in [0,100]) of unsorted data.
pub fn percentile(data: &[f64], p: f64) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = (p / 100.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    v[lo] * (1.0 - w) + v[hi] * w
}

pub fn median(data: &[f64]) -> f64 {
    percentile(data, 50.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_reconstructs_and_is_orthonormal() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.25]);
        let (q, r) = qr_positive(&m).unwrap();
        assert!(gram_deviation(&q) < 1e-14);
        assert!((&q * &r - &m).abs().max() < 1e-14);
        assert!(r[(0, 0)] > 0.0 && r[(1, 1)] > 0.0);
    }

    #[test]
    fn qr_rejects_rank_collapse() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(qr_positive(&m), Err(Error::Degeneracy(_))));
    }

    #[test]
    fn compound_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 5.0]));
        let c = compound2(&m);
        assert_eq!(c[(0, 0)], 6.0);
        assert_eq!(c[(1, 1)], 10.0);
        assert_eq!(c[(2, 2)], 15.0);
        assert_eq!(c[(0, 1)], 0.0);
    }

    #[test]
    fn compound_is_multiplicative() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0, 2.0, 1.0, 1.0]);
        let b = DMatrix::from_row_slice(3, 3, &[0.3, 0.0, 1.0, 1.0, 2.0, -1.0, 0.0, 1.0, 4.0]);
        let lhs = compound2(&(&a * &b));
        let rhs = compound2(&a) * compound2(&b);
        assert!((lhs - rhs).abs().max() < 1e-12);
    }

    #[test]
    fn svd_sorted_ascending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 0.5, 2.0]));
        let (s, v) = svd_ascending(&m).unwrap();
        assert_eq!(s.len(), 3);
        assert!((s[0] - 0.5).abs() < 1e-14 && (s[2] - 3.0).abs() < 1e-14);
        assert!((v[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let (s, b, r2) = linear_fit(&xs, &ys);
        assert!((s - 2.0).abs() < 1e-14 && (b + 1.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0), 2.0);
        assert_eq!(percentile(&[0.0, 10.0], 5.0), 0.5);
    }
}
