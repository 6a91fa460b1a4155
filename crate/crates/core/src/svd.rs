//! Singular value decomposition by one-sided Jacobi rotations, and the
//! rank-r projection built on it.
//!
//! One-sided Jacobi orthogonalizes the columns of the input in place. A
//! column pair is rotated only when its cosine exceeds [`JACOBI_TOL`], so
//! inputs whose columns are already orthogonal (diagonal matrices, for
//! instance) pass through untouched. Singular values are then ordered by a
//! stable sort, which keeps equal values in column order. That gives the
//! fixed tie-breaking rule: among equal singular values, the lower index
//! wins a slot in a truncated projection.

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, RankBudget};

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;

#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// m x k, orthonormal columns.
    pub left: DenseMatrix,
    /// Length k = min(m, n), nonincreasing.
    pub singular_values: Vec<f64>,
    /// n x k, orthonormal columns.
    pub right: DenseMatrix,
}

impl SvdResult {
    /// `left[:, ..k] * diag(sigma[..k]) * right[:, ..k]^T`
    pub fn reconstruct(&self, k: usize) -> DenseMatrix {
        let k = k.min(self.singular_values.len());
        let (m, n) = (self.left.rows(), self.right.rows());
        let mut out = DenseMatrix::zeros(m, n);
        for t in 0..k {
            let s = self.singular_values[t];
            if s == 0.0 {
                continue;
            }
            for i in 0..m {
                let u = self.left[(i, t)] * s;
                if u == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += u * self.right[(j, t)];
                }
            }
        }
        out
    }
}

pub fn svd(x: &DenseMatrix) -> Result<SvdResult> {
    x.ensure_finite()?;
    if x.rows() >= x.cols() {
        Ok(jacobi_tall(x))
    } else {
        let t = jacobi_tall(&x.transpose());
        Ok(SvdResult {
            left: t.right,
            singular_values: t.singular_values,
            right: t.left,
        })
    }
}

/// Jacobi SVD for rows >= cols. Works on column-major copies.
fn jacobi_tall(x: &DenseMatrix) -> SvdResult {
    let (m, n) = x.shape();
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| x.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                let norm = (alpha * beta).sqrt();
                if gamma == 0.0 || norm == 0.0 || gamma.abs() <= JACOBI_TOL * norm {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal values keep column order
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let top = sigma.first().copied().unwrap_or(0.0);
    let mut left = DenseMatrix::zeros(m, n);
    let mut right = DenseMatrix::zeros(n, n);
    let mut pending = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        right.set_column(slot, &v[j]);
        if sigma[slot] > 0.0 && sigma[slot] > top * 1e-14 {
            let col: Vec<f64> = w[j].iter().map(|a| a / sigma[slot]).collect();
            left.set_column(slot, &col);
        } else {
            pending.push(slot);
        }
    }
    complete_orthonormal(&mut left, &pending);

    SvdResult {
        left,
        singular_values: sigma,
        right,
    }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fills the listed columns of `q` with unit vectors orthogonal to every
/// other column. Each slot takes the standard basis vector with the largest
/// residual after projection (lowest index on ties).
fn complete_orthonormal(q: &mut DenseMatrix, slots: &[usize]) {
    let (m, k) = q.shape();
    let mut filled: Vec<bool> = (0..k).map(|j| !slots.contains(&j)).collect();
    for &slot in slots {
        let basis: Vec<Vec<f64>> = (0..k).filter(|&j| filled[j]).map(|j| q.column(j)).collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for candidate in 0..m {
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            // two passes of Gram-Schmidt
            for _ in 0..2 {
                for col in &basis {
                    let proj = dot(col, &e);
                    for (x, c) in e.iter_mut().zip(col) {
                        *x -= proj * c;
                    }
                }
            }
            let norm = dot(&e, &e).sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, e));
            }
        }
        let (norm, e) = best.expect("at least one candidate");
        let unit: Vec<f64> = e.iter().map(|x| x / norm).collect();
        q.set_column(slot, &unit);
        filled[slot] = true;
    }
}

/// Best rank-r approximation in Frobenius norm (truncated SVD). Returns the
/// input unchanged when its trailing singular values are exactly zero.
pub fn project_rank(x: &DenseMatrix, r: RankBudget) -> Result<DenseMatrix> {
    let s = svd(x)?;
    Ok(truncate(x, &s, r.get()))
}

pub(crate) fn truncate(x: &DenseMatrix, s: &SvdResult, r: usize) -> DenseMatrix {
    if s.singular_values.iter().skip(r).all(|&v| v == 0.0) {
        return x.clone();
    }
    s.reconstruct(r)
}

/// Frobenius distance from `x` to the nearest matrix of rank at most r.
pub fn rank_distance(x: &DenseMatrix, r: usize) -> Result<f64> {
    let s = svd(x)?;
    Ok(s.singular_values
        .iter()
        .skip(r)
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt())
}

/// The r-th largest singular value (1-based).
pub fn sigma_r(x: &DenseMatrix, r: RankBudget) -> Result<f64> {
    let k = x.rows().min(x.cols());
    if r.get() > k {
        return Err(Error::InvalidRank {
            rank: r.get(),
            rows: x.rows(),
            cols: x.cols(),
        });
    }
    Ok(svd(x)?.singular_values[r.get() - 1])
}

pub fn spectral_norm(x: &DenseMatrix) -> Result<f64> {
    Ok(svd(x)?.singular_values.first().copied().unwrap_or(0.0))
}

/// Smallest eigenvalue and spectral norm of a symmetric matrix.
pub fn symmetric_extremes(h: &DenseMatrix) -> Result<(f64, f64)> {
    h.ensure_finite()?;
    let n = h.rows();
    h.ensure_shape(n, n)?;
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let mat = nalgebra::DMatrix::from_row_slice(n, n, h.as_slice());
    let eig = nalgebra::SymmetricEigen::new(mat);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let norm = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    Ok((min, norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rb(r: usize) -> RankBudget {
        RankBudget::new(r).unwrap()
    }

    fn orthonormality_error(q: &DenseMatrix) -> f64 {
        let g = q.t_matmul(q);
        g.sub(&DenseMatrix::identity(g.rows())).max_abs()
    }

    fn check_invariants(x: &DenseMatrix) {
        let s = svd(x).unwrap();
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert!(s.singular_values.iter().all(|&v| v >= 0.0));
        assert!(orthonormality_error(&s.left) <= 1e-10);
        assert!(orthonormality_error(&s.right) <= 1e-10);
        let rec = s.reconstruct(s.singular_values.len());
        let rel = rec.sub(x).frob_norm() / x.frob_norm().max(1e-300);
        assert!(x.is_zero() || rel <= 1e-10, "reconstruction error {rel}");
    }

    #[test]
    fn diagonal_is_axis_aligned() {
        let s = svd(&DenseMatrix::from_diag(2, 2, &[3.0, 1.0])).unwrap();
        assert_eq!(s.singular_values, vec![3.0, 1.0]);
        assert_eq!(s.left, DenseMatrix::identity(2));
        assert_eq!(s.right, DenseMatrix::identity(2));
    }

    #[test]
    fn zero_matrix() {
        let z = DenseMatrix::zeros(2, 3);
        let s = svd(&z).unwrap();
        assert_eq!(s.singular_values, vec![0.0, 0.0]);
        check_invariants(&z);
    }

    #[test]
    fn random_4x3_reconstructs() {
        let g = DenseMatrix::from_rows(&[
            vec![0.3, -1.2, 0.7],
            vec![2.1, 0.4, -0.9],
            vec![-0.5, 1.7, 0.2],
            vec![1.1, -0.3, 1.9],
        ])
        .unwrap();
        check_invariants(&g);
        check_invariants(&g.transpose());
    }

    #[test]
    fn rejects_non_finite() {
        let mut x = DenseMatrix::zeros(2, 2);
        x.as_mut_slice()[3] = f64::NAN;
        assert!(matches!(svd(&x), Err(Error::NonFinite { row: 1, col: 1 })));
    }

    #[test]
    fn equal_singular_values_keep_index_order() {
        let x = DenseMatrix::identity(6);
        let p = project_rank(&x, rb(4)).unwrap();
        assert_eq!(p, DenseMatrix::from_diag(6, 6, &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn projection_examples() {
        let p = project_rank(&DenseMatrix::from_diag(2, 2, &[3.0, 1.0]), rb(1)).unwrap();
        assert_eq!(p, DenseMatrix::from_diag(2, 2, &[3.0, 0.0]));

        let x = DenseMatrix::from_diag(3, 3, &[3.0, 2.0, 1.0]);
        let p = project_rank(&x, rb(2)).unwrap();
        assert_eq!(p, DenseMatrix::from_diag(3, 3, &[3.0, 2.0, 0.0]));
        assert_eq!(x.sub(&p).frob_norm(), 1.0);

        let low = DenseMatrix::from_diag(3, 3, &[3.0, 2.0, 0.0]);
        assert_eq!(project_rank(&low, rb(2)).unwrap(), low);
    }

    #[test]
    fn sigma_r_and_norm() {
        let x = DenseMatrix::from_diag(2, 2, &[3.0, 1.0]);
        assert_eq!(sigma_r(&x, rb(2)).unwrap(), 1.0);
        assert_eq!(sigma_r(&DenseMatrix::from_diag(2, 2, &[3.0, 0.0]), rb(2)).unwrap(), 0.0);
        assert!(sigma_r(&x, rb(3)).is_err());
        assert_eq!(spectral_norm(&x).unwrap(), 3.0);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(3, 2)).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_extremes_small() {
        let h = DenseMatrix::from_rows(&[vec![0.0, -2.0], vec![-2.0, 0.0]]).unwrap();
        let (min, norm) = symmetric_extremes(&h).unwrap();
        assert!((min + 2.0).abs() < 1e-14);
        assert!((norm - 2.0).abs() < 1e-14);
    }

    fn matrix_strategy() -> impl Strategy<Value = DenseMatrix> {
        (1usize..=12, 1usize..=12).prop_flat_map(|(m, n)| {
            proptest::collection::vec(-3.0f64..3.0, m * n)
                .prop_map(move |d| DenseMatrix::from_vec(m, n, d).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn svd_invariants_hold(x in matrix_strategy()) {
            check_invariants(&x);
        }

        #[test]
        fn projection_is_optimal_and_idempotent(x in matrix_strategy(), r_seed in 0usize..100) {
            let k = x.rows().min(x.cols());
            let r = 1 + r_seed % k;
            let s = svd(&x).unwrap();
            let p = project_rank(&x, rb(r)).unwrap();
            let tail: f64 = s.singular_values[r..].iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((x.sub(&p).frob_norm() - tail).abs() <= 1e-9);
            let pp = project_rank(&p, rb(r)).unwrap();
            prop_assert!(pp.sub(&p).max_abs() <= 1e-12 * p.max_abs().max(1.0));
            if r < k {
                prop_assert!(sigma_r(&x, rb(r)).unwrap() >= sigma_r(&x, rb(r + 1)).unwrap());
            }
        }
    }
}
