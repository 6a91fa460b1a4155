//! The factorized objective `g(A, B) = f(A Bᵀ)`.
//!
//! Directions `(A₁, B₁)` are vectorized as the columns of `A₁` followed by
//! the columns of `B₁`, each column stored top to bottom: entry `A₁[i, j]`
//! sits at index `j·m + i` and `B₁[i, j]` at `m·r + j·n + i`. The assembled
//! Hessian uses this ordering; it is part of the certificate format.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::objective::{FiniteDiffReport, Objective};
use crate::random::gaussian_matrix;

/// Default limit on `(m + n)·r` for dense Hessian assembly.
pub const DEFAULT_HESSIAN_CAP: usize = 600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPair {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
}

/// A tangent direction `(A₁, B₁)`; also the type of `∇g`.
pub type FactorDirection = FactorPair;

impl FactorPair {
    pub fn new(a: DenseMatrix, b: DenseMatrix) -> Result<Self> {
        if a.cols() != b.cols() {
            return Err(Error::DimensionMismatch {
                expected: format!("B with {} columns", a.cols()),
                got: format!("{} columns", b.cols()),
            });
        }
        Ok(Self { a, b })
    }

    pub fn zeros(m: usize, n: usize, r: usize) -> Self {
        Self {
            a: DenseMatrix::zeros(m, r),
            b: DenseMatrix::zeros(n, r),
        }
    }

    /// `A = U√Σ`, `B = V√Σ` from the top-`r` singular triplets of `x`.
    pub fn balanced_from(x: &DenseMatrix, r: usize) -> Result<Self> {
        let s = crate::svd::svd(x)?;
        let (m, n) = x.shape();
        let mut a = DenseMatrix::zeros(m, r);
        let mut b = DenseMatrix::zeros(n, r);
        for t in 0..r.min(s.singular_values.len()) {
            let w = s.singular_values[t].sqrt();
            for i in 0..m {
                a[(i, t)] = s.left[(i, t)] * w;
            }
            for j in 0..n {
                b[(j, t)] = s.right[(j, t)] * w;
            }
        }
        Ok(Self { a, b })
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn product(&self) -> DenseMatrix {
        self.a.matmul_t(&self.b)
    }

    pub fn frob_norm(&self) -> f64 {
        (self.a.frob_norm_sq() + self.b.frob_norm_sq()).sqrt()
    }

    pub fn dim(&self) -> usize {
        (self.a.rows() + self.b.rows()) * self.rank()
    }

    pub fn axpy(&mut self, s: f64, other: &Self) {
        self.a.axpy(s, &other.a);
        self.b.axpy(s, &other.b);
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            a: self.a.scale(s),
            b: self.b.scale(s),
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.a.dot(&other.a) + self.b.dot(&other.b)
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let (m, n, r) = (self.a.rows(), self.b.rows(), self.rank());
        let mut v = Vec::with_capacity((m + n) * r);
        for j in 0..r {
            v.extend(self.a.column(j));
        }
        for j in 0..r {
            v.extend(self.b.column(j));
        }
        v
    }

    pub fn from_vector(m: usize, n: usize, r: usize, v: &[f64]) -> Result<Self> {
        if v.len() != (m + n) * r {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries", (m + n) * r),
                got: format!("{}", v.len()),
            });
        }
        let mut p = Self::zeros(m, n, r);
        for j in 0..r {
            p.a.set_column(j, &v[j * m..(j + 1) * m]);
            let off = m * r + j * n;
            p.b.set_column(j, &v[off..off + n]);
        }
        Ok(p)
    }

    /// Single-entry direction for vector index `k`.
    fn basis(m: usize, n: usize, r: usize, k: usize) -> Self {
        let mut p = Self::zeros(m, n, r);
        if k < m * r {
            p.a[(k % m, k / m)] = 1.0;
        } else {
            let k = k - m * r;
            p.b[(k % n, k / n)] = 1.0;
        }
        p
    }
}

fn check_pair(obj: &Objective, p: &FactorPair) -> Result<()> {
    p.a.ensure_shape(obj.rows(), p.rank())?;
    p.b.ensure_shape(obj.cols(), p.rank())
}

pub fn g_value(obj: &Objective, p: &FactorPair) -> Result<f64> {
    check_pair(obj, p)?;
    obj.value(&p.product())
}

/// `(∇f(ABᵀ)·B, ∇f(ABᵀ)ᵀ·A)`
pub fn g_gradient(obj: &Objective, p: &FactorPair) -> Result<FactorDirection> {
    check_pair(obj, p)?;
    let grad = obj.gradient(&p.product())?;
    Ok(pullback(&grad, p))
}

pub(crate) fn pullback(grad: &DenseMatrix, p: &FactorPair) -> FactorDirection {
    FactorPair {
        a: grad.matmul(&p.b),
        b: grad.t_matmul(&p.a),
    }
}

/// `⟨∇f(X), A₁B₂ᵀ + A₂B₁ᵀ⟩ + ∇²f(X)(AB₁ᵀ + A₁Bᵀ, AB₂ᵀ + A₂Bᵀ)` with `X = ABᵀ`.
pub fn g_hess_quadform(
    obj: &Objective,
    p: &FactorPair,
    d1: &FactorDirection,
    d2: &FactorDirection,
) -> Result<f64> {
    check_pair(obj, p)?;
    check_pair(obj, d1)?;
    check_pair(obj, d2)?;
    if d1.rank() != p.rank() || d2.rank() != p.rank() {
        return Err(Error::DimensionMismatch {
            expected: format!("rank {}", p.rank()),
            got: format!("ranks {} and {}", d1.rank(), d2.rank()),
        });
    }
    let grad = obj.gradient(&p.product())?;
    Ok(hess_form(obj, &grad, p, d1, d2))
}

fn lift(p: &FactorPair, d: &FactorDirection) -> DenseMatrix {
    p.a.matmul_t(&d.b).add(&d.a.matmul_t(&p.b))
}

fn hess_form(
    obj: &Objective,
    grad: &DenseMatrix,
    p: &FactorPair,
    d1: &FactorDirection,
    d2: &FactorDirection,
) -> f64 {
    let cross = d1.a.matmul_t(&d2.b).add(&d2.a.matmul_t(&d1.b));
    grad.dot(&cross) + obj.hess_bilinear(&lift(p, d1), &lift(p, d2))
}

/// Dense `∇²g(A, B)` assembled by polarization over basis directions:
/// `H_pq = ½[Q(e_p + e_q) − Q(e_p) − Q(e_q)]` with `Q(d) = g_hess_quadform(d, d)`.
pub fn g_hessian_matrix(obj: &Objective, p: &FactorPair, cap: usize) -> Result<DenseMatrix> {
    check_pair(obj, p)?;
    let dim = p.dim();
    if dim > cap {
        return Err(Error::HessianTooLarge { size: dim, cap });
    }
    let (m, n, r) = (obj.rows(), obj.cols(), p.rank());
    let grad = obj.gradient(&p.product())?;
    let basis: Vec<FactorPair> = (0..dim).map(|k| FactorPair::basis(m, n, r, k)).collect();
    let quad = |d: &FactorPair| hess_form(obj, &grad, p, d, d);
    let diag: Vec<f64> = basis.iter().map(quad).collect();

    let mut h = DenseMatrix::zeros(dim, dim);
    for i in 0..dim {
        h[(i, i)] = diag[i];
        for j in i + 1..dim {
            let mut sum = basis[i].clone();
            sum.axpy(1.0, &basis[j]);
            let v = 0.5 * (quad(&sum) - diag[i] - diag[j]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// Gradient of `g` against central differences of `g_value` at step `h`,
/// and `g_hess_quadform(d, d)` against second differences at
/// `curvature_step` along `directions` random unit directions.
pub fn g_finite_diff_check(
    obj: &Objective,
    p: &FactorPair,
    h: f64,
    curvature_step: f64,
    directions: usize,
    seed: u64,
) -> Result<FiniteDiffReport> {
    if !(h > 0.0 && curvature_step > 0.0) {
        return Err(Error::InvalidArgument("finite-difference steps must be > 0".into()));
    }
    check_pair(obj, p)?;
    let (m, n, r) = (obj.rows(), obj.cols(), p.rank());
    let grad = g_gradient(obj, p)?.to_vector();
    let base = p.to_vector();
    let eval = |v: &[f64]| -> Result<f64> { g_value(obj, &FactorPair::from_vector(m, n, r, v)?) };
    let mut probe = base.clone();
    let mut diff_sq = 0.0;
    for k in 0..base.len() {
        probe[k] = base[k] + h;
        let fp = eval(&probe)?;
        probe[k] = base[k] - h;
        let fm = eval(&probe)?;
        probe[k] = base[k];
        diff_sq += ((fp - fm) / (2.0 * h) - grad[k]).powi(2);
    }
    let grad_norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    let grad_err = diff_sq.sqrt() / grad_norm.max(1.0);

    let mut rng = crate::random::substream(seed, 0);
    let g0 = g_value(obj, p)?;
    let mut hess_err = 0.0_f64;
    for _ in 0..directions {
        let d = FactorPair {
            a: gaussian_matrix(&mut rng, m, r, 1.0),
            b: gaussian_matrix(&mut rng, n, r, 1.0),
        };
        let d = d.scale(1.0 / d.frob_norm());
        let mut plus = p.clone();
        plus.axpy(curvature_step, &d);
        let mut minus = p.clone();
        minus.axpy(-curvature_step, &d);
        let second = (g_value(obj, &plus)? - 2.0 * g0 + g_value(obj, &minus)?)
            / (curvature_step * curvature_step);
        let q = g_hess_quadform(obj, p, &d, &d)?;
        hess_err = hess_err.max((second - q).abs() / q.abs().max(1.0));
    }
    Ok(FiniteDiffReport {
        grad_max_rel_err: grad_err,
        hess_max_rel_err: hess_err,
        h,
        curvature_step,
        directions,
    })
}
