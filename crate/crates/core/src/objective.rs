//! Twice-differentiable matrix objectives.
//!
//! Every family implemented here is quadratic in `X`, so the Hessian
//! quadratic form does not depend on the point at which it is evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, RankBudget};
use crate::random::gaussian_matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectiveKind {
    /// `½‖X − M‖²_F`
    FroLoss { target: DenseMatrix },
    /// `½ Σ_i (⟨A_i, X⟩ − b_i)²`
    MatrixSensing {
        measurements: Vec<DenseMatrix>,
        observations: Vec<f64>,
    },
    /// `½‖P_Ω(X − M)‖²_F`, with `mask` holding 1 on observed entries.
    MatrixCompletion {
        target: DenseMatrix,
        mask: DenseMatrix,
    },
    /// `−β⟨X₁, X − X₀⟩ + (α/2)‖X − X₀‖²_F + ((β−α)/2)‖M ∘ (X − X₀)‖²_F`
    Counterexample {
        alpha: f64,
        beta: f64,
        x0: DenseMatrix,
        x1: DenseMatrix,
        mask: DenseMatrix,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawObjective")]
pub struct Objective {
    pub dims: (usize, usize),
    #[serde(flatten)]
    pub kind: ObjectiveKind,
}

#[derive(Deserialize)]
struct RawObjective {
    dims: (usize, usize),
    #[serde(flatten)]
    kind: ObjectiveKind,
}

impl TryFrom<RawObjective> for Objective {
    type Error = Error;

    fn try_from(raw: RawObjective) -> Result<Self> {
        let obj = Objective::new(raw.kind)?;
        if obj.dims != raw.dims {
            return Err(Error::DimensionMismatch {
                expected: format!("{:?}", raw.dims),
                got: format!("{:?}", obj.dims),
            });
        }
        Ok(obj)
    }
}

/// Restricted strong convexity / smoothness constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessProfile {
    pub alpha: f64,
    pub beta: f64,
    /// `beta / alpha`; absent when `alpha == 0`.
    pub kappa: Option<f64>,
    pub exact: bool,
    pub rank_used: usize,
}

impl SmoothnessProfile {
    pub fn new(alpha: f64, beta: f64, exact: bool, rank_used: usize) -> Self {
        let kappa = (alpha > 0.0).then(|| beta / alpha);
        Self {
            alpha,
            beta,
            kappa,
            exact,
            rank_used,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteDiffReport {
    pub grad_max_rel_err: f64,
    pub hess_max_rel_err: f64,
    pub h: f64,
    pub curvature_step: f64,
    pub directions: usize,
}

impl Objective {
    pub fn new(kind: ObjectiveKind) -> Result<Self> {
        let dims = match &kind {
            ObjectiveKind::FroLoss { target } => target.shape(),
            ObjectiveKind::MatrixSensing {
                measurements,
                observations,
            } => {
                let first = measurements.first().ok_or_else(|| {
                    Error::InvalidArgument("matrix sensing needs at least one measurement".into())
                })?;
                if measurements.len() != observations.len() {
                    return Err(Error::DimensionMismatch {
                        expected: format!("{} observations", measurements.len()),
                        got: format!("{}", observations.len()),
                    });
                }
                for a in measurements {
                    a.ensure_shape(first.rows(), first.cols())?;
                }
                if observations.iter().any(|b| !b.is_finite()) {
                    return Err(Error::InvalidArgument("non-finite observation".into()));
                }
                first.shape()
            }
            ObjectiveKind::MatrixCompletion { target, mask } => {
                mask.ensure_shape(target.rows(), target.cols())?;
                ensure_binary(mask)?;
                target.shape()
            }
            ObjectiveKind::Counterexample {
                alpha,
                beta,
                x0,
                x1,
                mask,
            } => {
                if !(*alpha > 0.0 && beta >= alpha && beta.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "need 0 < alpha <= beta, got alpha={alpha}, beta={beta}"
                    )));
                }
                x1.ensure_shape(x0.rows(), x0.cols())?;
                mask.ensure_shape(x0.rows(), x0.cols())?;
                ensure_binary(mask)?;
                x0.shape()
            }
        };
        Ok(Self { dims, kind })
    }

    pub fn fro_loss(target: DenseMatrix) -> Self {
        Self::new(ObjectiveKind::FroLoss { target }).expect("fro-loss is always valid")
    }

    pub fn rows(&self) -> usize {
        self.dims.0
    }

    pub fn cols(&self) -> usize {
        self.dims.1
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ObjectiveKind::FroLoss { .. } => "fro-loss",
            ObjectiveKind::MatrixSensing { .. } => "matrix-sensing",
            ObjectiveKind::MatrixCompletion { .. } => "matrix-completion",
            ObjectiveKind::Counterexample { .. } => "counterexample",
        }
    }

    fn check(&self, x: &DenseMatrix) -> Result<()> {
        x.ensure_shape(self.dims.0, self.dims.1)
    }

    pub fn value(&self, x: &DenseMatrix) -> Result<f64> {
        self.check(x)?;
        Ok(match &self.kind {
            ObjectiveKind::FroLoss { target } => 0.5 * x.sub(target).frob_norm_sq(),
            ObjectiveKind::MatrixSensing {
                measurements,
                observations,
            } => {
                0.5 * measurements
                    .iter()
                    .zip(observations)
                    .map(|(a, b)| (a.dot(x) - b).powi(2))
                    .sum::<f64>()
            }
            ObjectiveKind::MatrixCompletion { target, mask } => {
                0.5 * mask.hadamard(&x.sub(target)).frob_norm_sq()
            }
            ObjectiveKind::Counterexample {
                alpha,
                beta,
                x0,
                x1,
                mask,
            } => {
                let d = x.sub(x0);
                -beta * x1.dot(&d)
                    + 0.5 * alpha * d.frob_norm_sq()
                    + 0.5 * (beta - alpha) * mask.hadamard(&d).frob_norm_sq()
            }
        })
    }

    pub fn gradient(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check(x)?;
        Ok(match &self.kind {
            ObjectiveKind::FroLoss { target } => x.sub(target),
            ObjectiveKind::MatrixSensing {
                measurements,
                observations,
            } => {
                let mut g = DenseMatrix::zeros(self.dims.0, self.dims.1);
                for (a, b) in measurements.iter().zip(observations) {
                    g.axpy(a.dot(x) - b, a);
                }
                g
            }
            ObjectiveKind::MatrixCompletion { target, mask } => mask.hadamard(&x.sub(target)),
            ObjectiveKind::Counterexample {
                alpha,
                beta,
                x0,
                x1,
                mask,
            } => {
                let d = x.sub(x0);
                let mut g = d.scale(*alpha);
                g.axpy(beta - alpha, &mask.hadamard(&d));
                g.axpy(-beta, x1);
                g
            }
        })
    }

    /// `∇²f(X)(D1, D2)`.
    pub fn hess_quadform(
        &self,
        x: &DenseMatrix,
        d1: &DenseMatrix,
        d2: &DenseMatrix,
    ) -> Result<f64> {
        self.check(x)?;
        self.check(d1)?;
        self.check(d2)?;
        Ok(self.hess_bilinear(d1, d2))
    }

    /// The (point-independent) Hessian bilinear form, without shape checks.
    pub(crate) fn hess_bilinear(&self, d1: &DenseMatrix, d2: &DenseMatrix) -> f64 {
        match &self.kind {
            ObjectiveKind::FroLoss { .. } => d1.dot(d2),
            ObjectiveKind::MatrixSensing { measurements, .. } => measurements
                .iter()
                .map(|a| a.dot(d1) * a.dot(d2))
                .sum(),
            ObjectiveKind::MatrixCompletion { mask, .. } => masked_dot(mask, d1, d2),
            ObjectiveKind::Counterexample {
                alpha, beta, mask, ..
            } => alpha * d1.dot(d2) + (beta - alpha) * masked_dot(mask, d1, d2),
        }
    }

    /// `f(X + Δ) − f(X)` from the gradient at `X`. Exact for the quadratic
    /// families here and free of the cancellation in a difference of values.
    pub fn quadratic_change(&self, grad: &DenseMatrix, delta: &DenseMatrix) -> f64 {
        grad.dot(delta) + 0.5 * self.hess_bilinear(delta, delta)
    }

    /// An upper bound on the operator norm of the Hessian, hence on the local
    /// curvature at every point. Exact for every implemented family.
    pub fn hessian_norm(&self) -> f64 {
        match &self.kind {
            ObjectiveKind::FroLoss { .. } => 1.0,
            ObjectiveKind::MatrixCompletion { mask, .. } => {
                if mask.is_zero() {
                    0.0
                } else {
                    1.0
                }
            }
            ObjectiveKind::Counterexample { beta, mask, alpha, .. } => {
                if mask.is_zero() {
                    *alpha
                } else {
                    *beta
                }
            }
            ObjectiveKind::MatrixSensing { measurements, .. } => {
                // λ_max(𝒜*𝒜) = σ_1(stacked measurement matrix)²
                let p = measurements.len();
                let mn = self.dims.0 * self.dims.1;
                let mut stacked = Vec::with_capacity(p * mn);
                for a in measurements {
                    stacked.extend_from_slice(a.as_slice());
                }
                let s = DenseMatrix::from_vec(p, mn, stacked).expect("finite measurements");
                let top = crate::svd::spectral_norm(&s).expect("finite measurements");
                top * top
            }
        }
    }

    /// Restricted strong convexity / smoothness constants at rank `r`.
    ///
    /// Fro-loss and the counterexample have analytic constants. Matrix
    /// completion reports `alpha = 0` unless every entry is observed.
    /// Matrix sensing falls back to sampling the Rayleigh quotient of the
    /// Hessian over random directions of rank at most `2r`, which yields
    /// an over-estimate of alpha and an under-estimate of beta.
    pub fn estimate_restricted_constants(
        &self,
        r: RankBudget,
        trials: usize,
        seed: u64,
    ) -> Result<SmoothnessProfile> {
        if trials < 1 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        let r = r.get();
        Ok(match &self.kind {
            ObjectiveKind::FroLoss { .. } => SmoothnessProfile::new(1.0, 1.0, true, r),
            ObjectiveKind::Counterexample { alpha, beta, .. } => {
                SmoothnessProfile::new(*alpha, *beta, true, r)
            }
            ObjectiveKind::MatrixCompletion { mask, .. } => {
                if mask.as_slice().iter().all(|&v| v == 1.0) {
                    SmoothnessProfile::new(1.0, 1.0, true, r)
                } else {
                    SmoothnessProfile::new(0.0, 1.0, false, r)
                }
            }
            ObjectiveKind::MatrixSensing { .. } => {
                let (m, n) = self.dims;
                let k = (2 * r).min(m.min(n));
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut lo = f64::INFINITY;
                let mut hi = 0.0_f64;
                for _ in 0..trials {
                    let g = gaussian_matrix(&mut rng, m, k, 1.0);
                    let h = gaussian_matrix(&mut rng, n, k, 1.0);
                    let d = g.matmul_t(&h);
                    let norm_sq = d.frob_norm_sq();
                    if norm_sq == 0.0 {
                        continue;
                    }
                    let q = self.hess_bilinear(&d, &d) / norm_sq;
                    lo = lo.min(q);
                    hi = hi.max(q);
                }
                SmoothnessProfile::new(lo, hi, false, r)
            }
        })
    }

    /// Compares the analytic gradient with central differences of the value
    /// (step `h`) and the Hessian quadratic form with second differences of
    /// the value along 20 random unit directions (step `sqrt(h)`).
    pub fn finite_diff_check(&self, x: &DenseMatrix, h: f64, seed: u64) -> Result<FiniteDiffReport> {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument("finite-difference step must be > 0".into()));
        }
        let (m, n) = self.dims;
        let grad = self.gradient(x)?;
        let mut fd = DenseMatrix::zeros(m, n);
        let mut probe = x.clone();
        for i in 0..m {
            for j in 0..n {
                let orig = probe[(i, j)];
                probe[(i, j)] = orig + h;
                let fp = self.value(&probe)?;
                probe[(i, j)] = orig - h;
                let fm = self.value(&probe)?;
                probe[(i, j)] = orig;
                fd[(i, j)] = (fp - fm) / (2.0 * h);
            }
        }
        let grad_err = fd.sub(&grad).frob_norm() / grad.frob_norm().max(1.0);

        let step = h.sqrt();
        let directions = 20;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f0 = self.value(x)?;
        let mut hess_err = 0.0_f64;
        for _ in 0..directions {
            let mut d = gaussian_matrix(&mut rng, m, n, 1.0);
            let norm = d.frob_norm();
            d = d.scale(1.0 / norm);
            let mut xp = x.clone();
            xp.axpy(step, &d);
            let mut xm = x.clone();
            xm.axpy(-step, &d);
            let second = (self.value(&xp)? - 2.0 * f0 + self.value(&xm)?) / (step * step);
            let q = self.hess_quadform(x, &d, &d)?;
            hess_err = hess_err.max((second - q).abs() / q.abs().max(1.0));
        }
        Ok(FiniteDiffReport {
            grad_max_rel_err: grad_err,
            hess_max_rel_err: hess_err,
            h,
            curvature_step: step,
            directions,
        })
    }
}

fn masked_dot(mask: &DenseMatrix, a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    mask.as_slice()
        .iter()
        .zip(a.as_slice().iter().zip(b.as_slice()))
        .map(|(&w, (&x, &y))| w * x * y)
        .sum()
}

fn ensure_binary(mask: &DenseMatrix) -> Result<()> {
    if mask.as_slice().iter().all(|&v| v == 0.0 || v == 1.0) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("mask entries must be 0 or 1".into()))
    }
}
