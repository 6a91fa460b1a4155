//! Executable stationarity and optimality certificates.
//!
//! Every report carries the tolerance it was judged against so that a
//! serialized certificate can be re-checked independently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorized::{g_hessian_matrix, pullback, FactorPair, DEFAULT_HESSIAN_CAP};
use crate::matrix::{DenseMatrix, RankBudget};
use crate::objective::Objective;
use crate::random::gaussian_matrix;
use crate::svd::{rank_distance, spectral_norm, svd, symmetric_extremes};

/// Default relative tolerance on the smallest Hessian eigenvalue.
pub const DEFAULT_TOL_EIG: f64 = 1e-8;

/// `σ_r(X) ≤ RANK_DEFICIENCY_THRESHOLD · σ_1(X)` counts as rank below `r`.
pub const RANK_DEFICIENCY_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StationarityVerdict {
    Stationary,
    /// All conditions hold and the step-size margin is zero within tolerance.
    Boundary,
    NotStationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    /// `‖∇f(X)ᵀU_X‖_F`
    pub grad_left_residual: f64,
    /// `‖∇f(X)V_X‖_F`
    pub grad_right_residual: f64,
    /// `σ_r(X) − η‖∇f(X)‖`
    pub margin: f64,
    /// `‖η∇f(X)‖_F − d*`, where `d*` is the distance from `X − η∇f(X)` to
    /// the nearest rank-`r` matrix. Zero iff `X` is one of the (possibly
    /// several) best rank-`r` approximations of the gradient step.
    pub projection_residual: f64,
    pub sigma_r: f64,
    pub grad_spectral_norm: f64,
    pub eta: f64,
    pub tol: f64,
    /// `tol · max(1, ‖X‖_F)`, the threshold actually applied.
    pub threshold: f64,
    pub verdict: StationarityVerdict,
}

impl StationarityReport {
    /// Boundary points count as stationary.
    pub fn is_stationary(&self) -> bool {
        self.verdict != StationarityVerdict::NotStationary
    }
}

fn check_rank_fits(x: &DenseMatrix, r: RankBudget) -> Result<()> {
    if r.get() > x.rows().min(x.cols()) {
        return Err(Error::InvalidRank {
            rank: r.get(),
            rows: x.rows(),
            cols: x.cols(),
        });
    }
    Ok(())
}

/// The three fixed-point conditions of projected gradient descent at step
/// `eta`: gradient orthogonal to the top-`r` singular subspaces of `X`, and
/// `η‖∇f(X)‖ ≤ σ_r(X)`.
pub fn check_pgd_stationary(
    obj: &Objective,
    x: &DenseMatrix,
    r: RankBudget,
    eta: f64,
    tol: f64,
) -> Result<StationarityReport> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be > 0, got {eta}")));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be >= 0, got {tol}")));
    }
    x.ensure_shape(obj.rows(), obj.cols())?;
    check_rank_fits(x, r)?;
    let r = r.get();
    let s = svd(x)?;
    let sigma_first = s.singular_values[0];
    if let Some(&next) = s.singular_values.get(r) {
        if next > tol * sigma_first {
            return Err(Error::NotLowRank {
                rank: r,
                sigma_next: next,
                sigma_first,
            });
        }
    }

    let grad = obj.gradient(x)?;
    let u = s.left.leading_columns(r);
    let v = s.right.leading_columns(r);
    let grad_left_residual = grad.t_matmul(&u).frob_norm();
    let grad_right_residual = grad.matmul(&v).frob_norm();
    let grad_spectral_norm = spectral_norm(&grad)?;
    let sigma_r = s.singular_values[r - 1];
    let margin = sigma_r - eta * grad_spectral_norm;

    let mut step = x.clone();
    step.axpy(-eta, &grad);
    let projection_residual = (eta * grad.frob_norm() - rank_distance(&step, r)?).max(0.0);

    let threshold = tol * x.frob_norm().max(1.0);
    let holds = grad_left_residual <= threshold
        && grad_right_residual <= threshold
        && margin >= -threshold
        && projection_residual <= threshold;
    let verdict = if !holds {
        StationarityVerdict::NotStationary
    } else if margin.abs() <= threshold {
        StationarityVerdict::Boundary
    } else {
        StationarityVerdict::Stationary
    };
    Ok(StationarityReport {
        grad_left_residual,
        grad_right_residual,
        margin,
        projection_residual,
        sigma_r,
        grad_spectral_norm,
        eta,
        tol,
        threshold,
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FospReport {
    pub is_fosp: bool,
    /// `‖∇f(ABᵀ)B‖_F`
    pub residual_a: f64,
    /// `‖∇f(ABᵀ)ᵀA‖_F`
    pub residual_b: f64,
    pub tol: f64,
    /// `tol · max(1, ‖∇f‖_F · ‖(A, B)‖_F)`
    pub threshold: f64,
}

/// First-order stationarity of `g(A, B) = f(ABᵀ)`.
pub fn check_fosp(obj: &Objective, p: &FactorPair, tol: f64) -> Result<FospReport> {
    p.a.ensure_shape(obj.rows(), p.rank())?;
    p.b.ensure_shape(obj.cols(), p.rank())?;
    let grad = obj.gradient(&p.product())?;
    let pulled = pullback(&grad, p);
    let residual_a = pulled.a.frob_norm();
    let residual_b = pulled.b.frob_norm();
    let threshold = tol * (grad.frob_norm() * p.frob_norm()).max(1.0);
    Ok(FospReport {
        is_fosp: residual_a <= threshold && residual_b <= threshold,
        residual_a,
        residual_b,
        tol,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SospVerdict {
    Sosp,
    FospOnly,
    NotStationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SospCertificate {
    /// Larger of the two factor-gradient norms.
    pub fosp_residual: f64,
    pub min_eigenvalue: f64,
    /// Spectral norm of the assembled Hessian.
    pub scale: f64,
    pub tol_g: f64,
    pub tol_eig: f64,
    /// `tol_eig · max(1, scale)`
    pub eig_threshold: f64,
    pub hessian_size: usize,
    pub verdict: SospVerdict,
}

impl SospCertificate {
    pub fn is_sosp(&self) -> bool {
        self.verdict == SospVerdict::Sosp
    }
}

/// Second-order certificate from the full eigendecomposition of the dense
/// Hessian of `g`. `tol_g` bounds the gradient residual absolutely;
/// `tol_eig` is relative to the Hessian scale.
pub fn certify_sosp(obj: &Objective, p: &FactorPair, tol_g: f64, tol_eig: f64) -> Result<SospCertificate> {
    certify_sosp_with_cap(obj, p, tol_g, tol_eig, DEFAULT_HESSIAN_CAP)
}

pub fn certify_sosp_with_cap(
    obj: &Objective,
    p: &FactorPair,
    tol_g: f64,
    tol_eig: f64,
    cap: usize,
) -> Result<SospCertificate> {
    let h = g_hessian_matrix(obj, p, cap)?;
    let grad = pullback(&obj.gradient(&p.product())?, p);
    let fosp_residual = grad.a.frob_norm().max(grad.b.frob_norm());
    let (min_eigenvalue, scale) = symmetric_extremes(&h)?;
    let eig_threshold = tol_eig * scale.max(1.0);
    let verdict = if fosp_residual > tol_g {
        SospVerdict::NotStationary
    } else if min_eigenvalue >= -eig_threshold {
        SospVerdict::Sosp
    } else {
        SospVerdict::FospOnly
    };
    Ok(SospCertificate {
        fosp_residual,
        min_eigenvalue,
        scale,
        tol_g,
        tol_eig,
        eig_threshold,
        hessian_size: h.rows(),
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    pub beta_f_hat: f64,
    pub epsilon_used: f64,
    pub samples: usize,
    /// Always true: a sampled supremum can only under-estimate.
    pub is_lower_bound: bool,
}

/// Sampled lower bound on the local curvature at `X`: the largest observed
/// `[f(Y) − f(X) − ⟨∇f(X), Y − X⟩] / (½‖Y − X‖²_F)` over rank-`r` points `Y`
/// within distance `epsilon`, obtained by moving a balanced factorization of
/// `X` along random factor directions.
pub fn estimate_local_curvature(
    obj: &Objective,
    x: &DenseMatrix,
    r: RankBudget,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<CurvatureEstimate> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    x.ensure_shape(obj.rows(), obj.cols())?;
    check_rank_fits(x, r)?;
    let (m, n) = x.shape();
    let base = FactorPair::balanced_from(x, r.get())?;
    let fx = obj.value(x)?;
    let grad = obj.gradient(x)?;
    let mut rng = crate::random::substream(seed, 0);
    let mut best = f64::NEG_INFINITY;
    let mut used = 0;
    for _ in 0..samples {
        let dir = FactorPair {
            a: gaussian_matrix(&mut rng, m, r.get(), 1.0),
            b: gaussian_matrix(&mut rng, n, r.get(), 1.0),
        };
        let mut t = epsilon / dir.frob_norm().max(f64::MIN_POSITIVE);
        let mut delta;
        loop {
            let mut moved = base.clone();
            moved.axpy(t, &dir);
            delta = moved.product().sub(x);
            if delta.frob_norm() <= epsilon {
                break;
            }
            t *= 0.5;
        }
        let dist_sq = delta.frob_norm_sq();
        if dist_sq == 0.0 {
            continue;
        }
        let y = x.add(&delta);
        let ratio = (obj.value(&y)? - fx - grad.dot(&delta)) / (0.5 * dist_sq);
        best = best.max(ratio);
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidArgument("no usable curvature samples".into()));
    }
    Ok(CurvatureEstimate {
        beta_f_hat: best,
        epsilon_used: epsilon,
        samples: used,
        is_lower_bound: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclusionTolerances {
    pub tol_g: f64,
    pub tol_eig: f64,
    /// Relative tolerance for the projected-gradient stationarity check.
    pub stationarity_tol: f64,
    /// Absolute bound on `‖∇f‖_F` in the rank-deficient case.
    pub grad_tol: f64,
    pub rank_threshold: f64,
}

impl Default for InclusionTolerances {
    fn default() -> Self {
        Self {
            tol_g: 1e-7,
            tol_eig: DEFAULT_TOL_EIG,
            stationarity_tol: 1e-6,
            grad_tol: 1e-6,
            rank_threshold: RANK_DEFICIENCY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub certificate: SospCertificate,
    /// False when the point is not second-order stationary, in which case
    /// there is nothing to check.
    pub applicable: bool,
    pub stationarity: Option<StationarityReport>,
    pub rank_deficient: bool,
    pub grad_frob_norm: f64,
    pub beta: f64,
    pub passed: bool,
}

/// If `(A, B)` is second-order stationary, checks that `ABᵀ` is a
/// projected-gradient stationary point at `η = 1/β`, and that the gradient
/// vanishes when `ABᵀ` has rank below `r`.
pub fn check_sosp_inclusion(
    obj: &Objective,
    p: &FactorPair,
    beta: f64,
    tols: &InclusionTolerances,
) -> Result<InclusionReport> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "a positive smoothness bound is required, got {beta}"
        )));
    }
    let certificate = certify_sosp(obj, p, tols.tol_g, tols.tol_eig)?;
    let x = p.product();
    let grad_frob_norm = obj.gradient(&x)?.frob_norm();
    let s = svd(&x)?;
    let r = p.rank();
    let sigma_first = s.singular_values.first().copied().unwrap_or(0.0);
    let sigma_r = s.singular_values.get(r - 1).copied().unwrap_or(0.0);
    let rank_deficient = sigma_r <= tols.rank_threshold * sigma_first;
    if !certificate.is_sosp() {
        return Ok(InclusionReport {
            certificate,
            applicable: false,
            stationarity: None,
            rank_deficient,
            grad_frob_norm,
            beta,
            passed: true,
        });
    }
    let rank = RankBudget::for_shape(r, x.rows(), x.cols())?;
    let stationarity = check_pgd_stationary(obj, &x, rank, 1.0 / beta, tols.stationarity_tol)?;
    let passed =
        stationarity.is_stationary() && (!rank_deficient || grad_frob_norm <= tols.grad_tol);
    Ok(InclusionReport {
        certificate,
        applicable: true,
        stationarity: Some(stationarity),
        rank_deficient,
        grad_frob_norm,
        beta,
        passed,
    })
}

/// `‖∇f(X)‖ / σ_r(X)` with `0/0 = 0` and `c/0 = ∞` for `c > 0`.
fn gradient_ratio(obj: &Objective, x: &DenseMatrix, r: RankBudget) -> Result<(f64, f64, f64)> {
    let g = spectral_norm(&obj.gradient(x)?)?;
    let s = svd(x)?.singular_values[r.get() - 1];
    let ratio = if g == 0.0 {
        0.0
    } else if s == 0.0 {
        f64::INFINITY
    } else {
        g / s
    };
    Ok((ratio, g, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub inside: bool,
    /// `‖∇f(X̂)‖/σ_r(X̂) + ‖∇f(X)‖/σ_r(X)`
    pub lhs: f64,
    pub bound: f64,
}

/// Whether `X` lies in the attraction region around `X̂`, where the summed
/// gradient-to-`σ_r` ratios stay strictly below `2α`.
pub fn region_membership(
    obj: &Objective,
    x: &DenseMatrix,
    x_hat: &DenseMatrix,
    r: RankBudget,
    alpha: f64,
) -> Result<RegionReport> {
    x.ensure_shape(obj.rows(), obj.cols())?;
    x_hat.ensure_shape(obj.rows(), obj.cols())?;
    check_rank_fits(x, r)?;
    let (rx, _, sx) = gradient_ratio(obj, x, r)?;
    let (rh, _, sh) = gradient_ratio(obj, x_hat, r)?;
    if sx == 0.0 || sh == 0.0 {
        return Err(Error::InvalidArgument(
            "sigma_r vanishes, so the gradient-to-sigma_r ratio is undefined".into(),
        ));
    }
    let lhs = rh + rx;
    let bound = 2.0 * alpha;
    Ok(RegionReport {
        inside: lhs < bound,
        lhs,
        bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub identical: bool,
    /// `min{1/η, ‖∇f(X₀)‖/σ_r(X₀)}`
    pub term0: f64,
    pub term1: f64,
    pub sum: f64,
    pub bound: f64,
    pub tol: f64,
    /// `identical || sum ≥ bound − tol`
    pub holds: bool,
}

/// For two projected-gradient stationary points at step `eta`, either they
/// coincide or `min{1/η, ‖∇f(X₀)‖/σ_r(X₀)} + min{1/η, ‖∇f(X₁)‖/σ_r(X₁)} ≥ 2α`.
/// Ratios use `0/0 = 0`.
pub fn pairwise_stationary_gap(
    obj: &Objective,
    x0: &DenseMatrix,
    x1: &DenseMatrix,
    r: RankBudget,
    eta: f64,
    alpha: f64,
    tol: f64,
) -> Result<PairwiseReport> {
    for (name, x) in [("first", x0), ("second", x1)] {
        let rep = check_pgd_stationary(obj, x, r, eta, tol)?;
        if !rep.is_stationary() {
            return Err(Error::NotStationary(format!(
                "{name} point fails at eta={eta}: residuals ({:e}, {:e}), margin {:e}, projection {:e}",
                rep.grad_left_residual, rep.grad_right_residual, rep.margin, rep.projection_residual
            )));
        }
    }
    let scale = x0.frob_norm().max(x1.frob_norm()).max(1.0);
    let identical = x0.sub(x1).frob_norm() <= tol * scale;
    let term0 = gradient_ratio(obj, x0, r)?.0.min(1.0 / eta);
    let term1 = gradient_ratio(obj, x1, r)?.0.min(1.0 / eta);
    let sum = term0 + term1;
    let bound = 2.0 * alpha;
    Ok(PairwiseReport {
        identical,
        term0,
        term1,
        sum,
        bound,
        tol,
        holds: identical || sum >= bound - tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `f(X) ≤ oracle + tol`
    pub holds: bool,
    /// `f(X) − oracle`
    pub gap: f64,
    pub value: f64,
    pub oracle_value: f64,
    pub r_prime: usize,
    pub tol: f64,
}

/// Compares `f(X)` against a trusted value of the best rank-`r′` objective.
pub fn restricted_optimality_audit(
    obj: &Objective,
    x: &DenseMatrix,
    r: RankBudget,
    r_prime: usize,
    oracle_value: f64,
    tol: f64,
) -> Result<AuditReport> {
    if r_prime >= r.get() {
        return Err(Error::InvalidArgument(format!(
            "comparison rank {r_prime} must be below the budget {}",
            r.get()
        )));
    }
    let value = obj.value(x)?;
    let gap = value - oracle_value;
    Ok(AuditReport {
        holds: gap <= tol,
        gap,
        value,
        oracle_value,
        r_prime,
        tol,
    })
}
