//! Projected gradient descent on `X` and factorized gradient descent on
//! `(A, B)`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorized::{pullback, FactorPair};
use crate::matrix::{DenseMatrix, RankBudget};
use crate::objective::Objective;
use crate::random::{gaussian_matrix, substream};
use crate::svd::project_rank;

/// Objective magnitude beyond which a run is declared diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Shrinks allowed per backtracking line search.
pub const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    pub eta: f64,
    pub max_iters: usize,
    /// Relative iterate-change threshold.
    pub stop_tol: f64,
    pub seed: u64,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            max_iters: 1000,
            stop_tol: 1e-12,
            seed: 0,
        }
    }
}

impl PgdConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.stop_tol > 0.0 && self.max_iters >= 1) {
            return Err(Error::InvalidArgument(format!(
                "PGD config needs eta > 0, stop_tol > 0, max_iters >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// `1/β` when β is exact, else `0.9/β̂`.
pub fn default_pgd_step(beta: f64, exact: bool) -> f64 {
    if exact {
        1.0 / beta
    } else {
        0.9 / beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum StepPolicy {
    /// Alternating updates: `A` first, then `B` at the updated `A`.
    Fixed { eta_a: f64, eta_b: f64 },
    /// Joint step on `(A, B)` with Armijo backtracking.
    Backtracking {
        initial: f64,
        shrink: f64,
        armijo_c: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgdConfig {
    pub step_policy: StepPolicy,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for FgdConfig {
    fn default() -> Self {
        Self {
            step_policy: StepPolicy::Backtracking {
                initial: 1.0,
                shrink: 0.5,
                armijo_c: 1e-4,
            },
            max_iters: 5000,
            grad_tol: 1e-10,
            seed: 0,
        }
    }
}

impl FgdConfig {
    fn validate(&self) -> Result<()> {
        let ok = match self.step_policy {
            StepPolicy::Fixed { eta_a, eta_b } => eta_a > 0.0 && eta_b > 0.0,
            StepPolicy::Backtracking {
                initial,
                shrink,
                armijo_c,
            } => {
                initial > 0.0
                    && shrink > 0.0
                    && shrink < 1.0
                    && armijo_c > 0.0
                    && armijo_c < 1.0
            }
        };
        if !ok || self.max_iters < 1 || !(self.grad_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid FGD config: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub f_value: f64,
    pub grad_norm: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub status: RunStatus,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn final_value(&self) -> Option<f64> {
        self.records.last().map(|r| r.f_value)
    }

    /// `iter,f_value,grad_norm,step_norm`, one row per record.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,f_value,grad_norm,step_norm\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?}",
                r.iter, r.f_value, r.grad_norm, r.step_norm
            );
        }
        out
    }
}

fn blown_up(v: f64) -> bool {
    !v.is_finite() || v.abs() > DIVERGENCE_LIMIT
}

/// `X ← P_r(X − η∇f(X))` until the relative iterate change drops below
/// `stop_tol`. Row 0 of the trace describes `x_init`; row `t` the iterate
/// after step `t`, with `grad_norm` taken at that iterate.
pub fn run_pgd(
    obj: &Objective,
    x_init: &DenseMatrix,
    r: RankBudget,
    cfg: &PgdConfig,
) -> Result<(DenseMatrix, RunTrace)> {
    cfg.validate()?;
    x_init.ensure_shape(obj.rows(), obj.cols())?;
    x_init.ensure_finite()?;
    let mut x = x_init.clone();
    let mut grad = obj.gradient(&x)?;
    let mut records = vec![TraceRecord {
        iter: 0,
        f_value: obj.value(&x)?,
        grad_norm: grad.frob_norm(),
        step_norm: 0.0,
    }];
    let mut status = RunStatus::MaxIters;
    for t in 1..=cfg.max_iters {
        let mut y = x.clone();
        y.axpy(-cfg.eta, &grad);
        if y.ensure_finite().is_err() {
            status = RunStatus::Diverged;
            break;
        }
        let next = project_rank(&y, r)?;
        let step = next.sub(&x).frob_norm();
        let scale = x.frob_norm().max(1.0);
        x = next;
        grad = obj.gradient(&x)?;
        let f_value = obj.value(&x)?;
        records.push(TraceRecord {
            iter: t,
            f_value,
            grad_norm: grad.frob_norm(),
            step_norm: step,
        });
        if blown_up(f_value) {
            status = RunStatus::Diverged;
            break;
        }
        if step <= cfg.stop_tol * scale {
            status = RunStatus::Converged;
            break;
        }
    }
    Ok((x, RunTrace { records, status }))
}

/// Factorized gradient descent. Stops when
/// `‖∇g‖_F ≤ grad_tol · max(1, ‖(A, B)‖_F)`.
pub fn run_fgd(obj: &Objective, p_init: &FactorPair, cfg: &FgdConfig) -> Result<(FactorPair, RunTrace)> {
    cfg.validate()?;
    p_init.a.ensure_shape(obj.rows(), p_init.rank())?;
    p_init.b.ensure_shape(obj.cols(), p_init.rank())?;
    p_init.a.ensure_finite()?;
    p_init.b.ensure_finite()?;

    let mut p = p_init.clone();
    let mut x = p.product();
    let mut value = obj.value(&x)?;
    let mut records = Vec::new();
    let mut step_norm = 0.0;
    let mut status = RunStatus::MaxIters;
    let mut trial_step = match cfg.step_policy {
        StepPolicy::Backtracking { initial, .. } => initial,
        StepPolicy::Fixed { .. } => 0.0,
    };

    for t in 0.. {
        let grad_x = obj.gradient(&x)?;
        let grad = pullback(&grad_x, &p);
        let grad_norm = grad.frob_norm();
        records.push(TraceRecord {
            iter: t,
            f_value: value,
            grad_norm,
            step_norm,
        });
        if blown_up(value) || !grad_norm.is_finite() {
            status = RunStatus::Diverged;
            break;
        }
        if grad_norm <= cfg.grad_tol * p.frob_norm().max(1.0) {
            status = RunStatus::Converged;
            break;
        }
        if t >= cfg.max_iters {
            break;
        }

        let prev = p.clone();
        match cfg.step_policy {
            StepPolicy::Fixed { eta_a, eta_b } => {
                p.a.axpy(-eta_a, &grad.a);
                let grad_x = obj.gradient(&p.a.matmul_t(&p.b))?;
                let grad_b = grad_x.t_matmul(&p.a);
                p.b.axpy(-eta_b, &grad_b);
                x = p.product();
                value = obj.value(&x)?;
            }
            StepPolicy::Backtracking {
                initial,
                shrink,
                armijo_c,
            } => {
                let gn2 = grad_norm * grad_norm;
                let mut step = trial_step;
                let mut accepted = false;
                for _ in 0..=MAX_BACKTRACKS {
                    // X(t) − X = −t(G_A Bᵀ + A G_Bᵀ) + t² G_A G_Bᵀ
                    let mut delta = grad.a.matmul_t(&p.b).add(&p.a.matmul_t(&grad.b));
                    delta = delta.scale(-step);
                    delta.axpy(step * step, &grad.a.matmul_t(&grad.b));
                    let change = obj.quadratic_change(&grad_x, &delta);
                    if change <= -armijo_c * step * gn2 {
                        accepted = true;
                        break;
                    }
                    step *= shrink;
                }
                if !accepted {
                    status = RunStatus::Diverged;
                    break;
                }
                p.axpy(-step, &grad);
                x = p.product();
                value = obj.value(&x)?;
                trial_step = (step / shrink).min(initial);
            }
        }
        let mut diff = p.clone();
        diff.axpy(-1.0, &prev);
        step_norm = diff.frob_norm();
    }
    Ok((p, RunTrace { records, status }))
}

/// Gaussian factor initialization for start `index` of a seeded run.
pub fn random_factor_init(
    dims: (usize, usize),
    r: RankBudget,
    init_scale: f64,
    seed: u64,
    index: u64,
) -> FactorPair {
    let mut rng = substream(seed, index);
    let a = gaussian_matrix(&mut rng, dims.0, r.get(), init_scale);
    let b = gaussian_matrix(&mut rng, dims.1, r.get(), init_scale);
    FactorPair { a, b }
}

/// Gaussian `X` initialization for start `index` of a seeded run.
pub fn random_matrix_init(dims: (usize, usize), init_scale: f64, seed: u64, index: u64) -> DenseMatrix {
    let mut rng = substream(seed, index);
    gaussian_matrix(&mut rng, dims.0, dims.1, init_scale)
}

/// Runs FGD from `n_starts` Gaussian initializations. Start `i` draws from
/// substream `i` of `cfg.seed`; results come back in start order.
pub fn multi_start_fgd(
    obj: &Objective,
    r: RankBudget,
    n_starts: usize,
    init_scale: f64,
    cfg: &FgdConfig,
) -> Result<Vec<(FactorPair, RunTrace)>> {
    if n_starts < 1 {
        return Err(Error::InvalidArgument("n_starts must be >= 1".into()));
    }
    (0..n_starts as u64)
        .into_par_iter()
        .map(|i| {
            let init = random_factor_init(obj.dims, r, init_scale, cfg.seed, i);
            run_fgd(obj, &init, cfg)
        })
        .collect()
}

/// PGD counterpart of [`multi_start_fgd`].
pub fn multi_start_pgd(
    obj: &Objective,
    r: RankBudget,
    n_starts: usize,
    init_scale: f64,
    cfg: &PgdConfig,
) -> Result<Vec<(DenseMatrix, RunTrace)>> {
    if n_starts < 1 {
        return Err(Error::InvalidArgument("n_starts must be >= 1".into()));
    }
    (0..n_starts as u64)
        .into_par_iter()
        .map(|i| {
            let init = random_matrix_init(obj.dims, init_scale, cfg.seed, i);
            run_pgd(obj, &init, r, cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{build_counterexample, gen_fro_loss, CounterexampleSpec};

    fn rb(r: usize) -> RankBudget {
        RankBudget::new(r).unwrap()
    }

    #[test]
    fn pgd_fro_loss_one_step() {
        let inst = gen_fro_loss(5, 4, &[3.0, 2.0, 1.0], 2, 1).unwrap();
        let init = random_matrix_init((5, 4), 1.0, 3, 0);
        let cfg = PgdConfig { eta: 1.0, ..Default::default() };
        let (x, trace) = run_pgd(&inst.objective, &init, inst.rank, &cfg).unwrap();
        let expected = inst.matrix_witness("global_minimizer").unwrap();
        assert!(x.sub(expected).frob_norm() < 1e-12);
        assert_eq!(trace.status, RunStatus::Converged);
        assert!(trace.records[1].step_norm > 0.0);
        assert!(trace.iterations() <= 2);
    }

    #[test]
    fn pgd_fixed_point_is_kept() {
        let inst = build_counterexample(&CounterexampleSpec::default()).unwrap();
        let x0 = inst.matrix_witness("X0").unwrap();
        let cfg = PgdConfig { eta: 0.5, ..Default::default() };
        let (x, trace) = run_pgd(&inst.objective, x0, inst.rank, &cfg).unwrap();
        assert_eq!(&x, x0);
        assert_eq!(trace.status, RunStatus::Converged);
        assert_eq!(trace.iterations(), 1);
    }

    #[test]
    fn pgd_descends_with_safe_step() {
        let inst = build_counterexample(&CounterexampleSpec::default()).unwrap();
        let init = random_matrix_init((6, 6), 2.0, 9, 0);
        let cfg = PgdConfig { eta: 0.5, max_iters: 300, ..Default::default() };
        let (_, trace) = run_pgd(&inst.objective, &init, inst.rank, &cfg).unwrap();
        for w in trace.records[1..].windows(2) {
            assert!(w[1].f_value <= w[0].f_value + 1e-10 * w[0].f_value.abs().max(1.0));
        }
    }

    #[test]
    fn pgd_diverges_with_huge_step() {
        let inst = build_counterexample(&CounterexampleSpec::default()).unwrap();
        let init = random_matrix_init((6, 6), 1.0, 1, 0);
        let cfg = PgdConfig { eta: 50.0, max_iters: 200, ..Default::default() };
        let (_, trace) = run_pgd(&inst.objective, &init, inst.rank, &cfg).unwrap();
        assert_eq!(trace.status, RunStatus::Diverged);
    }

    #[test]
    fn fgd_origin_and_witness_converge_immediately() {
        let inst = gen_fro_loss(4, 4, &[2.0, 1.0], 1, 0).unwrap();
        let (p, trace) =
            run_fgd(&inst.objective, &FactorPair::zeros(4, 4, 1), &FgdConfig::default()).unwrap();
        assert!(p.a.is_zero());
        assert_eq!(trace.status, RunStatus::Converged);
        assert_eq!(trace.iterations(), 0);

        let ce = build_counterexample(&CounterexampleSpec::default()).unwrap();
        let w = ce.factor_witness("A0B0").unwrap();
        let (p, trace) = run_fgd(&ce.objective, w, &FgdConfig::default()).unwrap();
        assert_eq!(&p, w);
        assert_eq!(trace.status, RunStatus::Converged);
    }

    #[test]
    fn fgd_backtracking_is_monotone() {
        let inst = gen_fro_loss(5, 4, &[3.0, 2.0, 1.0], 2, 4).unwrap();
        let init = random_factor_init((5, 4), rb(2), 0.5, 2, 0);
        let (_, trace) = run_fgd(&inst.objective, &init, &FgdConfig::default()).unwrap();
        assert_eq!(trace.status, RunStatus::Converged);
        for w in trace.records.windows(2) {
            assert!(w[1].f_value <= w[0].f_value + 4.0 * f64::EPSILON * w[0].f_value.abs().max(1.0));
        }
        assert!((trace.final_value().unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn fgd_fixed_steps_reach_optimum() {
        let inst = gen_fro_loss(4, 3, &[1.0], 1, 8).unwrap();
        let init = random_factor_init((4, 3), rb(1), 0.3, 5, 0);
        let cfg = FgdConfig {
            step_policy: StepPolicy::Fixed { eta_a: 0.2, eta_b: 0.2 },
            max_iters: 20_000,
            grad_tol: 1e-10,
            seed: 5,
        };
        let (p, trace) = run_fgd(&inst.objective, &init, &cfg).unwrap();
        assert_eq!(trace.status, RunStatus::Converged);
        assert!(inst.objective.value(&p.product()).unwrap() < 1e-16);
    }

    #[test]
    fn multi_start_matches_single_run() {
        let inst = gen_fro_loss(4, 4, &[2.0, 1.0], 1, 0).unwrap();
        let cfg = FgdConfig { seed: 7, ..Default::default() };
        let runs = multi_start_fgd(&inst.objective, rb(1), 1, 0.5, &cfg).unwrap();
        let init = random_factor_init((4, 4), rb(1), 0.5, 7, 0);
        let single = run_fgd(&inst.objective, &init, &cfg).unwrap();
        assert_eq!(runs[0], single);
        assert!(multi_start_fgd(&inst.objective, rb(1), 0, 0.5, &cfg).is_err());
    }

    #[test]
    fn trace_csv_header() {
        let trace = RunTrace {
            records: vec![TraceRecord { iter: 0, f_value: 1.5, grad_norm: 0.25, step_norm: 0.0 }],
            status: RunStatus::Converged,
        };
        assert_eq!(trace.to_csv(), "iter,f_value,grad_norm,step_norm\n0,1.5,0.25,0.0\n");
    }

    #[test]
    fn config_validation() {
        let inst = gen_fro_loss(3, 3, &[1.0], 1, 0).unwrap();
        let x = DenseMatrix::zeros(3, 3);
        let bad = PgdConfig { eta: 0.0, ..Default::default() };
        assert!(run_pgd(&inst.objective, &x, rb(1), &bad).is_err());
        let bad = FgdConfig {
            step_policy: StepPolicy::Backtracking { initial: 1.0, shrink: 1.5, armijo_c: 0.1 },
            ..Default::default()
        };
        assert!(run_fgd(&inst.objective, &FactorPair::zeros(3, 3, 1), &bad).is_err());
    }
}
