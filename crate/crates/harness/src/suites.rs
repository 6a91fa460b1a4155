//! Named check suites. Each suite builds its instances from the seed, runs the
//! algorithms, and records one [`CheckRecord`] per judged claim.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use lowrank_core::certify::{
    certify_sosp, check_fosp, check_pgd_stationary, check_sosp_inclusion, estimate_local_curvature,
    pairwise_stationary_gap, region_membership, restricted_optimality_audit, InclusionTolerances,
    SospVerdict,
};
use lowrank_core::factorized::{g_finite_diff_check, g_hess_quadform};
use lowrank_core::instances::{
    build_counterexample, gen_fro_loss, gen_matrix_completion, gen_matrix_sensing, CounterexampleSpec,
    ProblemInstance,
};
use lowrank_core::optimize::{
    multi_start_fgd, multi_start_pgd, random_factor_init, random_matrix_init, run_pgd, FgdConfig, PgdConfig,
    RunStatus,
};
use lowrank_core::random::{gaussian_matrix, substream};
use lowrank_core::svd::{svd, SvdResult};
use lowrank_core::{DenseMatrix, FactorPair, ObjectiveKind};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Every anchor a record may carry, with a one-line description. The same
/// list is documented in `docs/checks.md`.
pub const ANCHORS: &[(&str, &str)] = &[
    ("gradient-consistency", "analytic gradient of f or g matches central differences"),
    ("curvature-consistency", "Hessian quadratic form of f or g matches second differences"),
    ("sosp-is-pgd-stationary", "a second-order stationary factorization is a PGD fixed point at step 1/beta"),
    ("rank-deficient-sosp-zero-gradient", "a rank-deficient second-order stationary point has zero gradient"),
    ("pgd-stationary-is-fosp", "any factorization of a PGD fixed point is first-order stationary for g"),
    ("global-optimality-hypothesis", "the instance satisfies beta < 2 alpha and the small-gradient condition"),
    ("unique-limit", "every start of FGD or PGD converges to the best rank-r approximation"),
    ("global-minimizer-stationary", "the rank-r global minimizer is a PGD fixed point for every step <= 1/beta"),
    ("attraction-region", "no PGD fixed point other than the global minimizer lies in the attraction region"),
    ("restricted-optimality", "PGD fixed points and SOSPs beat every rank r' < r/kappa^2 competitor"),
    ("pairwise-stationary-gap", "two distinct PGD fixed points have gradient ratios summing to at least 2 alpha"),
    ("lifted-curvature-bound", "curvature of f along factor-lifted directions is at most beta"),
    ("local-curvature-bound", "the sampled local curvature never exceeds beta"),
    ("counterexample-values", "f(X0) = 0 and f(kappa X1) = (alpha/2)(r - kappa^2 r')"),
    ("counterexample-sosp", "the witness factorization (A0, B0) is second-order stationary"),
    ("counterexample-hessian-identity", "closed form of the factor Hessian at (A0, B0) and its nonnegativity"),
    ("counterexample-pgd-stationary", "X0 is a boundary PGD fixed point at step 1/beta"),
    ("counterexample-restricted-gap", "f(X0) exceeds the best rank-r' value by at least (alpha/2)(kappa^2 r' - r)"),
    ("counterexample-spec-validation", "specs violating r' > r/kappa^2, beta > alpha or r + r' <= min(m, n) are rejected"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SuiteName {
    Theorem1,
    Theorem2,
    Theorem3,
    Theorem4,
    Theorem5,
    Lemmas,
    Gradcheck,
}

impl SuiteName {
    pub const ALL: [SuiteName; 7] = [
        SuiteName::Theorem1,
        SuiteName::Theorem2,
        SuiteName::Theorem3,
        SuiteName::Theorem4,
        SuiteName::Theorem5,
        SuiteName::Lemmas,
        SuiteName::Gradcheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::Theorem1 => "theorem1",
            SuiteName::Theorem2 => "theorem2",
            SuiteName::Theorem3 => "theorem3",
            SuiteName::Theorem4 => "theorem4",
            SuiteName::Theorem5 => "theorem5",
            SuiteName::Lemmas => "lemmas",
            SuiteName::Gradcheck => "gradcheck",
        }
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteName {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        SuiteName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SuiteName::ALL.iter().map(|n| n.as_str()).collect();
                HarnessError::Config(format!("unknown suite '{s}', expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub anchor: String,
    pub passed: bool,
    pub tolerance: f64,
    pub residuals: BTreeMap<String, f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub os: String,
    pub arch: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub records: Vec<CheckRecord>,
    pub summary: SuiteSummary,
    pub environment: Environment,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.passed)
    }
}

pub fn run_suite(name: SuiteName, seed: u64) -> Result<SuiteReport> {
    let mut rec = Recorder::default();
    match name {
        SuiteName::Theorem1 => theorem1(&mut rec, seed)?,
        SuiteName::Theorem2 => theorem2(&mut rec, seed)?,
        SuiteName::Theorem3 => theorem3(&mut rec, seed)?,
        SuiteName::Theorem4 => theorem4(&mut rec, seed)?,
        SuiteName::Theorem5 => theorem5(&mut rec)?,
        SuiteName::Lemmas => lemmas(&mut rec, seed)?,
        SuiteName::Gradcheck => gradcheck(&mut rec, seed)?,
    }
    let records = rec.records;
    let passed = records.iter().filter(|r| r.passed).count();
    Ok(SuiteReport {
        suite: name.to_string(),
        seed,
        summary: SuiteSummary {
            total: records.len(),
            passed,
            failed: records.len() - passed,
        },
        records,
        environment: Environment::current(),
    })
}

#[derive(Default)]
struct Recorder {
    records: Vec<CheckRecord>,
}

impl Recorder {
    fn push(
        &mut self,
        name: impl Into<String>,
        anchor: &str,
        passed: bool,
        tolerance: f64,
        residuals: &[(&str, f64)],
        detail: impl Into<String>,
    ) {
        debug_assert!(ANCHORS.iter().any(|(a, _)| *a == anchor), "undocumented anchor {anchor}");
        self.records.push(CheckRecord {
            name: name.into(),
            anchor: anchor.to_string(),
            passed,
            tolerance,
            residuals: residuals.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            detail: detail.into(),
        });
    }
}

const STARTS: usize = 20;
const FGD_INIT_SCALE: f64 = 0.5;
const PGD_INIT_SCALE: f64 = 1.0;
const STATIONARITY_TOL: f64 = 1e-6;
const GAP_TOL: f64 = 1e-9;
/// Step for stationary points of the Frobenius loss away from `1/β`, where
/// non-optimal singular subsets are also fixed points.
const SUBSET_ETA: f64 = 0.4;

fn fgd_cfg(seed: u64) -> FgdConfig {
    FgdConfig {
        seed,
        ..FgdConfig::default()
    }
}

fn pgd_cfg(eta: f64, seed: u64) -> PgdConfig {
    PgdConfig {
        eta,
        seed,
        ..PgdConfig::default()
    }
}

fn rel_dist(x: &DenseMatrix, y: &DenseMatrix) -> f64 {
    x.sub(y).frob_norm() / y.frob_norm().max(1.0)
}

fn fro_target(inst: &ProblemInstance) -> &DenseMatrix {
    match &inst.objective.kind {
        ObjectiveKind::FroLoss { target } => target,
        _ => unreachable!("not a Frobenius-loss instance"),
    }
}

fn subset_point(s: &SvdResult, subset: &[usize]) -> DenseMatrix {
    let (m, n) = (s.left.rows(), s.right.rows());
    DenseMatrix::from_fn(m, n, |i, j| {
        subset
            .iter()
            .map(|&t| s.singular_values[t] * s.left[(i, t)] * s.right[(j, t)])
            .sum()
    })
}

fn subsets(k: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, k: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..k {
            cur.push(i);
            rec(i + 1, k, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, size, &mut Vec::new(), &mut out);
    out
}

/// Truncated-SVD points built from `r` nonzero singular triplets of the
/// target that pass the stationarity check at `eta`.
fn fro_subset_stationary(inst: &ProblemInstance, eta: f64, tol: f64) -> Result<Vec<DenseMatrix>> {
    let s = svd(fro_target(inst))?;
    let nonzero = s.singular_values.iter().filter(|v| **v > 0.0).count();
    let mut out = Vec::new();
    for subset in subsets(nonzero, inst.rank.get().min(nonzero)) {
        let x = subset_point(&s, &subset);
        if check_pgd_stationary(&inst.objective, &x, inst.rank, eta, tol)?.is_stationary() {
            out.push(x);
        }
    }
    Ok(out)
}

/// Limits of multi-start PGD that pass the stationarity check, plus the
/// number of runs attempted.
fn pgd_stationary_limits(
    inst: &ProblemInstance,
    eta: f64,
    starts: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<DenseMatrix>> {
    let runs = multi_start_pgd(&inst.objective, inst.rank, starts, PGD_INIT_SCALE, &pgd_cfg(eta, seed))?;
    let mut out = Vec::new();
    for (x, _) in runs {
        if check_pgd_stationary(&inst.objective, &x, inst.rank, eta, tol)?.is_stationary() {
            out.push(x);
        }
    }
    Ok(out)
}

fn dedup(points: Vec<DenseMatrix>, rel: f64) -> Vec<DenseMatrix> {
    let mut out: Vec<DenseMatrix> = Vec::new();
    for p in points {
        if out.iter().all(|q| rel_dist(&p, q) > rel) {
            out.push(p);
        }
    }
    out
}

fn factor_candidates(inst: &ProblemInstance, seed: u64) -> Result<Vec<(String, FactorPair)>> {
    let (m, n) = inst.dims();
    let r = inst.rank.get();
    let mut out = Vec::new();
    let runs = multi_start_fgd(&inst.objective, inst.rank, STARTS, FGD_INIT_SCALE, &fgd_cfg(seed))?;
    for (i, (p, _)) in runs.into_iter().enumerate() {
        out.push((format!("fgd start {i}"), p));
    }
    for (name, w) in &inst.witnesses {
        if name == "target" {
            continue;
        }
        let p = match w {
            lowrank_core::instances::Witness::Factors { value } => value.clone(),
            lowrank_core::instances::Witness::Matrix { value } => FactorPair::balanced_from(value, r)?,
        };
        out.push((format!("witness {name}"), p));
    }
    out.push(("origin".to_string(), FactorPair::zeros(m, n, r)));
    Ok(out)
}

fn theorem1_instances(seed: u64) -> Result<Vec<ProblemInstance>> {
    Ok(vec![
        gen_fro_loss(5, 5, &[5.0, 4.0, 3.0, 2.0, 1.0], 2, seed)?,
        gen_fro_loss(6, 5, &[4.0, 3.0, 2.0], 2, seed + 1)?,
        gen_fro_loss(5, 5, &[3.0, 2.0, 2.0, 1.0], 2, seed + 2)?,
        gen_fro_loss(6, 6, &[2.0, 1.0], 3, seed + 3)?,
        gen_fro_loss(4, 6, &[3.0, 2.0, 1.0], 1, seed + 4)?,
        gen_matrix_sensing(5, 4, 2, 6 * 2 * 9, 0.0, seed + 5)?,
        gen_matrix_sensing(5, 5, 1, 6 * 10, 1e-2, seed + 6)?,
        gen_matrix_sensing(4, 4, 2, 24, 0.0, seed + 7)?,
        gen_matrix_completion(5, 5, 2, 1.0, seed + 8)?,
        build_counterexample(&CounterexampleSpec::default())?,
        build_counterexample(&CounterexampleSpec {
            alpha: 1.0,
            beta: 3.0,
            m: 5,
            n: 5,
            r: 3,
            r_prime: 1,
        })?,
    ])
}

fn theorem1(rec: &mut Recorder, seed: u64) -> Result<()> {
    let tols = InclusionTolerances::default();
    let mut total_sosp_side = 0;
    let mut total_fosp_side = 0;
    for (k, inst) in theorem1_instances(seed)?.iter().enumerate() {
        let beta = inst.step_beta();
        let candidates = factor_candidates(inst, seed.wrapping_add(100 + k as u64))?;
        total_sosp_side += candidates.len();
        let (mut sosps, mut failures) = (0usize, Vec::new());
        let (mut worst_proj, mut worst_grad) = (0.0f64, 0.0f64);
        for (label, p) in &candidates {
            let rep = check_sosp_inclusion(&inst.objective, p, beta, &tols)?;
            if !rep.applicable {
                continue;
            }
            sosps += 1;
            if let Some(st) = rep.stationarity {
                worst_proj = worst_proj.max(st.projection_residual / st.threshold.max(f64::MIN_POSITIVE));
            }
            if rep.rank_deficient {
                worst_grad = worst_grad.max(rep.grad_frob_norm);
            }
            if !rep.passed {
                failures.push(label.clone());
            }
        }
        rec.push(
            format!("inclusion on {}", inst.label),
            "sosp-is-pgd-stationary",
            failures.is_empty() && sosps >= 1,
            tols.stationarity_tol,
            &[
                ("candidates", candidates.len() as f64),
                ("sosp_count", sosps as f64),
                ("worst_projection_over_threshold", worst_proj),
                ("worst_rank_deficient_grad", worst_grad),
            ],
            if failures.is_empty() {
                format!("{sosps} of {} candidates certified second-order stationary", candidates.len())
            } else {
                format!("failed: {}", failures.join(", "))
            },
        );

        let eta = 1.0 / beta;
        let runs = multi_start_pgd(
            &inst.objective,
            inst.rank,
            STARTS,
            PGD_INIT_SCALE,
            &pgd_cfg(eta, seed.wrapping_add(200 + k as u64)),
        )?;
        let mut points: Vec<(f64, DenseMatrix)> = runs.into_iter().map(|(x, _)| (eta, x)).collect();
        if matches!(inst.objective.kind, ObjectiveKind::FroLoss { .. }) {
            points.extend(
                fro_subset_stationary(inst, SUBSET_ETA, STATIONARITY_TOL)?
                    .into_iter()
                    .map(|x| (SUBSET_ETA, x)),
            );
        }
        total_fosp_side += points.len();
        let (mut stationary, mut worst, mut bad) = (0usize, 0.0f64, 0usize);
        for (eta, x) in &points {
            if !check_pgd_stationary(&inst.objective, x, inst.rank, *eta, STATIONARITY_TOL)?.is_stationary() {
                continue;
            }
            stationary += 1;
            let p = FactorPair::balanced_from(x, inst.rank.get())?;
            let f = check_fosp(&inst.objective, &p, STATIONARITY_TOL)?;
            worst = worst.max(f.residual_a.max(f.residual_b) / f.threshold);
            if !f.is_fosp {
                bad += 1;
            }
        }
        rec.push(
            format!("fixed points factorize to first-order points on {}", inst.label),
            "pgd-stationary-is-fosp",
            bad == 0 && stationary >= 1,
            STATIONARITY_TOL,
            &[
                ("candidates", points.len() as f64),
                ("stationary_count", stationary as f64),
                ("worst_residual_over_threshold", worst),
            ],
            format!("{stationary} stationary points, {bad} not first-order stationary"),
        );
    }
    rec.push(
        "candidate volume",
        "sosp-is-pgd-stationary",
        total_sosp_side >= 200 && total_fosp_side >= 200,
        200.0,
        &[
            ("factor_candidates", total_sosp_side as f64),
            ("matrix_candidates", total_fosp_side as f64),
        ],
        "at least 200 candidates on each side of the inclusion chain",
    );
    rank_deficient_check(rec, seed)
}

/// Frobenius loss with `rank(M) = r − 1`: converged second-order points
/// from small random starts must have vanishing gradient.
fn rank_deficient_check(rec: &mut Recorder, seed: u64) -> Result<()> {
    const GRAD_TOL: f64 = 1e-6;
    let inst = gen_fro_loss(5, 5, &[2.0, 1.0], 3, seed.wrapping_add(300))?;
    let runs = multi_start_fgd(&inst.objective, inst.rank, 10, 0.3, &fgd_cfg(seed.wrapping_add(301)))?;
    let tols = InclusionTolerances::default();
    let (mut converged, mut sosps, mut worst, mut bad) = (0usize, 0usize, 0.0f64, 0usize);
    for (p, trace) in &runs {
        if trace.status != RunStatus::Converged {
            continue;
        }
        converged += 1;
        let cert = certify_sosp(&inst.objective, p, tols.tol_g, tols.tol_eig)?;
        if !cert.is_sosp() {
            continue;
        }
        sosps += 1;
        let g = inst.objective.gradient(&p.product())?.frob_norm();
        worst = worst.max(g);
        if g > GRAD_TOL {
            bad += 1;
        }
    }
    rec.push(
        format!("rank-deficient branch on {}", inst.label),
        "rank-deficient-sosp-zero-gradient",
        bad == 0 && sosps >= 1,
        GRAD_TOL,
        &[
            ("converged", converged as f64),
            ("sosp_count", sosps as f64),
            ("worst_grad_frob", worst),
        ],
        format!("{sosps} converged second-order points out of 10 starts"),
    );
    Ok(())
}

fn theorem2(rec: &mut Recorder, seed: u64) -> Result<()> {
    const LIMIT_TOL: f64 = 1e-4;
    let instances = [
        gen_fro_loss(8, 7, &[5.0, 4.0, 3.0], 3, seed)?,
        gen_fro_loss(8, 7, &[5.0, 4.0, 3.0, 1.5, 1.0], 3, seed + 1)?,
    ];
    for (k, inst) in instances.iter().enumerate() {
        let obj = &inst.objective;
        let p = &inst.profile;
        let beta = inst.step_beta();
        let x_hat = inst.matrix_witness("global_minimizer").expect("fro witness");
        let grad = lowrank_core::svd::spectral_norm(&obj.gradient(x_hat)?)?;
        let sr = lowrank_core::svd::sigma_r(x_hat, inst.rank)?;
        let slack = (2.0 * p.alpha - p.beta) * sr - grad;
        rec.push(
            format!("hypotheses on {}", inst.label),
            "global-optimality-hypothesis",
            p.beta < 2.0 * p.alpha && slack > 0.0,
            0.0,
            &[("kappa", p.beta / p.alpha), ("grad_spectral", grad), ("slack", slack)],
            "beta < 2 alpha and ||grad f(X_hat)|| < (2 alpha - beta) sigma_r(X_hat)",
        );

        let fgd = multi_start_fgd(obj, inst.rank, STARTS, FGD_INIT_SCALE, &fgd_cfg(seed.wrapping_add(10 + k as u64)))?;
        let dists: Vec<f64> = fgd.iter().map(|(p, _)| rel_dist(&p.product(), x_hat)).collect();
        let worst = dists.iter().copied().fold(0.0, f64::max);
        rec.push(
            format!("fgd unique limit on {}", inst.label),
            "unique-limit",
            worst <= LIMIT_TOL,
            LIMIT_TOL,
            &[("starts", STARTS as f64), ("worst_rel_dist", worst)],
            format!("{} of {STARTS} starts within tolerance", dists.iter().filter(|d| **d <= LIMIT_TOL).count()),
        );

        let pgd = multi_start_pgd(
            obj,
            inst.rank,
            STARTS,
            PGD_INIT_SCALE,
            &pgd_cfg(1.0 / beta, seed.wrapping_add(20 + k as u64)),
        )?;
        let dists: Vec<f64> = pgd.iter().map(|(x, _)| rel_dist(x, x_hat)).collect();
        let worst = dists.iter().copied().fold(0.0, f64::max);
        rec.push(
            format!("pgd unique limit on {}", inst.label),
            "unique-limit",
            worst <= LIMIT_TOL,
            LIMIT_TOL,
            &[("starts", STARTS as f64), ("worst_rel_dist", worst)],
            format!("{} of {STARTS} starts within tolerance", dists.iter().filter(|d| **d <= LIMIT_TOL).count()),
        );

        global_minimizer_steps(rec, inst, x_hat)?;
    }
    Ok(())
}

fn global_minimizer_steps(rec: &mut Recorder, inst: &ProblemInstance, x_hat: &DenseMatrix) -> Result<()> {
    let beta = inst.step_beta();
    for frac in [0.1, 0.5, 1.0] {
        let eta = frac / beta;
        let rep = check_pgd_stationary(&inst.objective, x_hat, inst.rank, eta, STATIONARITY_TOL)?;
        rec.push(
            format!("global minimizer at eta = {frac}/beta on {}", inst.label),
            "global-minimizer-stationary",
            rep.is_stationary(),
            STATIONARITY_TOL,
            &[
                ("margin", rep.margin),
                ("projection_residual", rep.projection_residual),
                ("threshold", rep.threshold),
            ],
            format!("verdict {:?}", rep.verdict),
        );
    }
    Ok(())
}

fn theorem3(rec: &mut Recorder, seed: u64) -> Result<()> {
    let fro = gen_fro_loss(6, 6, &[5.0, 4.0, 3.0, 2.0, 1.0], 2, seed)?;
    let fro_hat = fro.matrix_witness("global_minimizer").expect("fro witness").clone();
    let mut fro_points = fro_subset_stationary(&fro, SUBSET_ETA, STATIONARITY_TOL)?;
    fro_points.extend(pgd_stationary_limits(&fro, 1.0 / fro.step_beta(), STARTS, seed + 1, STATIONARITY_TOL)?);
    region_check(rec, &fro, &fro_hat, fro_points)?;

    for (k, noise) in [0.0, 1e-3].into_iter().enumerate() {
        let inst = gen_matrix_sensing(5, 4, 2, 6 * 2 * 9, noise, seed + 2 + k as u64)?;
        let eta = 1.0 / inst.step_beta();
        let planted = inst.matrix_witness("planted").expect("sensing witness");
        let x_hat = if noise == 0.0 {
            planted.clone()
        } else {
            let cfg = PgdConfig {
                max_iters: 20_000,
                ..pgd_cfg(eta, 0)
            };
            run_pgd(&inst.objective, planted, inst.rank, &cfg)?.0
        };
        let points = pgd_stationary_limits(&inst, eta, STARTS, seed + 10 + k as u64, STATIONARITY_TOL)?;
        region_check(rec, &inst, &x_hat, points)?;
    }
    Ok(())
}

fn region_check(
    rec: &mut Recorder,
    inst: &ProblemInstance,
    x_hat: &DenseMatrix,
    points: Vec<DenseMatrix>,
) -> Result<()> {
    let alpha = inst.profile.alpha;
    let hat = region_membership(&inst.objective, x_hat, x_hat, inst.rank, alpha)?;
    rec.push(
        format!("global minimizer inside region on {}", inst.label),
        "attraction-region",
        hat.inside,
        0.0,
        &[("lhs", hat.lhs), ("bound", hat.bound)],
        "the global minimizer belongs to its own attraction region",
    );
    let others: Vec<_> = dedup(points, 1e-6)
        .into_iter()
        .filter(|x| rel_dist(x, x_hat) > 1e-6)
        .collect();
    let mut min_lhs = f64::INFINITY;
    let mut inside = 0usize;
    for x in &others {
        let rep = region_membership(&inst.objective, x, x_hat, inst.rank, alpha)?;
        min_lhs = min_lhs.min(rep.lhs);
        if rep.lhs < rep.bound - GAP_TOL {
            inside += 1;
        }
    }
    rec.push(
        format!("other fixed points outside region on {}", inst.label),
        "attraction-region",
        inside == 0,
        GAP_TOL,
        &[
            ("other_points", others.len() as f64),
            ("min_lhs", if others.is_empty() { 2.0 * alpha } else { min_lhs }),
            ("bound", 2.0 * alpha),
        ],
        format!("{} distinct fixed points other than the minimizer, {inside} inside", others.len()),
    );
    Ok(())
}

/// Ranks `r′ < r/κ²` for an exact profile.
fn restricted_ranks(inst: &ProblemInstance) -> Vec<usize> {
    let k = inst.profile.beta / inst.profile.alpha;
    let limit = inst.rank.get() as f64 / (k * k);
    (0..inst.rank.get()).filter(|rp| (*rp as f64) < limit).collect()
}

fn theorem4(rec: &mut Recorder, seed: u64) -> Result<()> {
    let instances = [
        gen_fro_loss(6, 5, &[5.0, 4.0, 3.0, 2.0, 1.0], 3, seed)?,
        gen_fro_loss(6, 6, &[3.0, 2.0, 2.0, 1.0], 2, seed + 1)?,
        gen_fro_loss(5, 5, &[2.0, 1.0], 3, seed + 2)?,
        build_counterexample(&CounterexampleSpec::default())?,
        build_counterexample(&CounterexampleSpec {
            alpha: 1.0,
            beta: 3.0,
            m: 5,
            n: 5,
            r: 3,
            r_prime: 1,
        })?,
    ];
    let tols = InclusionTolerances::default();
    for (k, inst) in instances.iter().enumerate() {
        let beta = inst.step_beta();
        let s = seed.wrapping_add(40 + 2 * k as u64);
        let mut points = pgd_stationary_limits(inst, 1.0 / beta, STARTS, s, STATIONARITY_TOL)?;
        let n_pgd = points.len();
        for (p, _) in multi_start_fgd(&inst.objective, inst.rank, STARTS, FGD_INIT_SCALE, &fgd_cfg(s + 1))? {
            if certify_sosp(&inst.objective, &p, tols.tol_g, tols.tol_eig)?.is_sosp() {
                points.push(p.product());
            }
        }
        if let Some(x0) = inst.matrix_witness("X0") {
            points.push(x0.clone());
        }
        let ranks = restricted_ranks(inst);
        let (mut worst_gap, mut bad) = (f64::NEG_INFINITY, 0usize);
        for x in &points {
            for &rp in &ranks {
                let oracle = inst.oracles[&rp];
                let audit = restricted_optimality_audit(&inst.objective, x, inst.rank, rp, oracle, GAP_TOL)?;
                worst_gap = worst_gap.max(audit.gap);
                if !audit.holds {
                    bad += 1;
                }
            }
        }
        rec.push(
            format!("restricted optimality on {}", inst.label),
            "restricted-optimality",
            bad == 0 && !points.is_empty() && !ranks.is_empty(),
            GAP_TOL,
            &[
                ("pgd_points", n_pgd as f64),
                ("sosp_points", (points.len() - n_pgd) as f64),
                ("ranks_checked", ranks.len() as f64),
                ("worst_gap", worst_gap),
            ],
            format!("ranks {ranks:?}, {bad} violations"),
        );
    }
    Ok(())
}

fn pairwise_check(rec: &mut Recorder, inst: &ProblemInstance, eta: f64, points: Vec<DenseMatrix>) -> Result<()> {
    let reps = dedup(points, 1e-6);
    let alpha = inst.profile.alpha;
    let (mut pairs, mut bad, mut min_sum) = (0usize, 0usize, f64::INFINITY);
    for i in 0..reps.len() {
        for j in i + 1..reps.len() {
            let rep = pairwise_stationary_gap(&inst.objective, &reps[i], &reps[j], inst.rank, eta, alpha, GAP_TOL)?;
            pairs += 1;
            min_sum = min_sum.min(rep.sum);
            if !rep.holds {
                bad += 1;
            }
        }
    }
    rec.push(
        format!("pairwise gap at eta = {eta} on {}", inst.label),
        "pairwise-stationary-gap",
        bad == 0,
        GAP_TOL,
        &[
            ("distinct_points", reps.len() as f64),
            ("pairs", pairs as f64),
            ("min_sum", if pairs == 0 { 2.0 * alpha } else { min_sum }),
            ("bound", 2.0 * alpha),
        ],
        format!("{pairs} pairs, {bad} violations"),
    );
    Ok(())
}

fn lemmas(rec: &mut Recorder, seed: u64) -> Result<()> {
    let fro = gen_fro_loss(6, 6, &[5.0, 4.0, 3.0, 2.0, 1.0], 2, seed)?;
    let fro_pts = fro_subset_stationary(&fro, SUBSET_ETA, GAP_TOL)?;
    pairwise_check(rec, &fro, SUBSET_ETA, fro_pts)?;
    let fro3 = gen_fro_loss(7, 6, &[6.0, 5.0, 4.0, 3.0, 2.0, 1.0], 3, seed + 1)?;
    let fro3_pts = fro_subset_stationary(&fro3, 0.6, GAP_TOL)?;
    pairwise_check(rec, &fro3, 0.6, fro3_pts)?;

    let ce = build_counterexample(&CounterexampleSpec::default())?;
    let eta = 1.0 / ce.step_beta();
    let mut ce_pts = vec![ce.matrix_witness("X0").expect("counterexample witness").clone()];
    ce_pts.extend(pgd_stationary_limits(&ce, eta, STARTS, seed + 2, GAP_TOL)?);
    pairwise_check(rec, &ce, eta, ce_pts)?;

    let sensing = gen_matrix_sensing(5, 4, 2, 6 * 2 * 9, 0.0, seed + 3)?;
    let eta = 1.0 / sensing.step_beta();
    let mut s_pts = vec![sensing.matrix_witness("planted").expect("sensing witness").clone()];
    s_pts.extend(pgd_stationary_limits(&sensing, eta, STARTS, seed + 4, GAP_TOL)?);
    pairwise_check(rec, &sensing, eta, s_pts)?;

    global_minimizer_steps(rec, &fro, fro.matrix_witness("global_minimizer").expect("fro witness"))?;

    let exact = [
        fro,
        ce,
        gen_matrix_completion(5, 4, 2, 1.0, seed + 5)?,
        build_counterexample(&CounterexampleSpec {
            alpha: 0.5,
            beta: 1.5,
            m: 6,
            n: 8,
            r: 4,
            r_prime: 1,
        })?,
    ];
    for (k, inst) in exact.iter().enumerate() {
        lifted_curvature(rec, inst, seed.wrapping_add(60 + k as u64))?;
        local_curvature(rec, inst, seed.wrapping_add(70 + k as u64))?;
    }
    Ok(())
}

/// `∇²f(X)[L, L] ≤ β‖L‖²` for `L = AB₁ᵀ + A₁Bᵀ` at random factor points.
fn lifted_curvature(rec: &mut Recorder, inst: &ProblemInstance, seed: u64) -> Result<()> {
    const TOL: f64 = 1e-8;
    let (m, n) = inst.dims();
    let r = inst.rank.get();
    let beta = inst.profile.beta;
    let mut rng = substream(seed, 0);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let p = FactorPair {
            a: gaussian_matrix(&mut rng, m, r, 1.0),
            b: gaussian_matrix(&mut rng, n, r, 1.0),
        };
        let d = FactorPair {
            a: gaussian_matrix(&mut rng, m, r, 1.0),
            b: gaussian_matrix(&mut rng, n, r, 1.0),
        };
        let lifted = p.a.matmul_t(&d.b).add(&d.a.matmul_t(&p.b));
        let x = p.product();
        let q = inst.objective.hess_quadform(&x, &lifted, &lifted)?;
        worst = worst.max(q - beta * lifted.frob_norm_sq());
    }
    rec.push(
        format!("lifted curvature on {}", inst.label),
        "lifted-curvature-bound",
        worst <= TOL,
        TOL,
        &[("worst_excess", worst), ("beta", beta)],
        "100 random points and lifted directions",
    );
    Ok(())
}

fn local_curvature(rec: &mut Recorder, inst: &ProblemInstance, seed: u64) -> Result<()> {
    const TOL: f64 = 1e-6;
    let (m, n) = inst.dims();
    let beta = inst.profile.beta;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..5 {
        let p = random_factor_init((m, n), inst.rank, 1.0, seed, i);
        let est = estimate_local_curvature(&inst.objective, &p.product(), inst.rank, 1e-3, 200, seed + i)?;
        worst = worst.max(est.beta_f_hat - beta);
    }
    rec.push(
        format!("local curvature on {}", inst.label),
        "local-curvature-bound",
        worst <= TOL,
        TOL,
        &[("worst_excess", worst), ("beta", beta)],
        "sampled lower estimate at 5 random rank-r points",
    );
    Ok(())
}

pub const THEOREM5_GRID: [(f64, f64, usize, usize, usize, usize); 6] = [
    (1.0, 2.0, 6, 6, 4, 2),
    (1.0, 2.0, 7, 7, 4, 3),
    (1.0, 3.0, 5, 5, 3, 1),
    (0.5, 1.5, 6, 8, 4, 1),
    (1.0, 2.0, 5, 7, 3, 1),
    (2.0, 5.0, 8, 6, 5, 1),
];

fn theorem5(rec: &mut Recorder) -> Result<()> {
    for (alpha, beta, m, n, r, r_prime) in THEOREM5_GRID {
        let spec = CounterexampleSpec {
            alpha,
            beta,
            m,
            n,
            r,
            r_prime,
        };
        counterexample_records(rec, &spec)?;
    }
    let rejected = [
        (1.0, 2.0, 6, 6, 4, 1, "r' = r/kappa^2"),
        (1.0, 1.0, 6, 6, 4, 2, "alpha = beta"),
        (2.0, 1.0, 6, 6, 4, 2, "beta < alpha"),
        (1.0, 2.0, 5, 5, 4, 2, "r + r' > min(m, n)"),
        (0.0, 2.0, 6, 6, 4, 2, "alpha = 0"),
    ];
    for (alpha, beta, m, n, r, r_prime, why) in rejected {
        let spec = CounterexampleSpec {
            alpha,
            beta,
            m,
            n,
            r,
            r_prime,
        };
        let err = build_counterexample(&spec).err();
        rec.push(
            format!("rejects {why}"),
            "counterexample-spec-validation",
            err.is_some(),
            0.0,
            &[],
            err.map(|e| e.to_string()).unwrap_or_else(|| "accepted".into()),
        );
    }
    Ok(())
}

/// The construction checks for one spec, as run by the `theorem5` suite.
pub fn counterexample_checks(spec: &CounterexampleSpec) -> Result<Vec<CheckRecord>> {
    let mut rec = Recorder::default();
    counterexample_records(&mut rec, spec)?;
    Ok(rec.records)
}

fn counterexample_records(rec: &mut Recorder, spec: &CounterexampleSpec) -> Result<()> {
    let inst = build_counterexample(spec)?;
    let obj = &inst.objective;
    let tag = format!(
        "(alpha={}, beta={}, m={}, n={}, r={}, r'={})",
        spec.alpha, spec.beta, spec.m, spec.n, spec.r, spec.r_prime
    );
    let x0 = inst.matrix_witness("X0").expect("counterexample witness");
    let kx1 = inst.matrix_witness("kappa_X1").expect("counterexample witness");
    let p0 = inst.factor_witness("A0B0").expect("counterexample witness");

    let f0 = obj.value(x0)?;
    let f1 = obj.value(kx1)?;
    let expected = spec.scaled_x1_value();
    let err1 = (f1 - expected).abs();
    rec.push(
        format!("values {tag}"),
        "counterexample-values",
        f0 == 0.0 && err1 <= 1e-12,
        1e-12,
        &[("f_x0", f0), ("f_kappa_x1", f1), ("expected", expected), ("abs_err", err1)],
        "f(X0) exactly 0; f(kappa X1) against the closed form",
    );

    let cert = certify_sosp(obj, p0, 1e-7, 1e-8)?;
    rec.push(
        format!("witness second-order stationary {tag}"),
        "counterexample-sosp",
        cert.verdict == SospVerdict::Sosp && cert.min_eigenvalue >= -1e-10,
        1e-10,
        &[
            ("min_eigenvalue", cert.min_eigenvalue),
            ("fosp_residual", cert.fosp_residual),
        ],
        format!("verdict {:?}, Hessian size {}", cert.verdict, cert.hessian_size),
    );

    hessian_identity(rec, &inst, p0, &tag)?;

    let eta = 1.0 / spec.beta;
    let st = check_pgd_stationary(obj, x0, inst.rank, eta, 1e-10)?;
    let fixed = run_pgd(
        obj,
        x0,
        inst.rank,
        &PgdConfig {
            eta,
            max_iters: 1,
            ..PgdConfig::default()
        },
    )?
    .0;
    let moved = rel_dist(&fixed, x0);
    rec.push(
        format!("X0 fixed point at eta = 1/beta {tag}"),
        "counterexample-pgd-stationary",
        st.is_stationary() && st.margin.abs() <= 1e-10 && moved <= 1e-10,
        1e-10,
        &[
            ("margin", st.margin),
            ("projection_residual", st.projection_residual),
            ("pgd_step_moved", moved),
        ],
        format!("verdict {:?}", st.verdict),
    );

    let oracle = inst.oracles[&spec.r_prime];
    let audit = restricted_optimality_audit(obj, x0, inst.rank, spec.r_prime, oracle, GAP_TOL)?;
    let k2 = spec.kappa() * spec.kappa();
    let needed = 0.5 * spec.alpha * (k2 * spec.r_prime as f64 - spec.r as f64);
    rec.push(
        format!("restricted gap {tag}"),
        "counterexample-restricted-gap",
        !audit.holds && audit.gap >= needed - GAP_TOL,
        GAP_TOL,
        &[("gap", audit.gap), ("required_gap", needed), ("oracle", oracle)],
        "audit must fail with at least the constructed gap",
    );
    Ok(())
}

fn hessian_identity(rec: &mut Recorder, inst: &ProblemInstance, p0: &FactorPair, tag: &str) -> Result<()> {
    let ObjectiveKind::Counterexample {
        alpha, beta, x1, mask, ..
    } = &inst.objective.kind
    else {
        unreachable!("not a counterexample instance");
    };
    let (m, n) = inst.dims();
    let r = inst.rank.get();
    let mut rng = substream(0, 5);
    let (mut worst_err, mut min_q) = (0.0f64, f64::INFINITY);
    for _ in 0..50 {
        let d = FactorPair {
            a: gaussian_matrix(&mut rng, m, r, 1.0),
            b: gaussian_matrix(&mut rng, n, r, 1.0),
        };
        let q = g_hess_quadform(&inst.objective, p0, &d, &d)?;
        let lifted = p0.a.matmul_t(&d.b).add(&d.a.matmul_t(&p0.b));
        let expected = -2.0 * beta * x1.dot(&d.a.matmul_t(&d.b))
            + alpha * lifted.frob_norm_sq()
            + (beta - alpha) * lifted.hadamard(mask).frob_norm_sq();
        worst_err = worst_err.max((q - expected).abs() / expected.abs().max(1.0));
        min_q = min_q.min(q);
    }
    rec.push(
        format!("factor Hessian closed form {tag}"),
        "counterexample-hessian-identity",
        worst_err <= 1e-9 && min_q >= -1e-10,
        1e-9,
        &[("worst_rel_err", worst_err), ("min_quadform", min_q)],
        "50 random directions",
    );
    Ok(())
}

fn gradcheck(rec: &mut Recorder, seed: u64) -> Result<()> {
    const H: f64 = 1e-5;
    const GRAD_TOL: f64 = 1e-6;
    const F_CURV_TOL: f64 = 1e-6;
    const G_CURV_TOL: f64 = 1e-5;
    let instances = [
        gen_fro_loss(6, 5, &[3.0, 2.0, 1.0], 2, seed)?,
        gen_matrix_sensing(5, 4, 2, 60, 0.1, seed + 1)?,
        gen_matrix_completion(6, 5, 2, 0.6, seed + 2)?,
        build_counterexample(&CounterexampleSpec::default())?,
    ];
    for (k, inst) in instances.iter().enumerate() {
        let obj = &inst.objective;
        let (m, n) = inst.dims();
        let base = seed.wrapping_add(1000 * (k as u64 + 1));
        let (mut fg, mut fc, mut gg, mut gc) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..10 {
            let x = random_matrix_init((m, n), 1.0, base, i);
            let rep = obj.finite_diff_check(&x, H, base + 100 + i)?;
            fg = fg.max(rep.grad_max_rel_err);
            fc = fc.max(rep.hess_max_rel_err);
            let p = random_factor_init((m, n), inst.rank, 1.0, base + 1, i);
            let rep = g_finite_diff_check(obj, &p, H, 1e-4, 20, base + 200 + i)?;
            gg = gg.max(rep.grad_max_rel_err);
            gc = gc.max(rep.hess_max_rel_err);
        }
        let kind = obj.kind_name();
        for (name, anchor, err, tol) in [
            ("f gradient", "gradient-consistency", fg, GRAD_TOL),
            ("f curvature", "curvature-consistency", fc, F_CURV_TOL),
            ("g gradient", "gradient-consistency", gg, GRAD_TOL),
            ("g curvature", "curvature-consistency", gc, G_CURV_TOL),
        ] {
            rec.push(
                format!("{name} on {kind}"),
                anchor,
                err <= tol,
                tol,
                &[("max_rel_err", err)],
                "10 random points",
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in SuiteName::ALL {
            assert_eq!(s.as_str().parse::<SuiteName>().unwrap(), s);
        }
        assert!("theorem6".parse::<SuiteName>().is_err());
    }

    #[test]
    fn subsets_enumerate_combinations() {
        assert_eq!(subsets(4, 2).len(), 6);
        assert_eq!(subsets(3, 3), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn anchors_are_unique() {
        let mut names: Vec<_> = ANCHORS.iter().map(|(a, _)| *a).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), ANCHORS.len());
    }
}
