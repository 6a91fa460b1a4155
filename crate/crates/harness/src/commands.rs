//! File-producing implementations of the CLI subcommands. All writes happen
//! here, after the numerical work has been aggregated.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use lowrank_core::certify::{
    certify_sosp, check_fosp, check_pgd_stationary, restricted_optimality_audit, AuditReport, FospReport,
    SospCertificate, StationarityReport, DEFAULT_TOL_EIG,
};
use lowrank_core::factorized::g_finite_diff_check;
use lowrank_core::instances::{build_counterexample, CounterexampleSpec, ProblemInstance};
use lowrank_core::optimize::{
    multi_start_fgd, multi_start_pgd, random_factor_init, random_matrix_init, RunStatus, RunTrace,
};
use lowrank_core::svd::project_rank;
use lowrank_core::{DenseMatrix, Error as CoreError, FactorPair, SmoothnessProfile};
use serde::{Deserialize, Serialize};

use crate::config::{default_eta, Algorithm, RunConfig};
use crate::error::{HarnessError, Result};
use crate::suites::{counterexample_checks, run_suite, CheckRecord, SuiteName, SuiteReport};

/// Relative distance under which two limits count as the same point.
pub const SAME_LIMIT_TOL: f64 = 1e-6;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| HarnessError::Config(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_file(path, &text)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    DenseMatrix::parse_text(&text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

/// Either a report or the reason it could not be produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Checked<T> {
    Report(T),
    Failed { error: String },
}

impl<T> Checked<T> {
    fn from_core(r: lowrank_core::Result<T>) -> Self {
        match r {
            Ok(t) => Checked::Report(t),
            Err(e) => Checked::Failed { error: e.to_string() },
        }
    }

    pub fn report(&self) -> Option<&T> {
        match self {
            Checked::Report(t) => Some(t),
            Checked::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub label: String,
    pub kind: String,
    pub dims: (usize, usize),
    pub rank: usize,
    pub profile: SmoothnessProfile,
    pub hessian_norm: f64,
    pub step_beta: f64,
    pub flags: Vec<String>,
}

impl InstanceSummary {
    pub fn of(inst: &ProblemInstance) -> Self {
        Self {
            label: inst.label.clone(),
            kind: inst.objective.kind_name().to_string(),
            dims: inst.dims(),
            rank: inst.rank.get(),
            profile: inst.profile,
            hessian_norm: inst.hessian_norm,
            step_beta: inst.step_beta(),
            flags: inst.flags.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartResult {
    pub start: usize,
    pub status: RunStatus,
    pub iterations: usize,
    pub final_value: Option<f64>,
    pub solution: DenseMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factors: Option<FactorPair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationarity: Option<Checked<StationarityReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sosp: Option<Checked<SospCertificate>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub instance: InstanceSummary,
    pub config: RunConfig,
    /// Step at which stationarity is judged.
    pub eta: f64,
    pub starts: Vec<StartResult>,
    pub best_value: Option<f64>,
    /// Number of limits that differ by more than [`SAME_LIMIT_TOL`].
    pub distinct_limits: usize,
}

fn distinct_count(points: &[&DenseMatrix]) -> usize {
    let mut reps: Vec<&DenseMatrix> = Vec::new();
    for p in points {
        let fresh = reps
            .iter()
            .all(|q| p.sub(q).frob_norm() > SAME_LIMIT_TOL * q.frob_norm().max(1.0));
        if fresh {
            reps.push(p);
        }
    }
    reps.len()
}

/// Runs the configured algorithm and writes `trace.csv`, per-start traces
/// when there are several starts, and `result.json`.
pub fn run(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let inst = cfg.instance.load()?;
    let obj = &inst.objective;
    let starts = cfg.starts();
    let eta = cfg.pgd_config(&inst).eta;
    let c = &cfg.certify;

    let (results, traces): (Vec<StartResult>, Vec<RunTrace>) = match cfg.algorithm {
        Algorithm::Pgd => {
            let runs = multi_start_pgd(obj, inst.rank, starts, cfg.init_scale(), &cfg.pgd_config(&inst))?;
            runs.into_iter()
                .enumerate()
                .map(|(i, (x, trace))| {
                    let stationarity = c.stationarity.then(|| {
                        Checked::from_core(check_pgd_stationary(obj, &x, inst.rank, eta, c.stationarity_tol))
                    });
                    let sosp = c.sosp.then(|| {
                        Checked::from_core(
                            FactorPair::balanced_from(&x, inst.rank.get())
                                .and_then(|p| certify_sosp(obj, &p, c.tol_g, c.tol_eig)),
                        )
                    });
                    let r = StartResult {
                        start: i,
                        status: trace.status,
                        iterations: trace.iterations(),
                        final_value: trace.final_value(),
                        solution: x,
                        factors: None,
                        stationarity,
                        sosp,
                    };
                    (r, trace)
                })
                .unzip()
        }
        Algorithm::Fgd | Algorithm::MultiStart => {
            let runs = multi_start_fgd(obj, inst.rank, starts, cfg.init_scale(), &cfg.fgd_config())?;
            runs.into_iter()
                .enumerate()
                .map(|(i, (p, trace))| {
                    let x = p.product();
                    let stationarity = c.stationarity.then(|| {
                        Checked::from_core(check_pgd_stationary(
                            obj,
                            &x,
                            inst.rank,
                            eta,
                            c.stationarity_tol,
                        ))
                    });
                    let sosp = c.sosp.then(|| Checked::from_core(certify_sosp(obj, &p, c.tol_g, c.tol_eig)));
                    let r = StartResult {
                        start: i,
                        status: trace.status,
                        iterations: trace.iterations(),
                        final_value: trace.final_value(),
                        solution: x,
                        factors: Some(p),
                        stationarity,
                        sosp,
                    };
                    (r, trace)
                })
                .unzip()
        }
    };

    let best_value = results
        .iter()
        .filter_map(|r| r.final_value)
        .filter(|v| v.is_finite())
        .min_by(f64::total_cmp);
    let limits: Vec<&DenseMatrix> = results
        .iter()
        .filter(|r| r.status != RunStatus::Diverged)
        .map(|r| &r.solution)
        .collect();
    let result = RunResult {
        instance: InstanceSummary::of(&inst),
        config: cfg.clone(),
        eta,
        distinct_limits: distinct_count(&limits),
        starts: results,
        best_value,
    };

    let out = &cfg.output_dir;
    ensure_dir(out)?;
    write_file(&out.join("trace.csv"), &traces[0].to_csv())?;
    if traces.len() > 1 {
        let dir = out.join("traces");
        ensure_dir(&dir)?;
        for (i, t) in traces.iter().enumerate() {
            write_file(&dir.join(format!("start_{i}.csv")), &t.to_csv())?;
        }
    }
    write_json(&out.join("result.json"), &result)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Candidate {
    Matrix { source: String, x: DenseMatrix },
    Factors { source: String, p: FactorPair },
}

impl Candidate {
    pub fn source(&self) -> &str {
        match self {
            Candidate::Matrix { source, .. } | Candidate::Factors { source, .. } => source,
        }
    }

    /// Resolves a named witness of `inst`.
    pub fn witness(inst: &ProblemInstance, name: &str) -> Result<Self> {
        let source = format!("witness {name}");
        if let Some(x) = inst.matrix_witness(name) {
            return Ok(Candidate::Matrix { source, x: x.clone() });
        }
        if let Some(p) = inst.factor_witness(name) {
            return Ok(Candidate::Factors { source, p: p.clone() });
        }
        let names: Vec<_> = inst.witnesses.keys().map(String::as_str).collect();
        Err(HarnessError::Config(format!(
            "instance has no witness '{name}' (available: {})",
            names.join(", ")
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    /// Defaults to `1/β` for the instance.
    pub eta: Option<f64>,
    pub tol: f64,
    pub tol_g: f64,
    pub tol_eig: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            eta: None,
            tol: 1e-6,
            tol_g: 1e-7,
            tol_eig: DEFAULT_TOL_EIG,
        }
    }
}

/// Outcome for a matrix that has more than `r` significant singular values
/// and so cannot be a rank-`r` fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankExcess {
    pub verdict: String,
    /// `σ_{r+1}/σ_1`
    pub rank_excess: f64,
    /// `‖X − P_r(X − η∇f(X))‖_F`
    pub fixed_point_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StationarityOutcome {
    Report(StationarityReport),
    NotLowRank(RankExcess),
}

impl StationarityOutcome {
    pub fn is_stationary(&self) -> bool {
        match self {
            StationarityOutcome::Report(r) => r.is_stationary(),
            StationarityOutcome::NotLowRank(_) => false,
        }
    }

    pub fn verdict(&self) -> String {
        match self {
            StationarityOutcome::Report(r) => serde_json::to_value(r.verdict)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            StationarityOutcome::NotLowRank(e) => e.verdict.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateCertificate {
    pub candidate: String,
    pub instance: String,
    pub rank: usize,
    pub eta: f64,
    pub value: f64,
    pub stationarity: StationarityOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fosp: Option<FospReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sosp: Option<SospCertificate>,
}

fn stationarity_outcome(
    inst: &ProblemInstance,
    x: &DenseMatrix,
    eta: f64,
    tol: f64,
) -> Result<StationarityOutcome> {
    match check_pgd_stationary(&inst.objective, x, inst.rank, eta, tol) {
        Ok(rep) => Ok(StationarityOutcome::Report(rep)),
        Err(CoreError::NotLowRank {
            sigma_next, sigma_first, ..
        }) => {
            let mut step = x.clone();
            step.axpy(-eta, &inst.objective.gradient(x)?);
            let residual = x.sub(&project_rank(&step, inst.rank)?).frob_norm();
            Ok(StationarityOutcome::NotLowRank(RankExcess {
                verdict: "not-stationary".into(),
                rank_excess: sigma_next / sigma_first,
                fixed_point_residual: residual,
            }))
        }
        Err(e) => Err(e.into()),
    }
}

/// Certifies each candidate and writes `certificate_<k>.json`.
pub fn certify(
    inst: &ProblemInstance,
    candidates: &[Candidate],
    opts: &CertifyOptions,
    out: &Path,
) -> Result<Vec<CandidateCertificate>> {
    let obj = &inst.objective;
    let (m, n) = inst.dims();
    let eta = opts.eta.unwrap_or_else(|| default_eta(inst));
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(HarnessError::Config(format!("eta must be > 0, got {eta}")));
    }
    let mut certs = Vec::with_capacity(candidates.len());
    for c in candidates {
        let cert = match c {
            Candidate::Matrix { x, .. } => {
                x.ensure_shape(m, n)?;
                let stationarity = stationarity_outcome(inst, x, eta, opts.tol)?;
                let fosp = match &stationarity {
                    StationarityOutcome::Report(_) => {
                        let p = FactorPair::balanced_from(x, inst.rank.get())?;
                        Some(check_fosp(obj, &p, opts.tol)?)
                    }
                    StationarityOutcome::NotLowRank(_) => None,
                };
                CandidateCertificate {
                    candidate: c.source().to_string(),
                    instance: inst.label.clone(),
                    rank: inst.rank.get(),
                    eta,
                    value: obj.value(x)?,
                    stationarity,
                    fosp,
                    sosp: None,
                }
            }
            Candidate::Factors { p, .. } => {
                if p.rank() != inst.rank.get() {
                    return Err(CoreError::DimensionMismatch {
                        expected: format!("factors with {} columns", inst.rank.get()),
                        got: format!("{} columns", p.rank()),
                    }
                    .into());
                }
                p.a.ensure_shape(m, p.rank())?;
                p.b.ensure_shape(n, p.rank())?;
                let x = p.product();
                CandidateCertificate {
                    candidate: c.source().to_string(),
                    instance: inst.label.clone(),
                    rank: inst.rank.get(),
                    eta,
                    value: obj.value(&x)?,
                    stationarity: stationarity_outcome(inst, &x, eta, opts.tol)?,
                    fosp: Some(check_fosp(obj, p, opts.tol)?),
                    sosp: Some(certify_sosp(obj, p, opts.tol_g, opts.tol_eig)?),
                }
            }
        };
        certs.push(cert);
    }
    ensure_dir(out)?;
    for (k, cert) in certs.iter().enumerate() {
        write_json(&out.join(format!("certificate_{k}.json")), cert)?;
    }
    Ok(certs)
}

/// Runs a named suite and writes `suite_report.json`.
pub fn suite(name: &str, seed: u64, out: &Path) -> Result<SuiteReport> {
    let name: SuiteName = name.parse()?;
    let report = run_suite(name, seed)?;
    ensure_dir(out)?;
    write_json(&out.join("suite_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleOutput {
    pub instance: ProblemInstance,
    pub sosp: SospCertificate,
    pub stationarity: StationarityReport,
    pub audit: AuditReport,
    pub checks: Vec<CheckRecord>,
    pub summary: String,
}

/// Builds the construction and writes the instance, its witnesses, three
/// certificates, the check records and a plain-text summary.
pub fn counterexample(spec: &CounterexampleSpec, out: &Path) -> Result<CounterexampleOutput> {
    let inst = build_counterexample(spec)?;
    let obj = &inst.objective;
    let x0 = inst.matrix_witness("X0").expect("construction witness");
    let kx1 = inst.matrix_witness("kappa_X1").expect("construction witness");
    let polished = inst.matrix_witness("rank_r_prime_polished").expect("construction witness");
    let p0 = inst.factor_witness("A0B0").expect("construction witness");
    let eta = 1.0 / spec.beta;

    let sosp = certify_sosp(obj, p0, 1e-7, DEFAULT_TOL_EIG)?;
    let stationarity = check_pgd_stationary(obj, x0, inst.rank, eta, 1e-10)?;
    let oracle = inst.oracles[&spec.r_prime];
    let audit = restricted_optimality_audit(obj, x0, inst.rank, spec.r_prime, oracle, 1e-9)?;
    let checks = counterexample_checks(spec)?;
    let f_x0 = obj.value(x0)?;
    let f_kx1 = obj.value(kx1)?;
    let k = spec.kappa();

    let mut s = String::new();
    let _ = writeln!(
        s,
        "construction: alpha={} beta={} m={} n={} r={} r'={}",
        spec.alpha, spec.beta, spec.m, spec.n, spec.r, spec.r_prime
    );
    let _ = writeln!(
        s,
        "kappa = {k}, r/kappa^2 = {}, so r' = {} exceeds the restricted-optimality threshold",
        spec.r as f64 / (k * k),
        spec.r_prime
    );
    let _ = writeln!(
        s,
        "f satisfies restricted strong convexity alpha={} and smoothness beta={} for rank {}",
        spec.alpha, spec.beta, spec.r
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "1. X0 = A0 B0^T is a fixed point of projected gradient descent at eta = 1/beta = {eta}: verdict {}, margin {:e}",
        serde_json::to_value(stationarity.verdict).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
        stationarity.margin
    );
    let _ = writeln!(
        s,
        "2. (A0, B0) is a second-order stationary point of g: verdict {}, gradient residual {:e}, min Hessian eigenvalue {:e}",
        serde_json::to_value(sosp.verdict).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
        sosp.fosp_residual,
        sosp.min_eigenvalue
    );
    let _ = writeln!(
        s,
        "   yet f(X0) = {f_x0} > {f_kx1} = f(kappa X1) >= min over rank(Y) <= {} of f(Y)",
        spec.r_prime
    );
    let _ = writeln!(
        s,
        "   best rank-{} value found: {}; restricted optimality fails by {}",
        spec.r_prime,
        obj.value(polished)?,
        audit.gap
    );
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
    let _ = writeln!(s);
    let _ = writeln!(s, "checks: {} passed, {} failed", checks.len() - failed.len(), failed.len());
    for c in failed {
        let _ = writeln!(s, "FAILED {}", c.name);
    }

    ensure_dir(out)?;
    write_json(&out.join("instance.json"), &inst)?;
    write_file(&out.join("X0.txt"), &x0.to_text())?;
    write_file(&out.join("kappa_X1.txt"), &kx1.to_text())?;
    write_file(&out.join("A0.txt"), &p0.a.to_text())?;
    write_file(&out.join("B0.txt"), &p0.b.to_text())?;
    write_file(&out.join("rank_r_prime_polished.txt"), &polished.to_text())?;
    write_json(&out.join("certificate_sosp.json"), &sosp)?;
    write_json(&out.join("certificate_stationarity.json"), &stationarity)?;
    write_json(&out.join("certificate_audit.json"), &audit)?;
    write_json(&out.join("checks.json"), &checks)?;
    write_file(&out.join("summary.txt"), &s)?;

    Ok(CounterexampleOutput {
        instance: inst,
        sosp,
        stationarity,
        audit,
        checks,
        summary: s,
    })
}

pub const GRADCHECK_GRAD_TOL: f64 = 1e-6;
pub const GRADCHECK_CURVATURE_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub instance: String,
    pub points: usize,
    pub h: f64,
    pub f_grad_max_rel_err: f64,
    pub f_curvature_max_rel_err: f64,
    pub g_grad_max_rel_err: f64,
    pub g_curvature_max_rel_err: f64,
    pub grad_tol: f64,
    pub curvature_tol: f64,
    pub passed: bool,
}

/// Finite-difference checks of `f` and `g` at `points` random points;
/// writes `gradcheck.json`.
pub fn gradcheck(inst: &ProblemInstance, points: usize, h: f64, seed: u64, out: &Path) -> Result<GradcheckReport> {
    if points == 0 {
        return Err(HarnessError::Config("points must be >= 1".into()));
    }
    let obj = &inst.objective;
    let dims = inst.dims();
    let (mut fg, mut fc, mut gg, mut gc) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..points as u64 {
        let x = random_matrix_init(dims, 1.0, seed, i);
        let rep = obj.finite_diff_check(&x, h, seed.wrapping_add(1000 + i))?;
        fg = fg.max(rep.grad_max_rel_err);
        fc = fc.max(rep.hess_max_rel_err);
        let p = random_factor_init(dims, inst.rank, 1.0, seed.wrapping_add(1), i);
        let rep = g_finite_diff_check(obj, &p, h, 1e-4, 20, seed.wrapping_add(2000 + i))?;
        gg = gg.max(rep.grad_max_rel_err);
        gc = gc.max(rep.hess_max_rel_err);
    }
    let report = GradcheckReport {
        instance: inst.label.clone(),
        points,
        h,
        f_grad_max_rel_err: fg,
        f_curvature_max_rel_err: fc,
        g_grad_max_rel_err: gg,
        g_curvature_max_rel_err: gc,
        grad_tol: GRADCHECK_GRAD_TOL,
        curvature_tol: GRADCHECK_CURVATURE_TOL,
        passed: fg.max(gg) <= GRADCHECK_GRAD_TOL && fc.max(gc) <= GRADCHECK_CURVATURE_TOL,
    };
    ensure_dir(out)?;
    write_json(&out.join("gradcheck.json"), &report)?;
    Ok(report)
}
