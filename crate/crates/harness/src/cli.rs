//! Argument parsing and dispatch for the `lowrank` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lowrank_core::instances::CounterexampleSpec;
use lowrank_core::optimize::StepPolicy;
use lowrank_core::FactorPair;

use crate::commands::{self, read_matrix, Candidate, CertifyOptions};
use crate::config::{Algorithm, InstanceRef, InstanceSpec, RunConfig};
use crate::error::{HarnessError, Result};

/// Environment variable that sets the worker thread count.
pub const THREADS_ENV: &str = "LOWRANK_THREADS";

#[derive(Parser, Debug)]
#[command(name = "lowrank", version, about = "Rank-constrained minimization by PGD and FGD, with stationarity certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run PGD or FGD on an instance and write trace.csv and result.json.
    Run(RunArgs),
    /// Certify matrices or factor pairs as stationary points.
    Certify(CertifyArgs),
    /// Run a named check suite and write suite_report.json.
    Suite(SuiteArgs),
    /// Build the restricted-optimality counterexample and its certificates.
    Counterexample(CounterexampleArgs),
    /// Finite-difference checks of gradients and Hessian forms.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug, Clone)]
pub struct InstanceArgs {
    /// fro, sensing, completion, counterexample, or a path to an instance JSON file.
    #[arg(long, default_value = "fro")]
    pub instance: String,
    /// Singular values of the Frobenius-loss target.
    #[arg(long, value_delimiter = ',')]
    pub spectrum: Option<Vec<f64>>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub measurements: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub obs_fraction: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub r_prime: Option<usize>,
    /// Seed of the instance generator.
    #[arg(long, default_value_t = 0)]
    pub instance_seed: u64,
}

impl InstanceArgs {
    pub fn to_ref(&self) -> Result<InstanceRef> {
        let a = self;
        let spec = match a.instance.as_str() {
            "fro" => InstanceSpec::FroLoss {
                m: a.m,
                n: a.n,
                spectrum: a.spectrum.clone().unwrap_or_else(|| vec![3.0, 2.0, 1.0]),
                rank: a.rank.unwrap_or(2),
                seed: a.instance_seed,
            },
            "sensing" => InstanceSpec::MatrixSensing {
                m: a.m.unwrap_or(5),
                n: a.n.unwrap_or(5),
                rank: a.rank.unwrap_or(2),
                measurements: a.measurements,
                noise_sd: a.noise.unwrap_or(0.0),
                seed: a.instance_seed,
            },
            "completion" => InstanceSpec::MatrixCompletion {
                m: a.m.unwrap_or(6),
                n: a.n.unwrap_or(6),
                rank: a.rank.unwrap_or(2),
                obs_fraction: a.obs_fraction.unwrap_or(0.5),
                seed: a.instance_seed,
            },
            "counterexample" => {
                let d = CounterexampleSpec::default();
                InstanceSpec::Counterexample {
                    alpha: a.alpha.unwrap_or(d.alpha),
                    beta: a.beta.unwrap_or(d.beta),
                    m: a.m.unwrap_or(d.m),
                    n: a.n.unwrap_or(d.n),
                    r: a.rank.unwrap_or(d.r),
                    r_prime: a.r_prime.unwrap_or(d.r_prime),
                }
            }
            path => return Ok(InstanceRef::Path(PathBuf::from(path))),
        };
        Ok(InstanceRef::Inline(spec))
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Full run configuration as JSON; other flags except --out and --seed are ignored.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long, value_enum, default_value = "pgd")]
    pub alg: Algorithm,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// PGD step size; defaults to 1/beta.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Fixed FGD steps for A and B instead of backtracking.
    #[arg(long, num_args = 2, value_names = ["ETA_A", "ETA_B"])]
    pub fixed_steps: Option<Vec<f64>>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => {
                let mut cfg = RunConfig {
                    instance: self.instance.to_ref()?,
                    algorithm: self.alg,
                    starts: self.starts,
                    init_scale: self.init_scale,
                    pgd: Default::default(),
                    fgd: Default::default(),
                    certify: Default::default(),
                    output_dir: PathBuf::from("out"),
                    seed: 0,
                };
                cfg.pgd.eta = self.eta;
                if let Some(steps) = &self.fixed_steps {
                    cfg.fgd.step_policy = StepPolicy::Fixed {
                        eta_a: steps[0],
                        eta_b: steps[1],
                    };
                }
                if let Some(k) = self.max_iters {
                    cfg.pgd.max_iters = k;
                    cfg.fgd.max_iters = k;
                }
                cfg
            }
        };
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Matrix files to certify as PGD fixed points.
    #[arg(long = "point", value_delimiter = ',')]
    pub points: Vec<PathBuf>,
    /// A factor pair given as `A.txt,B.txt`; repeatable.
    #[arg(long = "factors")]
    pub factors: Vec<String>,
    /// Named witness of the instance, such as A0B0 or global_minimizer; repeatable.
    #[arg(long = "witness")]
    pub witnesses: Vec<String>,
    /// Certify the all-zero factor pair.
    #[arg(long)]
    pub zero: bool,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-7)]
    pub tol_g: f64,
    #[arg(long, default_value_t = lowrank_core::certify::DEFAULT_TOL_EIG)]
    pub tol_eig: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SuiteArgs {
    /// theorem1, theorem2, theorem3, theorem4, theorem5, lemmas or gradcheck.
    pub name: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CounterexampleArgs {
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 6)]
    pub m: usize,
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub r: usize,
    #[arg(long, default_value_t = 2)]
    pub r_prime: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long, default_value_t = 10)]
    pub points: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| HarnessError::Config(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    // a second initialization in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match configure_threads().and_then(|_| dispatch(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run(args) => {
            let cfg = args.to_config()?;
            let res = commands::run(&cfg)?;
            for s in &res.starts {
                println!(
                    "start {:>3}: {:?} after {} iterations, f = {}",
                    s.start,
                    s.status,
                    s.iterations,
                    s.final_value.map_or("n/a".to_string(), |v| format!("{v:e}"))
                );
            }
            println!(
                "{} distinct limit(s); wrote {}",
                res.distinct_limits,
                cfg.output_dir.join("result.json").display()
            );
            Ok(0)
        }
        Command::Certify(args) => {
            let inst = args.instance.to_ref()?.load()?;
            let mut candidates = Vec::new();
            for path in &args.points {
                candidates.push(Candidate::Matrix {
                    source: path.display().to_string(),
                    x: read_matrix(path)?,
                });
            }
            for pair in &args.factors {
                let Some((a, b)) = pair.split_once(',') else {
                    return Err(HarnessError::Config(format!("--factors expects A.txt,B.txt, got {pair:?}")));
                };
                let p = FactorPair::new(read_matrix(a.as_ref())?, read_matrix(b.as_ref())?)?;
                candidates.push(Candidate::Factors {
                    source: pair.clone(),
                    p,
                });
            }
            for name in &args.witnesses {
                candidates.push(Candidate::witness(&inst, name)?);
            }
            if args.zero {
                let (m, n) = inst.dims();
                candidates.push(Candidate::Factors {
                    source: "zero factors".into(),
                    p: FactorPair::zeros(m, n, inst.rank.get()),
                });
            }
            if candidates.is_empty() {
                return Err(HarnessError::Config(
                    "nothing to certify: pass --point, --factors, --witness or --zero".into(),
                ));
            }
            let opts = CertifyOptions {
                eta: args.eta,
                tol: args.tol,
                tol_g: args.tol_g,
                tol_eig: args.tol_eig,
            };
            let certs = commands::certify(&inst, &candidates, &opts, &args.out)?;
            for (k, c) in certs.iter().enumerate() {
                let sosp = c
                    .sosp
                    .map(|s| format!(", sosp verdict {:?}", s.verdict))
                    .unwrap_or_default();
                println!(
                    "certificate_{k}.json: {} -> {}{sosp}",
                    c.candidate,
                    c.stationarity.verdict()
                );
            }
            Ok(0)
        }
        Command::Suite(args) => {
            let report = commands::suite(&args.name, args.seed, &args.out)?;
            for r in &report.records {
                println!("{} [{}] {}", if r.passed { "PASS" } else { "FAIL" }, r.anchor, r.name);
            }
            println!(
                "{}: {} of {} checks passed",
                report.suite, report.summary.passed, report.summary.total
            );
            Ok(if report.all_passed() { 0 } else { 1 })
        }
        Command::Counterexample(a) => {
            let spec = CounterexampleSpec {
                alpha: a.alpha,
                beta: a.beta,
                m: a.m,
                n: a.n,
                r: a.r,
                r_prime: a.r_prime,
            };
            let out = commands::counterexample(&spec, &a.out)?;
            print!("{}", out.summary);
            Ok(if out.checks.iter().all(|c| c.passed) { 0 } else { 1 })
        }
        Command::Gradcheck(args) => {
            let inst = args.instance.to_ref()?.load()?;
            let rep = commands::gradcheck(&inst, args.points, args.h, args.seed, &args.out)?;
            println!(
                "f: gradient {:e}, curvature {:e}; g: gradient {:e}, curvature {:e}",
                rep.f_grad_max_rel_err, rep.f_curvature_max_rel_err, rep.g_grad_max_rel_err, rep.g_curvature_max_rel_err
            );
            Ok(if rep.passed { 0 } else { 1 })
        }
    }
}
