//! Run configuration and instance selection.

use std::fs;
use std::path::{Path, PathBuf};

use lowrank_core::certify::{InclusionTolerances, DEFAULT_TOL_EIG};
use lowrank_core::instances::{
    build_counterexample, gen_fro_loss, gen_matrix_completion, gen_matrix_sensing, CounterexampleSpec,
    ProblemInstance,
};
use lowrank_core::optimize::{FgdConfig, PgdConfig, StepPolicy};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// A generated problem, described by its generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InstanceSpec {
    FroLoss {
        /// Defaults to the spectrum length (or the rank, if larger).
        #[serde(default)]
        m: Option<usize>,
        #[serde(default)]
        n: Option<usize>,
        spectrum: Vec<f64>,
        rank: usize,
        #[serde(default)]
        seed: u64,
    },
    MatrixSensing {
        m: usize,
        n: usize,
        rank: usize,
        /// Defaults to `6·rank·(m + n)`.
        #[serde(default)]
        measurements: Option<usize>,
        #[serde(default)]
        noise_sd: f64,
        #[serde(default)]
        seed: u64,
    },
    MatrixCompletion {
        m: usize,
        n: usize,
        rank: usize,
        obs_fraction: f64,
        #[serde(default)]
        seed: u64,
    },
    Counterexample {
        alpha: f64,
        beta: f64,
        m: usize,
        n: usize,
        r: usize,
        r_prime: usize,
    },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<ProblemInstance> {
        Ok(match self {
            InstanceSpec::FroLoss {
                m,
                n,
                spectrum,
                rank,
                seed,
            } => {
                let side = spectrum.len().max(*rank);
                gen_fro_loss(m.unwrap_or(side), n.unwrap_or(side), spectrum, *rank, *seed)?
            }
            InstanceSpec::MatrixSensing {
                m,
                n,
                rank,
                measurements,
                noise_sd,
                seed,
            } => {
                let p = measurements.unwrap_or(6 * rank * (m + n));
                gen_matrix_sensing(*m, *n, *rank, p, *noise_sd, *seed)?
            }
            InstanceSpec::MatrixCompletion {
                m,
                n,
                rank,
                obs_fraction,
                seed,
            } => gen_matrix_completion(*m, *n, *rank, *obs_fraction, *seed)?,
            InstanceSpec::Counterexample {
                alpha,
                beta,
                m,
                n,
                r,
                r_prime,
            } => build_counterexample(&CounterexampleSpec {
                alpha: *alpha,
                beta: *beta,
                m: *m,
                n: *n,
                r: *r,
                r_prime: *r_prime,
            })?,
        })
    }
}

/// Either an inline generator spec or the path of a JSON file holding a
/// generator spec or a fully serialized instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceRef {
    Path(PathBuf),
    Inline(InstanceSpec),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum InstanceFile {
    Spec(InstanceSpec),
    Full(Box<ProblemInstance>),
}

impl InstanceRef {
    pub fn load(&self) -> Result<ProblemInstance> {
        match self {
            InstanceRef::Inline(spec) => spec.build(),
            InstanceRef::Path(path) => load_instance_file(path),
        }
    }
}

pub fn load_instance_file(path: &Path) -> Result<ProblemInstance> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let parsed: InstanceFile = serde_json::from_str(&text).map_err(|e| {
        HarnessError::Config(format!(
            "{} is neither an instance spec nor a serialized instance: {e}",
            path.display()
        ))
    })?;
    match parsed {
        InstanceFile::Spec(spec) => spec.build(),
        InstanceFile::Full(inst) => Ok(*inst),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Pgd,
    Fgd,
    /// FGD from several random starts; `starts` defaults to 20.
    MultiStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgdSettings {
    /// Defaults to [`default_eta`].
    pub eta: Option<f64>,
    pub max_iters: usize,
    pub stop_tol: f64,
}

impl Default for PgdSettings {
    fn default() -> Self {
        let d = PgdConfig::default();
        Self {
            eta: None,
            max_iters: d.max_iters,
            stop_tol: d.stop_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FgdSettings {
    pub step_policy: StepPolicy,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for FgdSettings {
    fn default() -> Self {
        let d = FgdConfig::default();
        Self {
            step_policy: d.step_policy,
            max_iters: d.max_iters,
            grad_tol: d.grad_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySettings {
    pub stationarity: bool,
    pub sosp: bool,
    pub stationarity_tol: f64,
    pub tol_g: f64,
    pub tol_eig: f64,
    pub fosp_tol: f64,
}

impl Default for CertifySettings {
    fn default() -> Self {
        let t = InclusionTolerances::default();
        Self {
            stationarity: true,
            sosp: true,
            stationarity_tol: t.stationarity_tol,
            tol_g: t.tol_g,
            tol_eig: DEFAULT_TOL_EIG,
            fosp_tol: 1e-6,
        }
    }
}

impl CertifySettings {
    pub fn inclusion_tolerances(&self) -> InclusionTolerances {
        InclusionTolerances {
            tol_g: self.tol_g,
            tol_eig: self.tol_eig,
            stationarity_tol: self.stationarity_tol,
            ..InclusionTolerances::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub instance: InstanceRef,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub starts: Option<usize>,
    /// Standard deviation of the Gaussian initialization.
    #[serde(default)]
    pub init_scale: Option<f64>,
    #[serde(default)]
    pub pgd: PgdSettings,
    #[serde(default)]
    pub fgd: FgdSettings,
    #[serde(default)]
    pub certify: CertifySettings,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Pgd
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn starts(&self) -> usize {
        match (self.algorithm, self.starts) {
            (_, Some(s)) => s,
            (Algorithm::MultiStart, None) => 20,
            _ => 1,
        }
    }

    pub fn init_scale(&self) -> f64 {
        self.init_scale.unwrap_or(match self.algorithm {
            Algorithm::Pgd => 1.0,
            Algorithm::Fgd | Algorithm::MultiStart => 0.5,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(HarnessError::Config(msg.to_string()));
        if self.starts() == 0 {
            return bad("starts must be >= 1");
        }
        if !(self.init_scale() > 0.0 && self.init_scale().is_finite()) {
            return bad("init_scale must be > 0");
        }
        if let Some(eta) = self.pgd.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return bad("pgd.eta must be > 0");
            }
        }
        if !(self.pgd.stop_tol > 0.0) || self.pgd.max_iters == 0 {
            return bad("pgd needs stop_tol > 0 and max_iters >= 1");
        }
        if !(self.fgd.grad_tol > 0.0) || self.fgd.max_iters == 0 {
            return bad("fgd needs grad_tol > 0 and max_iters >= 1");
        }
        let c = &self.certify;
        if [c.stationarity_tol, c.tol_g, c.tol_eig, c.fosp_tol]
            .iter()
            .any(|t| !(*t >= 0.0))
        {
            return bad("certification tolerances must be >= 0");
        }
        Ok(())
    }

    pub fn fgd_config(&self) -> FgdConfig {
        FgdConfig {
            step_policy: self.fgd.step_policy,
            max_iters: self.fgd.max_iters,
            grad_tol: self.fgd.grad_tol,
            seed: self.seed,
        }
    }

    pub fn pgd_config(&self, inst: &ProblemInstance) -> PgdConfig {
        let eta = self.pgd.eta.unwrap_or_else(|| default_eta(inst));
        PgdConfig {
            eta,
            max_iters: self.pgd.max_iters,
            stop_tol: self.pgd.stop_tol,
            seed: self.seed,
        }
    }
}

/// `1/β`, with `β` the exact restricted constant when known and the Hessian
/// norm otherwise.
pub fn default_eta(inst: &ProblemInstance) -> f64 {
    1.0 / inst.step_beta()
}
