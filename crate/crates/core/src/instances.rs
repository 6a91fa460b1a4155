//! Problem generators with known constants, witness points and
//! restricted-minimum oracles.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorized::FactorPair;
use crate::matrix::{DenseMatrix, RankBudget};
use crate::objective::{Objective, ObjectiveKind, SmoothnessProfile};
use crate::optimize::{run_pgd, PgdConfig};
use crate::random::{gaussian_matrix, orthonormal_columns};

/// Number of random directions used when a profile must be estimated.
pub const PROFILE_TRIALS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Witness {
    Matrix { value: DenseMatrix },
    Factors { value: FactorPair },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub label: String,
    pub seed: u64,
    pub rank: RankBudget,
    pub objective: Objective,
    pub profile: SmoothnessProfile,
    /// Upper bound on the Hessian operator norm; admissible as `β` in
    /// step-size rules even when the restricted constants are estimates.
    pub hessian_norm: f64,
    pub witnesses: BTreeMap<String, Witness>,
    /// `r′ ↦` trusted value (or upper bound) of `min_{rank(Y) ≤ r′} f(Y)`.
    pub oracles: BTreeMap<usize, f64>,
    pub flags: Vec<String>,
}

impl ProblemInstance {
    pub fn matrix_witness(&self, name: &str) -> Option<&DenseMatrix> {
        match self.witnesses.get(name)? {
            Witness::Matrix { value } => Some(value),
            Witness::Factors { .. } => None,
        }
    }

    pub fn factor_witness(&self, name: &str) -> Option<&FactorPair> {
        match self.witnesses.get(name)? {
            Witness::Factors { value } => Some(value),
            Witness::Matrix { .. } => None,
        }
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    /// The step-size bound `β` used by theorem checks: the exact restricted
    /// smoothness constant when known, else the Hessian norm.
    pub fn step_beta(&self) -> f64 {
        if self.profile.exact {
            self.profile.beta
        } else {
            self.hessian_norm
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.objective.dims
    }
}

fn insert_matrix(map: &mut BTreeMap<String, Witness>, name: &str, value: DenseMatrix) {
    map.insert(name.to_string(), Witness::Matrix { value });
}

/// `½‖X − M‖²_F` with `M = U diag(spectrum) Vᵀ` for random orthonormal
/// `U`, `V`. The spectrum is sorted into nonincreasing order.
pub fn gen_fro_loss(
    m: usize,
    n: usize,
    spectrum: &[f64],
    r: usize,
    seed: u64,
) -> Result<ProblemInstance> {
    let k = m.min(n);
    if spectrum.len() > k {
        return Err(Error::InvalidArgument(format!(
            "spectrum of length {} does not fit a {m}x{n} matrix",
            spectrum.len()
        )));
    }
    if spectrum.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidArgument("spectrum must be finite and nonnegative".into()));
    }
    let rank = RankBudget::for_shape(r, m, n)?;
    let mut s = spectrum.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s.resize(k, 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = orthonormal_columns(&mut rng, m, k);
    let v = orthonormal_columns(&mut rng, n, k);
    let target = u.matmul(&DenseMatrix::from_diag(k, k, &s)).matmul_t(&v);
    let global = u
        .leading_columns(r)
        .matmul(&DenseMatrix::from_diag(r, r, &s[..r]))
        .matmul_t(&v.leading_columns(r));

    let mut witnesses = BTreeMap::new();
    insert_matrix(&mut witnesses, "global_minimizer", global);
    insert_matrix(&mut witnesses, "target", target.clone());
    let oracles = (0..=k)
        .map(|rp| (rp, 0.5 * s[rp..].iter().map(|x| x * x).sum::<f64>()))
        .collect();

    let mut flags = Vec::new();
    if r < k && s[r - 1] == s[r] && s[r] > 0.0 {
        flags.push("degenerate-projection".to_string());
    }
    if s[r - 1] == 0.0 {
        flags.push("rank-deficient".to_string());
    }

    Ok(ProblemInstance {
        label: format!("fro-loss m={m} n={n} r={r} spectrum={s:?}"),
        seed,
        rank,
        objective: Objective::fro_loss(target),
        profile: SmoothnessProfile::new(1.0, 1.0, true, r),
        hessian_norm: 1.0,
        witnesses,
        oracles,
        flags,
    })
}

/// Matrix sensing with `p` Gaussian measurement matrices scaled by `1/√p`
/// and a planted rank-`r_true` matrix with unit singular values. The rank
/// budget equals `r_true`.
pub fn gen_matrix_sensing(
    m: usize,
    n: usize,
    r_true: usize,
    p: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    if p < 1 {
        return Err(Error::InvalidArgument("need at least one measurement".into()));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidArgument("noise_sd must be >= 0".into()));
    }
    let rank = RankBudget::for_shape(r_true, m, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = orthonormal_columns(&mut rng, m, r_true);
    let v = orthonormal_columns(&mut rng, n, r_true);
    let planted = u.matmul_t(&v);
    let scale = 1.0 / (p as f64).sqrt();
    let measurements: Vec<DenseMatrix> = (0..p)
        .map(|_| gaussian_matrix(&mut rng, m, n, scale))
        .collect();
    let observations: Vec<f64> = measurements
        .iter()
        .map(|a| {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            a.dot(&planted) + noise_sd * z
        })
        .collect();
    let objective = Objective::new(ObjectiveKind::MatrixSensing {
        measurements,
        observations,
    })?;
    let profile = objective.estimate_restricted_constants(rank, PROFILE_TRIALS, seed)?;
    let hessian_norm = objective.hessian_norm();

    let mut witnesses = BTreeMap::new();
    insert_matrix(&mut witnesses, "planted", planted);
    let mut flags = vec![if noise_sd == 0.0 {
        "vanishing-gradient".to_string()
    } else {
        "arbitrary-gradient".to_string()
    }];
    if profile.kappa.is_some_and(|k| k < 2.0) {
        flags.push("near-isometry-estimate".to_string());
    }
    Ok(ProblemInstance {
        label: format!("matrix-sensing m={m} n={n} r={r_true} p={p} noise={noise_sd}"),
        seed,
        rank,
        objective,
        profile,
        hessian_norm,
        witnesses,
        oracles: BTreeMap::new(),
        flags,
    })
}

/// Squared loss on a Bernoulli(`obs_fraction`) set of entries of a planted
/// rank-`r_true` matrix with unit singular values.
pub fn gen_matrix_completion(
    m: usize,
    n: usize,
    r_true: usize,
    obs_fraction: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    if !(obs_fraction > 0.0 && obs_fraction <= 1.0) {
        return Err(Error::InvalidArgument("obs_fraction must lie in (0, 1]".into()));
    }
    let rank = RankBudget::for_shape(r_true, m, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = orthonormal_columns(&mut rng, m, r_true);
    let v = orthonormal_columns(&mut rng, n, r_true);
    let target = u.matmul_t(&v);
    let mask = DenseMatrix::from_fn(m, n, |_, _| {
        if rng.random::<f64>() < obs_fraction {
            1.0
        } else {
            0.0
        }
    });
    let objective = Objective::new(ObjectiveKind::MatrixCompletion {
        target: target.clone(),
        mask,
    })?;
    let profile = objective.estimate_restricted_constants(rank, 1, seed)?;
    let mut witnesses = BTreeMap::new();
    insert_matrix(&mut witnesses, "planted", target);
    Ok(ProblemInstance {
        label: format!("matrix-completion m={m} n={n} r={r_true} obs={obs_fraction}"),
        seed,
        rank,
        hessian_norm: objective.hessian_norm(),
        objective,
        profile,
        witnesses,
        oracles: BTreeMap::new(),
        flags: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSpec {
    pub alpha: f64,
    pub beta: f64,
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub r_prime: usize,
}

impl Default for CounterexampleSpec {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            m: 6,
            n: 6,
            r: 4,
            r_prime: 2,
        }
    }
}

impl CounterexampleSpec {
    pub fn kappa(&self) -> f64 {
        self.beta / self.alpha
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidCounterexample(msg));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.beta >= self.alpha && self.beta.is_finite()) {
            return bad(format!(
                "beta must satisfy beta >= alpha, got alpha={}, beta={}",
                self.alpha, self.beta
            ));
        }
        if self.r == 0 {
            return bad("r must be >= 1".into());
        }
        let k2 = self.kappa() * self.kappa();
        if !(self.r_prime as f64 * k2 > self.r as f64) {
            return bad(format!(
                "need r' > r/kappa^2 strictly: r'={}, r/kappa^2={}",
                self.r_prime,
                self.r as f64 / k2
            ));
        }
        let short = self.m.min(self.n);
        if self.r + self.r_prime > short {
            return bad(format!(
                "need r + r' <= min(m, n): r + r' = {}, min(m, n) = {short}",
                self.r + self.r_prime
            ));
        }
        Ok(())
    }

    /// `f(κX₁) = (α/2)(r − κ²r′)`
    pub fn scaled_x1_value(&self) -> f64 {
        let k = self.kappa();
        0.5 * self.alpha * (self.r as f64 - k * k * self.r_prime as f64)
    }
}

/// The lower-bound construction for restricted optimality: a strongly
/// convex quadratic with a second-order stationary factorization `(A₀, B₀)`
/// whose value exceeds the best rank-`r′` value.
pub fn build_counterexample(spec: &CounterexampleSpec) -> Result<ProblemInstance> {
    spec.validate()?;
    let transposed = spec.m > spec.n;
    let (m, n) = if transposed {
        (spec.n, spec.m)
    } else {
        (spec.m, spec.n)
    };
    let (r, rp) = (spec.r, spec.r_prime);
    let (alpha, beta, kappa) = (spec.alpha, spec.beta, spec.kappa());

    let indicator = |lo: usize, hi: usize| {
        DenseMatrix::from_fn(m, n, move |i, j| if i == j && (lo..hi).contains(&i) { 1.0 } else { 0.0 })
    };
    let mut x0 = indicator(0, r);
    let mut x1 = indicator(r, r + rp);
    let mut mask = DenseMatrix::from_fn(m, n, |i, j| if (i < r) != (j < r) { 1.0 } else { 0.0 });
    let mut a0 = DenseMatrix::from_diag(m, r, &vec![1.0; r]);
    let mut b0 = DenseMatrix::from_diag(n, r, &vec![1.0; r]);
    if transposed {
        x0 = x0.transpose();
        x1 = x1.transpose();
        mask = mask.transpose();
        std::mem::swap(&mut a0, &mut b0);
    }

    let objective = Objective::new(ObjectiveKind::Counterexample {
        alpha,
        beta,
        x0: x0.clone(),
        x1: x1.clone(),
        mask,
    })?;
    let scaled_x1 = x1.scale(kappa);

    let mut oracles = BTreeMap::new();
    oracles.insert(0, objective.value(&DenseMatrix::zeros(spec.m, spec.n))?);
    // polish κX₁ by rank-r′ projected gradient descent; the value can only
    // decrease, so the result stays an upper bound on the rank-r′ minimum
    let bound = spec.scaled_x1_value();
    let polished = run_pgd(
        &objective,
        &scaled_x1,
        RankBudget::new(rp)?,
        &PgdConfig {
            eta: 1.0 / beta,
            max_iters: 500,
            stop_tol: 1e-12,
            seed: 0,
        },
    )?;
    let polished_value = objective.value(&polished.0)?;
    oracles.insert(rp, bound.min(polished_value));

    let mut witnesses = BTreeMap::new();
    witnesses.insert(
        "A0B0".to_string(),
        Witness::Factors {
            value: FactorPair::new(a0, b0)?,
        },
    );
    insert_matrix(&mut witnesses, "X0", x0);
    insert_matrix(&mut witnesses, "kappa_X1", scaled_x1);
    insert_matrix(&mut witnesses, "rank_r_prime_polished", polished.0);

    let mut label = format!(
        "counterexample alpha={alpha} beta={beta} m={} n={} r={r} r'={rp}",
        spec.m, spec.n
    );
    if transposed {
        label.push_str(" (built as n x m and transposed)");
    }
    Ok(ProblemInstance {
        label,
        seed: 0,
        rank: RankBudget::for_shape(r, spec.m, spec.n)?,
        hessian_norm: objective.hessian_norm(),
        objective,
        profile: SmoothnessProfile::new(alpha, beta, true, r),
        witnesses,
        oracles,
        flags: vec![format!("r_prime={rp}")],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svd::{sigma_r, spectral_norm};

    #[test]
    fn fro_loss_oracles() {
        let inst = gen_fro_loss(4, 3, &[3.0, 2.0, 1.0], 2, 7).unwrap();
        assert_eq!(inst.oracles[&2], 0.5);
        assert_eq!(inst.oracles[&1], 2.5);
        assert_eq!(inst.oracles[&0], 7.0);
        assert!(inst.flags.is_empty());
        let x = inst.matrix_witness("global_minimizer").unwrap();
        let v = inst.objective.value(x).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fro_loss_flags() {
        let deg = gen_fro_loss(3, 3, &[2.0, 1.0, 1.0], 2, 1).unwrap();
        assert!(deg.has_flag("degenerate-projection"));
        let def = gen_fro_loss(3, 3, &[2.0], 2, 1).unwrap();
        assert!(def.has_flag("rank-deficient"));
        assert!(gen_fro_loss(2, 2, &[1.0, 1.0, 1.0], 1, 0).is_err());
        assert!(gen_fro_loss(2, 2, &[-1.0], 1, 0).is_err());
    }

    #[test]
    fn sensing_planted_gradient_vanishes() {
        let inst = gen_matrix_sensing(4, 4, 1, 48, 0.0, 3).unwrap();
        let x = inst.matrix_witness("planted").unwrap();
        assert!(inst.objective.gradient(x).unwrap().frob_norm() < 1e-12);
        let noisy = gen_matrix_sensing(4, 4, 1, 48, 0.1, 3).unwrap();
        let x = noisy.matrix_witness("planted").unwrap();
        assert!(noisy.objective.gradient(x).unwrap().frob_norm() > 1e-3);
        assert!(gen_matrix_sensing(4, 4, 1, 0, 0.0, 3).is_err());
    }

    #[test]
    fn completion_full_mask_is_fro_loss() {
        let inst = gen_matrix_completion(4, 3, 1, 1.0, 5).unwrap();
        let t = inst.matrix_witness("planted").unwrap().clone();
        let fro = Objective::fro_loss(t);
        let x = DenseMatrix::from_fn(4, 3, |i, j| i as f64 - j as f64 * 0.5);
        assert_eq!(inst.objective.value(&x).unwrap(), fro.value(&x).unwrap());
        assert_eq!(inst.objective.gradient(&x).unwrap(), fro.gradient(&x).unwrap());
        assert!(inst.profile.exact);

        let half = gen_matrix_completion(6, 6, 1, 0.5, 5).unwrap();
        assert_eq!(half.profile.alpha, 0.0);
        assert!(!half.profile.exact);
        let ObjectiveKind::MatrixCompletion { mask, .. } = &half.objective.kind else {
            unreachable!()
        };
        let g = half.objective.gradient(&DenseMatrix::zeros(6, 6)).unwrap();
        for (gv, mv) in g.as_slice().iter().zip(mask.as_slice()) {
            if *mv == 0.0 {
                assert_eq!(*gv, 0.0);
            }
        }
    }

    #[test]
    fn default_counterexample_values() {
        let spec = CounterexampleSpec::default();
        let inst = build_counterexample(&spec).unwrap();
        let x0 = inst.matrix_witness("X0").unwrap();
        let kx1 = inst.matrix_witness("kappa_X1").unwrap();
        assert_eq!(inst.objective.value(x0).unwrap(), 0.0);
        assert!((inst.objective.value(kx1).unwrap() + 2.0).abs() <= 1e-12);
        let g = inst.objective.gradient(x0).unwrap();
        assert_eq!(spectral_norm(&g).unwrap(), 2.0);
        assert_eq!(sigma_r(x0, inst.rank).unwrap(), 1.0);
        assert!(inst.oracles[&2] <= -2.0);
        assert_eq!(inst.oracles[&0], 2.0);
        let p = inst.factor_witness("A0B0").unwrap();
        assert_eq!(&p.product(), x0);
    }

    #[test]
    fn counterexample_rejections() {
        let base = CounterexampleSpec::default();
        let eq = CounterexampleSpec { beta: 1.0, ..base };
        assert!(build_counterexample(&eq).is_err());
        let boundary = CounterexampleSpec { r_prime: 1, ..base };
        assert!(matches!(
            build_counterexample(&boundary),
            Err(Error::InvalidCounterexample(_))
        ));
        let too_big = CounterexampleSpec { r_prime: 3, ..base };
        assert!(build_counterexample(&too_big).is_err());
    }

    #[test]
    fn counterexample_tall_is_transposed() {
        let spec = CounterexampleSpec {
            m: 8,
            n: 6,
            ..CounterexampleSpec::default()
        };
        let inst = build_counterexample(&spec).unwrap();
        assert_eq!(inst.objective.dims, (8, 6));
        assert!(inst.label.contains("transposed"));
        let p = inst.factor_witness("A0B0").unwrap();
        assert_eq!(p.a.shape(), (8, 4));
        assert_eq!(p.b.shape(), (6, 4));
        let g = crate::factorized::g_gradient(&inst.objective, p).unwrap();
        assert!(g.a.is_zero() && g.b.is_zero());
    }

    #[test]
    fn instance_json_round_trip() {
        let inst = build_counterexample(&CounterexampleSpec::default()).unwrap();
        let s = serde_json::to_string(&inst).unwrap();
        let back: ProblemInstance = serde_json::from_str(&s).unwrap();
        assert_eq!(back, inst);
    }
}
