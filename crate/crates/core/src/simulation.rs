//! Monte Carlo laboratory: factor-driven designs, replication runner and
//! grid aggregation with worker-independent random streams.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, ReplicationMetrics};
use crate::penalized::{
    adaptive_lasso_select, lasso_select_bic, lasso_select_cv, AdaptiveLassoConfig,
    LassoSelectConfig,
};
use crate::regression::Dataset;
use crate::selector::{bmt_select, ocmt_select, SelectionConfig, SelectionResult};

/// Parameters of one simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub t: usize,
    pub n: usize,
    pub k: usize,
    /// Autoregressive coefficient of `y`.
    pub alpha: f64,
    pub r2_target: f64,
    /// AR(1) coefficient of the factors and idiosyncratic terms.
    pub rho: f64,
    pub vif: f64,
    pub pi: f64,
    pub beta: Vec<f64>,
    pub burn_in: usize,
    pub holdout: usize,
    pub seed: u64,
}

impl DgpConfig {
    /// Design with unit signal coefficients and the default calibration
    /// (`R² = 0.7`, `ρ = 0.6`, burn-in 200, one hold-out point).
    pub fn new(t: usize, n: usize, k: usize, alpha: f64, vif: f64, pi: f64) -> Self {
        Self {
            t,
            n,
            k,
            alpha,
            r2_target: 0.7,
            rho: 0.6,
            vif,
            pi,
            beta: vec![1.0; k],
            burn_in: 200,
            holdout: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if self.n < 2 * self.k + 1 {
            return bad(format!("n = {} < 2k + 1 = {}", self.n, 2 * self.k + 1));
        }
        if self.beta.len() != self.k {
            return bad(format!("beta has {} entries, k = {}", self.beta.len(), self.k));
        }
        if self.t < 3 {
            return bad("T must be at least 3".into());
        }
        let finite = [self.alpha, self.r2_target, self.rho, self.vif, self.pi]
            .iter()
            .chain(self.beta.iter())
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite design parameter".into());
        }
        if self.vif < 1.0 {
            return bad(format!("vif = {} < 1", self.vif));
        }
        if !(0.0..=1.0).contains(&self.pi) {
            return bad(format!("pi = {} not in [0, 1]", self.pi));
        }
        if !(self.r2_target > 0.0 && self.r2_target < 1.0) {
            return bad(format!("r2_target = {} not in (0, 1)", self.r2_target));
        }
        if self.rho.abs() >= 1.0 {
            return bad(format!("|rho| = {} must be below 1", self.rho.abs()));
        }
        Ok(())
    }

    pub fn signal_set(&self) -> Vec<usize> {
        (0..self.k).collect()
    }
}

/// Quantities implied by a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpDerived {
    pub gamma: f64,
    pub nu_f: f64,
    pub nu_g: f64,
    pub varsigma: f64,
    /// `Σ β²`.
    pub b_sq: f64,
    /// `Σ β`.
    pub b_s: f64,
    /// Population variance of the signal sum.
    pub signal_variance: f64,
}

impl DgpDerived {
    pub fn new(config: &DgpConfig) -> Result<Self> {
        config.validate()?;
        let (nu_f, nu_g, gamma) = derive_loadings(config.vif, config.k, config.pi)?;
        let b_sq = config.beta.iter().map(|b| b * b).sum();
        let b_s = config.beta.iter().sum();
        let varsigma = derive_noise_scale(config.r2_target, &config.beta, gamma)?;
        Ok(Self {
            gamma,
            nu_f,
            nu_g,
            varsigma,
            b_sq,
            b_s,
            signal_variance: signal_variance(&config.beta, gamma),
        })
    }
}

/// `(ν_f, ν_g, γ)` with `γ = (VIF − 1)/k`, `ν_f² = πγ`, `ν_g² = (1 − π)γ`.
pub fn derive_loadings(vif: f64, k: usize, pi: f64) -> Result<(f64, f64, f64)> {
    if !(vif >= 1.0) || !vif.is_finite() {
        return Err(Error::InvalidArgument(format!("vif = {vif} must be >= 1")));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::InvalidArgument(format!("pi = {pi} not in [0, 1]")));
    }
    let gamma = (vif - 1.0) / k as f64;
    Ok(((pi * gamma).sqrt(), ((1.0 - pi) * gamma).sqrt(), gamma))
}

/// Population variance of `Σ βᵢ xᵢ` over the signals:
/// `(Σβ² + γ(Σβ)²) / (1 + γ)`.
pub fn signal_variance(beta: &[f64], gamma: f64) -> f64 {
    let b_sq: f64 = beta.iter().map(|b| b * b).sum();
    let b_s: f64 = beta.iter().sum();
    (b_sq + gamma * b_s * b_s) / (1.0 + gamma)
}

/// Noise scale `ς = √(D(1 − R²)/R²)` with `D` the signal variance.
pub fn derive_noise_scale(r2_target: f64, beta: &[f64], gamma: f64) -> Result<f64> {
    if !(r2_target > 0.0 && r2_target < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "r2_target = {r2_target} not in (0, 1)"
        )));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma = {gamma} < 0")));
    }
    let d = signal_variance(beta, gamma);
    if !(d > 0.0) {
        return Err(Error::InvalidArgument("signal variance is zero".into()));
    }
    Ok((d * (1.0 - r2_target) / r2_target).sqrt())
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Stationary unit-variance AR(1): `x₀ ~ N(0,1)`,
/// `x_t = ρx_{t−1} + √(1−ρ²)υ_t`.
pub fn generate_ar1<R: Rng + ?Sized>(len: usize, rho: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!("|rho| = {} must be below 1", rho.abs())));
    }
    let scale = (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(len);
    if len == 0 {
        return Ok(out);
    }
    let mut x = normal(rng);
    out.push(x);
    for _ in 1..len {
        x = rho * x + scale * normal(rng);
        out.push(x);
    }
    Ok(out)
}

/// One generated draw with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpRealization {
    /// `y_t` on `Z = [y_{t−1}]` and the `n` candidates, `T` rows.
    pub dataset: Dataset,
    /// Hold-out targets `y_{T+1..T+S}`.
    pub y_holdout: DVector<f64>,
    /// Lagged targets for the hold-out rows (`y_{T..T+S−1}`).
    pub z_holdout: DMatrix<f64>,
    pub x_holdout: DMatrix<f64>,
    pub signal_set: Vec<usize>,
    pub pseudo_set: Vec<usize>,
    pub noise_set: Vec<usize>,
    pub beta_true_full: Vec<f64>,
    pub derived: DgpDerived,
}

/// Draw one realization of the factor design.
///
/// Signals and pseudo-signals load on a local factor `g` and the global
/// factor `f`; noise variables share adjacent idiosyncratic terms and load
/// on `f` only.
pub fn generate_dgp<R: Rng + ?Sized>(config: &DgpConfig, rng: &mut R) -> Result<DgpRealization> {
    let derived = DgpDerived::new(config)?;
    let (t, n, k) = (config.t, config.n, config.k);
    // index 0 is y₀ = 0; the sample starts after the burn-in
    let len = config.burn_in + 1 + t + config.holdout;
    let f = generate_ar1(len, config.rho, rng)?;
    let g = generate_ar1(len, config.rho, rng)?;
    let eps: Vec<Vec<f64>> = (0..n)
        .map(|_| generate_ar1(len, config.rho, rng))
        .collect::<Result<_>>()?;
    let u: Vec<f64> = (0..len).map(|_| normal(rng)).collect();

    let DgpDerived { gamma, nu_f, nu_g, varsigma, .. } = derived;
    let sig_scale = (1.0 + gamma).sqrt();
    let noise_scale = (2.0 + nu_f * nu_f).sqrt();
    let mut x = DMatrix::zeros(len, n);
    for j in 0..n {
        for s in 0..len {
            x[(s, j)] = if j < 2 * k {
                (eps[j][s] + nu_g * g[s] + nu_f * f[s]) / sig_scale
            } else {
                (eps[j - 1][s] + eps[j][s] + nu_f * f[s]) / noise_scale
            };
        }
    }
    let mut y = vec![0.0; len];
    for s in 1..len {
        let signal: f64 = (0..k).map(|j| config.beta[j] * x[(s, j)]).sum();
        y[s] = config.alpha * y[s - 1] + signal + varsigma * u[s];
    }

    let start = config.burn_in + 1;
    let ys = DVector::from_fn(t, |i, _| y[start + i]);
    let zs = DMatrix::from_fn(t, 1, |i, _| y[start + i - 1]);
    let xs = x.rows(start, t).into_owned();
    let names = (0..n).map(|j| format!("x{}", j + 1)).collect();
    let dataset = Dataset::with_control_names(ys, zs, xs, names, vec!["y_lag1".into()])?;

    let h0 = start + t;
    let s = config.holdout;
    let mut beta_true_full = vec![0.0; n];
    beta_true_full[..k].copy_from_slice(&config.beta);
    Ok(DgpRealization {
        dataset,
        y_holdout: DVector::from_fn(s, |i, _| y[h0 + i]),
        z_holdout: DMatrix::from_fn(s, 1, |i, _| y[h0 + i - 1]),
        x_holdout: x.rows(h0, s).into_owned(),
        signal_set: (0..k).collect(),
        pseudo_set: (k..2 * k).collect(),
        noise_set: (2 * k..n).collect(),
        beta_true_full,
        derived,
    })
}

/// Selection methods compared in the laboratory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bmt,
    Ocmt,
    LassoBic,
    LassoCv,
    AdaptiveLasso,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Bmt,
        Method::Ocmt,
        Method::LassoBic,
        Method::LassoCv,
        Method::AdaptiveLasso,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Bmt => "bmt",
            Method::Ocmt => "ocmt",
            Method::LassoBic => "lasso_bic",
            Method::LassoCv => "lasso_cv",
            Method::AdaptiveLasso => "adaptive_lasso",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// Tuning of every method.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodSettings {
    pub selection: SelectionConfig,
    pub lasso: LassoSelectConfig,
    pub adaptive: AdaptiveLassoConfig,
}

/// Run one method on a dataset.
pub fn run_method(
    method: Method,
    dataset: &Dataset,
    settings: &MethodSettings,
) -> Result<SelectionResult> {
    match method {
        Method::Bmt => bmt_select(dataset, &settings.selection),
        Method::Ocmt => ocmt_select(dataset, &settings.selection),
        Method::LassoBic => lasso_select_bic(dataset, &settings.lasso),
        Method::LassoCv => lasso_select_cv(dataset, &settings.lasso),
        Method::AdaptiveLasso => adaptive_lasso_select(dataset, &settings.adaptive),
    }
}

/// Hold-out forecast errors `y − ŷ` from the post-selection coefficients.
pub fn holdout_errors(real: &DgpRealization, result: &SelectionResult) -> Vec<f64> {
    (0..real.y_holdout.len())
        .map(|i| {
            let z: Vec<f64> = real.z_holdout.row(i).iter().copied().collect();
            let x: Vec<f64> = real.x_holdout.row(i).iter().copied().collect();
            real.y_holdout[i] - result.post.predict(&z, &x)
        })
        .collect()
}

/// One draw, every method, raw per-method outcomes.
pub fn run_replication<R: Rng + ?Sized>(
    config: &DgpConfig,
    methods: &[Method],
    settings: &MethodSettings,
    rng: &mut R,
) -> Result<BTreeMap<Method, ReplicationMetrics>> {
    let mut out = BTreeMap::new();
    if methods.is_empty() {
        return Ok(out);
    }
    let real = generate_dgp(config, rng)?;
    for &m in methods {
        let res = run_method(m, &real.dataset, settings)?;
        let errors = holdout_errors(&real, &res);
        let metrics = ReplicationMetrics::new(
            &res.selected,
            &real.signal_set,
            res.post.coefficients_full.as_slice(),
            &real.beta_true_full,
            &errors,
        )?;
        out.insert(m, metrics);
    }
    Ok(out)
}

/// Generator for replication `rep` of design `design` under `seed`.
pub fn replication_rng(seed: u64, design: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((design as u64) << 32) | rep as u64);
    rng
}

/// Aggregated tables: one report per design and method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub designs: Vec<DgpConfig>,
    pub methods: Vec<Method>,
    /// `reports[d][m]` for design `d` and method `methods[m]`.
    pub reports: Vec<Vec<MetricsReport>>,
}

impl GridResult {
    pub fn report(&self, design: usize, method: Method) -> Option<&MetricsReport> {
        let m = self.methods.iter().position(|&x| x == method)?;
        self.reports.get(design)?.get(m)
    }
}

/// Raw per-replication outcomes of one design, in replication order.
pub fn run_design(
    config: &DgpConfig,
    design_index: usize,
    reps: usize,
    methods: &[Method],
    settings: &MethodSettings,
) -> Result<Vec<BTreeMap<Method, ReplicationMetrics>>> {
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = replication_rng(config.seed, design_index, r);
            run_replication(config, methods, settings, &mut rng)
        })
        .collect()
}

/// Run every design for `reps` replications on `workers` threads and average.
/// Results do not depend on `workers`.
pub fn run_grid(
    grid: &[DgpConfig],
    reps: usize,
    methods: &[Method],
    settings: &MethodSettings,
    workers: usize,
) -> Result<GridResult> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    for d in grid {
        d.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let reports = pool.install(|| {
        grid.iter()
            .enumerate()
            .map(|(d, cfg)| {
                let raw = run_design(cfg, d, reps, methods, settings)?;
                Ok(methods
                    .iter()
                    .map(|m| {
                        let per: Vec<ReplicationMetrics> = raw.iter().map(|r| r[m]).collect();
                        MetricsReport::from_replications(&per)
                    })
                    .collect())
            })
            .collect::<Result<Vec<Vec<MetricsReport>>>>()
    })?;
    Ok(GridResult {
        designs: grid.to_vec(),
        methods: methods.to_vec(),
        reports,
    })
}

/// Cartesian grid specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub t: Vec<usize>,
    /// Empty means `n = T − 2k`.
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub alpha: Vec<f64>,
    pub vif: Vec<f64>,
    pub pi: Vec<f64>,
    pub r2_target: f64,
    pub rho: f64,
    pub burn_in: usize,
    pub holdout: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            t: vec![300],
            n: vec![100],
            k: vec![4],
            alpha: vec![0.8],
            vif: vec![4.0],
            pi: vec![0.75],
            r2_target: 0.7,
            rho: 0.6,
            burn_in: 200,
            holdout: 1,
        }
    }
}

impl GridSpec {
    /// Designs in the order k, alpha, vif, pi, T, n.
    pub fn expand(&self, seed: u64) -> Result<Vec<DgpConfig>> {
        let mut out = Vec::new();
        for &k in &self.k {
            for &alpha in &self.alpha {
                for &vif in &self.vif {
                    for &pi in &self.pi {
                        for &t in &self.t {
                            let ns = if self.n.is_empty() {
                                vec![t.checked_sub(2 * k).ok_or_else(|| {
                                    Error::InvalidArgument(format!("T = {t} < 2k"))
                                })?]
                            } else {
                                self.n.clone()
                            };
                            for n in ns {
                                let mut d = DgpConfig::new(t, n, k, alpha, vif, pi);
                                d.r2_target = self.r2_target;
                                d.rho = self.rho;
                                d.burn_in = self.burn_in;
                                d.holdout = self.holdout;
                                d.seed = seed;
                                d.validate()?;
                                out.push(d);
                            }
                        }
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("grid has no designs".into()));
        }
        Ok(out)
    }
}

/// Three-regressor design with two orthogonal signals and one proxy
/// correlated `ρ` with each: `y = x₁ + αx₂ + σu`.
pub fn wedge_design<R: Rng + ?Sized>(
    alpha: f64,
    rho: f64,
    sigma: f64,
    t: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if !(2.0 * rho * rho < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "rho = {rho} gives a non-positive-definite design"
        )));
    }
    let e_scale = (1.0 - 2.0 * rho * rho).sqrt();
    let mut x = DMatrix::zeros(t, 3);
    let mut y = DVector::zeros(t);
    for i in 0..t {
        let x1 = normal(rng);
        let x2 = normal(rng);
        let x3 = rho * x1 + rho * x2 + e_scale * normal(rng);
        x[(i, 0)] = x1;
        x[(i, 1)] = x2;
        x[(i, 2)] = x3;
        y[i] = x1 + alpha * x2 + sigma * normal(rng);
    }
    Dataset::from_xy(y, x)
}

/// Static one-factor design `xᵢ = λᵢ f + sᵢ eᵢ`, `y = Σ βᵢ xᵢ + σu`.
pub fn factor_design<R: Rng + ?Sized>(
    loadings: &[f64],
    idio_sd: &[f64],
    beta: &[f64],
    sigma: f64,
    t: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let n = loadings.len();
    if idio_sd.len() != n || beta.len() != n {
        return Err(Error::DimensionMismatch(
            "loadings, idiosyncratic scales and beta differ in length".into(),
        ));
    }
    let mut x = DMatrix::zeros(t, n);
    let mut y = DVector::zeros(t);
    for i in 0..t {
        let f = normal(rng);
        let mut yi = 0.0;
        for j in 0..n {
            let v = loadings[j] * f + idio_sd[j] * normal(rng);
            x[(i, j)] = v;
            yi += beta[j] * v;
        }
        y[i] = yi + sigma * normal(rng);
    }
    Dataset::from_xy(y, x)
}
