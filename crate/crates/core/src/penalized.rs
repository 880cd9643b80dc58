//! Lasso baselines: cyclic coordinate descent along a log-spaced penalty
//! path, tuned by BIC or K-fold cross-validation, and the adaptive Lasso.
//!
//! Objective at penalty `λ`, on internally standardized columns:
//! `(1/2T)‖y − Xβ‖² + λ Σ w_j |β_j|` with penalty factors `w_j` (1 for the
//! plain Lasso).

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{Dataset, Projector};
use crate::selector::{post_selection_or_min_norm, SelectionResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoOptions {
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    /// Convergence tolerance on the largest coefficient change in a sweep,
    /// relative to the standard deviation of the response.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Try an exact active-set solve before and during coordinate descent.
    pub polish: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            n_lambda: 100,
            lambda_min_ratio: 1e-3,
            tol: 1e-8,
            max_sweeps: 100_000,
            polish: true,
        }
    }
}

/// Coefficient trajectories along a decreasing penalty grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    /// Path point × candidate, on the original column scale.
    pub coefficients: DMatrix<f64>,
    pub intercepts: Vec<f64>,
    pub active_counts: Vec<usize>,
    /// Path point × candidate, on the standardized scale.
    pub std_coefficients: DMatrix<f64>,
    pub means: DVector<f64>,
    /// Population standard deviations; 0 marks a constant column.
    pub scales: DVector<f64>,
    pub y_mean: f64,
    /// Largest KKT violation at each path point (standardized scale).
    pub kkt_violations: Vec<f64>,
    /// Coordinate sweeps used at each path point.
    pub sweeps: Vec<usize>,
}

impl LassoPath {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn active_set(&self, point: usize) -> Vec<usize> {
        self.coefficients
            .row(point)
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    /// Fitted values at one path point for a block of rows.
    pub fn predict(&self, point: usize, x: &DMatrix<f64>) -> DVector<f64> {
        let beta = self.coefficients.row(point).transpose();
        let mut out = x * beta;
        out.add_scalar_mut(self.intercepts[point]);
        out
    }
}

struct Standardized {
    xs: DMatrix<f64>,
    yc: DVector<f64>,
    means: DVector<f64>,
    scales: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
}

impl Standardized {
    fn new(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<Self> {
        let t = y.len();
        if x.nrows() != t {
            return Err(Error::DimensionMismatch(format!(
                "y has {t} rows, X has {}",
                x.nrows()
            )));
        }
        if t < 3 {
            return Err(Error::InsufficientRows { needed: 3, got: t });
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("y".into()));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("X".into()));
        }
        let tf = t as f64;
        let y_mean = y.mean();
        let mut yc = y.clone();
        yc.add_scalar_mut(-y_mean);
        let y_scale = (yc.norm_squared() / tf).sqrt();
        let mut xs = x.clone();
        let mut means = DVector::zeros(x.ncols());
        let mut scales = DVector::zeros(x.ncols());
        for (j, mut col) in xs.column_iter_mut().enumerate() {
            let m = col.mean();
            col.add_scalar_mut(-m);
            let s = (col.norm_squared() / tf).sqrt();
            // columns with no variation relative to their level stay at zero
            if s > 1e-12 * m.abs().max(1e-300) && s > 0.0 {
                col /= s;
                scales[j] = s;
            } else {
                col.fill(0.0);
            }
            means[j] = m;
        }
        Ok(Self {
            xs,
            yc,
            means,
            scales,
            y_mean,
            y_scale,
        })
    }

    fn t(&self) -> f64 {
        self.yc.len() as f64
    }

    fn lambda_max(&self, weights: &[f64]) -> f64 {
        let t = self.t();
        (0..self.xs.ncols())
            .filter(|&j| self.scales[j] > 0.0 && weights[j].is_finite())
            .map(|j| self.xs.column(j).dot(&self.yc).abs() / (t * weights[j]))
            .fold(0.0, f64::max)
    }
}

#[inline]
fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Coordinate-descent state carried along a path. The gradient
/// `g = Xs′(yc − Xs·β)/T` is updated through Gram columns, which are computed
/// the first time a candidate turns active and then cached.
struct Solver<'a> {
    st: &'a Standardized,
    weights: &'a [f64],
    usable: Vec<usize>,
    c: DVector<f64>,
    beta: Vec<f64>,
    g: DVector<f64>,
    gram: Vec<Option<DVector<f64>>>,
}

impl<'a> Solver<'a> {
    fn new(st: &'a Standardized, weights: &'a [f64]) -> Self {
        let n = st.xs.ncols();
        let c = st.xs.tr_mul(&st.yc) / st.t();
        Self {
            st,
            weights,
            usable: (0..n)
                .filter(|&j| st.scales[j] > 0.0 && weights[j].is_finite())
                .collect(),
            g: c.clone(),
            c,
            beta: vec![0.0; n],
            gram: vec![None; n],
        }
    }

    fn ensure_gram(&mut self, j: usize) {
        if self.gram[j].is_none() {
            self.gram[j] = Some(self.st.xs.tr_mul(&self.st.xs.column(j)) / self.st.t());
        }
    }

    fn update(&mut self, j: usize, lambda: f64) -> f64 {
        let old = self.beta[j];
        let new = soft_threshold(old + self.g[j], lambda * self.weights[j]);
        if new == old {
            return 0.0;
        }
        self.ensure_gram(j);
        let d = new - old;
        if let Some(col) = &self.gram[j] {
            self.g.axpy(-d, col, 1.0);
        }
        self.beta[j] = new;
        d.abs()
    }

    fn active(&self) -> Vec<usize> {
        self.usable
            .iter()
            .copied()
            .filter(|&j| self.beta[j] != 0.0)
            .collect()
    }

    fn gradient_at(&self, beta: &[f64], active: &[usize]) -> DVector<f64> {
        let mut g = self.c.clone();
        for &k in active {
            if let Some(col) = &self.gram[k] {
                g.axpy(-beta[k], col, 1.0);
            }
        }
        g
    }

    fn kkt(&self, g: &DVector<f64>, beta: &[f64], lambda: f64) -> f64 {
        self.usable
            .iter()
            .map(|&j| {
                let pen = lambda * self.weights[j];
                if beta[j] == 0.0 {
                    (g[j].abs() - pen).max(0.0)
                } else {
                    (g[j] - pen * beta[j].signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// Solve the stationarity equations for a given active set and signs.
    fn solve_pattern(&mut self, active: &[usize], signs: &[f64], lambda: f64) -> Option<DVector<f64>> {
        for &j in active {
            self.ensure_gram(j);
        }
        let m = active.len();
        let gaa = DMatrix::from_fn(m, m, |a, b| match &self.gram[active[b]] {
            Some(col) => col[active[a]],
            None => f64::NAN,
        });
        let rhs = DVector::from_fn(m, |a, _| {
            let j = active[a];
            self.c[j] - lambda * self.weights[j] * signs[a]
        });
        let sol = gaa.cholesky()?.solve(&rhs);
        sol.iter().all(|v| v.is_finite()).then_some(sol)
    }

    /// Primal active-set refinement from the current sign pattern: drop
    /// members whose solved coefficient disagrees with its sign, add the
    /// worst KKT violator, repeat. The result is kept only if it satisfies
    /// every KKT condition.
    fn polish(&mut self, lambda: f64, kkt_tol: f64, max_iter: usize) -> bool {
        let mut active = self.active();
        let mut signs: Vec<f64> = active.iter().map(|&j| self.beta[j].signum()).collect();
        for _ in 0..max_iter {
            let mut beta = vec![0.0; self.beta.len()];
            if !active.is_empty() {
                let Some(sol) = self.solve_pattern(&active, &signs, lambda) else {
                    return false;
                };
                let bad: Vec<usize> = (0..active.len())
                    .filter(|&a| sol[a] == 0.0 || sol[a].signum() != signs[a])
                    .collect();
                if !bad.is_empty() {
                    let mut a = 0;
                    active.retain(|_| {
                        a += 1;
                        !bad.contains(&(a - 1))
                    });
                    let mut a = 0;
                    signs.retain(|_| {
                        a += 1;
                        !bad.contains(&(a - 1))
                    });
                    continue;
                }
                for (a, &j) in active.iter().enumerate() {
                    beta[j] = sol[a];
                }
            }
            let g = self.gradient_at(&beta, &active);
            let worst = self
                .usable
                .iter()
                .copied()
                .filter(|&j| beta[j] == 0.0)
                .map(|j| (j, g[j].abs() - lambda * self.weights[j]))
                .fold(None, |acc: Option<(usize, f64)>, (j, v)| match acc {
                    Some((_, best)) if best >= v => acc,
                    _ => Some((j, v)),
                });
            match worst {
                Some((j, v)) if v >= kkt_tol => {
                    active.push(j);
                    signs.push(g[j].signum());
                }
                _ => {
                    if self.kkt(&g, &beta, lambda) >= kkt_tol {
                        return false;
                    }
                    self.beta = beta;
                    self.g = g;
                    return true;
                }
            }
        }
        false
    }

    fn sign_pattern(&self) -> Vec<(usize, bool)> {
        self.active()
            .into_iter()
            .map(|j| (j, self.beta[j] > 0.0))
            .collect()
    }

    /// Minimize at one penalty from the current state. Returns the final KKT
    /// violation and the number of sweeps.
    fn solve(&mut self, lambda: f64, opts: &LassoOptions) -> (f64, usize) {
        let scale = self.st.y_scale.max(f64::MIN_POSITIVE);
        let tol = opts.tol * scale;
        let kkt_tol = 1e-7 * scale.max(1.0);
        if opts.polish && self.polish(lambda, kkt_tol, 2 * self.usable.len() + 2) {
            return (self.kkt(&self.g, &self.beta, lambda), 0);
        }
        let mut sweeps = 0;
        let mut last_pattern: Option<Vec<(usize, bool)>> = None;
        let usable = self.usable.clone();
        loop {
            let mut max_change = 0.0_f64;
            for &j in &usable {
                max_change = max_change.max(self.update(j, lambda));
            }
            sweeps += 1;
            if max_change < tol || sweeps >= opts.max_sweeps {
                let active = self.active();
                self.g = self.gradient_at(&self.beta, &active);
                let v = self.kkt(&self.g, &self.beta, lambda);
                if v < kkt_tol || sweeps >= opts.max_sweeps {
                    return (v, sweeps);
                }
            }
            // iterate on the active set, trying an exact solve whenever the
            // sign pattern has held still
            let mut inner = 0;
            loop {
                if inner % 10 == 0 {
                    let pattern = self.sign_pattern();
                    if opts.polish
                        && last_pattern.as_ref() == Some(&pattern)
                        && self.polish(lambda, kkt_tol, 4)
                    {
                        let v = self.kkt(&self.g, &self.beta, lambda);
                        return (v, sweeps);
                    }
                    last_pattern = Some(pattern);
                }
                let mut max_change = 0.0_f64;
                for j in self.active() {
                    max_change = max_change.max(self.update(j, lambda));
                }
                sweeps += 1;
                inner += 1;
                if max_change < tol || sweeps >= opts.max_sweeps {
                    break;
                }
            }
        }
    }
}

fn log_grid(lambda_max: f64, n_lambda: usize, ratio: f64) -> Vec<f64> {
    let top = if lambda_max > 0.0 {
        lambda_max
    } else {
        f64::MIN_POSITIVE.sqrt()
    };
    if n_lambda == 1 {
        return vec![top];
    }
    let step = ratio.ln() / (n_lambda - 1) as f64;
    (0..n_lambda).map(|i| top * (step * i as f64).exp()).collect()
}

fn validate_opts(opts: &LassoOptions) -> Result<()> {
    if opts.n_lambda == 0 {
        return Err(Error::InvalidArgument("n_lambda must be positive".into()));
    }
    if !(opts.lambda_min_ratio > 0.0 && opts.lambda_min_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda_min_ratio = {} not in (0, 1)",
            opts.lambda_min_ratio
        )));
    }
    Ok(())
}

fn solve_path(
    st: &Standardized,
    lambdas: &[f64],
    weights: &[f64],
    opts: &LassoOptions,
) -> LassoPath {
    let n = st.xs.ncols();
    let mut solver = Solver::new(st, weights);
    let mut std_coefficients = DMatrix::zeros(lambdas.len(), n);
    let mut coefficients = DMatrix::zeros(lambdas.len(), n);
    let mut intercepts = Vec::with_capacity(lambdas.len());
    let mut active_counts = Vec::with_capacity(lambdas.len());
    let mut kkt_violations = Vec::with_capacity(lambdas.len());
    let mut sweeps = Vec::with_capacity(lambdas.len());
    for (k, &lambda) in lambdas.iter().enumerate() {
        let (violation, n_sweeps) = solver.solve(lambda, opts);
        kkt_violations.push(violation);
        sweeps.push(n_sweeps);
        let beta = &solver.beta;
        let mut shift = 0.0;
        let mut count = 0;
        for j in 0..n {
            std_coefficients[(k, j)] = beta[j];
            if beta[j] != 0.0 {
                let b = beta[j] / st.scales[j];
                coefficients[(k, j)] = b;
                shift += b * st.means[j];
                count += 1;
            }
        }
        intercepts.push(st.y_mean - shift);
        active_counts.push(count);
    }
    LassoPath {
        lambdas: lambdas.to_vec(),
        coefficients,
        intercepts,
        active_counts,
        std_coefficients,
        means: st.means.clone(),
        scales: st.scales.clone(),
        y_mean: st.y_mean,
        kkt_violations,
        sweeps,
    }
}

/// Lasso path with `n_lambda` penalties log-spaced from `λ_max` down to
/// `lambda_min_ratio · λ_max`.
pub fn lasso_path(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    n_lambda: usize,
    lambda_min_ratio: f64,
) -> Result<LassoPath> {
    let opts = LassoOptions {
        n_lambda,
        lambda_min_ratio,
        ..Default::default()
    };
    lasso_path_with(y, x, None, &opts)
}

/// Lasso path with optional per-candidate penalty factors (infinite factors
/// exclude a candidate).
pub fn lasso_path_with(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    penalty_factors: Option<&[f64]>,
    opts: &LassoOptions,
) -> Result<LassoPath> {
    validate_opts(opts)?;
    let st = Standardized::new(y, x)?;
    let weights = resolve_weights(penalty_factors, x.ncols())?;
    let lambdas = log_grid(st.lambda_max(&weights), opts.n_lambda, opts.lambda_min_ratio);
    Ok(solve_path(&st, &lambdas, &weights, opts))
}

/// Lasso path on a caller-supplied decreasing grid.
pub fn lasso_path_on_grid(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    lambdas: &[f64],
    penalty_factors: Option<&[f64]>,
    opts: &LassoOptions,
) -> Result<LassoPath> {
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidArgument("penalties must be positive".into()));
    }
    if lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("penalties must be strictly decreasing".into()));
    }
    let st = Standardized::new(y, x)?;
    let weights = resolve_weights(penalty_factors, x.ncols())?;
    Ok(solve_path(&st, lambdas, &weights, opts))
}

/// Cold-started solution at a single penalty (standardized coefficients).
pub fn lasso_single(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    lambda: f64,
    opts: &LassoOptions,
) -> Result<DVector<f64>> {
    let st = Standardized::new(y, x)?;
    let weights = vec![1.0; x.ncols()];
    let mut solver = Solver::new(&st, &weights);
    solver.solve(lambda, opts);
    Ok(DVector::from_vec(solver.beta))
}

fn resolve_weights(factors: Option<&[f64]>, n: usize) -> Result<Vec<f64>> {
    match factors {
        None => Ok(vec![1.0; n]),
        Some(w) if w.len() != n => Err(Error::DimensionMismatch(format!(
            "{} penalty factors for {n} candidates",
            w.len()
        ))),
        Some(w) if w.iter().any(|v| !(*v > 0.0)) => Err(Error::InvalidArgument(
            "penalty factors must be positive".into(),
        )),
        Some(w) => Ok(w.to_vec()),
    }
}

/// Fold layout for cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldScheme {
    /// Consecutive blocks in time order.
    Contiguous,
    /// Random assignment, reproducible from the seed.
    Shuffled { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoSelectConfig {
    pub path: LassoOptions,
    pub add_intercept: bool,
    pub folds: usize,
    pub fold_scheme: FoldScheme,
    pub robust_se: bool,
}

impl Default for LassoSelectConfig {
    fn default() -> Self {
        Self {
            path: LassoOptions::default(),
            add_intercept: true,
            folds: 10,
            fold_scheme: FoldScheme::Contiguous,
            robust_se: false,
        }
    }
}

/// Penalty tuning rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tuning {
    Bic,
    CrossValidation,
}

struct Partialled {
    ds: Dataset,
    y: DVector<f64>,
    x: DMatrix<f64>,
}

/// Controls are never penalized: they are projected out of `y` and every
/// candidate before the path is computed.
fn partial_controls(dataset: &Dataset, add_intercept: bool) -> Result<Partialled> {
    let ds = if add_intercept {
        dataset.with_intercept()
    } else {
        dataset.clone()
    };
    let proj = Projector::new(&ds.z)?;
    Ok(Partialled {
        y: proj.residualize(&ds.y),
        x: proj.residualize_matrix(&ds.x),
        ds,
    })
}

/// BIC of the least-squares refit on each path point's active set.
/// Returns one value per path point (`+∞` where the refit is infeasible).
fn bic_curve(p: &Partialled, path: &LassoPath) -> Vec<f64> {
    let t = p.y.len();
    let tf = t as f64;
    let zeta = p.ds.zeta();
    let yy = p.y.norm_squared();
    let xy = p.x.tr_mul(&p.y);
    let mut gram: Option<DMatrix<f64>> = None;
    let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
    (0..path.len())
        .map(|k| {
            let active = path.active_set(k);
            if let Some(&v) = cache.get(&active) {
                return v;
            }
            let m = active.len();
            let bic = if zeta + m + 1 >= t {
                f64::INFINITY
            } else if m == 0 {
                tf * (yy / tf).ln()
            } else {
                let g = gram.get_or_insert_with(|| p.x.tr_mul(&p.x));
                let gaa = DMatrix::from_fn(m, m, |a, b| g[(active[a], active[b])]);
                let b = DVector::from_fn(m, |a, _| xy[active[a]]);
                match refit_rss(&gaa, &b, yy) {
                    Some(rss) => tf * (rss / tf).ln() + m as f64 * tf.ln(),
                    None => f64::INFINITY,
                }
            };
            cache.insert(active, bic);
            bic
        })
        .collect()
}

/// `y′y − b′G⁻¹b`, or `None` when `G` is numerically singular.
fn refit_rss(gaa: &DMatrix<f64>, b: &DVector<f64>, yy: f64) -> Option<f64> {
    let diag_max = gaa.diagonal().amax();
    let chol = gaa.clone().cholesky()?;
    let l_diag = chol.l_dirty().diagonal();
    let ratio = l_diag.amin() / diag_max.sqrt();
    if !(ratio * ratio > crate::regression::RANK_TOLERANCE) {
        return None;
    }
    let coef = chol.solve(b);
    Some((yy - b.dot(&coef)).max(0.0))
}

fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = k;
        }
    }
    best
}

/// Cross-validation error curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CvCurve {
    pub lambdas: Vec<f64>,
    /// Mean out-of-fold squared error per penalty.
    pub errors: Vec<f64>,
    pub best: usize,
}

pub(crate) fn fold_assignment(t: usize, folds: usize, scheme: FoldScheme) -> Vec<usize> {
    match scheme {
        FoldScheme::Contiguous => (0..t).map(|i| i * folds / t).collect(),
        FoldScheme::Shuffled { seed } => {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut ids: Vec<usize> = (0..t).map(|i| i * folds / t).collect();
            ids.shuffle(&mut rng);
            ids
        }
    }
}

fn rows_where(m: &DMatrix<f64>, keep: &[bool]) -> DMatrix<f64> {
    let idx: Vec<usize> = (0..m.nrows()).filter(|&i| keep[i]).collect();
    m.select_rows(&idx)
}

fn cv_errors(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    lambdas: &[f64],
    weights: Option<&[f64]>,
    folds: usize,
    scheme: FoldScheme,
    opts: &LassoOptions,
) -> Result<Vec<f64>> {
    let t = y.len();
    if folds < 2 || folds > t {
        return Err(Error::InvalidArgument(format!(
            "folds = {folds} must be in [2, T = {t}]"
        )));
    }
    let assign = fold_assignment(t, folds, scheme);
    let ym = DMatrix::from_column_slice(t, 1, y.as_slice());
    let mut sse = vec![0.0; lambdas.len()];
    for f in 0..folds {
        let train: Vec<bool> = assign.iter().map(|&a| a != f).collect();
        let test: Vec<bool> = train.iter().map(|b| !b).collect();
        let y_tr = rows_where(&ym, &train).column(0).into_owned();
        let x_tr = rows_where(x, &train);
        let y_te = rows_where(&ym, &test).column(0).into_owned();
        let x_te = rows_where(x, &test);
        let path = lasso_path_on_grid(&y_tr, &x_tr, lambdas, weights, opts)?;
        for (k, acc) in sse.iter_mut().enumerate() {
            let pred = path.predict(k, &x_te);
            *acc += (&y_te - pred).norm_squared();
        }
    }
    Ok(sse.into_iter().map(|s| s / t as f64).collect())
}

/// K-fold cross-validation curve on the path of `(y, X)` (no controls).
pub fn lasso_cv_curve(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    folds: usize,
    scheme: FoldScheme,
    opts: &LassoOptions,
) -> Result<CvCurve> {
    let full = lasso_path_with(y, x, None, opts)?;
    let errors = cv_errors(y, x, &full.lambdas, None, folds, scheme, opts)?;
    let best = argmin_first(&errors);
    Ok(CvCurve {
        lambdas: full.lambdas,
        errors,
        best,
    })
}

fn finish(p: &Partialled, path: &LassoPath, point: usize, robust: bool) -> Result<SelectionResult> {
    let selected = path.active_set(point);
    let post = post_selection_or_min_norm(&p.ds, &selected, robust)?;
    Ok(SelectionResult {
        selected,
        trace: Vec::new(),
        post,
    })
}

fn select_weighted(
    dataset: &Dataset,
    weights: Option<&[f64]>,
    tuning: Tuning,
    config: &LassoSelectConfig,
) -> Result<SelectionResult> {
    let p = partial_controls(dataset, config.add_intercept)?;
    let path = lasso_path_with(&p.y, &p.x, weights, &config.path)?;
    let point = match tuning {
        Tuning::Bic => argmin_first(&bic_curve(&p, &path)),
        Tuning::CrossValidation => {
            let errors = cv_errors(
                &p.y,
                &p.x,
                &path.lambdas,
                weights,
                config.folds,
                config.fold_scheme,
                &config.path,
            )?;
            argmin_first(&errors)
        }
    };
    finish(&p, &path, point, config.robust_se)
}

/// Lasso tuned by BIC, with post-selection OLS coefficients.
pub fn lasso_select_bic(dataset: &Dataset, config: &LassoSelectConfig) -> Result<SelectionResult> {
    select_weighted(dataset, None, Tuning::Bic, config)
}

/// Lasso tuned by K-fold cross-validation, with post-selection OLS
/// coefficients.
pub fn lasso_select_cv(dataset: &Dataset, config: &LassoSelectConfig) -> Result<SelectionResult> {
    select_weighted(dataset, None, Tuning::CrossValidation, config)
}

/// Lasso with fixed penalty factors.
pub fn weighted_lasso_select(
    dataset: &Dataset,
    penalty_factors: &[f64],
    tuning: Tuning,
    config: &LassoSelectConfig,
) -> Result<SelectionResult> {
    select_weighted(dataset, Some(penalty_factors), tuning, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveLassoConfig {
    pub lasso: LassoSelectConfig,
    /// Exponent on the initial estimates.
    pub gamma: f64,
    /// Ridge penalty for the initial estimates, as a fraction of `λ_max`.
    pub ridge_factor: f64,
    pub tuning: Tuning,
}

impl Default for AdaptiveLassoConfig {
    fn default() -> Self {
        Self {
            lasso: LassoSelectConfig::default(),
            gamma: 1.0,
            ridge_factor: 1e-3,
            tuning: Tuning::Bic,
        }
    }
}

/// Ridge estimates on the standardized scale of the partialled candidates,
/// turned into penalty factors `1 / |β̂|^γ`.
pub fn adaptive_weights(dataset: &Dataset, config: &AdaptiveLassoConfig) -> Result<Vec<f64>> {
    let p = partial_controls(dataset, config.lasso.add_intercept)?;
    let st = Standardized::new(&p.y, &p.x)?;
    let n = st.xs.ncols();
    let t = st.t();
    let kappa = config.ridge_factor * st.lambda_max(&vec![1.0; n]);
    let mut gram = st.xs.tr_mul(&st.xs) / t;
    for j in 0..n {
        gram[(j, j)] += kappa.max(f64::EPSILON);
    }
    let rhs = st.xs.tr_mul(&st.yc) / t;
    let init = gram
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("ridge system not positive definite".into()))?
        .solve(&rhs);
    Ok(init
        .iter()
        .map(|b| {
            let a = b.abs().powf(config.gamma);
            if a > 0.0 {
                1.0 / a
            } else {
                f64::INFINITY
            }
        })
        .collect())
}

/// Adaptive Lasso: ridge-initialized penalty factors, then a weighted Lasso
/// path tuned by BIC (or cross-validation).
pub fn adaptive_lasso_select(
    dataset: &Dataset,
    config: &AdaptiveLassoConfig,
) -> Result<SelectionResult> {
    let weights = adaptive_weights(dataset, config)?;
    weighted_lasso_select(dataset, &weights, config.tuning, &config.lasso)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    fn design(seed: u64, t: usize, n: usize) -> (DVector<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = randn(&mut rng, t, n);
        let e = randn(&mut rng, t, 1);
        let y = x.column(0) * 2.0 - x.column(1) * 1.0 + x.column(2) * 0.5 + e.column(0);
        (y, x)
    }

    #[test]
    fn top_of_path_is_zero() {
        let (y, x) = design(1, 80, 10);
        let path = lasso_path(&y, &x, 20, 1e-2).unwrap();
        assert!(path.coefficients.row(0).iter().all(|&b| b == 0.0));
        assert_eq!(path.active_counts[0], 0);
        assert!(path.lambdas.windows(2).all(|w| w[1] < w[0]));
        assert!((path.lambdas[19] / path.lambdas[0] - 1e-2).abs() < 1e-12);
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        // columns with mean 0 and x'x/T = 1, mutually orthogonal
        let t = 8;
        let h = [
            [1.0, 1.0, 1.0],
            [-1.0, 1.0, 1.0],
            [1.0, -1.0, 1.0],
            [-1.0, -1.0, 1.0],
            [1.0, 1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [1.0, -1.0, -1.0],
            [-1.0, -1.0, -1.0],
        ];
        let x = DMatrix::from_fn(t, 3, |i, j| h[i][j]);
        let y = DVector::from_vec(vec![3.0, -1.0, 2.0, 0.5, 1.0, -2.0, 0.0, 1.5]);
        let path = lasso_path(&y, &x, 30, 1e-3).unwrap();
        let yc = {
            let mut v = y.clone();
            v.add_scalar_mut(-y.mean());
            v
        };
        for (k, &lambda) in path.lambdas.iter().enumerate() {
            for j in 0..3 {
                let z = x.column(j).dot(&yc) / t as f64;
                let expected = soft_threshold(z, lambda);
                assert!((path.coefficients[(k, j)] - expected).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn small_penalty_approaches_ols() {
        let (y, x) = design(2, 100, 5);
        let opts = LassoOptions {
            n_lambda: 100,
            lambda_min_ratio: 1e-6,
            ..Default::default()
        };
        let path = lasso_path_with(&y, &x, None, &opts).unwrap();
        let mut w = DMatrix::from_element(100, 6, 1.0);
        w.columns_mut(1, 5).copy_from(&x);
        let ols = crate::regression::ols_fit(&y, &w).unwrap();
        let last = path.len() - 1;
        for j in 0..5 {
            assert!((path.coefficients[(last, j)] - ols.coefficients[j + 1]).abs() < 1e-4);
        }
    }

    #[test]
    fn kkt_holds_along_path() {
        let (y, x) = design(3, 60, 30);
        let path = lasso_path(&y, &x, 100, 1e-3).unwrap();
        assert!(path.kkt_violations.iter().all(|&v| v < 1e-6));
    }

    #[test]
    fn warm_and_cold_agree() {
        let (y, x) = design(4, 90, 12);
        let opts = LassoOptions::default();
        let path = lasso_path_with(&y, &x, None, &opts).unwrap();
        for &k in &[5, 40, 99] {
            let cold = lasso_single(&y, &x, path.lambdas[k], &opts).unwrap();
            let warm = path.std_coefficients.row(k).transpose();
            assert!((cold - warm).amax() < 1e-6);
        }
    }

    #[test]
    fn original_scale_reproduces_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = randn(&mut rng, 70, 6);
        for (j, mut c) in x.column_iter_mut().enumerate() {
            c *= (j + 1) as f64 * 3.0;
            c.add_scalar_mut(j as f64 - 2.0);
        }
        let y = x.column(1) * 0.2 + randn(&mut rng, 70, 1).column(0) + DVector::from_element(70, 4.0);
        let path = lasso_path(&y, &x, 50, 1e-3).unwrap();
        let st = Standardized::new(&y, &x).unwrap();
        for k in 0..path.len() {
            let std_fit = &st.xs * path.std_coefficients.row(k).transpose()
                + DVector::from_element(70, st.y_mean);
            let orig_fit = path.predict(k, &x);
            assert!((std_fit - orig_fit).amax() < 1e-10);
        }
    }

    #[test]
    fn rejects_non_finite() {
        let (y, mut x) = design(6, 20, 3);
        x[(3, 1)] = f64::INFINITY;
        assert!(matches!(lasso_path(&y, &x, 10, 1e-3), Err(Error::NonFinite(_))));
    }

    #[test]
    fn single_point_path() {
        let (y, x) = design(7, 60, 8);
        let ds = Dataset::from_xy(y, x).unwrap();
        let cfg = LassoSelectConfig {
            path: LassoOptions {
                n_lambda: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let res = lasso_select_cv(&ds, &cfg).unwrap();
        assert!(res.selected.is_empty());
    }

    #[test]
    fn loo_and_ten_fold_both_valid() {
        let (y, x) = design(8, 40, 6);
        let opts = LassoOptions {
            n_lambda: 20,
            ..Default::default()
        };
        let a = lasso_cv_curve(&y, &x, 40, FoldScheme::Contiguous, &opts).unwrap();
        let b = lasso_cv_curve(&y, &x, 10, FoldScheme::Contiguous, &opts).unwrap();
        assert!(a.best < 20 && b.best < 20);
        assert!(lasso_cv_curve(&y, &x, 1, FoldScheme::Contiguous, &opts).is_err());
    }

    #[test]
    fn fold_layouts() {
        assert_eq!(fold_assignment(7, 3, FoldScheme::Contiguous), vec![0, 0, 0, 1, 1, 2, 2]);
        let mut s = fold_assignment(10, 5, FoldScheme::Shuffled { seed: 3 });
        s.sort();
        assert_eq!(s, vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4]);
    }

    #[test]
    fn uniform_weights_match_plain_lasso() {
        let (y, x) = design(9, 120, 20);
        let ds = Dataset::from_xy(y, x).unwrap();
        let cfg = LassoSelectConfig::default();
        let plain = lasso_select_bic(&ds, &cfg).unwrap();
        let weighted = weighted_lasso_select(&ds, &[2.5; 20], Tuning::Bic, &cfg).unwrap();
        assert_eq!(plain.selected, weighted.selected);
    }

    #[test]
    fn infinite_weight_excludes() {
        let (y, x) = design(10, 120, 10);
        let ds = Dataset::from_xy(y, x).unwrap();
        let mut w = vec![1.0; 10];
        w[0] = f64::INFINITY;
        let res = weighted_lasso_select(&ds, &w, Tuning::Bic, &LassoSelectConfig::default()).unwrap();
        assert!(!res.selected.contains(&0));
    }

    #[test]
    fn post_refit_matches_post_selection_estimate() {
        let (y, x) = design(11, 150, 15);
        let ds = Dataset::from_xy(y, x).unwrap();
        let res = lasso_select_bic(&ds, &LassoSelectConfig::default()).unwrap();
        let direct =
            crate::selector::post_selection_estimate(&ds.with_intercept(), &res.selected, false)
                .unwrap();
        assert_eq!(res.post.coefficients_full, direct.coefficients_full);
        assert!(res.selected.contains(&0) && res.selected.contains(&1));
    }

    #[test]
    fn coordinate_descent_alone_meets_kkt() {
        let opts = LassoOptions {
            polish: false,
            ..Default::default()
        };
        let (y, x) = design(12, 60, 25);
        let cd = lasso_path_with(&y, &x, None, &opts).unwrap();
        assert!(cd.kkt_violations.iter().all(|&v| v < 1e-6));
        assert!(cd.sweeps.iter().any(|&s| s > 0));
        let fast = lasso_path(&y, &x, 100, 1e-3).unwrap();
        assert!((cd.std_coefficients - fast.std_coefficients).amax() < 1e-6);
    }

    #[test]
    fn bic_matches_svd_refit() {
        let (y, x) = design(13, 90, 12);
        let ds = Dataset::from_xy(y, x).unwrap();
        let p = partial_controls(&ds, true).unwrap();
        let path = lasso_path(&p.y, &p.x, 40, 1e-3).unwrap();
        let bic = bic_curve(&p, &path);
        let tf = 90.0_f64;
        for k in 0..path.len() {
            let active = path.active_set(k);
            let xa = p.x.select_columns(&active);
            let rss = if active.is_empty() {
                p.y.norm_squared()
            } else {
                let coef = xa.clone().svd(true, true).solve(&p.y, 1e-12).unwrap();
                (&p.y - &xa * coef).norm_squared()
            };
            let expected = tf * (rss / tf).ln() + active.len() as f64 * tf.ln();
            assert!((bic[k] - expected).abs() < 1e-8 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn cv_curve_matches_naive_refits() {
        let (y, x) = design(14, 60, 8);
        let opts = LassoOptions {
            n_lambda: 15,
            ..Default::default()
        };
        let folds = 5;
        let curve = lasso_cv_curve(&y, &x, folds, FoldScheme::Contiguous, &opts).unwrap();
        let t = 60;
        let mut naive = vec![0.0; curve.lambdas.len()];
        for f in 0..folds {
            let test: Vec<usize> = (f * t / folds..(f + 1) * t / folds).collect();
            let train: Vec<usize> = (0..t).filter(|i| !test.contains(i)).collect();
            let ytr = DVector::from_fn(train.len(), |i, _| y[train[i]]);
            let xtr = x.select_rows(&train);
            let tt = train.len() as f64;
            let means: Vec<f64> = (0..8).map(|j| xtr.column(j).mean()).collect();
            let sds: Vec<f64> = (0..8)
                .map(|j| (xtr.column(j).iter().map(|v| (v - means[j]).powi(2)).sum::<f64>() / tt).sqrt())
                .collect();
            for (k, &lambda) in curve.lambdas.iter().enumerate() {
                let b = lasso_single(&ytr, &xtr, lambda, &opts).unwrap();
                for &i in &test {
                    let pred = ytr.mean()
                        + (0..8).map(|j| b[j] * (x[(i, j)] - means[j]) / sds[j]).sum::<f64>();
                    naive[k] += (y[i] - pred).powi(2) / t as f64;
                }
            }
        }
        for (a, b) in curve.errors.iter().zip(&naive) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
