//! Dense least-squares machinery.
//!
//! Every selection statistic in the crate reduces to an OLS t-ratio on a
//! residualized regressor (Frisch–Waugh–Lovell). The functions here are the
//! only place where linear systems get solved.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative singular-value threshold below which a design is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Residualized variance, relative to the raw variance, below which a
/// candidate is considered collinear with the conditioning set.
pub const DEGENERATE_TOLERANCE: f64 = 1e-12;
/// Magnitude assigned to t-ratios whose standard error vanishes.
pub const T_STAT_CAP: f64 = 1e12;

const PC_TOLERANCE: f64 = 1e-10;
const PC_MAX_ITER: usize = 10_000;

/// Response, mandatory controls and candidate regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    /// Pre-selected controls, `T × ζ` (may have zero columns).
    pub z: DMatrix<f64>,
    /// Candidate regressors, `T × n`.
    pub x: DMatrix<f64>,
    /// Candidate names, one per column of `x`.
    pub names: Vec<String>,
    /// Control names, one per column of `z`.
    pub control_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        y: DVector<f64>,
        z: DMatrix<f64>,
        x: DMatrix<f64>,
        names: Vec<String>,
    ) -> Result<Self> {
        let control_names = (0..z.ncols()).map(|j| format!("z{}", j + 1)).collect();
        Self::with_control_names(y, z, x, names, control_names)
    }

    pub fn with_control_names(
        y: DVector<f64>,
        z: DMatrix<f64>,
        x: DMatrix<f64>,
        names: Vec<String>,
        control_names: Vec<String>,
    ) -> Result<Self> {
        let t = y.len();
        if z.nrows() != t || x.nrows() != t {
            return Err(Error::DimensionMismatch(format!(
                "y has {t} rows, Z has {}, X has {}",
                z.nrows(),
                x.nrows()
            )));
        }
        if names.len() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} names for {} candidates",
                names.len(),
                x.ncols()
            )));
        }
        if control_names.len() != z.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} control names for {} controls",
                control_names.len(),
                z.ncols()
            )));
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("y".into()));
        }
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Z".into()));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("X".into()));
        }
        if t <= z.ncols() + 1 {
            return Err(Error::InsufficientRows {
                needed: z.ncols() + 2,
                got: t,
            });
        }
        Ok(Self {
            y,
            z,
            x,
            names,
            control_names,
        })
    }

    /// Candidates only, no controls, generated names `x1..xn`.
    pub fn from_xy(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let t = y.len();
        let names = (0..x.ncols()).map(|j| format!("x{}", j + 1)).collect();
        Self::new(y, DMatrix::zeros(t, 0), x, names)
    }

    pub fn t(&self) -> usize {
        self.y.len()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn zeta(&self) -> usize {
        self.z.ncols()
    }

    /// `[Z, X[:, indices]]`.
    pub fn conditioning_matrix(&self, indices: &[usize]) -> DMatrix<f64> {
        let t = self.t();
        let mut q = DMatrix::zeros(t, self.zeta() + indices.len());
        q.columns_mut(0, self.zeta()).copy_from(&self.z);
        for (k, &j) in indices.iter().enumerate() {
            q.set_column(self.zeta() + k, &self.x.column(j));
        }
        q
    }

    /// Copy of the dataset with a constant column prepended to `Z`, unless
    /// `Z` already spans the constant.
    pub fn with_intercept(&self) -> Dataset {
        if has_constant_column(&self.z) {
            return self.clone();
        }
        let t = self.t();
        let mut z = DMatrix::from_element(t, self.zeta() + 1, 1.0);
        z.columns_mut(1, self.zeta()).copy_from(&self.z);
        let mut control_names = Vec::with_capacity(self.zeta() + 1);
        control_names.push("const".to_string());
        control_names.extend(self.control_names.iter().cloned());
        Dataset {
            y: self.y.clone(),
            z,
            x: self.x.clone(),
            names: self.names.clone(),
            control_names,
        }
    }

    /// Restrict to a contiguous block of rows.
    pub fn rows(&self, start: usize, len: usize) -> Dataset {
        Dataset {
            y: self.y.rows(start, len).into_owned(),
            z: self.z.rows(start, len).into_owned(),
            x: self.x.rows(start, len).into_owned(),
            names: self.names.clone(),
            control_names: self.control_names.clone(),
        }
    }
}

pub(crate) fn has_constant_column(m: &DMatrix<f64>) -> bool {
    m.column_iter().any(|c| {
        let first = c[0];
        first != 0.0 && c.iter().all(|&v| v == first)
    })
}

/// How a t-ratio was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TStatFlag {
    Regular,
    /// Residualized regressor has no variation left; value forced to 0.
    Degenerate,
    /// Standard error vanished; value capped at `±T_STAT_CAP`.
    PerfectFit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TStat {
    pub value: f64,
    pub flag: TStatFlag,
}

impl TStat {
    fn degenerate() -> Self {
        TStat {
            value: 0.0,
            flag: TStatFlag::Degenerate,
        }
    }

    fn from_ratio(coef: f64, se: f64) -> Self {
        if se > 0.0 {
            let t = coef / se;
            if t.abs() >= T_STAT_CAP {
                TStat {
                    value: T_STAT_CAP.copysign(t),
                    flag: TStatFlag::PerfectFit,
                }
            } else {
                TStat {
                    value: t,
                    flag: TStatFlag::Regular,
                }
            }
        } else if coef != 0.0 {
            TStat {
                value: T_STAT_CAP.copysign(coef),
                flag: TStatFlag::PerfectFit,
            }
        } else {
            TStat {
                value: 0.0,
                flag: TStatFlag::Regular,
            }
        }
    }
}

/// Coefficient covariance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Covariance {
    /// `σ̂²(W′W)⁻¹`.
    #[default]
    Classical,
    /// White sandwich with the `T/(T−m)` small-sample factor (HC1).
    Hc1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `RSS / (T − m)`.
    pub sigma2_hat: f64,
    pub se: DVector<f64>,
    pub t_stats: DVector<f64>,
    pub vcov: DMatrix<f64>,
    pub df: usize,
}

impl RegressionFit {
    pub fn rss(&self) -> f64 {
        self.residuals.norm_squared()
    }
}

/// Orthonormal basis of a conditioning set, used to residualize vectors.
#[derive(Debug, Clone)]
pub struct Projector {
    basis: DMatrix<f64>,
}

impl Projector {
    pub fn new(q: &DMatrix<f64>) -> Result<Self> {
        if q.ncols() == 0 {
            return Ok(Self {
                basis: DMatrix::zeros(q.nrows(), 0),
            });
        }
        if q.ncols() > q.nrows() {
            return Err(Error::RankDeficient { ratio: 0.0 });
        }
        let qr = q.clone().qr();
        check_rank(&qr.r())?;
        Ok(Self { basis: qr.q() })
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn residualize(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.basis.ncols() == 0 {
            return v.clone();
        }
        let coef = self.basis.tr_mul(v);
        v - &self.basis * coef
    }

    pub fn residualize_column(&self, v: nalgebra::DVectorView<'_, f64>) -> DVector<f64> {
        self.residualize(&v.into_owned())
    }

    pub fn residualize_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        if self.basis.ncols() == 0 {
            return m.clone();
        }
        let coef = self.basis.tr_mul(m);
        m - &self.basis * coef
    }
}

fn check_rank(r: &DMatrix<f64>) -> Result<()> {
    let sv = r.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smax == 0.0 || !smax.is_finite() {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let ratio = smin / smax;
    if ratio < RANK_TOLERANCE {
        return Err(Error::RankDeficient { ratio });
    }
    Ok(())
}

/// Ordinary least squares of `y` on the columns of `w` via Householder QR.
pub fn ols_fit(y: &DVector<f64>, w: &DMatrix<f64>) -> Result<RegressionFit> {
    ols_fit_with(y, w, Covariance::Classical)
}

pub fn ols_fit_with(
    y: &DVector<f64>,
    w: &DMatrix<f64>,
    covariance: Covariance,
) -> Result<RegressionFit> {
    let t = y.len();
    let m = w.ncols();
    if w.nrows() != t {
        return Err(Error::DimensionMismatch(format!(
            "y has {t} rows, W has {}",
            w.nrows()
        )));
    }
    if t <= m {
        return Err(Error::DimensionMismatch(format!(
            "need more rows than regressors (T = {t}, m = {m})"
        )));
    }
    if m == 0 {
        return Ok(RegressionFit {
            coefficients: DVector::zeros(0),
            residuals: y.clone(),
            sigma2_hat: y.norm_squared() / t as f64,
            se: DVector::zeros(0),
            t_stats: DVector::zeros(0),
            vcov: DMatrix::zeros(0, 0),
            df: t,
        });
    }
    let qr = w.clone().qr();
    let r = qr.r();
    check_rank(&r)?;
    let q = qr.q();
    let qty = q.tr_mul(y);
    let coefficients = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { ratio: 0.0 })?;
    let residuals = y - w * &coefficients;
    let df = t - m;
    let rss = residuals.norm_squared();
    let sigma2_hat = rss / df as f64;

    // (W'W)^{-1} = R^{-1} R^{-T}
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(m, m))
        .ok_or(Error::RankDeficient { ratio: 0.0 })?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let vcov = match covariance {
        Covariance::Classical => &xtx_inv * sigma2_hat,
        Covariance::Hc1 => {
            let mut meat = DMatrix::zeros(m, m);
            for (i, row) in w.row_iter().enumerate() {
                let e2 = residuals[i] * residuals[i];
                meat += row.transpose() * row * e2;
            }
            let scale = t as f64 / df as f64;
            &xtx_inv * meat * &xtx_inv * scale
        }
    };
    let se = DVector::from_iterator(m, (0..m).map(|j| vcov[(j, j)].max(0.0).sqrt()));
    let t_stats = DVector::from_iterator(
        m,
        (0..m).map(|j| TStat::from_ratio(coefficients[j], se[j]).value),
    );
    Ok(RegressionFit {
        coefficients,
        residuals,
        sigma2_hat,
        se,
        t_stats,
        vcov,
        df,
    })
}

/// Residuals of `target` after projection on the columns of `q`.
pub fn partial_out(target: &DVector<f64>, q: &DMatrix<f64>) -> Result<DVector<f64>> {
    if q.nrows() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "target has {} rows, Q has {}",
            target.len(),
            q.nrows()
        )));
    }
    Ok(Projector::new(q)?.residualize(target))
}

fn centered_sum_squares(v: &DVector<f64>) -> f64 {
    let mean = v.mean();
    v.iter().map(|a| (a - mean) * (a - mean)).sum()
}

/// t-ratio of the slope in the regression of `y_res` on `x_res`, both already
/// residualized on a conditioning set of rank `q_rank`.
pub(crate) fn residualized_t_stat(
    y_res: &DVector<f64>,
    x_res: &DVector<f64>,
    x_raw_css: f64,
    q_rank: usize,
    covariance: Covariance,
) -> TStat {
    let sxx = x_res.norm_squared();
    if sxx <= DEGENERATE_TOLERANCE * x_raw_css || sxx <= f64::MIN_POSITIVE {
        return TStat::degenerate();
    }
    let t = y_res.len();
    let df = (t - q_rank - 1) as f64;
    let coef = x_res.dot(y_res) / sxx;
    let var = match covariance {
        Covariance::Classical => {
            let rss: f64 = y_res
                .iter()
                .zip(x_res.iter())
                .map(|(y, x)| {
                    let e = y - coef * x;
                    e * e
                })
                .sum();
            rss / df / sxx
        }
        Covariance::Hc1 => {
            let meat: f64 = y_res
                .iter()
                .zip(x_res.iter())
                .map(|(y, x)| {
                    let e = y - coef * x;
                    x * x * e * e
                })
                .sum();
            meat / (sxx * sxx) * (t as f64 / df)
        }
    };
    TStat::from_ratio(coef, var.max(0.0).sqrt())
}

/// t-statistic on `x` in the joint regression of `y` on `[Q, x]`, computed by
/// partialling `Q` out of both `y` and `x`.
pub fn conditional_t_stat(y: &DVector<f64>, q: &DMatrix<f64>, x: &DVector<f64>) -> Result<TStat> {
    conditional_t_stat_with(y, q, x, Covariance::Classical)
}

pub fn conditional_t_stat_with(
    y: &DVector<f64>,
    q: &DMatrix<f64>,
    x: &DVector<f64>,
    covariance: Covariance,
) -> Result<TStat> {
    let t = y.len();
    if x.len() != t || q.nrows() != t {
        return Err(Error::DimensionMismatch(format!(
            "y has {t} rows, x has {}, Q has {}",
            x.len(),
            q.nrows()
        )));
    }
    if t < q.ncols() + 2 {
        return Err(Error::InsufficientRows {
            needed: q.ncols() + 2,
            got: t,
        });
    }
    let proj = Projector::new(q)?;
    let y_res = proj.residualize(y);
    let x_res = proj.residualize(x);
    let stat = residualized_t_stat(&y_res, &x_res, centered_sum_squares(x), proj.rank(), covariance);
    if stat.flag == TStatFlag::Degenerate {
        return Err(Error::DegenerateRegressor);
    }
    Ok(stat)
}

/// Conditional t-statistics for every index in `active`, conditioning on
/// `[Z, X[:, conditioning]]`. Degenerate candidates come back as flagged zeros.
pub fn batch_conditional_t_stats(
    dataset: &Dataset,
    conditioning: &[usize],
    active: &[usize],
) -> Result<Vec<(usize, TStat)>> {
    batch_conditional_t_stats_with(dataset, conditioning, active, Covariance::Classical)
}

pub fn batch_conditional_t_stats_with(
    dataset: &Dataset,
    conditioning: &[usize],
    active: &[usize],
    covariance: Covariance,
) -> Result<Vec<(usize, TStat)>> {
    let n = dataset.n();
    for &j in conditioning.iter().chain(active) {
        if j >= n {
            return Err(Error::IndexOutOfRange { index: j, n });
        }
    }
    if let Some(&j) = active.iter().find(|j| conditioning.contains(j)) {
        return Err(Error::InvalidArgument(format!(
            "candidate {j} is both active and conditioned on"
        )));
    }
    if active.is_empty() {
        return Ok(Vec::new());
    }
    let q = dataset.conditioning_matrix(conditioning);
    if dataset.t() < q.ncols() + 2 {
        return Err(Error::InsufficientRows {
            needed: q.ncols() + 2,
            got: dataset.t(),
        });
    }
    let proj = Projector::new(&q)?;
    let y_res = proj.residualize(&dataset.y);
    Ok(active
        .iter()
        .map(|&j| {
            let x = dataset.x.column(j).into_owned();
            let x_res = proj.residualize(&x);
            let stat = residualized_t_stat(
                &y_res,
                &x_res,
                centered_sum_squares(&x),
                proj.rank(),
                covariance,
            );
            (j, stat)
        })
        .collect())
}

/// Leading principal component of a block of series.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalComponent {
    /// Scores, normalized to unit sample variance.
    pub scores: DVector<f64>,
    /// Unit-norm leading eigenvector of the correlation matrix.
    pub loadings: DVector<f64>,
    pub eigenvalue: f64,
    pub iterations: usize,
}

/// Column-standardize with sample (`T − 1`) variance. Constant columns are
/// centered but left unscaled.
pub(crate) fn standardize_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let t = x.nrows();
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (t as f64 - 1.0)).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
    out
}

pub fn principal_component(x: &DMatrix<f64>) -> Result<PrincipalComponent> {
    if x.ncols() < 2 {
        return Err(Error::InsufficientColumns {
            needed: 2,
            got: x.ncols(),
        });
    }
    if x.nrows() < 2 {
        return Err(Error::InsufficientRows {
            needed: 2,
            got: x.nrows(),
        });
    }
    let t = x.nrows();
    let p = x.ncols();
    let xs = standardize_columns(x);
    let corr = xs.tr_mul(&xs) / (t as f64 - 1.0);

    // Start from ones; fall back to coordinate vectors if the start lies in
    // the null space of the correlation matrix.
    let starts = std::iter::once(DVector::from_element(p, 1.0 / (p as f64).sqrt()))
        .chain((0..p).map(|i| DVector::from_fn(p, |j, _| if i == j { 1.0 } else { 0.0 })));
    let scale = corr.norm().max(f64::MIN_POSITIVE);
    let mut v = None;
    let mut iterations = 0;
    for start in starts {
        let first = &corr * &start;
        if first.norm() <= 1e-12 * scale {
            continue;
        }
        let mut cur = first.normalize();
        for it in 1..=PC_MAX_ITER {
            iterations = it;
            let next = (&corr * &cur).normalize();
            let diff = (&next - &cur).norm();
            cur = next;
            if diff < PC_TOLERANCE {
                break;
            }
        }
        v = Some(cur);
        break;
    }
    let mut v = v.ok_or_else(|| Error::InvalidArgument("correlation matrix is zero".into()))?;

    let lead = v
        .iter()
        .enumerate()
        .fold((0, 0.0_f64), |best, (i, &a)| {
            if a.abs() > best.1 {
                (i, a.abs())
            } else {
                best
            }
        })
        .0;
    if v[lead] < 0.0 {
        v = -v;
    }
    let eigenvalue = v.dot(&(&corr * &v));
    let mut scores = &xs * &v;
    let mean = scores.mean();
    scores.add_scalar_mut(-mean);
    let sd = (scores.norm_squared() / (t as f64 - 1.0)).sqrt();
    if sd > 0.0 {
        scores /= sd;
    }
    Ok(PrincipalComponent {
        scores,
        loadings: v,
        eigenvalue,
        iterations,
    })
}

/// Score vector of the first principal component of `x`.
pub fn first_principal_component(x: &DMatrix<f64>) -> Result<DVector<f64>> {
    principal_component(x).map(|pc| pc.scores)
}
