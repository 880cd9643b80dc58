//! Stagewise selection by multiple testing.
//!
//! BMT admits, at each stage, the single candidate with the largest absolute
//! conditional t-ratio among those exceeding a family-wise critical value.
//! OCMT admits every candidate that clears the threshold.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::normal_upper_quantile;
use crate::regression::{
    batch_conditional_t_stats_with, ols_fit_with, Covariance, Dataset, RegressionFit, TStatFlag,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// Nominal family-wise size.
    pub p: f64,
    /// Scale in `f(n, δ) = c·n^δ`.
    pub c: f64,
    /// Critical-value exponent at the first stage.
    pub delta: f64,
    /// Critical-value exponent at later stages.
    pub delta_star: f64,
    /// Stage cap; `None` means `min(n, T − ζ − 2)`.
    pub max_stages: Option<usize>,
    /// Use the size of the remaining active set as `n` in the critical value.
    pub shrink_n_per_stage: bool,
    /// HC1 standard errors for the stagewise t-ratios and the final fit.
    pub robust_se: bool,
    /// Prepend a constant to the controls.
    pub add_intercept: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            p: 0.05,
            c: 1.0,
            delta: 1.0,
            delta_star: 1.0,
            max_stages: None,
            shrink_n_per_stage: true,
            robust_se: false,
            add_intercept: true,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidArgument(format!("p = {} not in (0, 1)", self.p)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!("c = {} must be positive", self.c)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delta = {} must be positive",
                self.delta
            )));
        }
        if !(self.delta_star >= self.delta && self.delta_star.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delta_star = {} must be at least delta = {}",
                self.delta_star, self.delta
            )));
        }
        Ok(())
    }

    fn covariance(&self) -> Covariance {
        if self.robust_se {
            Covariance::Hc1
        } else {
            Covariance::Classical
        }
    }
}

/// `Φ⁻¹(1 − p / (2·c·n^δ))`.
pub fn critical_value(p: f64, n_active: usize, delta: f64, c: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("p = {p} not in (0, 1)")));
    }
    let scale = c * (n_active as f64).powf(delta);
    let tail = p / (2.0 * scale);
    if !(tail > 0.0 && tail < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "critical value argument 1 - {tail} outside (1/2, 1)"
        )));
    }
    Ok(normal_upper_quantile(tail))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// 1-based stage number.
    pub stage: usize,
    pub active_set: Vec<usize>,
    /// Aligned with `active_set`.
    pub t_stats: Vec<f64>,
    /// Candidates whose t-ratio was forced to zero (collinear with the
    /// conditioning set).
    pub degenerate: Vec<usize>,
    pub threshold: f64,
    /// Largest-|t| candidate among those passing the threshold.
    pub chosen: Option<usize>,
    pub passed_count: usize,
    /// Candidates admitted at this stage: `chosen` for BMT, every passing
    /// candidate for OCMT.
    pub admitted: Vec<usize>,
}

/// Post-selection OLS on `[Z, X_selected]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PostSelection {
    /// Length `n`; zero off the selected set.
    pub coefficients_full: DVector<f64>,
    /// Coefficients on the columns of `Z`.
    pub control_coefficients: DVector<f64>,
    /// Covariance of the selected coefficients, in selection order.
    pub vcov_selected: DMatrix<f64>,
    pub sigma2_hat: f64,
    /// Present when the refit is a regular full-rank OLS fit.
    pub fit: Option<RegressionFit>,
}

impl PostSelection {
    pub fn is_exact(&self) -> bool {
        self.fit.is_some()
    }

    /// Fitted value for one row of controls and candidates.
    pub fn predict_row(&self, z: &[f64], x: &[f64]) -> f64 {
        let zc: f64 = self
            .control_coefficients
            .iter()
            .zip(z)
            .map(|(b, v)| b * v)
            .sum();
        let xc: f64 = self
            .coefficients_full
            .iter()
            .zip(x)
            .filter(|(b, _)| **b != 0.0)
            .map(|(b, v)| b * v)
            .sum();
        zc + xc
    }

    /// Like [`PostSelection::predict_row`], supplying the constant when the
    /// selector prepended one to the controls.
    pub fn predict(&self, z: &[f64], x: &[f64]) -> f64 {
        if self.control_coefficients.len() == z.len() + 1 {
            let mut zc = Vec::with_capacity(z.len() + 1);
            zc.push(1.0);
            zc.extend_from_slice(z);
            self.predict_row(&zc, x)
        } else {
            self.predict_row(z, x)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Selected candidate indices in order of admission.
    pub selected: Vec<usize>,
    pub trace: Vec<StageRecord>,
    pub post: PostSelection,
}

impl SelectionResult {
    /// Number of stages that admitted at least one regressor.
    pub fn productive_stages(&self) -> usize {
        self.trace.iter().filter(|s| !s.admitted.is_empty()).count()
    }

    pub fn coefficients_full(&self) -> &DVector<f64> {
        &self.post.coefficients_full
    }
}

/// OLS of `y` on `[Z, X_selected]`, with the selected coefficients scattered
/// into a length-`n` vector.
pub fn post_selection_estimate(
    dataset: &Dataset,
    selected: &[usize],
    robust: bool,
) -> Result<PostSelection> {
    let n = dataset.n();
    if let Some(&j) = selected.iter().find(|&&j| j >= n) {
        return Err(Error::IndexOutOfRange { index: j, n });
    }
    let w = dataset.conditioning_matrix(selected);
    let cov = if robust {
        Covariance::Hc1
    } else {
        Covariance::Classical
    };
    let fit = ols_fit_with(&dataset.y, &w, cov)?;
    let zeta = dataset.zeta();
    let mut coefficients_full = DVector::zeros(n);
    for (k, &j) in selected.iter().enumerate() {
        coefficients_full[j] = fit.coefficients[zeta + k];
    }
    let control_coefficients = fit.coefficients.rows(0, zeta).into_owned();
    let vcov_selected = fit
        .vcov
        .view((zeta, zeta), (selected.len(), selected.len()))
        .into_owned();
    Ok(PostSelection {
        coefficients_full,
        control_coefficients,
        vcov_selected,
        sigma2_hat: fit.sigma2_hat,
        fit: Some(fit),
    })
}

/// Post-selection refit that degrades to the minimum-norm least-squares
/// solution when `[Z, X_selected]` is not of full column rank (for example,
/// when OCMT admits more regressors than there are observations).
pub fn post_selection_or_min_norm(
    dataset: &Dataset,
    selected: &[usize],
    robust: bool,
) -> Result<PostSelection> {
    match post_selection_estimate(dataset, selected, robust) {
        Ok(post) => Ok(post),
        Err(Error::RankDeficient { .. }) | Err(Error::DimensionMismatch(_)) => {
            let w = dataset.conditioning_matrix(selected);
            let dim = w.nrows().max(w.ncols()) as f64;
            let svd = w.svd(true, true);
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            let eps = smax * 1e-10 * dim;
            let coef = svd
                .solve(&dataset.y, eps)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let n = dataset.n();
            let zeta = dataset.zeta();
            let mut coefficients_full = DVector::zeros(n);
            for (k, &j) in selected.iter().enumerate() {
                coefficients_full[j] = coef[zeta + k];
            }
            Ok(PostSelection {
                coefficients_full,
                control_coefficients: coef.rows(0, zeta).into_owned(),
                vcov_selected: DMatrix::from_element(selected.len(), selected.len(), f64::NAN),
                sigma2_hat: f64::NAN,
                fit: None,
            })
        }
        Err(e) => Err(e),
    }
}

fn prepare(dataset: &Dataset, config: &SelectionConfig) -> Result<Dataset> {
    config.validate()?;
    Ok(if config.add_intercept {
        dataset.with_intercept()
    } else {
        dataset.clone()
    })
}

fn default_stage_cap(ds: &Dataset) -> usize {
    ds.n().min(ds.t().saturating_sub(ds.zeta() + 2))
}

/// Orders `(|t|, index)` so that larger |t| wins and ties go to the lower index.
fn better(a: (usize, f64), b: (usize, f64)) -> bool {
    a.1.abs() > b.1.abs() || (a.1.abs() == b.1.abs() && a.0 < b.0)
}

struct StageOutcome {
    record: StageRecord,
    passing: Vec<usize>,
}

fn run_stage(
    ds: &Dataset,
    selected: &[usize],
    active: &[usize],
    stage: usize,
    threshold: f64,
    cov: Covariance,
) -> Result<StageOutcome> {
    let stats = batch_conditional_t_stats_with(ds, selected, active, cov)?;
    let degenerate = stats
        .iter()
        .filter(|(_, s)| s.flag == TStatFlag::Degenerate)
        .map(|(j, _)| *j)
        .collect();
    let passing: Vec<(usize, f64)> = stats
        .iter()
        .filter(|(_, s)| s.flag != TStatFlag::Degenerate && s.value.abs() > threshold)
        .map(|(j, s)| (*j, s.value))
        .collect();
    let chosen = passing
        .iter()
        .copied()
        .reduce(|best, cand| if better(cand, best) { cand } else { best })
        .map(|(j, _)| j);
    Ok(StageOutcome {
        record: StageRecord {
            stage,
            active_set: active.to_vec(),
            t_stats: stats.iter().map(|(_, s)| s.value).collect(),
            degenerate,
            threshold,
            chosen,
            passed_count: passing.len(),
            admitted: Vec::new(),
        },
        passing: passing.into_iter().map(|(j, _)| j).collect(),
    })
}

/// Boosting with multiple testing.
pub fn bmt_select(dataset: &Dataset, config: &SelectionConfig) -> Result<SelectionResult> {
    let ds = prepare(dataset, config)?;
    let n = ds.n();
    let t = ds.t();
    let cov = config.covariance();
    let cap = config.max_stages.unwrap_or_else(|| default_stage_cap(&ds));
    let mut selected: Vec<usize> = Vec::new();
    let mut active: Vec<usize> = (0..n).collect();
    let mut trace = Vec::new();

    while selected.len() < cap && !active.is_empty() {
        let q = ds.zeta() + selected.len();
        if t < q + 3 {
            break;
        }
        let stage = trace.len() + 1;
        let n_eff = if config.shrink_n_per_stage {
            active.len()
        } else {
            n
        };
        let delta = if stage == 1 {
            config.delta
        } else {
            config.delta_star
        };
        let threshold = critical_value(config.p, n_eff, delta, config.c)?;
        let StageOutcome { mut record, .. } =
            run_stage(&ds, &selected, &active, stage, threshold, cov)?;
        match record.chosen {
            Some(j) => {
                record.admitted = vec![j];
                trace.push(record);
                selected.push(j);
                active.retain(|&a| a != j);
            }
            None => {
                trace.push(record);
                break;
            }
        }
    }

    let post = post_selection_or_min_norm(&ds, &selected, config.robust_se)?;
    Ok(SelectionResult {
        selected,
        trace,
        post,
    })
}

/// One covariate at a time multiple testing, continued over stages.
///
/// The critical value always uses the full candidate count `n`.
pub fn ocmt_select(dataset: &Dataset, config: &SelectionConfig) -> Result<SelectionResult> {
    let ds = prepare(dataset, config)?;
    let n = ds.n();
    let t = ds.t();
    let cov = config.covariance();
    let cap = config.max_stages.unwrap_or_else(|| default_stage_cap(&ds));
    let mut selected: Vec<usize> = Vec::new();
    let mut active: Vec<usize> = (0..n).collect();
    let mut trace = Vec::new();

    while trace.len() < cap && !active.is_empty() {
        let q = ds.zeta() + selected.len();
        if t < q + 3 {
            break;
        }
        let stage = trace.len() + 1;
        let delta = if stage == 1 {
            config.delta
        } else {
            config.delta_star
        };
        let threshold = critical_value(config.p, n, delta, config.c)?;
        let outcome = match run_stage(&ds, &selected, &active, stage, threshold, cov) {
            Ok(o) => o,
            // The conditioning set can become numerically singular once many
            // correlated proxies are in; nothing more can be tested.
            Err(Error::RankDeficient { .. }) if stage > 1 => break,
            Err(e) => return Err(e),
        };
        let StageOutcome {
            mut record,
            passing,
        } = outcome;
        if passing.is_empty() {
            trace.push(record);
            break;
        }
        record.admitted = passing.clone();
        trace.push(record);
        selected.extend(passing.iter().copied());
        active.retain(|a| !passing.contains(a));
    }

    let post = post_selection_or_min_norm(&ds, &selected, config.robust_se)?;
    Ok(SelectionResult {
        selected,
        trace,
        post,
    })
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

    #[test]
    fn critical_value_reference_points() {
        let one = critical_value(0.3173105, 1, 0.7, 1.0).unwrap();
        assert!((one - 1.0000000162476559558).abs() < 1e-9);
        let cv = critical_value(0.05, 100, 1.0, 1.0).unwrap();
        assert!((cv - 3.4807564043462127774).abs() < 1e-9);
    }

    #[test]
    fn critical_value_monotone() {
        let base = critical_value(0.05, 100, 1.0, 1.0).unwrap();
        assert!(critical_value(0.05, 200, 1.0, 1.0).unwrap() > base);
        assert!(critical_value(0.05, 100, 1.5, 1.0).unwrap() > base);
        assert!(critical_value(0.05, 100, 1.0, 2.0).unwrap() > base);
        assert!(critical_value(0.10, 100, 1.0, 1.0).unwrap() < base);
    }

    #[test]
    fn critical_value_rejects_bad_arguments() {
        assert!(critical_value(0.0, 10, 1.0, 1.0).is_err());
        assert!(critical_value(1.0, 10, 1.0, 1.0).is_err());
        // c·n^δ = 0.2 < p/2 would push the argument below 1/2
        assert!(critical_value(0.5, 1, 1.0, 0.2).is_err());
        assert!(critical_value(0.05, 0, 1.0, 1.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SelectionConfig::default().validate().is_ok());
        let bad = SelectionConfig {
            delta_star: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SelectionConfig {
            p: 1.2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn dominant_signal_selected_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let t = 200;
        let x = randn(&mut rng, t, 30);
        let e = randn(&mut rng, t, 1);
        let y = x.column(0) * 2.0 + e.column(0) * 0.1;
        let ds = Dataset::from_xy(y, x).unwrap();
        let res = bmt_select(&ds, &SelectionConfig::default()).unwrap();
        assert_eq!(res.selected, vec![0]);
        assert_eq!(res.productive_stages(), 1);
        assert!(res.trace.len() <= 2);
        if let Some(s2) = res.trace.get(1) {
            assert!(s2.chosen.is_none());
        }
        assert!((res.post.coefficients_full[0] - 2.0).abs() < 0.05);
    }

    #[test]
    fn trace_respects_threshold_discipline() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = 150;
        let x = randn(&mut rng, t, 25);
        let e = randn(&mut rng, t, 1);
        let y = x.column(2) * 1.0 + x.column(9) * 0.6 - x.column(17) * 0.4 + e.column(0);
        let ds = Dataset::from_xy(y, x).unwrap();
        let res = bmt_select(&ds, &SelectionConfig::default()).unwrap();
        let mut seen = Vec::new();
        for rec in &res.trace {
            assert_eq!(rec.active_set.len(), 25 - seen.len());
            if let Some(c) = rec.chosen {
                let pos = rec.active_set.iter().position(|&a| a == c).unwrap();
                let tc = rec.t_stats[pos].abs();
                assert!(tc > rec.threshold);
                assert!(rec.t_stats.iter().all(|t| t.abs() <= tc));
                assert!(!seen.contains(&c));
                seen.push(c);
            }
        }
        assert_eq!(seen, res.selected);
        let nz: Vec<usize> = (0..25)
            .filter(|&j| res.post.coefficients_full[j] != 0.0)
            .collect();
        let mut sorted = res.selected.clone();
        sorted.sort();
        assert_eq!(nz, sorted);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert!(better((1, 3.0), (2, -3.0)));
        assert!(!better((2, 3.0), (1, 3.0)));
        assert!(better((5, 4.0), (1, 3.0)));
    }

    #[test]
    fn duplicate_column_is_skipped_after_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = 100;
        let mut x = randn(&mut rng, t, 5);
        let c0 = x.column(0).into_owned();
        x.set_column(1, &c0);
        let e = randn(&mut rng, t, 1);
        let y = x.column(0) * 1.5 + e.column(0) * 0.5;
        let ds = Dataset::from_xy(y, x).unwrap();
        let res = bmt_select(&ds, &SelectionConfig::default()).unwrap();
        assert_eq!(res.selected, vec![0]);
        let second = &res.trace[1];
        assert!(second.degenerate.contains(&1));
    }

    #[test]
    fn ocmt_admits_all_passing() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t = 300;
        let x1 = randn(&mut rng, t, 1);
        let noise = randn(&mut rng, t, 1);
        let proxy = &x1 * 0.8 + noise * 0.6;
        let rest = randn(&mut rng, t, 8);
        let mut x = DMatrix::zeros(t, 10);
        x.set_column(0, &x1.column(0));
        x.set_column(1, &proxy.column(0));
        x.columns_mut(2, 8).copy_from(&rest);
        let e = randn(&mut rng, t, 1);
        let y = x1.column(0) + e.column(0);
        let ds = Dataset::from_xy(y, x).unwrap();
        let cfg = SelectionConfig::default();
        let o = ocmt_select(&ds, &cfg).unwrap();
        assert!(o.selected.contains(&0) && o.selected.contains(&1));
        assert_eq!(o.trace[0].admitted.len(), o.trace[0].passed_count);
        let b = bmt_select(&ds, &cfg).unwrap();
        assert_eq!(b.selected, vec![0]);
    }

    #[test]
    fn post_selection_empty_with_constant() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 6.0]);
        let x = DMatrix::from_fn(4, 3, |i, j| ((i + 1) * (j + 2)) as f64);
        let ds = Dataset::from_xy(y, x).unwrap().with_intercept();
        let post = post_selection_estimate(&ds, &[], false).unwrap();
        assert!(post.coefficients_full.iter().all(|&b| b == 0.0));
        assert!((post.control_coefficients[0] - 3.0).abs() < 1e-12);
        assert_eq!(post.vcov_selected.nrows(), 0);
    }

    #[test]
    fn post_selection_exact_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = randn(&mut rng, 40, 6);
        let y = x.column(1) * 1.5 - x.column(4) * 0.5;
        let ds = Dataset::from_xy(y, x).unwrap();
        let post = post_selection_estimate(&ds, &[4, 1], false).unwrap();
        assert!((post.coefficients_full[1] - 1.5).abs() < 1e-12);
        assert!((post.coefficients_full[4] + 0.5).abs() < 1e-12);
        assert!(post.vcov_selected.amax() < 1e-20);
        assert!(matches!(
            post_selection_estimate(&ds, &[9], false),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn min_norm_fallback_when_overfull() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let x = randn(&mut rng, 10, 12);
        let y = DVector::from_iterator(10, randn(&mut rng, 10, 1).iter().cloned());
        let ds = Dataset::from_xy(y.clone(), x).unwrap();
        let sel: Vec<usize> = (0..12).collect();
        assert!(post_selection_estimate(&ds, &sel, false).is_err());
        let post = post_selection_or_min_norm(&ds, &sel, false).unwrap();
        assert!(!post.is_exact());
        let fitted = &ds.x * &post.coefficients_full;
        assert!((fitted - y).amax() < 1e-8);
    }
}
