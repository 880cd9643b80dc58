//! Selection and forecasting performance measures.
//!
//! Candidate indices are 0-based throughout. Ratios whose denominator is
//! zero evaluate to 0, except TPR with an empty true set, which is 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn new(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn selected(&self) -> usize {
        self.tp + self.fp
    }

    /// TPR was set to 1 because there were no true signals.
    pub fn tpr_is_conventional(&self) -> bool {
        self.tp + self.fn_ == 0
    }
}

pub fn confusion(selected: &[usize], true_set: &[usize], n: usize) -> Result<ConfusionCounts> {
    let mut is_sel = vec![false; n];
    let mut is_true = vec![false; n];
    for &j in selected {
        *is_sel.get_mut(j).ok_or(Error::IndexOutOfRange { index: j, n })? = true;
    }
    for &j in true_set {
        *is_true.get_mut(j).ok_or(Error::IndexOutOfRange { index: j, n })? = true;
    }
    let mut c = ConfusionCounts::default();
    for (s, t) in is_sel.into_iter().zip(is_true) {
        match (s, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Matthews correlation coefficient; 0 if any marginal is empty.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / den.sqrt()
}

pub fn tdr(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fp)
}

pub fn fdr(c: &ConfusionCounts) -> f64 {
    ratio(c.fp, c.tp + c.fp)
}

pub fn tpr(c: &ConfusionCounts) -> f64 {
    if c.tpr_is_conventional() {
        1.0
    } else {
        ratio(c.tp, c.tp + c.fn_)
    }
}

pub fn fpr(c: &ConfusionCounts) -> f64 {
    ratio(c.fp, c.fp + c.tn)
}

/// Harmonic mean of TDR and TPR.
pub fn f1(c: &ConfusionCounts) -> f64 {
    let (p, r) = (tdr(c), tpr(c));
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `√( (1/r) Σ_j ‖β̃⁽ʲ⁾ − β‖² )`.
pub fn coef_rmse(estimates: &[Vec<f64>], beta_true: &[f64]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("no replications".into()));
    }
    let mut total = 0.0;
    for b in estimates {
        if b.len() != beta_true.len() {
            return Err(Error::DimensionMismatch(format!(
                "estimate of length {} against truth of length {}",
                b.len(),
                beta_true.len()
            )));
        }
        total += squared_distance(b, beta_true);
    }
    Ok((total / estimates.len() as f64).sqrt())
}

/// Root mean squared forecast error. Consecutive blocks of `horizon` points
/// form one replication; replications are averaged with equal weight.
pub fn rmsfe(actuals: &[f64], predictions: &[f64], horizon: usize) -> Result<f64> {
    if actuals.len() != predictions.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} actuals, {} predictions",
            actuals.len(),
            predictions.len()
        )));
    }
    if horizon == 0 || actuals.is_empty() || actuals.len() % horizon != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} points cannot be split into blocks of {horizon}",
            actuals.len()
        )));
    }
    let reps = actuals.len() / horizon;
    let total: f64 = actuals
        .chunks(horizon)
        .zip(predictions.chunks(horizon))
        .map(|(a, p)| squared_distance(a, p) / horizon as f64)
        .sum();
    Ok((total / reps as f64).sqrt())
}

/// `1 − MSE(predictions) / MSE(benchmark_mean)`.
pub fn r2_oos(actuals: &[f64], predictions: &[f64], benchmark_mean: f64) -> Result<f64> {
    if actuals.len() != predictions.len() || actuals.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} actuals, {} predictions",
            actuals.len(),
            predictions.len()
        )));
    }
    let model = squared_distance(actuals, predictions);
    let bench: f64 = actuals
        .iter()
        .map(|a| (a - benchmark_mean) * (a - benchmark_mean))
        .sum();
    if bench == 0.0 {
        return Err(Error::InvalidArgument(
            "benchmark has zero forecast error".into(),
        ));
    }
    Ok(1.0 - model / bench)
}

/// Raw outcome of one method on one replication.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReplicationMetrics {
    pub counts: ConfusionCounts,
    /// `‖β̃ − β‖²`.
    pub sq_coef_error: f64,
    /// Mean squared forecast error over the hold-out points.
    pub sq_forecast_error: f64,
}

impl ReplicationMetrics {
    pub fn new(
        selected: &[usize],
        true_set: &[usize],
        beta_hat: &[f64],
        beta_true: &[f64],
        forecast_errors: &[f64],
    ) -> Result<Self> {
        let counts = confusion(selected, true_set, beta_true.len())?;
        if beta_hat.len() != beta_true.len() {
            return Err(Error::DimensionMismatch("coefficient vectors".into()));
        }
        let sq_forecast_error = if forecast_errors.is_empty() {
            0.0
        } else {
            forecast_errors.iter().map(|e| e * e).sum::<f64>() / forecast_errors.len() as f64
        };
        Ok(Self {
            counts,
            sq_coef_error: squared_distance(beta_hat, beta_true),
            sq_forecast_error,
        })
    }
}

/// Scores averaged over replications. RMSE and RMSFE are square roots of
/// averaged squared errors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mcc: f64,
    pub f1: f64,
    pub tdr: f64,
    pub fdr: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub model_size: f64,
    pub rmse: f64,
    pub rmsfe: f64,
    pub replications: usize,
}

impl MetricsReport {
    pub fn from_replications(reps: &[ReplicationMetrics]) -> Self {
        let r = reps.len();
        if r == 0 {
            return Self::default();
        }
        let mean = |f: &dyn Fn(&ReplicationMetrics) -> f64| -> f64 {
            reps.iter().map(f).sum::<f64>() / r as f64
        };
        Self {
            mcc: mean(&|m| mcc(&m.counts)),
            f1: mean(&|m| f1(&m.counts)),
            tdr: mean(&|m| tdr(&m.counts)),
            fdr: mean(&|m| fdr(&m.counts)),
            tpr: mean(&|m| tpr(&m.counts)),
            fpr: mean(&|m| fpr(&m.counts)),
            model_size: mean(&|m| m.counts.selected() as f64),
            rmse: mean(&|m| m.sq_coef_error).sqrt(),
            rmsfe: mean(&|m| m.sq_forecast_error).sqrt(),
            replications: r,
        }
    }

    /// Metric by its table name.
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "mcc" => self.mcc,
            "f1" => self.f1,
            "tdr" => self.tdr,
            "fdr" => self.fdr,
            "tpr" => self.tpr,
            "fpr" => self.fpr,
            "model_size" => self.model_size,
            "rmse" => self.rmse,
            "rmsfe" => self.rmsfe,
            _ => return None,
        })
    }

    pub const NAMES: [&'static str; 9] = [
        "mcc",
        "f1",
        "tdr",
        "fdr",
        "tpr",
        "fpr",
        "model_size",
        "rmse",
        "rmsfe",
    ];
}
