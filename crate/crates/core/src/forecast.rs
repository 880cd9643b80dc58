//! Pseudo out-of-sample evaluation: select on a training window, forecast
//! the remaining rows directly at each horizon.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::Standardization;
use crate::error::{Error, Result};
use crate::metrics::{r2_oos, rmsfe};
use crate::regression::Dataset;
use crate::report::{ForecastStats, MethodReport, Provenance, ReportBundle};
use crate::selector::SelectionResult;
use crate::simulation::{run_method, Method, MethodSettings};

/// How the sample is split into training and evaluation windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    TrainFraction(f64),
    TrainLength(usize),
}

impl Default for Split {
    fn default() -> Self {
        Split::TrainFraction(0.8)
    }
}

impl Split {
    pub fn train_len(&self, t: usize) -> Result<usize> {
        let len = match *self {
            Split::TrainFraction(f) => {
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "train fraction {f} not in (0, 1)"
                    )));
                }
                (f * t as f64).floor() as usize
            }
            Split::TrainLength(l) => l,
        };
        if len >= t {
            return Err(Error::InvalidArgument(format!(
                "training window of {len} rows leaves nothing to evaluate (T = {t})"
            )));
        }
        Ok(len)
    }
}

/// Rows `rows` of the regressors paired with targets shifted `h − 1` ahead.
fn shifted(dataset: &Dataset, rows: std::ops::Range<usize>, h: usize) -> Result<Dataset> {
    let idx: Vec<usize> = rows.collect();
    let y = DVector::from_fn(idx.len(), |i, _| dataset.y[idx[i] + h - 1]);
    let z: DMatrix<f64> = dataset.z.select_rows(&idx);
    let x: DMatrix<f64> = dataset.x.select_rows(&idx);
    Dataset::with_control_names(y, z, x, dataset.names.clone(), dataset.control_names.clone())
}

fn predictions(dataset: &Dataset, result: &SelectionResult, rows: &[usize]) -> Vec<f64> {
    rows.iter()
        .map(|&r| {
            let z: Vec<f64> = dataset.z.row(r).iter().copied().collect();
            let x: Vec<f64> = dataset.x.row(r).iter().copied().collect();
            result.post.predict(&z, &x)
        })
        .collect()
}

/// Select on the first `train_len` rows with each method and forecast the
/// rest. At horizon `h` the model is refit with the target moved `h − 1`
/// rows ahead, and `rmsfe` covers every evaluation target; `rmsfe_first_h`
/// scores the one-step forecasts of the first `h` evaluation points.
pub fn forecast_evaluate(
    dataset: &Dataset,
    split: Split,
    methods: &[Method],
    horizons: &[usize],
    settings: &MethodSettings,
    standardization: Option<&Standardization>,
) -> Result<ReportBundle> {
    let t = dataset.t();
    let train_len = split.train_len(t)?;
    if horizons.contains(&0) {
        return Err(Error::InvalidArgument("horizons start at 1".into()));
    }
    let max_h = horizons.iter().copied().max().unwrap_or(1);
    let needed = dataset.zeta() + 6;
    if train_len + 1 < needed + max_h {
        return Err(Error::InsufficientRows {
            needed: needed + max_h - 1,
            got: train_len,
        });
    }
    let eval_targets: Vec<usize> = (train_len..t).collect();
    let actuals: Vec<f64> = eval_targets.iter().map(|&s| dataset.y[s]).collect();
    let bench = dataset.y.rows(0, train_len).mean();

    let mut reports = Vec::with_capacity(methods.len());
    for &m in methods {
        let train1 = dataset.rows(0, train_len);
        let fit1 = run_method(m, &train1, settings)?;
        let one_step = predictions(dataset, &fit1, &eval_targets);
        let mut report = MethodReport::from_selection(m, &train1, &fit1, standardization);
        for &h in horizons {
            let preds = if h == 1 {
                one_step.clone()
            } else {
                let train = shifted(dataset, 0..train_len + 1 - h, h)?;
                let fit = run_method(m, &train, settings)?;
                let rows: Vec<usize> = eval_targets.iter().map(|&s| s + 1 - h).collect();
                predictions(dataset, &fit, &rows)
            };
            let first = h.min(actuals.len());
            report.forecasts.push(ForecastStats {
                horizon: h,
                rmsfe: rmsfe(&actuals, &preds, actuals.len())?,
                rmsfe_first_h: rmsfe(&actuals[..first], &one_step[..first], first)?,
                r2_oos: r2_oos(&actuals, &preds, bench).ok(),
                evaluation_points: actuals.len(),
            });
        }
        reports.push(report);
    }
    Ok(ReportBundle {
        provenance: Provenance::default(),
        t: train_len,
        t_eval: t - train_len,
        n: dataset.n(),
        rows_dropped: 0,
        methods: reports,
    })
}

/// Select on the whole sample with each method.
pub fn select_report(
    dataset: &Dataset,
    methods: &[Method],
    settings: &MethodSettings,
    standardization: Option<&Standardization>,
) -> Result<ReportBundle> {
    let reports = methods
        .iter()
        .map(|&m| {
            let res = run_method(m, dataset, settings)?;
            Ok(MethodReport::from_selection(m, dataset, &res, standardization))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReportBundle {
        provenance: Provenance::default(),
        t: dataset.t(),
        t_eval: 0,
        n: dataset.n(),
        rows_dropped: 0,
        methods: reports,
    })
}
