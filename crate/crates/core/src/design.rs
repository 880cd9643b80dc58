//! Design construction for applied work: constants, trends, lags, the first
//! principal component of the candidates, and candidate standardization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{first_principal_component, Dataset};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignOptions {
    pub add_constant: bool,
    pub add_trend: bool,
    /// Lags of the target added to the controls.
    pub lag_target: usize,
    /// Lags of every candidate added to the candidates.
    pub lags_of_candidates: usize,
    pub standardize: bool,
    pub add_first_pc: bool,
}

/// Column means and sample standard deviations used to standardize the
/// candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    /// Map coefficients on standardized candidates to the original scale.
    /// Returns the coefficients and the amount to add to the intercept.
    pub fn back_transform(&self, coefficients: &DVector<f64>) -> (DVector<f64>, f64) {
        let orig = DVector::from_fn(coefficients.len(), |j, _| coefficients[j] / self.scales[j]);
        let shift = -orig.iter().zip(&self.means).map(|(b, m)| b * m).sum::<f64>();
        (orig, shift)
    }
}

/// Built design and the standardization applied to its candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub dataset: Dataset,
    pub standardization: Option<Standardization>,
}

fn standardize_vec(v: &mut [f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    for a in v.iter_mut() {
        *a = (*a - mean) / sd;
    }
    (mean, sd)
}

/// Append derived columns. Controls are ordered
/// `[constant, given controls, target lags, trend, first PC]`; candidate lags
/// follow the candidates lag by lag.
pub fn build_design(dataset: &Dataset, options: &DesignOptions) -> Result<Design> {
    let drop = options.lag_target.max(options.lags_of_candidates);
    let t_all = dataset.t();
    if t_all < drop + 3 {
        return Err(Error::InsufficientRows {
            needed: drop + 3,
            got: t_all,
        });
    }
    let t = t_all - drop;
    let n0 = dataset.n();

    let y = dataset.y.rows(drop, t).into_owned();

    let mut x_cols: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    for j in 0..n0 {
        x_cols.push(dataset.x.column(j).rows(drop, t).iter().copied().collect());
        names.push(dataset.names[j].clone());
    }
    for lag in 1..=options.lags_of_candidates {
        for j in 0..n0 {
            x_cols.push(dataset.x.column(j).rows(drop - lag, t).iter().copied().collect());
            names.push(format!("{}_lag{lag}", dataset.names[j]));
        }
    }
    let x_raw = DMatrix::from_fn(t, x_cols.len(), |i, j| x_cols[j][i]);

    let mut z_cols: Vec<Vec<f64>> = Vec::new();
    let mut z_names = Vec::new();
    if options.add_constant {
        z_cols.push(vec![1.0; t]);
        z_names.push("const".to_string());
    }
    for j in 0..dataset.zeta() {
        z_cols.push(dataset.z.column(j).rows(drop, t).iter().copied().collect());
        z_names.push(dataset.control_names[j].clone());
    }
    for lag in 1..=options.lag_target {
        z_cols.push(dataset.y.rows(drop - lag, t).iter().copied().collect());
        z_names.push(format!("y_lag{lag}"));
    }
    if options.add_trend {
        let mut trend: Vec<f64> = (1..=t).map(|i| i as f64).collect();
        standardize_vec(&mut trend);
        z_cols.push(trend);
        z_names.push("trend".to_string());
    }
    if options.add_first_pc {
        let pc = first_principal_component(&x_raw)?;
        z_cols.push(pc.iter().copied().collect());
        z_names.push("pc1".to_string());
    }
    let z = DMatrix::from_fn(t, z_cols.len(), |i, j| z_cols[j][i]);

    let (x, standardization) = if options.standardize {
        let mut x = x_raw;
        let mut means = Vec::with_capacity(x.ncols());
        let mut scales = Vec::with_capacity(x.ncols());
        for mut col in x.column_iter_mut() {
            let mut v: Vec<f64> = col.iter().copied().collect();
            let (m, s) = standardize_vec(&mut v);
            col.copy_from_slice(&v);
            means.push(m);
            scales.push(s);
        }
        (x, Some(Standardization { means, scales }))
    } else {
        (x_raw, None)
    };

    Ok(Design {
        dataset: Dataset::with_control_names(y, z, x, names, z_names)?,
        standardization,
    })
}
