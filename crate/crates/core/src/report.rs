//! Result bundles and table output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::Standardization;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::regression::Dataset;
use crate::selector::SelectionResult;
use crate::simulation::{GridResult, Method};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the canonical configuration text.
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(config_text: &str, seed: u64) -> Self {
        Self {
            config_hash: sha256_hex(config_text.as_bytes()),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Out-of-sample accuracy at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastStats {
    pub horizon: usize,
    /// Direct `h`-step forecasts over the whole evaluation window.
    pub rmsfe: f64,
    /// One-step forecasts over the first `h` evaluation points.
    pub rmsfe_first_h: f64,
    /// Against the training-window mean; absent when that benchmark is exact.
    pub r2_oos: Option<f64>,
    pub evaluation_points: usize,
}

/// Fit of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub selected: Vec<String>,
    /// Post-selection coefficients of the selected candidates, original scale.
    pub coefficients: Vec<f64>,
    /// Absent when the refit is not a regular OLS fit.
    pub std_errors: Option<Vec<f64>>,
    pub t_stats: Option<Vec<f64>>,
    pub control_names: Vec<String>,
    pub control_coefficients: Vec<f64>,
    pub rmse_in_sample: f64,
    /// Absent for a perfect fit.
    pub bic: Option<f64>,
    pub forecasts: Vec<ForecastStats>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl MethodReport {
    /// Summarize a selection made on `dataset`. With a standardization, the
    /// candidate coefficients are mapped back to the original scale and the
    /// offset goes to the constant (which must then be among the controls).
    pub fn from_selection(
        method: Method,
        dataset: &Dataset,
        result: &SelectionResult,
        standardization: Option<&Standardization>,
    ) -> Self {
        let post = &result.post;
        let mut control_names = dataset.control_names.clone();
        if post.control_coefficients.len() == dataset.zeta() + 1 {
            control_names.insert(0, "const".to_string());
        }
        let mut control_coefficients: Vec<f64> = post.control_coefficients.iter().copied().collect();
        let mut full = post.coefficients_full.clone();
        let mut se_scale = vec![1.0; dataset.n()];
        if let Some(st) = standardization {
            let (orig, shift) = st.back_transform(&full);
            full = orig;
            se_scale = st.scales.iter().map(|s| 1.0 / s).collect();
            if let Some(c) = control_names.iter().position(|n| n == "const") {
                control_coefficients[c] += shift;
            }
        }
        let zeta = post.control_coefficients.len();
        let (std_errors, t_stats) = match &post.fit {
            Some(fit) => (
                Some(
                    result
                        .selected
                        .iter()
                        .enumerate()
                        .map(|(k, &j)| fit.se[zeta + k] * se_scale[j])
                        .collect(),
                ),
                Some((0..result.selected.len()).map(|k| fit.t_stats[zeta + k]).collect()),
            ),
            None => (None, None),
        };
        let t = dataset.t();
        let rss: f64 = (0..t)
            .map(|i| {
                let z: Vec<f64> = dataset.z.row(i).iter().copied().collect();
                let x: Vec<f64> = dataset.x.row(i).iter().copied().collect();
                (dataset.y[i] - post.predict(&z, &x)).powi(2)
            })
            .sum();
        let tf = t as f64;
        let params = (zeta + result.selected.len()) as f64;
        Self {
            method,
            selected: result.selected.iter().map(|&j| dataset.names[j].clone()).collect(),
            coefficients: result.selected.iter().map(|&j| full[j]).collect(),
            std_errors,
            t_stats,
            control_names,
            control_coefficients,
            rmse_in_sample: (rss / tf).sqrt(),
            bic: finite(tf * (rss / tf).ln() + params * tf.ln()),
            forecasts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub provenance: Provenance,
    /// Rows used for fitting.
    pub t: usize,
    pub t_eval: usize,
    pub n: usize,
    pub rows_dropped: usize,
    pub methods: Vec<MethodReport>,
}

impl ReportBundle {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            row: e.line(),
            column: e.column().to_string(),
            message: e.to_string(),
        })
    }
}

/// One CSV per metric: design parameters, then one column per method.
pub fn grid_table(grid: &GridResult, metric: &str) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["design", "t", "n", "k", "alpha", "vif", "pi"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(grid.methods.iter().map(|m| m.to_string()));
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for (d, cfg) in grid.designs.iter().enumerate() {
        let mut rec = vec![
            d.to_string(),
            cfg.t.to_string(),
            cfg.n.to_string(),
            cfg.k.to_string(),
            cfg.alpha.to_string(),
            cfg.vif.to_string(),
            cfg.pi.to_string(),
        ];
        for r in &grid.reports[d] {
            let v = r
                .get(metric)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown metric '{metric}'")))?;
            rec.push(v.to_string());
        }
        w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Write `<metric>.csv` for every metric plus `grid.json`; returns the paths.
pub fn write_grid_tables(dir: &Path, grid: &GridResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for metric in MetricsReport::NAMES {
        let p = dir.join(format!("{metric}.csv"));
        fs::write(&p, grid_table(grid, metric)?)?;
        paths.push(p);
    }
    let p = dir.join("grid.json");
    let json = serde_json::to_string_pretty(grid).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(&p, json)?;
    paths.push(p);
    Ok(paths)
}

pub fn read_grid_json(path: &Path) -> Result<GridResult> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        row: e.line(),
        column: e.column().to_string(),
        message: e.to_string(),
    })
}
