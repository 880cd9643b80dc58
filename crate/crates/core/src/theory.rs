//! Population-level checks of the selection conditions: signal-to-proxy
//! dominance, stage-1 noncentralities, the irrepresentable condition, the
//! wedge interval and the stagewise proxy-correlation thresholds.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariances of one proxy with the fixed signal and the other signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyCovariance {
    pub sigma_i1: f64,
    pub sigma_ii: f64,
    pub sigma_i2: Vec<f64>,
}

/// Blocks of the population covariance seen from one signal `x₁`, the
/// remaining signals `X₂` and a list of proxies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub sigma11: f64,
    pub sigma_12: Vec<f64>,
    /// Rows of the covariance among the other signals.
    pub sigma22: Vec<Vec<f64>>,
    pub proxies: Vec<ProxyCovariance>,
    pub beta1: f64,
    pub beta2: Vec<f64>,
}

impl CovarianceSpec {
    pub fn validate(&self) -> Result<()> {
        let m = self.beta2.len();
        if !(self.sigma11 > 0.0) {
            return Err(Error::InvalidArgument("sigma11 must be positive".into()));
        }
        if self.sigma_12.len() != m
            || self.sigma22.len() != m
            || self.sigma22.iter().any(|r| r.len() != m)
        {
            return Err(Error::DimensionMismatch(format!(
                "other-signal blocks must have dimension {m}"
            )));
        }
        if (0..m).any(|i| !(self.sigma22[i][i] > 0.0)) {
            return Err(Error::InvalidArgument("Sigma22 diagonal must be positive".into()));
        }
        let big = self.sigma22.iter().flatten().fold(1.0_f64, |a, v| a.max(v.abs()));
        for i in 0..m {
            for j in 0..i {
                if (self.sigma22[i][j] - self.sigma22[j][i]).abs() > 1e-12 * big {
                    return Err(Error::InvalidArgument("Sigma22 must be symmetric".into()));
                }
            }
        }
        for (i, p) in self.proxies.iter().enumerate() {
            if !(p.sigma_ii > 0.0) {
                return Err(Error::InvalidArgument(format!("proxy {i}: sigma_ii must be positive")));
            }
            if p.sigma_i2.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "proxy {i}: sigma_i2 has {} entries, expected {m}",
                    p.sigma_i2.len()
                )));
            }
        }
        Ok(())
    }

    /// Extract the blocks from a full covariance matrix.
    pub fn from_full(
        sigma: &DMatrix<f64>,
        signal: usize,
        other_signals: &[usize],
        proxies: &[usize],
        beta1: f64,
        beta2: &[f64],
    ) -> Result<Self> {
        let p = sigma.nrows();
        if sigma.ncols() != p {
            return Err(Error::DimensionMismatch("covariance must be square".into()));
        }
        for &j in std::iter::once(&signal).chain(other_signals).chain(proxies) {
            if j >= p {
                return Err(Error::IndexOutOfRange { index: j, n: p });
            }
        }
        let spec = Self {
            sigma11: sigma[(signal, signal)],
            sigma_12: other_signals.iter().map(|&j| sigma[(signal, j)]).collect(),
            sigma22: other_signals
                .iter()
                .map(|&a| other_signals.iter().map(|&b| sigma[(a, b)]).collect())
                .collect(),
            proxies: proxies
                .iter()
                .map(|&i| ProxyCovariance {
                    sigma_i1: sigma[(i, signal)],
                    sigma_ii: sigma[(i, i)],
                    sigma_i2: other_signals.iter().map(|&j| sigma[(i, j)]).collect(),
                })
                .collect(),
            beta1,
            beta2: beta2.to_vec(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Two sides of an inequality and whether it holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Signal-to-proxy dominance for proxy `proxy_index`:
///
/// `σ₁₁β₁²(1 − σᵢᵢ⁻¹σᵢ₁)² + σᵢᵢ⁻¹(β₂′σᵢ₂)β₁(1 − σᵢᵢ⁻¹σᵢ₁)
///  + (β₂′σᵢ₂)²σ₁₁σᵢᵢ⁻¹(σ₁₁σᵢᵢ⁻¹ − 1)  >  3σ₁₁⁻¹(β₂′σ₁₂)²`.
pub fn dominance_condition(spec: &CovarianceSpec, proxy_index: usize) -> Result<ConditionReport> {
    spec.validate()?;
    let p = spec.proxies.get(proxy_index).ok_or(Error::IndexOutOfRange {
        index: proxy_index,
        n: spec.proxies.len(),
    })?;
    let s11 = spec.sigma11;
    let inv_ii = 1.0 / p.sigma_ii;
    let b1 = spec.beta1;
    let tracking = 1.0 - inv_ii * p.sigma_i1;
    let b2_si2 = dot(&spec.beta2, &p.sigma_i2);
    let b2_s12 = dot(&spec.beta2, &spec.sigma_12);
    let lhs = s11 * b1 * b1 * tracking * tracking
        + inv_ii * b2_si2 * b1 * tracking
        + b2_si2 * b2_si2 * s11 * inv_ii * (s11 * inv_ii - 1.0);
    let rhs = 3.0 / s11 * b2_s12 * b2_s12;
    Ok(ConditionReport {
        lhs,
        rhs,
        holds: lhs > rhs,
    })
}

/// Stage-1 noncentralities of the signal and of a proxy correlated `ρ`
/// with it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noncentrality {
    pub lambda_signal: f64,
    pub lambda_proxy: f64,
    /// `λ₁² − λᵢ²` as a difference of squares.
    pub gap: f64,
    /// The same gap from its closed form.
    pub gap_closed_form: f64,
}

pub fn stage1_noncentrality(
    beta: f64,
    sigma11: f64,
    sigma_u2: f64,
    rho_i1: f64,
    t: usize,
) -> Result<Noncentrality> {
    if !(rho_i1.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!("|rho| = {} must be below 1", rho_i1.abs())));
    }
    if !(sigma_u2 > 0.0) || !(sigma11 > 0.0) {
        return Err(Error::InvalidArgument("variances must be positive".into()));
    }
    let tf = t as f64;
    let one_m_r2 = 1.0 - rho_i1 * rho_i1;
    let b2s = beta * beta * sigma11;
    let lambda_signal = tf.sqrt() * beta * sigma11.sqrt() / sigma_u2.sqrt();
    let lambda_proxy =
        tf.sqrt() * beta * rho_i1 * sigma11.sqrt() / (sigma_u2 + b2s * one_m_r2).sqrt();
    let gap = lambda_signal * lambda_signal - lambda_proxy * lambda_proxy;
    let gap_closed_form =
        tf * b2s * one_m_r2 * (sigma_u2 + b2s) / (sigma_u2 * (sigma_u2 + b2s * one_m_r2));
    Ok(Noncentrality {
        lambda_signal,
        lambda_proxy,
        gap,
        gap_closed_form,
    })
}

/// `‖Σ₂₁Σ₁₁⁻¹ sign‖∞` over the complement of the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrrepresentableReport {
    pub value: f64,
    pub holds: bool,
}

pub fn irrepresentable_check(
    sigma: &DMatrix<f64>,
    support: &[usize],
    signs: &[f64],
) -> Result<IrrepresentableReport> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(Error::DimensionMismatch("covariance must be square".into()));
    }
    if signs.len() != support.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} signs for a support of size {}",
            signs.len(),
            support.len()
        )));
    }
    let mut in_support = vec![false; p];
    for &j in support {
        if j >= p {
            return Err(Error::IndexOutOfRange { index: j, n: p });
        }
        if in_support[j] {
            return Err(Error::InvalidArgument(format!("index {j} repeated in support")));
        }
        in_support[j] = true;
    }
    let rest: Vec<usize> = (0..p).filter(|&j| !in_support[j]).collect();
    let s11 = sigma.select_rows(support).select_columns(support);
    let s21 = sigma.select_rows(&rest).select_columns(support);
    let sv = s11.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if support.is_empty() {
        return Ok(IrrepresentableReport {
            value: 0.0,
            holds: true,
        });
    }
    if !(smin > crate::regression::RANK_TOLERANCE * smax) {
        return Err(Error::RankDeficient {
            ratio: if smax > 0.0 { smin / smax } else { 0.0 },
        });
    }
    let sign = nalgebra::DVector::from_column_slice(signs);
    let w = s11
        .lu()
        .solve(&sign)
        .ok_or(Error::RankDeficient { ratio: 0.0 })?;
    let value = if rest.is_empty() { 0.0 } else { (s21 * w).amax() };
    Ok(IrrepresentableReport {
        value,
        holds: value < 1.0,
    })
}

/// Range of proxy correlations where the Lasso fails but BMT succeeds in the
/// three-regressor design: `(1/2, 1/(1 + α))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WedgeInterval {
    pub lower: f64,
    pub upper: f64,
    pub nonempty: bool,
}

impl WedgeInterval {
    pub fn contains(&self, rho: f64) -> bool {
        rho > self.lower && rho < self.upper
    }
}

pub fn wedge_interval(alpha: f64) -> Result<WedgeInterval> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} not in (0, 1]")));
    }
    let upper = 1.0 / (1.0 + alpha);
    Ok(WedgeInterval {
        lower: 0.5,
        upper,
        nonempty: upper > 0.5,
    })
}

/// `|β_j| / Σ_{i ≥ j} |β_i|` for coefficients sorted by decreasing magnitude.
pub fn theorem7_thresholds(betas: &[f64]) -> Result<Vec<f64>> {
    if betas.is_empty() {
        return Err(Error::InvalidArgument("no coefficients".into()));
    }
    if betas.iter().any(|b| !(b.abs() > 0.0) || !b.is_finite()) {
        return Err(Error::InvalidArgument("coefficients must be finite and nonzero".into()));
    }
    if betas.windows(2).any(|w| w[1].abs() > w[0].abs()) {
        return Err(Error::InvalidArgument(
            "coefficients must be sorted by decreasing magnitude".into(),
        ));
    }
    let mut tail = 0.0;
    let mut out = vec![0.0; betas.len()];
    for j in (0..betas.len()).rev() {
        tail += betas[j].abs();
        out[j] = betas[j].abs() / tail;
    }
    // the last step compares a coefficient with itself
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    Ok(out)
}

/// `ΛΛ′ + diag(ψ)` for one factor with loadings `Λ` and idiosyncratic
/// variances `ψ`.
pub fn factor_covariance(loadings: &[f64], idio_var: &[f64]) -> Result<DMatrix<f64>> {
    if loadings.len() != idio_var.len() {
        return Err(Error::DimensionMismatch("loadings and variances differ in length".into()));
    }
    let p = loadings.len();
    Ok(DMatrix::from_fn(p, p, |i, j| {
        loadings[i] * loadings[j] + if i == j { idio_var[i] } else { 0.0 }
    }))
}
