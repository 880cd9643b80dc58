//! Run configuration: one flat TOML table shared by every subcommand.

use serde::{Deserialize, Serialize};

use crate::design::DesignOptions;
use crate::error::{Error, Result};
use crate::forecast::Split;
use crate::io::CsvSchema;
use crate::penalized::{AdaptiveLassoConfig, FoldScheme, LassoOptions, LassoSelectConfig, Tuning};
use crate::selector::SelectionConfig;
use crate::simulation::{GridSpec, Method, MethodSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    // data
    pub input: Option<String>,
    pub target: String,
    pub controls: Vec<String>,
    pub candidates: Vec<String>,
    // design
    pub add_constant: bool,
    pub add_trend: bool,
    pub lag_target: usize,
    pub lags_of_candidates: usize,
    pub standardize: bool,
    pub add_first_pc: bool,
    // methods
    pub methods: Vec<Method>,
    pub p: f64,
    pub c: f64,
    pub delta: f64,
    pub delta_star: f64,
    pub max_stages: Option<usize>,
    pub shrink_n_per_stage: bool,
    pub robust_se: bool,
    pub add_intercept: bool,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub folds: usize,
    pub shuffle_folds: bool,
    pub adaptive_gamma: f64,
    pub adaptive_ridge_factor: f64,
    pub adaptive_tuning: Tuning,
    // forecasting
    pub train_fraction: Option<f64>,
    pub train_length: Option<usize>,
    pub horizons: Vec<usize>,
    // simulation grid
    pub t: Vec<usize>,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub alpha: Vec<f64>,
    pub vif: Vec<f64>,
    pub pi: Vec<f64>,
    pub r2_target: f64,
    pub rho: f64,
    pub burn_in: usize,
    pub holdout: usize,
    pub reps: usize,
    // run
    pub seed: u64,
    pub workers: usize,
    pub output: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sel = SelectionConfig::default();
        let lasso = LassoSelectConfig::default();
        let adaptive = AdaptiveLassoConfig::default();
        let grid = GridSpec::default();
        Self {
            input: None,
            target: String::new(),
            controls: Vec::new(),
            candidates: Vec::new(),
            add_constant: false,
            add_trend: false,
            lag_target: 0,
            lags_of_candidates: 0,
            standardize: false,
            add_first_pc: false,
            methods: vec![Method::Bmt],
            p: sel.p,
            c: sel.c,
            delta: sel.delta,
            delta_star: sel.delta_star,
            max_stages: sel.max_stages,
            shrink_n_per_stage: sel.shrink_n_per_stage,
            robust_se: sel.robust_se,
            add_intercept: sel.add_intercept,
            n_lambda: lasso.path.n_lambda,
            lambda_min_ratio: lasso.path.lambda_min_ratio,
            folds: lasso.folds,
            shuffle_folds: false,
            adaptive_gamma: adaptive.gamma,
            adaptive_ridge_factor: adaptive.ridge_factor,
            adaptive_tuning: adaptive.tuning,
            train_fraction: None,
            train_length: None,
            horizons: vec![1],
            t: grid.t,
            n: grid.n,
            k: grid.k,
            alpha: grid.alpha,
            vif: grid.vif,
            pi: grid.pi,
            r2_target: grid.r2_target,
            rho: grid.rho,
            burn_in: grid.burn_in,
            holdout: grid.holdout,
            reps: 100,
            seed: 0,
            workers: 1,
            output: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            row: e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0),
            column: String::new(),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.selection().validate()?;
        if self.folds < 2 {
            return Err(Error::InvalidArgument(format!("folds = {} < 2", self.folds)));
        }
        if self.n_lambda == 0 || !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::InvalidArgument("invalid penalty grid".into()));
        }
        if !(self.adaptive_gamma > 0.0) || !(self.adaptive_ridge_factor > 0.0) {
            return Err(Error::InvalidArgument(
                "adaptive weights need positive gamma and ridge factor".into(),
            ));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::InvalidArgument("horizons must be positive".into()));
        }
        if self.train_fraction.is_some() && self.train_length.is_some() {
            return Err(Error::InvalidArgument(
                "give train_fraction or train_length, not both".into(),
            ));
        }
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            p: self.p,
            c: self.c,
            delta: self.delta,
            delta_star: self.delta_star,
            max_stages: self.max_stages,
            shrink_n_per_stage: self.shrink_n_per_stage,
            robust_se: self.robust_se,
            add_intercept: self.add_intercept,
        }
    }

    pub fn lasso(&self) -> LassoSelectConfig {
        LassoSelectConfig {
            path: LassoOptions {
                n_lambda: self.n_lambda,
                lambda_min_ratio: self.lambda_min_ratio,
                ..Default::default()
            },
            add_intercept: self.add_intercept,
            folds: self.folds,
            fold_scheme: if self.shuffle_folds {
                FoldScheme::Shuffled { seed: self.seed }
            } else {
                FoldScheme::Contiguous
            },
            robust_se: self.robust_se,
        }
    }

    pub fn settings(&self) -> MethodSettings {
        MethodSettings {
            selection: self.selection(),
            lasso: self.lasso(),
            adaptive: AdaptiveLassoConfig {
                lasso: self.lasso(),
                gamma: self.adaptive_gamma,
                ridge_factor: self.adaptive_ridge_factor,
                tuning: self.adaptive_tuning,
            },
        }
    }

    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            target: self.target.clone(),
            controls: self.controls.clone(),
            candidates: self.candidates.clone(),
        }
    }

    pub fn design(&self) -> DesignOptions {
        DesignOptions {
            add_constant: self.add_constant,
            add_trend: self.add_trend,
            lag_target: self.lag_target,
            lags_of_candidates: self.lags_of_candidates,
            standardize: self.standardize,
            add_first_pc: self.add_first_pc,
        }
    }

    pub fn split(&self) -> Split {
        match (self.train_fraction, self.train_length) {
            (_, Some(l)) => Split::TrainLength(l),
            (Some(f), None) => Split::TrainFraction(f),
            (None, None) => Split::default(),
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            t: self.t.clone(),
            n: self.n.clone(),
            k: self.k.clone(),
            alpha: self.alpha.clone(),
            vif: self.vif.clone(),
            pi: self.pi.clone(),
            r2_target: self.r2_target,
            rho: self.rho,
            burn_in: self.burn_in,
            holdout: self.holdout,
        }
    }
}
