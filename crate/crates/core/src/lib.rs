//! Variable selection by boosting with multiple testing, with one-covariate
//! multiple testing and Lasso-family baselines, a Monte Carlo laboratory,
//! population-level condition checks, and applied-workflow plumbing.

pub mod config;
pub mod design;
pub mod error;
pub mod forecast;
pub mod io;
pub mod metrics;
pub mod normal;
pub mod penalized;
pub mod regression;
pub mod report;
pub mod selector;
pub mod simulation;
pub mod theory;

pub use config::RunConfig;
pub use design::{build_design, Design, DesignOptions, Standardization};
pub use error::{Error, Result};
pub use forecast::{forecast_evaluate, select_report, Split};
pub use io::{load_csv, write_dataset, CsvSchema, LoadReport};
pub use metrics::{confusion, ConfusionCounts, MetricsReport, ReplicationMetrics};
pub use normal::{normal_quantile, normal_upper_quantile};
pub use penalized::{
    adaptive_lasso_select, lasso_path, lasso_select_bic, lasso_select_cv, AdaptiveLassoConfig,
    LassoOptions, LassoPath, LassoSelectConfig, Tuning,
};
pub use regression::{
    batch_conditional_t_stats, conditional_t_stat, first_principal_component, ols_fit, Covariance,
    Dataset, RegressionFit, TStat, TStatFlag,
};
pub use report::{ForecastStats, MethodReport, Provenance, ReportBundle};
pub use selector::{
    bmt_select, critical_value, ocmt_select, post_selection_estimate, PostSelection,
    SelectionConfig, SelectionResult, StageRecord,
};
pub use simulation::{
    generate_dgp, run_grid, run_replication, DgpConfig, DgpRealization, GridResult, GridSpec,
    Method, MethodSettings,
};
