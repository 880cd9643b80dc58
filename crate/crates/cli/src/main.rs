use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bmt_core::metrics::{f1, fdr, fpr, mcc, tdr, tpr};
use bmt_core::report::write_grid_tables;
use bmt_core::theory::{
    dominance_condition, factor_covariance, irrepresentable_check, stage1_noncentrality,
    theorem7_thresholds, wedge_interval, CovarianceSpec,
};
use bmt_core::{
    build_design, confusion, forecast_evaluate, load_csv, run_grid, select_report, Error,
    Provenance, ReportBundle, RunConfig,
};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

#[derive(Parser)]
#[command(name = "bmt", version, about = "Variable selection by boosting with multiple testing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select variables on a CSV file with every configured method.
    Select(DataArgs),
    /// Pseudo out-of-sample forecast evaluation on a CSV file.
    Forecast(DataArgs),
    /// Monte Carlo grid; writes one CSV per metric plus grid.json.
    Simulate(SimulateArgs),
    /// Population-level condition checks.
    #[command(subcommand)]
    Theory(Theory),
    /// Selection scores for given selected and true sets (1-based).
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct DataArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// CSV input; overrides `input` in the configuration.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Report path; JSON goes to stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML file with the grid and method settings.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Theory {
    /// Proxy-correlation interval where the Lasso fails and BMT does not.
    Wedge {
        #[arg(long)]
        alpha: f64,
        /// Also report whether this correlation lies inside.
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Signal-versus-proxy dominance condition.
    Dominance(DominanceArgs),
    /// Stage-one noncentralities of a signal and a correlated proxy.
    Noncentrality {
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma11: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_u2: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        t: usize,
    },
    /// Irrepresentable condition under a one-factor covariance.
    Irrepresentable {
        #[arg(long, value_delimiter = ',', required = true)]
        loadings: Vec<f64>,
        /// Idiosyncratic variances (default 1 each).
        #[arg(long, value_delimiter = ',')]
        idio: Vec<f64>,
        /// 1-based support.
        #[arg(long, value_delimiter = ',', required = true)]
        support: Vec<usize>,
        /// Signs on the support (default all +1).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        signs: Vec<f64>,
    },
    /// Coefficient ratios that the stagewise ordering argument relies on.
    Thresholds {
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        beta: Vec<f64>,
    },
}

#[derive(Args)]
struct DominanceArgs {
    /// JSON covariance specification; otherwise built from a one-factor model.
    #[arg(long, conflicts_with = "loadings")]
    spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    loadings: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    idio: Vec<f64>,
    /// 1-based index of the signal.
    #[arg(long, default_value_t = 1)]
    signal: usize,
    /// 1-based indices of the other signals.
    #[arg(long, value_delimiter = ',')]
    others: Vec<usize>,
    /// 1-based indices of the proxies.
    #[arg(long, value_delimiter = ',')]
    proxies: Vec<usize>,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    beta1: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta2: Vec<f64>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    selected: Vec<usize>,
    #[arg(long = "true", value_delimiter = ',', num_args = 0..)]
    true_set: Vec<usize>,
    #[arg(long)]
    n: usize,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn zero_based(v: &[usize], what: &str) -> Result<Vec<usize>, Failure> {
    v.iter()
        .map(|&i| {
            i.checked_sub(1)
                .ok_or_else(|| Failure::Usage(format!("{what}: indices are 1-based")))
        })
        .collect()
}

fn read_config(path: &Path) -> Result<(RunConfig, String), Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let cfg = RunConfig::from_toml(&text)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let canonical = cfg.to_toml()?;
    Ok((cfg, canonical))
}

fn emit(bundle: &ReportBundle, output: Option<&Path>) -> Outcome {
    let json = bundle.to_json()?;
    match output {
        Some(p) => {
            fs::write(p, json + "\n").map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
            for m in &bundle.methods {
                println!("{}: {}", m.method, m.selected.join(", "));
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{json}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    return Err(Failure::Data(e.to_string()))
                }
                _ => {}
            }
        }
    }
    Ok(())
}

// Paths written in a config file are relative to that file.
fn config_path(config: &Path, p: &str) -> PathBuf {
    config.parent().unwrap_or(Path::new("")).join(p)
}

fn data_command(args: &DataArgs, forecast: bool) -> Outcome {
    let (cfg, canonical) = read_config(&args.config)?;
    let input = args
        .input
        .clone()
        .or_else(|| cfg.input.as_deref().map(|p| config_path(&args.config, p)))
        .ok_or_else(|| Failure::Usage("no input file: pass --input or set `input`".into()))?;
    let (raw, load) = load_csv(&input, &cfg.schema())?;
    if load.rows_dropped > 0 {
        eprintln!("dropped {} of {} rows with missing values", load.rows_dropped, load.rows_read);
    }
    let design = build_design(&raw, &cfg.design())?;
    let settings = cfg.settings();
    let std = design.standardization.as_ref();
    let mut bundle = if forecast {
        forecast_evaluate(&design.dataset, cfg.split(), &cfg.methods, &cfg.horizons, &settings, std)?
    } else {
        select_report(&design.dataset, &cfg.methods, &settings, std)?
    };
    bundle.provenance = Provenance::new(&canonical, cfg.seed);
    bundle.rows_dropped = load.rows_dropped;
    let output = args
        .output
        .clone()
        .or_else(|| cfg.output.as_deref().map(|p| config_path(&args.config, p)));
    emit(&bundle, output.as_deref())
}

fn simulate(args: &SimulateArgs) -> Outcome {
    let (mut cfg, _) = read_config(&args.grid)?;
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.validate().map_err(usage)?;
    let dir = args
        .output
        .clone()
        .or_else(|| cfg.output.as_deref().map(|p| config_path(&args.grid, p)))
        .ok_or_else(|| Failure::Usage("no output directory: pass --output".into()))?;
    let designs = cfg.grid().expand(cfg.seed)?;
    let grid = run_grid(&designs, cfg.reps, &cfg.methods, &cfg.settings(), cfg.workers)?;
    let paths = write_grid_tables(&dir, &grid)?;
    for (d, row) in grid.reports.iter().enumerate() {
        let cells: Vec<String> = grid
            .methods
            .iter()
            .zip(row)
            .map(|(m, r)| format!("{m} mcc={:.3} size={:.2} rmse={:.3}", r.mcc, r.model_size, r.rmse))
            .collect();
        println!("design {d}: {}", cells.join("; "));
    }
    println!("wrote {} files to {}", paths.len(), dir.display());
    Ok(())
}

fn trim(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

fn dominance(a: &DominanceArgs) -> Outcome {
    let spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            let spec: CovarianceSpec = serde_json::from_str(&text)
                .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            spec.validate()?;
            spec
        }
        None => {
            if a.loadings.is_empty() {
                return Err(Failure::Usage("give --spec or --loadings".into()));
            }
            let idio = if a.idio.is_empty() { vec![1.0; a.loadings.len()] } else { a.idio.clone() };
            let sigma = factor_covariance(&a.loadings, &idio).map_err(usage)?;
            let beta2 = if a.beta2.is_empty() { vec![1.0; a.others.len()] } else { a.beta2.clone() };
            CovarianceSpec::from_full(
                &sigma,
                zero_based(&[a.signal], "--signal")?[0],
                &zero_based(&a.others, "--others")?,
                &zero_based(&a.proxies, "--proxies")?,
                a.beta1,
                &beta2,
            )
            .map_err(usage)?
        }
    };
    if spec.proxies.is_empty() {
        return Err(Failure::Usage("no proxies to compare".into()));
    }
    for i in 0..spec.proxies.len() {
        let r = dominance_condition(&spec, i)?;
        println!("proxy {}: lhs {:.6} rhs {:.6} holds {}", i + 1, r.lhs, r.rhs, r.holds);
    }
    Ok(())
}

fn theory(t: &Theory) -> Outcome {
    match t {
        Theory::Wedge { alpha, rho } => {
            let w = wedge_interval(*alpha).map_err(usage)?;
            println!("({}, {})", trim(w.lower), trim(w.upper));
            if let Some(r) = rho {
                println!("rho {r} inside: {}", w.contains(*r));
            }
        }
        Theory::Dominance(a) => dominance(a)?,
        Theory::Noncentrality { beta, sigma11, sigma_u2, rho, t } => {
            let nc = stage1_noncentrality(*beta, *sigma11, *sigma_u2, *rho, *t).map_err(usage)?;
            println!("lambda_signal {:.6}", nc.lambda_signal);
            println!("lambda_proxy {:.6}", nc.lambda_proxy);
            println!("gap {:.6} (closed form {:.6})", nc.gap, nc.gap_closed_form);
        }
        Theory::Irrepresentable { loadings, idio, support, signs } => {
            let idio = if idio.is_empty() { vec![1.0; loadings.len()] } else { idio.clone() };
            let sigma: DMatrix<f64> = factor_covariance(loadings, &idio).map_err(usage)?;
            let signs = if signs.is_empty() { vec![1.0; support.len()] } else { signs.clone() };
            let r = irrepresentable_check(&sigma, &zero_based(support, "--support")?, &signs)
                .map_err(usage)?;
            println!("value {:.6} holds {}", r.value, r.holds);
        }
        Theory::Thresholds { beta } => {
            let th = theorem7_thresholds(beta).map_err(usage)?;
            let cells: Vec<String> = th.iter().map(|v| format!("{v:.6}")).collect();
            println!("{}", cells.join(","));
        }
    }
    Ok(())
}

fn metrics(a: &MetricsArgs) -> Outcome {
    let sel = zero_based(&a.selected, "--selected")?;
    let tru = zero_based(&a.true_set, "--true")?;
    let c = confusion(&sel, &tru, a.n).map_err(usage)?;
    println!("tp {} fp {} tn {} fn {}", c.tp, c.fp, c.tn, c.fn_);
    println!("mcc {:.6}", mcc(&c));
    println!("f1 {:.6}", f1(&c));
    println!("tdr {:.6}", tdr(&c));
    println!("fdr {:.6}", fdr(&c));
    println!("tpr {:.6}", tpr(&c));
    println!("fpr {:.6}", fpr(&c));
    if c.tpr_is_conventional() {
        eprintln!("note: empty true set, tpr set to 1");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Select(a) => data_command(a, false),
        Command::Forecast(a) => data_command(a, true),
        Command::Simulate(a) => simulate(a),
        Command::Theory(t) => theory(t),
        Command::Metrics(a) => metrics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
