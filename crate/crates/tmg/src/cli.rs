//! Command-line front end: estimate | test | simulate | calibrate | power.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::estimators::{fe, gp, mg, tmg, Estimate};
use crate::hausman::{chisq_sf, hausman_no_te, hausman_te, HausmanResult};
use crate::montecarlo::{
    calibrate_kappa, default_grid, resolve_kappa, run_experiment, DgpConfig, EstimatorSpec, McResult, N_CAL, R_KAPPA,
};
use crate::panel::{fmt17, read_csv_path, BalancedPanel};
use crate::time_effects::{fete, gp_te, tmg_te, TimeEffects};
use crate::trimming::TrimConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "tmg", version, about = "Trimmed mean group estimation for short-T panels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Fe,
    Mg,
    Tmg,
    Gp,
    Fete,
    Tmgte,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Trimming exponent for TMG.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub alpha: f64,
    /// Bandwidth exponent for GP.
    #[arg(long = "alpha-gp", default_value_t = 1.0 / 3.0)]
    pub alpha_gp: f64,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate average effects from a long-format CSV.
    Estimate {
        csv: PathBuf,
        #[arg(long, value_enum, default_value = "tmg")]
        method: MethodArg,
        /// Allow for common time effects.
        #[arg(long)]
        te: bool,
        /// Also write the per-unit estimates.
        #[arg(long = "per-unit")]
        per_unit: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Hausman test of correlated heterogeneity.
    Test {
        csv: PathBuf,
        #[arg(long)]
        te: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run a Monte Carlo scenario.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Calibrate kappa^2 for a scenario.
    Calibrate {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "r-kappa", default_value_t = R_KAPPA)]
        r_kappa: usize,
        #[arg(long = "n-cal", default_value_t = N_CAL)]
        n_cal: usize,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Empirical power curves over a grid of hypothesised slopes.
    Power {
        scenario: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long = "grid-min")]
        grid_min: Option<f64>,
        #[arg(long = "grid-max")]
        grid_max: Option<f64>,
        #[arg(long = "grid-points", default_value_t = 21)]
        grid_points: usize,
        #[command(flatten)]
        common: Common,
    },
}

/// Failure with an exit code and one-line diagnostic.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_input_error() { EXIT_INPUT } else { EXIT_NUMERIC };
        Self { code, message: e.to_string() }
    }
}

fn input_err(msg: impl Into<String>) -> CliError {
    CliError { code: EXIT_INPUT, message: msg.into() }
}

fn io_err(e: std::io::Error) -> CliError {
    input_err(e.to_string())
}

/// Parse arguments, run, print, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(text) => {
            print!("{}", text);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// Run a parsed command; returns the text printed to stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let start = Instant::now();
    match &cli.command {
        Command::Estimate { csv, method, te, per_unit, common } => cmd_estimate(csv, *method, *te, *per_unit, common, start),
        Command::Test { csv, te, common } => cmd_test(csv, *te, common, start),
        Command::Simulate { scenario, reps, seed, jobs, common } => {
            cmd_simulate(scenario, *reps, *seed, *jobs, common, start)
        }
        Command::Calibrate { scenario, seed, r_kappa, n_cal, jobs, common } => {
            cmd_calibrate(scenario, *seed, *r_kappa, *n_cal, *jobs, common, start)
        }
        Command::Power { scenario, reps, seed, jobs, grid_min, grid_max, grid_points, common } => {
            cmd_power(scenario, *reps, *seed, *jobs, *grid_min, *grid_max, *grid_points, common, start)
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub alpha: f64,
    pub alpha_gp: f64,
    pub version: String,
    pub elapsed_ms: u128,
    pub outputs: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{:02x}", b);
        s
    })
}

fn write_out(dir: &Path, name: &str, content: &str, outputs: &mut Vec<String>) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let p = dir.join(name);
    std::fs::write(&p, content).map_err(io_err)?;
    outputs.push(p.display().to_string());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn finish_manifest(
    dir: &Path,
    command: &str,
    hash_input: &str,
    seed: Option<u64>,
    reps: Option<usize>,
    common: &Common,
    start: Instant,
    mut outputs: Vec<String>,
) -> Result<(), CliError> {
    let p = dir.join("manifest.json");
    outputs.push(p.display().to_string());
    let m = RunManifest {
        command: command.into(),
        config_hash: sha256_hex(hash_input.as_bytes()),
        seed,
        reps,
        alpha: common.alpha,
        alpha_gp: common.alpha_gp,
        version: env!("CARGO_PKG_VERSION").into(),
        elapsed_ms: start.elapsed().as_millis(),
        outputs,
    };
    let s = serde_json::to_string_pretty(&m).map_err(|e| input_err(e.to_string()))?;
    std::fs::write(&p, s + "\n").map_err(io_err)
}

fn file_hash(path: &Path) -> Result<String, CliError> {
    let b = std::fs::read(path).map_err(|e| input_err(format!("{}: {}", path.display(), e)))?;
    Ok(sha256_hex(&b))
}

/// Coefficient table: name, estimate, se, t, p (normal reference).
pub fn coef_table(e: &Estimate, te: Option<&TimeEffects>) -> String {
    let mut s = String::from("param,estimate,se,t,p,pi_hat\n");
    let se = e.se();
    let mut rows: Vec<(String, f64, f64)> =
        e.names().into_iter().enumerate().map(|(j, nm)| (nm, e.coef[j], se[j])).collect();
    if let Some(te) = te {
        let ts = te.se();
        rows.extend((0..te.phi.len()).map(|t| (format!("phi{}", t + 1), te.phi[t], ts[t])));
    }
    for (nm, b, sd) in rows {
        let t = if sd > 0.0 { b / sd } else { f64::NAN };
        let p = if t.is_finite() { chisq_sf(t * t, 1) } else { f64::NAN };
        let _ = writeln!(s, "{},{},{},{},{},{}", nm, fmt17(b), fmt17(sd), fmt17(t), fmt17(p), fmt17(e.pi_n));
    }
    s
}

fn per_unit_table(panel: &BalancedPanel, e: &Estimate) -> String {
    let mut s = String::from("unit_id");
    for nm in e.names() {
        let _ = write!(s, ",{}", nm);
    }
    s.push('\n');
    if let Some(m) = &e.per_unit {
        for i in 0..m.nrows() {
            s.push_str(&panel.unit_ids[i]);
            for j in 0..m.ncols() {
                let _ = write!(s, ",{}", fmt17(m[(i, j)]));
            }
            s.push('\n');
        }
    }
    s
}

fn estimate_panel(panel: &BalancedPanel, method: MethodArg, te: bool, common: &Common) -> Result<(Estimate, Option<TimeEffects>), Error> {
    let cfg = TrimConfig::with_alpha(common.alpha);
    Ok(match (method, te) {
        (MethodArg::Fe, false) => (fe(panel)?, None),
        (MethodArg::Mg, false) => (mg(panel)?, None),
        (MethodArg::Tmg, false) => (tmg(panel, &cfg)?, None),
        (MethodArg::Gp, false) => (gp(panel, common.alpha_gp)?, None),
        (MethodArg::Fe, true) | (MethodArg::Fete, _) => {
            let (e, p) = fete(panel)?;
            (e, Some(p))
        }
        (MethodArg::Tmg, true) | (MethodArg::Tmgte, _) => {
            let (e, p) = tmg_te(panel, &cfg)?;
            (e, Some(p))
        }
        (MethodArg::Gp, true) => {
            let (e, p) = gp_te(panel, common.alpha_gp)?;
            (e, Some(p))
        }
        (MethodArg::Mg, true) => {
            return Err(Error::InvalidConfig("--te is not available for mg; use tmgte".into()));
        }
    })
}

fn cmd_estimate(csv: &Path, method: MethodArg, te: bool, per_unit: bool, common: &Common, start: Instant) -> Result<String, CliError> {
    let panel = read_csv_path(csv)?;
    let (e, phi) = estimate_panel(&panel, method, te, common)?;
    let table = coef_table(&e, phi.as_ref());
    let mut text = format!(
        "method={} n={} T={} k'={} pi_hat={:.4}\n",
        e.method.tag(),
        panel.n(),
        panel.t(),
        panel.k_prime(),
        e.pi_n
    );
    text.push_str(&table);
    if let Some(dir) = &common.out {
        let mut outs = Vec::new();
        write_out(dir, "estimate.csv", &table, &mut outs)?;
        if per_unit {
            write_out(dir, "per_unit.csv", &per_unit_table(&panel, &e), &mut outs)?;
        }
        let h = format!("estimate|{}|{:?}|{}|{}|{}", file_hash(csv)?, method, te, common.alpha, common.alpha_gp);
        finish_manifest(dir, "estimate", &h, None, None, common, start, outs)?;
    }
    Ok(text)
}

/// One-row CSV for a Hausman result.
pub fn hausman_table(h: &HausmanResult) -> String {
    format!(
        "variant,statistic,df,p_value\n{:?},{},{},{}\n",
        h.variant,
        fmt17(h.statistic),
        h.df,
        fmt17(h.p_value)
    )
}

fn cmd_test(csv: &Path, te: bool, common: &Common, start: Instant) -> Result<String, CliError> {
    let panel = read_csv_path(csv)?;
    let cfg = TrimConfig::with_alpha(common.alpha);
    let h = if te { hausman_te(&panel, &cfg)? } else { hausman_no_te(&panel, &cfg)? };
    let table = hausman_table(&h);
    if let Some(dir) = &common.out {
        let mut outs = Vec::new();
        write_out(dir, "hausman.csv", &table, &mut outs)?;
        let hsh = format!("test|{}|{}|{}", file_hash(csv)?, te, common.alpha);
        finish_manifest(dir, "test", &hsh, None, None, common, start, outs)?;
    }
    Ok(table)
}

/// Scenario file: DgpConfig fields plus optional `estimators` and `reps`.
pub struct Scenario {
    pub dgp: DgpConfig,
    pub estimators: Option<Vec<String>>,
    pub reps: Option<usize>,
}

pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| input_err(format!("scenario: {}", e)))?;
    let obj = v.as_object_mut().ok_or_else(|| input_err("scenario: expected a JSON object"))?;
    let estimators = match obj.remove("estimators") {
        Some(e) => Some(serde_json::from_value(e).map_err(|e| input_err(format!("estimators: {}", e)))?),
        None => None,
    };
    let reps = match obj.remove("reps") {
        Some(r) => Some(serde_json::from_value(r).map_err(|e| input_err(format!("reps: {}", e)))?),
        None => None,
    };
    let dgp: DgpConfig = serde_json::from_value(v).map_err(|e| input_err(format!("scenario: {}", e)))?;
    dgp.validate()?;
    Ok(Scenario { dgp, estimators, reps })
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| input_err(format!("{}: {}", path.display(), e)))?;
    let mut s = parse_scenario(&text)?;
    if let Some(sd) = seed {
        s.dgp.seed = sd;
    }
    Ok(s)
}

pub fn parse_estimators(names: &[String], common: &Common) -> Result<Vec<EstimatorSpec>, CliError> {
    let (a, g) = (common.alpha, common.alpha_gp);
    names
        .iter()
        .map(|n| {
            Ok(match n.as_str() {
                "fe" => EstimatorSpec::Fe,
                "mg" => EstimatorSpec::Mg,
                "tmg" => EstimatorSpec::Tmg { alpha: a },
                "gp" => EstimatorSpec::Gp { alpha_gp: g },
                "fete" => EstimatorSpec::Fete,
                "tmgte" => EstimatorSpec::Tmgte { alpha: a },
                "gpte" => EstimatorSpec::Gpte { alpha_gp: g },
                "hausman" => EstimatorSpec::Hausman { alpha: a },
                "hausman_te" => EstimatorSpec::HausmanTe { alpha: a },
                other => return Err(input_err(format!("estimators: unknown estimator '{}'", other))),
            })
        })
        .collect()
}

fn default_estimators(cfg: &DgpConfig) -> Vec<String> {
    let v: &[&str] = if cfg.time_effects { &["fete", "tmgte", "hausman_te"] } else { &["fe", "tmg", "gp", "hausman"] };
    v.iter().map(|s| s.to_string()).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt17).unwrap_or_default()
}

/// One row per (estimator, parameter).
pub fn results_table(rows: &[McResult]) -> String {
    let mut s = String::from("estimator,alpha,param,truth,reps,failures,bias,rmse,size,pi_hat,mc_se_bias,mc_se_size\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.estimator,
            opt(r.alpha),
            r.param,
            opt(r.truth),
            r.reps,
            r.failures,
            opt(r.bias),
            opt(r.rmse),
            fmt17(r.size),
            opt(r.pi_hat),
            opt(r.mc_se_bias),
            fmt17(r.mc_se_size)
        );
    }
    s
}

pub fn power_table(points: &[crate::montecarlo::PowerPoint]) -> String {
    let mut s = String::from("b0,rejection_rate,mc_se\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", fmt17(p.b0), fmt17(p.rejection_rate), fmt17(p.mc_se));
    }
    s
}

fn hash_scenario(cmd: &str, cfg: &DgpConfig, specs: &[EstimatorSpec], reps: usize, extra: &str) -> String {
    format!(
        "{}|{}|{}|{}|{}",
        cmd,
        serde_json::to_string(cfg).unwrap_or_default(),
        serde_json::to_string(specs).unwrap_or_default(),
        reps,
        extra
    )
}

fn cmd_simulate(path: &Path, reps: Option<usize>, seed: Option<u64>, jobs: Option<usize>, common: &Common, start: Instant) -> Result<String, CliError> {
    let sc = load_scenario(path, seed)?;
    let reps = reps.or(sc.reps).unwrap_or(2000);
    let names = sc.estimators.clone().unwrap_or_else(|| default_estimators(&sc.dgp));
    let specs = parse_estimators(&names, common)?;
    let cfg = resolve_kappa(&sc.dgp)?;
    let rows = run_experiment(&cfg, &specs, reps, None, jobs)?;
    let table = results_table(&rows);
    if let Some(dir) = &common.out {
        let mut outs = Vec::new();
        write_out(dir, "results.csv", &table, &mut outs)?;
        let h = hash_scenario("simulate", &cfg, &specs, reps, "");
        finish_manifest(dir, "simulate", &h, Some(cfg.seed), Some(reps), common, start, outs)?;
    }
    Ok(format!("kappa2={}\n{}", fmt17(cfg.kappa2.unwrap_or(f64::NAN)), table))
}

#[derive(Serialize)]
struct KappaRecord {
    kappa2: f64,
    t: usize,
    pr2: f64,
    rho_beta: f64,
    r_kappa: usize,
    n_cal: usize,
    seed: u64,
}

#[allow(clippy::too_many_arguments)]
fn cmd_calibrate(path: &Path, seed: Option<u64>, r_kappa: usize, n_cal: usize, jobs: Option<usize>, common: &Common, start: Instant) -> Result<String, CliError> {
    let sc = load_scenario(path, seed)?;
    if r_kappa == 0 || n_cal == 0 {
        return Err(input_err("r-kappa and n-cal must be positive"));
    }
    let go = || calibrate_kappa(&sc.dgp, r_kappa, n_cal);
    let k2 = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| input_err(e.to_string()))?
            .install(go)?,
        None => go()?,
    };
    let rec = KappaRecord {
        kappa2: k2,
        t: sc.dgp.t,
        pr2: sc.dgp.pr2,
        rho_beta: sc.dgp.rho_beta,
        r_kappa,
        n_cal,
        seed: sc.dgp.seed,
    };
    let text = serde_json::to_string_pretty(&rec).map_err(|e| input_err(e.to_string()))? + "\n";
    if let Some(dir) = &common.out {
        let mut outs = Vec::new();
        write_out(dir, "kappa.json", &text, &mut outs)?;
        let h = hash_scenario("calibrate", &sc.dgp, &[], r_kappa, &n_cal.to_string());
        finish_manifest(dir, "calibrate", &h, Some(sc.dgp.seed), Some(r_kappa), common, start, outs)?;
    }
    Ok(text)
}

#[allow(clippy::too_many_arguments)]
fn cmd_power(
    path: &Path,
    reps: Option<usize>,
    seed: Option<u64>,
    jobs: Option<usize>,
    gmin: Option<f64>,
    gmax: Option<f64>,
    points: usize,
    common: &Common,
    start: Instant,
) -> Result<String, CliError> {
    let sc = load_scenario(path, seed)?;
    let reps = reps.or(sc.reps).unwrap_or(2000);
    let b0 = sc.dgp.theta0[1];
    let grid = match (gmin, gmax) {
        (None, None) if points == 21 => default_grid(b0),
        _ => {
            let lo = gmin.unwrap_or(b0 - 0.5);
            let hi = gmax.unwrap_or(b0 + 0.5);
            if points < 2 || !(hi > lo) {
                return Err(input_err("grid: need grid-points >= 2 and grid-max > grid-min"));
            }
            (0..points).map(|j| lo + (hi - lo) * j as f64 / (points - 1) as f64).collect()
        }
    };
    let names = sc.estimators.clone().unwrap_or_else(|| {
        let v: &[&str] = if sc.dgp.time_effects { &["tmgte"] } else { &["tmg", "gp"] };
        v.iter().map(|s| s.to_string()).collect()
    });
    let specs = parse_estimators(&names, common)?;
    let cfg = resolve_kappa(&sc.dgp)?;
    let rows = run_experiment(&cfg, &specs, reps, Some(&grid), jobs)?;
    let mut text = String::new();
    let mut outs = Vec::new();
    for r in rows.iter().filter(|r| r.power_curve.is_some()) {
        let t = power_table(r.power_curve.as_ref().unwrap());
        let _ = writeln!(text, "# {}", r.estimator);
        text.push_str(&t);
        if let Some(dir) = &common.out {
            write_out(dir, &format!("power_{}.csv", r.estimator), &t, &mut outs)?;
        }
    }
    if let Some(dir) = &common.out {
        let extra = serde_json::to_string(&grid).unwrap_or_default();
        let h = hash_scenario("power", &cfg, &specs, reps, &extra);
        finish_manifest(dir, "power", &h, Some(cfg.seed), Some(reps), common, start, outs)?;
    }
    Ok(text)
}
