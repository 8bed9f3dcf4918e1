use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fegap_core::data::{EpaRating, DEFAULT_TRIM_SD};
use fegap_core::halton::{DEFAULT_BURN, DEFAULT_DRAWS};
use fegap_core::optim::{BfgsOptions, HESSIAN_STEP};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "fegap",
    version,
    about = "Joint models of the fuel-economy gaps of two-vehicle garages"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute gap ratios, trim outliers, and summarize groups.
    Prepare(PrepareArgs),
    /// Fit an OLS, fixed-parameter SURE, or random-parameter SURE model.
    Fit(FitArgs),
    /// Score two or more fits with AIC, CAIC, SBIC and ICOMP.
    Compare(CompareArgs),
    /// Distributional summary of the random coefficients of a fit.
    Effects(EffectsArgs),
    /// Simulate a garage dataset from a truth file.
    Simulate(SimulateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Prepare(_) => "prepare",
            Command::Fit(_) => "fit",
            Command::Compare(_) => "compare",
            Command::Effects(_) => "effects",
            Command::Simulate(_) => "simulate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpaArg {
    /// epa_mpg_1 / epa_mpg_2
    TestCycle,
    /// epa_label_mpg_1 / epa_label_mpg_2
    Label,
}

impl From<EpaArg> for EpaRating {
    fn from(a: EpaArg) -> Self {
        match a {
            EpaArg::TestCycle => EpaRating::TestCycle,
            EpaArg::Label => EpaRating::Label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorArg {
    Ols,
    Sure,
    RpSure,
}

fn existing_file(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.is_file() {
        Ok(p)
    } else {
        Err(format!("no such file: {s}"))
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("must be a number > 0, got `{s}`")),
    }
}

fn nonnegative_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("must be a number >= 0, got `{s}`")),
    }
}

fn at_least_one(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("must be an integer >= 1, got `{s}`")),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PrepareArgs {
    /// Raw garage CSV.
    #[arg(long, visible_alias = "data", value_parser = existing_file)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long, visible_alias = "output")]
    pub out: PathBuf,
    /// Drop garages with either gap outside mean ± this many SDs.
    #[arg(long, default_value_t = DEFAULT_TRIM_SD, value_parser = positive_f64)]
    pub trim_sd: f64,
    /// EPA rating the gap is taken against.
    #[arg(long, value_enum, default_value_t = EpaArg::TestCycle)]
    pub epa: EpaArg,
    /// Columns for the group summary; model_year_* columns are binned.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "model_year_1,us_division"
    )]
    pub group_by: Vec<String>,
    /// Inclusive model-year bins.
    #[arg(
        long,
        default_value = "1984-1988,1989-1993,1994-1998,1999-2003,2004-2008,2009-2014"
    )]
    pub year_bins: String,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Garage CSV, usually the trimmed output of `prepare`.
    #[arg(long, visible_alias = "input", value_parser = existing_file)]
    pub data: PathBuf,
    /// Model specification JSON.
    #[arg(long, value_parser = existing_file)]
    pub spec: PathBuf,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Sure)]
    pub estimator: EstimatorArg,
    /// Output directory.
    #[arg(long, visible_alias = "output")]
    pub out: PathBuf,
    /// EPA rating the gap is taken against.
    #[arg(long, value_enum, default_value_t = EpaArg::TestCycle)]
    pub epa: EpaArg,
    /// Halton draws per garage (rp-sure).
    #[arg(long, default_value_t = DEFAULT_DRAWS, value_parser = at_least_one)]
    pub draws: usize,
    /// Leading Halton points discarded (rp-sure).
    #[arg(long, default_value_t = DEFAULT_BURN)]
    pub burn: u64,
    /// Halton primes, one per random coefficient [default: first primes].
    #[arg(long, value_delimiter = ',')]
    pub bases: Option<Vec<u32>>,
    /// Worker threads for the simulated likelihood [default: all cores].
    #[arg(long, value_parser = at_least_one)]
    pub threads: Option<usize>,
    /// Optimizer iteration cap (rp-sure).
    #[arg(long, default_value_t = BfgsOptions::default().max_iter)]
    pub max_iter: usize,
    /// Gradient tolerance on the natural parameter scale (rp-sure).
    #[arg(long, default_value_t = BfgsOptions::default().grad_tol, value_parser = nonnegative_f64)]
    pub grad_tol: f64,
    /// Relative log-likelihood change tolerance (rp-sure).
    #[arg(long, default_value_t = BfgsOptions::default().rel_tol, value_parser = nonnegative_f64)]
    pub rel_tol: f64,
    /// Relative step of the central-difference Hessian (rp-sure).
    #[arg(long, default_value_t = HESSIAN_STEP, value_parser = positive_f64)]
    pub hessian_step: f64,
    /// Residual covariance with sqrt((N-k1)(N-k2)) in place of N (sure).
    #[arg(long)]
    pub dof_adjust: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    /// Fit JSON files written by `fit`.
    #[arg(required = true, num_args = 2.., value_parser = existing_file)]
    pub fits: Vec<PathBuf>,
    /// Labels for the fits, in order [default: the paths as given].
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    /// Output directory.
    #[arg(long, visible_alias = "output")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EffectsArgs {
    /// Fit JSON written by `fit --estimator rp-sure`.
    #[arg(long, visible_alias = "input", value_parser = existing_file)]
    pub fit: PathBuf,
    /// Output directory.
    #[arg(long, visible_alias = "output")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Truth JSON describing the data-generating process.
    #[arg(long, value_parser = existing_file)]
    pub truth: PathBuf,
    /// Number of garages [default: the truth file's n].
    #[arg(long, value_parser = at_least_one)]
    pub n: Option<usize>,
    /// Generator seed [default: the truth file's seed].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, visible_alias = "output")]
    pub out: PathBuf,
    /// Also write the realized coefficients and errors.
    #[arg(long)]
    pub dump_draws: bool,
}
