//! `clad`: batch and serving entry point.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clad_core::cost::FpVariant;
use clad_core::model::ModelFamily;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "clad", version, about = "Cost-sensitive credit limit adjustment decisions")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for sweeps (0 = one per processor).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(flatten)]
    pub cost: CostFlags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct CostFlags {
    /// Adjustment rate applied to every positive outcome.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Minimum payment rate.
    #[arg(long, global = true)]
    pub mr: Option<f64>,
    /// Administrative cost of a denial, BS.
    #[arg(long, global = true)]
    pub admin_cost: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub fp_variant: Option<FpVariantArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FpVariantArg {
    FullLimit,
    IncrementalExposure,
}

impl From<FpVariantArg> for FpVariant {
    fn from(v: FpVariantArg) -> Self {
        match v {
            FpVariantArg::FullLimit => FpVariant::FullLimit,
            FpVariantArg::IncrementalExposure => FpVariant::IncrementalExposure,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FamilyArg {
    Gbdt,
    Mlp,
}

impl From<FamilyArg> for ModelFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Gbdt => ModelFamily::Gbdt,
            FamilyArg::Mlp => ModelFamily::Mlp,
        }
    }
}

#[derive(Args, Debug)]
pub struct ThresholdFlags {
    /// Fixed decision threshold instead of the per-case cost-minimising one.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic labelled portfolio as CSV.
    Gen {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        positive_ratio: Option<f64>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print summary statistics of a labelled CSV.
    Summarize {
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Validate a case CSV and optionally rewrite it in canonical form.
    Ingest {
        input: PathBuf,
        /// The file has no label column.
        #[arg(long)]
        unlabelled: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model and write its file.
    Train {
        /// Labelled training CSV (default: data.train).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Model parameters as JSON, e.g. the `best_params.json` of a sweep.
        #[arg(long, conflicts_with = "family")]
        params: Option<PathBuf>,
        /// Default parameters of this family.
        #[arg(long, value_enum)]
        family: Option<FamilyArg>,
        /// Unit weights instead of cost weights.
        #[arg(long)]
        cost_blind: bool,
        /// Model file (default: model.clad in the output directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated grid search on total cost.
    Grid {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        fold_seed: Option<u64>,
        /// Plain shuffled folds.
        #[arg(long)]
        no_stratify: bool,
        /// Search this family's default single-point space.
        #[arg(long, value_enum)]
        family: Option<FamilyArg>,
        /// Search this family's full grid.
        #[arg(long)]
        full: bool,
        /// Directory for sweep.txt, sweep.json, best_params.json, folds.json.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Refit the winner on all rows and write the model here.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Score cases with a model; writes per-case CSV.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        threshold: ThresholdFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Confusion matrix, accuracy and total cost on labelled cases.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Labelled CSV (default: data.test).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Name recorded in the report (default: model file stem).
        #[arg(long)]
        label: Option<String>,
        #[command(flatten)]
        threshold: ThresholdFlags,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cohen's kappa between committee and model.
    Kappa {
        /// `tp,fp,fn,tn` with fp = committee gave, model did not.
        #[arg(long, conflicts_with_all = ["committee", "model"])]
        matrix: Option<String>,
        /// CSV with record_id and decision columns.
        #[arg(long, requires = "model")]
        committee: Option<PathBuf>,
        /// CSV with record_id and decision columns, e.g. `score` output.
        #[arg(long, requires = "committee")]
        model: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Difference of two eval reports (a - b).
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the scoring and decision-recording service.
    Serve {
        /// Case CSV offered to sessions (default: data.cases).
        #[arg(long)]
        cases: Option<PathBuf>,
        /// Labelled CSV for training jobs (default: data.train).
        #[arg(long)]
        training: Option<PathBuf>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        addr: Option<String>,
        /// Require `Authorization: Bearer <token>`.
        #[arg(long)]
        token: Option<String>,
        /// New sessions hide model output until a case is decided.
        #[arg(long)]
        blind: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

impl From<clap::Error> for CliError {
    fn from(e: clap::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}
