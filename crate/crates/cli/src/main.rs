//! `kpidet`: KPI anomaly-detection pipeline driver.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error,
//! 3 verification failure. Diagnostics go to stderr; data goes to files or
//! stdout only.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::fmt;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Data(msg) | CliError::Verification(msg) => {
                write!(f, "{msg}")
            }
        }
    }
}

impl From<kpidet_core::io::IoError> for CliError {
    fn from(e: kpidet_core::io::IoError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<kpidet_core::windowing::WindowError> for CliError {
    fn from(e: kpidet_core::windowing::WindowError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<kpidet_core::model::ModelError> for CliError {
    fn from(e: kpidet_core::model::ModelError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<kpidet_core::mlp::MlpError> for CliError {
    fn from(e: kpidet_core::mlp::MlpError) -> CliError {
        match e {
            kpidet_core::mlp::MlpError::ConfigError(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<kpidet_core::datagen::SpecError> for CliError {
    fn from(e: kpidet_core::datagen::SpecError) -> CliError {
        CliError::Usage(e.to_string())
    }
}

impl From<kpidet_core::baselines::BaselineError> for CliError {
    fn from(e: kpidet_core::baselines::BaselineError) -> CliError {
        match e {
            kpidet_core::baselines::BaselineError::ConfigError(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<kpidet_core::netfab::NetError> for CliError {
    fn from(e: kpidet_core::netfab::NetError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<kpidet_core::ts2vec::Ts2VecError> for CliError {
    fn from(e: kpidet_core::ts2vec::Ts2VecError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<kpidet_core::metrics::MetricsError> for CliError {
    fn from(e: kpidet_core::metrics::MetricsError) -> CliError {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "kpidet",
    version,
    about = "KPI time-series anomaly detection: windowing, classifier training, \
             baselines, compiled feature networks, and embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic benchmark: raw series, ground truth, and
    /// windowed train/test datasets.
    Gen(commands::GenArgs),
    /// Convert raw series plus anomaly timestamps into a labeled dataset.
    Window(commands::WindowArgs),
    /// Train the classifier on a labeled dataset.
    Train(commands::TrainArgs),
    /// Label a dataset or raw series with a trained model.
    Predict(commands::PredictArgs),
    /// Compare predictions against labels and render a report.
    Eval(commands::EvalArgs),
    /// Full benchmark: generate, window, train, and evaluate the classifier
    /// against all four baselines.
    Bench(commands::BenchArgs),
    /// Compile the feature set into one explicit network and write it as
    /// text.
    CompileFeatures(commands::CompileArgs),
    /// Verify compiled feature networks against the direct oracle.
    VerifyFeatures(commands::VerifyArgs),
    /// Write hidden-layer embeddings for a dataset or raw series.
    Embed(commands::EmbedArgs),
    /// Cluster embeddings with k-means.
    Cluster(commands::ClusterArgs),
    /// Rank embeddings by cosine similarity to a query.
    Similar(commands::SimilarArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Gen(args) => commands::gen(args),
        Command::Window(args) => commands::window(args),
        Command::Train(args) => commands::train(args),
        Command::Predict(args) => commands::predict(args),
        Command::Eval(args) => commands::eval(args),
        Command::Bench(args) => commands::bench(args),
        Command::CompileFeatures(args) => commands::compile_features(args),
        Command::VerifyFeatures(args) => commands::verify_features(args),
        Command::Embed(args) => commands::embed(args),
        Command::Cluster(args) => commands::cluster(args),
        Command::Similar(args) => commands::similar(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
