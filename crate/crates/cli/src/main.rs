mod args;
mod jobs;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use rdsnet::io::{read_edge_list, read_json, read_study, subgraph_from_edges};
use rdsnet::likelihood::{log_likelihood_direct, log_likelihood_matrix, LikelihoodWorkspace};
use rdsnet::Exec;

use args::{merge_config, Cli, Command, LoglikArgs};
use jobs::{execute, replay, resolve_model, EstimateJob, ExperimentJob, ExportJob, PipelineJob, ReconstructJob, SimulateJob};
use manifest::{verify_inputs, RunManifest};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config; exit code 1.
    Usage(String),
    /// Input data failed validation; exit code 2.
    Data(String),
    /// Anything else; exit code 3.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "invalid data: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<rdsnet::Error> for CliError {
    fn from(e: rdsnet::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    out.clone().ok_or_else(|| CliError::Usage("--out is required".into()))
}

/// Rounds to 12 significant digits so that forms agreeing to rounding
/// print identically.
fn significant(x: f64) -> String {
    if !x.is_finite() || x == 0.0 {
        return format!("{x}");
    }
    let decimals = (11 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.decimals$}")
}

fn loglik(a: &LoglikArgs) -> Result<(), CliError> {
    let study_path = a.study.clone().ok_or_else(|| CliError::Usage("--study is required".into()))?;
    let edges_path = a.edges.clone().ok_or_else(|| CliError::Usage("--edges is required".into()))?;
    let model = resolve_model(&a.model, None)?;
    let study = read_study(&study_path)?;
    let adj = subgraph_from_edges(&study, &read_edge_list(&edges_path)?)?;
    let direct = log_likelihood_direct(&adj, &study, &model)?;
    let ws = LikelihoodWorkspace::build_with(&study, &model, Exec::Sequential)?;
    let matrix = log_likelihood_matrix(&adj, &study, &ws)?;
    log::info!("direct {direct:e}, matrix {matrix:e}");
    println!("{}\t{}", significant(direct), significant(matrix));
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Simulate(a) => {
            let a = merge_config(&a, config)?;
            execute(&SimulateJob::resolve(&a)?, &out_dir(&a.out)?)?;
        }
        Command::Loglik(a) => loglik(&merge_config(&a, config)?)?,
        Command::Reconstruct(a) => {
            let a = merge_config(&a, config)?;
            execute(&ReconstructJob::resolve(&a)?, &out_dir(&a.out)?)?;
        }
        Command::Estimate(a) => {
            let a = merge_config(&a, config)?;
            execute(&EstimateJob::resolve(&a)?, &out_dir(&a.out)?)?;
        }
        Command::Pipeline(a) => {
            let a = merge_config(&a, config)?;
            execute(&PipelineJob::resolve(&a)?, &out_dir(&a.out)?)?;
        }
        Command::Experiment(a) => {
            let a = merge_config(&a, config)?;
            execute(&ExperimentJob::resolve(&a)?, &out_dir(&a.out)?)?;
        }
        Command::Export(a) => {
            let a = merge_config(&a, config)?;
            execute(&ExportJob::resolve(&a)?, &out_dir(&a.out)?)?;
        }
        Command::Replay(a) => {
            let a = merge_config(&a, config)?;
            let path = a.manifest.clone().ok_or_else(|| CliError::Usage("--manifest is required".into()))?;
            let recorded: RunManifest = read_json(Path::new(&path))?;
            verify_inputs(&recorded)?;
            replay(&recorded, &out_dir(&a.out)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(significant(-1.0), "-1.00000000000");
        assert_eq!(significant(-1234.56789012345), "-1234.56789012");
        assert_eq!(significant(2f64.ln() - 2.0), "-1.30685281944");
        assert_eq!(significant(0.0), "0");
    }

    #[test]
    fn library_errors_map_to_exit_codes() {
        let data: CliError = rdsnet::Error::Incompatible.into();
        assert_eq!(data.exit_code(), 2);
        let runtime: CliError = rdsnet::Error::CacheMismatch(1.0).into();
        assert_eq!(runtime.exit_code(), 3);
    }
}
