//! Command-line flags. Every subcommand's flags can also come from a JSON
//! config file whose keys are the flag names in snake_case; flags given on
//! the command line win.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "rdsnet", version, about = "Simulate respondent-driven sampling and reconstruct the hidden subgraph")]
pub struct Cli {
    /// JSON file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the recruitment diffusion on a population graph.
    Simulate(SimulateArgs),
    /// Print the direct-form and matrix-form log-likelihood of a subgraph.
    Loglik(LoglikArgs),
    /// Anneal over subgraphs with the waiting-time parameters held fixed.
    Reconstruct(ReconstructArgs),
    /// Maximum-likelihood waiting-time parameters for a fixed subgraph.
    Estimate(EstimateArgs),
    /// Alternate subgraph and parameter steps.
    Pipeline(PipelineArgs),
    /// Replicated synthetic experiments.
    Experiment(ExperimentArgs),
    /// Write graph drawings of a study and an estimate.
    Export(ExportArgs),
    /// Re-run the job recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelArgs {
    /// Waiting-time family: exponential, gamma or power_law.
    #[arg(long, alias = "family")]
    pub dist: Option<String>,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub shape: Option<f64>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub x_min: Option<f64>,
    /// All parameters at once, comma separated, in the family's order.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub theta0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealArgs {
    #[arg(long)]
    pub iters: Option<u64>,
    /// Initial temperature; probed from the starting state when absent.
    #[arg(long)]
    pub gamma0: Option<f64>,
    /// geometric, linear or logarithmic.
    #[arg(long)]
    pub cooling: Option<String>,
    #[arg(long)]
    pub cool_rate: Option<f64>,
    #[arg(long)]
    pub floor: Option<f64>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// uniform or rejection.
    #[arg(long)]
    pub proposal: Option<String>,
    #[arg(long)]
    pub probes: Option<usize>,
    /// uniform or bernoulli:p.
    #[arg(long)]
    pub prior: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateArgs {
    /// Population edge list (TSV of vertex labels).
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Generated population when no graph is given, e.g.
    /// heavy_tailed:1000:8:2.5, erdos_renyi:500:0.02, small_world:500:6:0.1.
    #[arg(long)]
    pub population: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Target number of subjects.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of seeds drawn uniformly from the population.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub seed_interval: Option<f64>,
    #[arg(long)]
    pub coupons: Option<u32>,
    #[arg(long)]
    pub max_time: Option<f64>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct LoglikArgs {
    #[arg(long)]
    pub study: Option<PathBuf>,
    /// Subgraph edge list over subject ids.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub study: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub anneal: AnnealArgs,
    /// `recruitment` or an edge-list file.
    #[arg(long)]
    pub init: Option<String>,
    /// Trace CSV, relative to the output directory.
    #[arg(long)]
    pub trace_out: Option<String>,
    #[arg(long)]
    pub trace_every: Option<u64>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateArgs {
    #[arg(long)]
    pub study: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// full, or unit_mean to tie the gamma scale to 1/shape.
    #[arg(long)]
    pub theta_space: Option<String>,
    /// log or raw optimizer coordinates.
    #[arg(long)]
    pub transform: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineArgs {
    #[arg(long)]
    pub study: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub anneal: AnnealArgs,
    #[arg(long)]
    pub iota_max: Option<usize>,
    #[arg(long)]
    pub theta_space: Option<String>,
    /// Keep the parameters at their starting values.
    #[arg(long)]
    pub fixed_theta: bool,
    /// Start every subgraph search from the recruitment graph.
    #[arg(long)]
    pub cold_start: bool,
    /// True subgraph edge list; enables metrics.csv and the overlay drawings.
    #[arg(long)]
    pub true_edges: Option<PathBuf>,
    #[arg(long)]
    pub trace_out: Option<String>,
    #[arg(long)]
    pub trace_every: Option<u64>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentArgs {
    /// gamma-sweep, misspec or bias.
    pub kind: Option<String>,
    /// Gamma shapes; the scale is 1/shape.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub alphas: Option<Vec<f64>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Bias experiment subgraph sources: true, estimated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub sources: Option<Vec<String>>,
    /// Generating model of the misspecification experiment.
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Starting rate of the exponential alternative.
    #[arg(long)]
    pub alt_rate: Option<f64>,
    #[arg(long)]
    pub population: Option<String>,
    /// Subjects per simulated study.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub seed_interval: Option<f64>,
    #[arg(long)]
    pub coupons: Option<u32>,
    #[arg(long)]
    pub max_time: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub anneal: AnnealArgs,
    #[arg(long)]
    pub iota_max: Option<usize>,
    #[arg(long)]
    pub theta_space: Option<String>,
    #[arg(long)]
    pub cold_start: bool,
    /// Record per-replicate runtimes (outputs stop being reproducible).
    #[arg(long)]
    pub timing: bool,
    /// Run replicates one after another.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportArgs {
    /// Graphviz DOT output (the only format).
    #[arg(long)]
    pub dot: bool,
    #[arg(long)]
    pub study: Option<PathBuf>,
    /// Estimated subgraph: edge list, estimate.json or results.json.
    #[arg(long)]
    pub estimate: Option<PathBuf>,
    /// True subgraph edge list.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Overlays flags that were given on top of the config file's values.
/// Unset options serialize to `null` and unset switches to `false`; both
/// leave the file's value in place.
pub fn merge_config<T>(flags: &T, config: Option<&Path>) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned + Default,
{
    let Some(path) = config else {
        return Ok(serde_json::from_value(to_value(flags)?).expect("flags round-trip"));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let file: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let Value::Object(mut file) = file else {
        return Err(CliError::Usage(format!("{}: expected a JSON object", path.display())));
    };
    let Value::Object(known) = to_value(&T::default())? else {
        unreachable!("argument structs serialize to objects")
    };
    if let Some(key) = file.keys().find(|k| !known.contains_key(*k)) {
        return Err(CliError::Usage(format!("{}: unknown key '{key}'", path.display())));
    }
    let Value::Object(given) = to_value(flags)? else {
        unreachable!("argument structs serialize to objects")
    };
    for (k, v) in given {
        if !(v.is_null() || v == Value::Bool(false)) {
            file.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(file)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Runtime(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_values() {
        let dir = std::env::temp_dir().join(format!("rdsnet-args-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("cfg.json");
        std::fs::write(&cfg, r#"{"dist": "gamma", "shape": 0.5, "scale": 2.0, "n": 40, "rng_seed": 3}"#).unwrap();
        let flags = SimulateArgs {
            n: Some(70),
            ..Default::default()
        };
        let merged = merge_config(&flags, Some(&cfg)).unwrap();
        assert_eq!(merged.n, Some(70));
        assert_eq!(merged.rng_seed, Some(3));
        assert_eq!(merged.model.shape, Some(0.5));
        assert_eq!(merged.model.dist.as_deref(), Some("gamma"));

        std::fs::write(&cfg, r#"{"shapee": 1.0}"#).unwrap();
        let err = merge_config(&flags, Some(&cfg)).unwrap_err();
        assert!(matches!(err, CliError::Usage(ref m) if m.contains("shapee")), "{err:?}");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
