//! Fully resolved jobs. Flags and config files resolve into one of these
//! structs with every default filled in; the struct is what the manifest
//! records and what a replay runs.

use std::path::{Path, PathBuf};

use rdsnet::anneal::{anneal_chains, AnnealConfig, CoolingKind, ProposalMode};
use rdsnet::estimate::{estimate_theta, min_recruitment_gap, NelderMeadOptions, ParamTransform};
use rdsnet::io::{
    population_edges, population_from_edges, read_edge_list, read_json, read_study, subgraph_edges,
    subgraph_from_edges, write_csv, write_dot_panels, write_edge_list, write_events_csv, write_json, write_study,
};
use rdsnet::likelihood::{EdgePrior, LikelihoodWorkspace};
use rdsnet::pipeline::{
    experiment_bias, experiment_gamma_sweep, experiment_misspecification, render, ExperimentSettings,
    IterationRecord, MetricsReport, RenderConfig, SubgraphSource, ThetaSpace, POPULATION_STREAM,
};
use rdsnet::sim::{generate_population, random_seeds, simulate, PopulationSpec, SimConfig};
use rdsnet::{stream, AdjacencyMatrix, Exec, Family, ObservedStudy, WaitingTimeModel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{
    AnnealArgs, EstimateArgs, ExperimentArgs, ExportArgs, ModelArgs, PipelineArgs, ReconstructArgs, SimulateArgs,
};
use crate::manifest::{build_id, digests, now_ms, RunManifest, MANIFEST_FILE};
use crate::CliError;

pub trait Job: Serialize + DeserializeOwned {
    const NAME: &'static str;

    fn inputs(&self) -> Vec<PathBuf>;

    fn rng_seed(&self) -> Option<u64>;

    /// Writes the job's outputs into `out` and returns their file names.
    fn run(&self, out: &Path) -> Result<Vec<String>, CliError>;
}

/// Runs `job` into `out` and records the manifest beside its outputs.
pub fn execute<J: Job>(job: &J, out: &Path) -> Result<RunManifest, CliError> {
    let started = now_ms();
    let inputs = digests(&job.inputs())?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    let outputs = job.run(out)?;
    let manifest = RunManifest {
        subcommand: J::NAME.to_string(),
        config: serde_json::to_value(job).map_err(|e| CliError::Runtime(e.to_string()))?,
        rng_seed: job.rng_seed(),
        build: build_id().to_string(),
        inputs,
        outputs,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Re-runs the job a manifest describes.
pub fn replay(manifest: &RunManifest, out: &Path) -> Result<RunManifest, CliError> {
    fn go<J: Job>(config: &Value, out: &Path) -> Result<RunManifest, CliError> {
        let job: J = serde_json::from_value(config.clone())
            .map_err(|e| CliError::Data(format!("manifest config: {e}")))?;
        execute(&job, out)
    }
    let c = &manifest.config;
    match manifest.subcommand.as_str() {
        SimulateJob::NAME => go::<SimulateJob>(c, out),
        ReconstructJob::NAME => go::<ReconstructJob>(c, out),
        EstimateJob::NAME => go::<EstimateJob>(c, out),
        PipelineJob::NAME => go::<PipelineJob>(c, out),
        ExperimentJob::NAME => go::<ExperimentJob>(c, out),
        ExportJob::NAME => go::<ExportJob>(c, out),
        other => Err(CliError::Data(format!("manifest names unknown subcommand '{other}'"))),
    }
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

fn input_path(p: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    let p = required(p, flag)?;
    std::path::absolute(&p).map_err(|e| CliError::Usage(format!("--{flag} {}: {e}", p.display())))
}

fn seed_or_entropy(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random();
        log::info!("no --rng-seed given, drew {s}");
        s
    })
}

fn usage<E: std::fmt::Display>(flag: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Usage(format!("--{flag}: {e}"))
}

/// Builds the waiting-time model named by `--dist` and its parameter flags.
/// Missing parameters come from `fallback` when one is given.
pub fn resolve_model(
    m: &ModelArgs,
    fallback: Option<&dyn Fn(Family) -> WaitingTimeModel>,
) -> Result<WaitingTimeModel, CliError> {
    let family: Family = required(&m.dist, "dist")?.parse().map_err(usage("dist"))?;
    if let Some(v) = &m.theta0 {
        return WaitingTimeModel::from_params(family, v).map_err(usage("theta0"));
    }
    let given: Vec<Option<f64>> = match family {
        Family::Exponential => vec![m.rate],
        Family::Gamma => vec![m.shape, m.scale],
        Family::PowerLaw => vec![m.alpha, m.x_min],
    };
    let defaults = fallback.map(|f| f(family).params());
    let mut params = Vec::with_capacity(given.len());
    for (k, v) in given.into_iter().enumerate() {
        match (v, &defaults) {
            (Some(v), _) => params.push(v),
            (None, Some(d)) => params.push(d[k]),
            (None, None) => {
                let name = family.param_names()[k].replace('_', "-");
                return Err(CliError::Usage(format!("--{name} is required for {family}")));
            }
        }
    }
    WaitingTimeModel::from_params(family, &params).map_err(usage("dist"))
}

/// Starting values for the parameter search when none are given.
fn default_start(study: &ObservedStudy) -> impl Fn(Family) -> WaitingTimeModel + '_ {
    move |family| {
        match family {
            Family::Exponential => WaitingTimeModel::exponential(1.0),
            Family::Gamma => WaitingTimeModel::gamma(1.0, 1.0),
            Family::PowerLaw => {
                let gap = min_recruitment_gap(study);
                WaitingTimeModel::power_law(2.0, if gap.is_finite() { 0.5 * gap } else { 1.0 })
            }
        }
        .expect("valid default")
    }
}

fn resolve_anneal(a: &AnnealArgs, base: AnnealConfig) -> Result<(AnnealConfig, EdgePrior), CliError> {
    let cooling = match &a.cooling {
        Some(s) => s.parse::<CoolingKind>().map_err(usage("cooling"))?,
        None => base.cooling,
    };
    let proposal = match a.proposal.as_deref() {
        None => base.proposal,
        Some("uniform") => ProposalMode::Uniform,
        Some("rejection" | "rejection_loop") => ProposalMode::RejectionLoop,
        Some(other) => return Err(CliError::Usage(format!("--proposal: unknown mode '{other}'"))),
    };
    let prior = match &a.prior {
        Some(s) => s.parse::<EdgePrior>().map_err(usage("prior"))?,
        None => EdgePrior::Uniform,
    };
    let config = AnnealConfig {
        iters: a.iters.unwrap_or(base.iters),
        gamma0: a.gamma0.or(base.gamma0),
        cooling,
        cool_rate: a.cool_rate.unwrap_or(base.cool_rate),
        floor: a.floor.unwrap_or(base.floor),
        chains: a.chains.unwrap_or(base.chains),
        proposal,
        probes: a.probes.unwrap_or(base.probes),
        ..base
    };
    if config.chains == 0 {
        return Err(CliError::Usage("--chains must be at least 1".into()));
    }
    Ok((config, prior))
}

fn resolve_theta_space(s: &Option<String>, default: ThetaSpace) -> Result<ThetaSpace, CliError> {
    match s.as_deref().map(|s| s.replace('-', "_")).as_deref() {
        None => Ok(default),
        Some("full") => Ok(ThetaSpace::Full),
        Some("unit_mean") => Ok(ThetaSpace::UnitMean),
        Some(other) => Err(CliError::Usage(format!("--theta-space: unknown value '{other}'"))),
    }
}

/// `kind:params` shorthand for the synthetic population families.
pub fn parse_population(s: &str) -> Result<PopulationSpec, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Usage(format!("--population: cannot parse '{s}'"));
    let num = |i: usize| -> Result<f64, CliError> { parts.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
    let int = |i: usize| -> Result<usize, CliError> { parts.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
    let spec = match (parts[0].replace('-', "_").as_str(), parts.len()) {
        ("heavy_tailed", 4) => PopulationSpec::HeavyTailed {
            n: int(1)?,
            mean_degree: num(2)?,
            exponent: num(3)?,
        },
        ("erdos_renyi", 3) => PopulationSpec::ErdosRenyi { n: int(1)?, p: num(2)? },
        ("small_world", 4) => PopulationSpec::SmallWorld {
            n: int(1)?,
            k: int(2)?,
            beta: num(3)?,
        },
        _ => return Err(bad()),
    };
    Ok(spec)
}

fn exec_for(parallel_units: usize) -> Exec {
    if parallel_units > 1 {
        Exec::default()
    } else {
        Exec::Sequential
    }
}

fn out_file(out: &Path, name: &str) -> PathBuf {
    out.join(name)
}

fn trace_name(name: &Option<String>) -> Result<Option<String>, CliError> {
    match name {
        Some(n) if Path::new(n).is_absolute() || n.contains("..") => Err(CliError::Usage(format!(
            "--trace-out {n}: expected a file name inside the output directory"
        ))),
        _ => Ok(name.clone()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationSource {
    File { path: PathBuf },
    Generated { spec: PopulationSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateJob {
    pub population: PopulationSource,
    pub model: WaitingTimeModel,
    pub n: usize,
    pub seeds: usize,
    pub seed_interval: f64,
    pub coupons: u32,
    pub max_time: Option<f64>,
    pub rng_seed: u64,
}

impl SimulateJob {
    pub fn resolve(a: &SimulateArgs) -> Result<Self, CliError> {
        let population = match (&a.graph, &a.population) {
            (Some(_), Some(_)) => return Err(CliError::Usage("give either --graph or --population".into())),
            (Some(_), None) => PopulationSource::File {
                path: input_path(&a.graph, "graph")?,
            },
            (None, p) => PopulationSource::Generated {
                spec: p.as_deref().map(parse_population).transpose()?.unwrap_or_default(),
            },
        };
        Ok(Self {
            population,
            model: resolve_model(&a.model, None)?,
            n: a.n.unwrap_or(50),
            seeds: a.seeds.unwrap_or(3),
            seed_interval: a.seed_interval.unwrap_or(1.0),
            coupons: a.coupons.unwrap_or(rdsnet::sim::DEFAULT_COUPONS),
            max_time: a.max_time,
            rng_seed: seed_or_entropy(a.rng_seed),
        })
    }
}

impl Job for SimulateJob {
    const NAME: &'static str = "simulate";

    fn inputs(&self) -> Vec<PathBuf> {
        match &self.population {
            PopulationSource::File { path } => vec![path.clone()],
            PopulationSource::Generated { .. } => vec![],
        }
    }

    fn rng_seed(&self) -> Option<u64> {
        Some(self.rng_seed)
    }

    fn run(&self, out: &Path) -> Result<Vec<String>, CliError> {
        let mut written = Vec::new();
        let graph = match &self.population {
            PopulationSource::File { path } => population_from_edges(&read_edge_list(path)?)?,
            PopulationSource::Generated { spec } => {
                let g = generate_population(spec, &mut stream(self.rng_seed, POPULATION_STREAM))?;
                write_edge_list(&out_file(out, "population.tsv"), &population_edges(&g))?;
                written.push("population.tsv".to_string());
                g
            }
        };
        let mut rng = stream(self.rng_seed, 0);
        let config = SimConfig {
            seeds: random_seeds(&graph, self.seeds, self.seed_interval, &mut rng)?,
            coupons: self.coupons,
            target_n: self.n,
            model: self.model,
            max_time: self.max_time,
        };
        let res = simulate(&graph, &config, &mut rng)?;
        if res.observed.n() < self.n {
            log::warn!(
                "recruitment stopped ({:?}) after {} of {} subjects",
                res.stop,
                res.observed.n(),
                self.n
            );
        }
        write_study(&out_file(out, "observed.json"), &res.observed)?;
        write_edge_list(
            &out_file(out, "true_edges.tsv"),
            &subgraph_edges(&res.observed, &res.true_subgraph),
        )?;
        write_events_csv(&out_file(out, "events.csv"), &res.events)?;
        written.extend(["observed.json", "true_edges.tsv", "events.csv"].map(String::from));
        Ok(written)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSource {
    Recruitment,
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructJob {
    pub study: PathBuf,
    pub model: WaitingTimeModel,
    pub anneal: AnnealConfig,
    pub prior: EdgePrior,
    pub init: InitSource,
    pub trace_out: Option<String>,
    pub rng_seed: u64,
}

#[derive(Debug, Serialize)]
struct ChainSummary {
    chain: usize,
    logpost: f64,
    accepted: u64,
    stuck: bool,
}

#[derive(Debug, Serialize)]
struct ReconstructOutput {
    theta: WaitingTimeModel,
    edges: Vec<(u64, u64)>,
    logpost: f64,
    last_edges: Vec<(u64, u64)>,
    last_logpost: f64,
    gamma0: f64,
    iterations: u64,
    accepted: u64,
    stuck: bool,
    best_chain: usize,
    chains: Vec<ChainSummary>,
}

impl ReconstructJob {
    pub fn resolve(a: &ReconstructArgs) -> Result<Self, CliError> {
        let (mut anneal, prior) = resolve_anneal(&a.anneal, AnnealConfig::default())?;
        let trace_out = trace_name(&a.trace_out)?;
        anneal.trace_every = match (a.trace_every, &trace_out) {
            (Some(k), _) => k,
            (None, Some(_)) => 1,
            (None, None) => 0,
        };
        let init = match a.init.as_deref() {
            None | Some("recruitment") => InitSource::Recruitment,
            Some(p) => InitSource::File {
                path: input_path(&Some(PathBuf::from(p)), "init")?,
            },
        };
        Ok(Self {
            study: input_path(&a.study, "study")?,
            model: resolve_model(&a.model, None)?,
            anneal,
            prior,
            init,
            trace_out,
            rng_seed: seed_or_entropy(a.rng_seed),
        })
    }
}

impl Job for ReconstructJob {
    const NAME: &'static str = "reconstruct";

    fn inputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.study.clone()];
        if let InitSource::File { path } = &self.init {
            v.push(path.clone());
        }
        v
    }

    fn rng_seed(&self) -> Option<u64> {
        Some(self.rng_seed)
    }

    fn run(&self, out: &Path) -> Result<Vec<String>, CliError> {
        let study = read_study(&self.study)?;
        let init = match &self.init {
            InitSource::Recruitment => study.recruitment_adjacency().clone(),
            InitSource::File { path } => subgraph_from_edges(&study, &read_edge_list(path)?)?,
        };
        let exec = exec_for(self.anneal.chains);
        let ws = LikelihoodWorkspace::build_with(&study, &self.model, exec)?;
        let res = anneal_chains(&study, &ws, self.prior, &init, &self.anneal, self.rng_seed, exec)?;
        let chains = res
            .chains
            .iter()
            .enumerate()
            .map(|(chain, c)| ChainSummary {
                chain,
                logpost: c.best_logpost,
                accepted: c.accepted,
                stuck: c.stuck,
            })
            .collect();
        let best_chain = res.best_chain;
        let best = res.into_best();
        let mut written = Vec::new();
        if let Some(name) = &self.trace_out {
            write_csv(&out_file(out, name), &best.trace)?;
            written.push(name.clone());
        }
        let output = ReconstructOutput {
            theta: self.model,
            edges: subgraph_edges(&study, &best.best),
            logpost: best.best_logpost,
            last_edges: subgraph_edges(&study, &best.last),
            last_logpost: best.last_logpost,
            gamma0: best.gamma0,
            iterations: best.iterations,
            accepted: best.accepted,
            stuck: best.stuck,
            best_chain,
            chains,
        };
        write_json(&out_file(out, "estimate.json"), &output)?;
        written.push("estimate.json".into());
        Ok(written)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateJob {
    pub study: PathBuf,
    pub edges: PathBuf,
    pub theta0: WaitingTimeModel,
    pub theta_space: ThetaSpace,
    pub transform: ParamTransform,
    pub nelder_mead: NelderMeadOptions,
}

#[derive(Debug, Serialize)]
struct EstimateOutput {
    theta: WaitingTimeModel,
    log_likelihood: f64,
    converged: bool,
    iterations: usize,
    evaluations: usize,
    theta0: WaitingTimeModel,
    theta_space: ThetaSpace,
    transform: ParamTransform,
}

impl EstimateJob {
    pub fn resolve(a: &EstimateArgs) -> Result<Self, CliError> {
        let study_path = input_path(&a.study, "study")?;
        let study = read_study(&study_path)?;
        let transform = match a.transform.as_deref() {
            None | Some("log") => ParamTransform::Unconstrained,
            Some("raw") => ParamTransform::RawClipped,
            Some(other) => return Err(CliError::Usage(format!("--transform: unknown value '{other}'"))),
        };
        let start = default_start(&study);
        let theta0 = resolve_model(&a.model, Some(&start))?;
        Ok(Self {
            study: study_path,
            edges: input_path(&a.edges, "edges")?,
            theta0,
            theta_space: resolve_theta_space(&a.theta_space, ThetaSpace::Full)?,
            transform,
            nelder_mead: NelderMeadOptions::default(),
        })
    }
}

impl Job for EstimateJob {
    const NAME: &'static str = "estimate";

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.study.clone(), self.edges.clone()]
    }

    fn rng_seed(&self) -> Option<u64> {
        None
    }

    fn run(&self, out: &Path) -> Result<Vec<String>, CliError> {
        let study = read_study(&self.study)?;
        let a = subgraph_from_edges(&study, &read_edge_list(&self.edges)?)?;
        let space = self
            .theta_space
            .resolve(self.theta0.family(), &study)
            .with_transform(self.transform);
        let est = estimate_theta(&a, &study, space, &self.theta0, &self.nelder_mead)?;
        let output = EstimateOutput {
            theta: est.model,
            log_likelihood: est.log_likelihood,
            converged: est.converged,
            iterations: est.iterations,
            evaluations: est.evaluations,
            theta0: self.theta0,
            theta_space: self.theta_space,
            transform: self.transform,
        };
        write_json(&out_file(out, "theta.json"), &output)?;
        Ok(vec!["theta.json".into()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineJob {
    pub study: PathBuf,
    pub render: RenderConfig,
    pub true_edges: Option<PathBuf>,
    pub trace_out: Option<String>,
    pub rng_seed: u64,
}

#[derive(Debug, Serialize)]
struct PipelineOutput<'a> {
    theta: WaitingTimeModel,
    logpost: f64,
    a_hat: Vec<(u64, u64)>,
    edge_count: usize,
    iterations: &'a [IterationRecord],
    metrics: Option<MetricsReport>,
}

/// Flat copy of [`MetricsReport`] for CSV output.
#[derive(Debug, Serialize)]
struct MetricsRow {
    tpr: f64,
    fpr: f64,
    paper_tpr: f64,
    paper_fpr: f64,
    pairs: usize,
    true_edges: usize,
    estimated_edges: usize,
    true_positive: usize,
    false_positive: usize,
}

impl From<&MetricsReport> for MetricsRow {
    fn from(m: &MetricsReport) -> Self {
        Self {
            tpr: m.tpr,
            fpr: m.fpr,
            paper_tpr: m.paper_tpr,
            paper_fpr: m.paper_fpr,
            pairs: m.counts.pairs,
            true_edges: m.counts.true_edges,
            estimated_edges: m.counts.estimated_edges,
            true_positive: m.counts.true_positive,
            false_positive: m.counts.false_positive,
        }
    }
}

impl PipelineJob {
    pub fn resolve(a: &PipelineArgs) -> Result<Self, CliError> {
        let study_path = input_path(&a.study, "study")?;
        let study = read_study(&study_path)?;
        let theta0 = resolve_model(&a.model, Some(&default_start(&study)))?;
        let (mut anneal, prior) = resolve_anneal(&a.anneal, AnnealConfig::default())?;
        let trace_out = trace_name(&a.trace_out)?;
        anneal.trace_every = match (a.trace_every, &trace_out) {
            (Some(k), _) => k,
            (None, Some(_)) => 1,
            (None, None) => 0,
        };
        let render = RenderConfig {
            iota_max: a.iota_max.unwrap_or(3),
            anneal,
            prior,
            theta_space: resolve_theta_space(&a.theta_space, ThetaSpace::Full)?,
            estimate_theta: !a.fixed_theta,
            cold_start: a.cold_start,
            ..RenderConfig::new(theta0)
        };
        if render.iota_max == 0 {
            return Err(CliError::Usage("--iota-max must be at least 1".into()));
        }
        Ok(Self {
            study: study_path,
            render,
            true_edges: a.true_edges.as_ref().map(|p| input_path(&Some(p.clone()), "true-edges")).transpose()?,
            trace_out,
            rng_seed: seed_or_entropy(a.rng_seed),
        })
    }
}

impl Job for PipelineJob {
    const NAME: &'static str = "pipeline";

    fn inputs(&self) -> Vec<PathBuf> {
        std::iter::once(self.study.clone()).chain(self.true_edges.clone()).collect()
    }

    fn rng_seed(&self) -> Option<u64> {
        Some(self.rng_seed)
    }

    fn run(&self, out: &Path) -> Result<Vec<String>, CliError> {
        let study = read_study(&self.study)?;
        let truth = self
            .true_edges
            .as_ref()
            .map(|p| subgraph_from_edges(&study, &read_edge_list(p)?))
            .transpose()?;
        let res = render(&study, &self.render, self.rng_seed, exec_for(self.render.anneal.chains))?;
        let metrics = truth
            .as_ref()
            .map(|t| MetricsReport::new(&res.a_hat, t, None, None))
            .transpose()?;
        let mut written = Vec::new();
        if let Some(m) = &metrics {
            write_csv(&out_file(out, "metrics.csv"), &[MetricsRow::from(m)])?;
            written.push("metrics.csv".into());
        }
        if let Some(name) = &self.trace_out {
            write_csv(&out_file(out, name), &res.trace)?;
            written.push(name.clone());
        }
        written.extend(write_dot_panels(out, &study, truth.as_ref(), &res.a_hat)?);
        let output = PipelineOutput {
            theta: res.theta_hat,
            logpost: res.logpost,
            a_hat: subgraph_edges(&study, &res.a_hat),
            edge_count: res.a_hat.edge_count(),
            iterations: &res.iterations,
            metrics,
        };
        write_json(&out_file(out, "results.json"), &output)?;
        written.push("results.json".into());
        Ok(written)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GammaSweep,
    Misspec,
    Bias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentJob {
    pub kind: ExperimentKind,
    pub alphas: Vec<f64>,
    pub replicates: usize,
    pub sources: Vec<SubgraphSource>,
    /// Generating model of the misspecification experiment.
    pub truth: WaitingTimeModel,
    /// Starting point of the misspecified reconstruction.
    pub alternative: WaitingTimeModel,
    pub settings: ExperimentSettings,
    pub exec: Exec,
    pub rng_seed: u64,
}

#[derive(Debug, Serialize)]
struct ExperimentOutput<'a, R> {
    kind: ExperimentKind,
    rows: &'a [R],
}

impl ExperimentJob {
    pub fn resolve(a: &ExperimentArgs) -> Result<Self, CliError> {
        let kind = match required(&a.kind, "kind")?.replace('_', "-").as_str() {
            "gamma-sweep" => ExperimentKind::GammaSweep,
            "misspec" => ExperimentKind::Misspec,
            "bias" => ExperimentKind::Bias,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown experiment '{other}'; expected gamma-sweep, misspec or bias"
                )))
            }
        };
        let base = ExperimentSettings::default();
        let (anneal, prior) = resolve_anneal(&a.anneal, base.render.anneal.clone())?;
        let render = RenderConfig {
            iota_max: a.iota_max.unwrap_or(base.render.iota_max),
            anneal,
            prior,
            theta_space: resolve_theta_space(&a.theta_space, base.render.theta_space)?,
            cold_start: a.cold_start,
            ..base.render.clone()
        };
        let settings = ExperimentSettings {
            population: a.population.as_deref().map(parse_population).transpose()?.unwrap_or(base.population),
            sample_size: a.n.unwrap_or(base.sample_size),
            seeds: a.seeds.unwrap_or(base.seeds),
            seed_interval: a.seed_interval.unwrap_or(base.seed_interval),
            coupons: a.coupons.unwrap_or(base.coupons),
            max_time: a.max_time.or(base.max_time),
            render,
            timing: a.timing,
            ..base
        };
        let alphas = a.alphas.clone().unwrap_or_else(|| match kind {
            ExperimentKind::Bias => vec![0.5, 1.0, 1.5],
            _ => vec![0.5],
        });
        let sources = match &a.sources {
            None => vec![SubgraphSource::True, SubgraphSource::Estimated],
            Some(v) => v
                .iter()
                .map(|s| match s.as_str() {
                    "true" => Ok(SubgraphSource::True),
                    "estimated" => Ok(SubgraphSource::Estimated),
                    other => Err(CliError::Usage(format!("--sources: unknown source '{other}'"))),
                })
                .collect::<Result<_, _>>()?,
        };
        let truth = if a.model.dist.is_some() {
            resolve_model(&a.model, None)?
        } else {
            WaitingTimeModel::gamma(0.5, 2.0).expect("valid")
        };
        let replicates = a.replicates.unwrap_or(match kind {
            ExperimentKind::Bias => 50,
            _ => 20,
        });
        Ok(Self {
            kind,
            alphas,
            replicates,
            sources,
            truth,
            alternative: WaitingTimeModel::exponential(a.alt_rate.unwrap_or(1.0)).map_err(usage("alt-rate"))?,
            settings,
            exec: if a.sequential { Exec::Sequential } else { exec_for(replicates) },
            rng_seed: seed_or_entropy(a.rng_seed),
        })
    }

    fn write<R: Serialize>(&self, out: &Path, rows: &[R]) -> Result<Vec<String>, CliError> {
        write_json(&out_file(out, "results.json"), &ExperimentOutput { kind: self.kind, rows })?;
        write_csv(&out_file(out, "metrics.csv"), rows)?;
        Ok(vec!["results.json".into(), "metrics.csv".into()])
    }
}

impl Job for ExperimentJob {
    const NAME: &'static str = "experiment";

    fn inputs(&self) -> Vec<PathBuf> {
        vec![]
    }

    fn rng_seed(&self) -> Option<u64> {
        Some(self.rng_seed)
    }

    fn run(&self, out: &Path) -> Result<Vec<String>, CliError> {
        let (s, seed, exec) = (&self.settings, self.rng_seed, self.exec);
        match self.kind {
            ExperimentKind::GammaSweep => {
                self.write(out, &experiment_gamma_sweep(&self.alphas, self.replicates, s, seed, exec)?)
            }
            ExperimentKind::Misspec => self.write(
                out,
                &experiment_misspecification(&self.truth, &self.alternative, self.replicates, s, seed, exec)?,
            ),
            ExperimentKind::Bias => self.write(
                out,
                &experiment_bias(&self.alphas, self.replicates, &self.sources, s, seed, exec)?,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportJob {
    pub study: PathBuf,
    pub estimate: PathBuf,
    pub truth: Option<PathBuf>,
}

impl ExportJob {
    pub fn resolve(a: &ExportArgs) -> Result<Self, CliError> {
        if !a.dot {
            return Err(CliError::Usage("export needs a format; only --dot is supported".into()));
        }
        Ok(Self {
            study: input_path(&a.study, "study")?,
            estimate: input_path(&a.estimate, "estimate")?,
            truth: a.truth.as_ref().map(|p| input_path(&Some(p.clone()), "truth")).transpose()?,
        })
    }
}

/// Edges from an edge list, or from the `edges` / `a_hat` field of a
/// reconstruct or pipeline result.
fn read_estimate(study: &ObservedStudy, path: &Path) -> Result<AdjacencyMatrix, CliError> {
    let edges = if path.extension().is_some_and(|e| e == "json") {
        let v: Value = read_json(path)?;
        let field = v.get("edges").or_else(|| v.get("a_hat")).ok_or_else(|| {
            CliError::Data(format!("{}: no 'edges' or 'a_hat' field", path.display()))
        })?;
        serde_json::from_value::<Vec<(u64, u64)>>(field.clone())
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
    } else {
        read_edge_list(path)?
    };
    Ok(subgraph_from_edges(study, &edges)?)
}

impl Job for ExportJob {
    const NAME: &'static str = "export";

    fn inputs(&self) -> Vec<PathBuf> {
        [Some(self.study.clone()), Some(self.estimate.clone()), self.truth.clone()]
            .into_iter()
            .flatten()
            .collect()
    }

    fn rng_seed(&self) -> Option<u64> {
        None
    }

    fn run(&self, out: &Path) -> Result<Vec<String>, CliError> {
        let study = read_study(&self.study)?;
        let estimate = read_estimate(&study, &self.estimate)?;
        let truth = self
            .truth
            .as_ref()
            .map(|p| subgraph_from_edges(&study, &read_edge_list(p)?))
            .transpose()?;
        Ok(write_dot_panels(out, &study, truth.as_ref(), &estimate)?)
    }
}
