//! Alternating reconstruction of the subgraph and the waiting-time
//! parameters, evaluation metrics, and synthetic experiment drivers.

use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::anneal::{anneal_chains, AnnealConfig, TraceRow};
use crate::error::{Error, Result};
use crate::estimate::{estimate_theta, NelderMeadOptions, ParamSpace};
use crate::graph::{AdjacencyMatrix, ObservedStudy};
use crate::likelihood::{EdgePrior, LikelihoodWorkspace};
use crate::par::Exec;
use crate::sim::{generate_population, random_seeds, simulate, PopulationGraph, PopulationSpec, SimConfig, SimResult, StopReason};
use crate::waiting::{Family, WaitingTimeModel};

/// Parameter set searched by the parameter step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSpace {
    /// Every parameter of the family is free.
    #[default]
    Full,
    /// For gamma, the shape only with the scale tied to `1 / shape`; other
    /// families are searched in full.
    UnitMean,
}

impl ThetaSpace {
    pub fn resolve(self, family: Family, study: &ObservedStudy) -> ParamSpace {
        match (self, family) {
            (ThetaSpace::UnitMean, Family::Gamma) => ParamSpace::gamma_unit_mean(),
            (_, f) => ParamSpace::for_family(f, study),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub theta0: WaitingTimeModel,
    pub iota_max: usize,
    pub anneal: AnnealConfig,
    pub prior: EdgePrior,
    pub theta_space: ThetaSpace,
    /// When false the parameters stay at `theta0` and only subgraphs are
    /// searched.
    pub estimate_theta: bool,
    /// Start every subgraph search from the recruitment graph instead of the
    /// previous estimate.
    pub cold_start: bool,
    pub nelder_mead: NelderMeadOptions,
}

impl RenderConfig {
    pub fn new(theta0: WaitingTimeModel) -> Self {
        Self {
            theta0,
            iota_max: 3,
            anneal: AnnealConfig::default(),
            prior: EdgePrior::Uniform,
            theta_space: ThetaSpace::Full,
            estimate_theta: true,
            cold_start: false,
            nelder_mead: NelderMeadOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Parameters used by this iteration's subgraph search.
    pub theta_in: WaitingTimeModel,
    /// Best log-posterior found by the subgraph search.
    pub a_step_logpost: f64,
    pub a_step_edges: usize,
    pub a_step_accepted: u64,
    pub gamma0: f64,
    pub stuck: bool,
    /// Parameters after the parameter step.
    pub theta_out: WaitingTimeModel,
    /// Log-posterior after the parameter step.
    pub theta_step_logpost: f64,
    pub theta_converged: bool,
    /// The parameter step failed and `theta_out` repeats `theta_in`.
    pub theta_failed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterTraceRow {
    pub outer: usize,
    pub iter: u64,
    pub gamma: f64,
    pub logpost: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct RenderOutcome {
    pub a_hat: AdjacencyMatrix,
    pub theta_hat: WaitingTimeModel,
    /// Log-posterior of `a_hat` under `theta_hat`.
    pub logpost: f64,
    pub iterations: Vec<IterationRecord>,
    pub trace: Vec<OuterTraceRow>,
}

/// Alternates subgraph search at fixed parameters with parameter search at
/// a fixed subgraph, `iota_max` times, and returns the last subgraph with
/// the parameters estimated from it.
pub fn render(study: &ObservedStudy, config: &RenderConfig, seed: u64, exec: Exec) -> Result<RenderOutcome> {
    if config.iota_max == 0 {
        return Err(Error::InvalidParameter("iota_max must be at least 1".into()));
    }
    let space = config.theta_space.resolve(config.theta0.family(), study);
    let mut theta = config.theta0;
    let mut a_prev = study.recruitment_adjacency().clone();
    let mut iterations = Vec::with_capacity(config.iota_max);
    let mut trace = Vec::new();
    let mut logpost = f64::NEG_INFINITY;
    for iota in 0..config.iota_max {
        let ws = LikelihoodWorkspace::build_with(study, &theta, exec)?;
        let init = if config.cold_start {
            study.recruitment_adjacency().clone()
        } else {
            a_prev.clone()
        };
        let step_seed: u64 = crate::stream(seed, iota as u64).random();
        let chains = anneal_chains(study, &ws, config.prior, &init, &config.anneal, step_seed, exec)?;
        let best = chains.into_best();
        trace.extend(best.trace.iter().map(|r: &TraceRow| OuterTraceRow {
            outer: iota,
            iter: r.iter,
            gamma: r.gamma,
            logpost: r.logpost,
            accepted: r.accepted,
        }));
        let log_prior = config.prior.log_prior(&best.best, study);
        let (theta_out, theta_step_logpost, converged, failed) = if config.estimate_theta {
            match estimate_theta(&best.best, study, space, &theta, &config.nelder_mead) {
                Ok(est) => (est.model, est.log_likelihood + log_prior, est.converged, false),
                Err(e) => {
                    log::warn!("parameter step {iota} failed, keeping the previous parameters: {e}");
                    (theta, best.best_logpost, false, true)
                }
            }
        } else {
            (theta, best.best_logpost, true, false)
        };
        iterations.push(IterationRecord {
            iteration: iota,
            theta_in: theta,
            a_step_logpost: best.best_logpost,
            a_step_edges: best.best.edge_count(),
            a_step_accepted: best.accepted,
            gamma0: best.gamma0,
            stuck: best.stuck,
            theta_out,
            theta_step_logpost,
            theta_converged: converged,
            theta_failed: failed,
        });
        theta = theta_out;
        logpost = theta_step_logpost;
        a_prev = best.best;
    }
    Ok(RenderOutcome {
        a_hat: a_prev,
        theta_hat: theta,
        logpost,
        iterations,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateConvention {
    /// Both counts over the number of vertex pairs.
    Paper,
    /// True positives over positives, false positives over negatives.
    #[default]
    Roc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub pairs: usize,
    pub true_edges: usize,
    pub estimated_edges: usize,
    pub true_positive: usize,
    pub false_positive: usize,
}

pub fn pair_counts(a_hat: &AdjacencyMatrix, a_true: &AdjacencyMatrix) -> Result<PairCounts> {
    if a_hat.n() != a_true.n() {
        return Err(Error::Dimension {
            expected: a_true.n(),
            found: a_hat.n(),
        });
    }
    let n = a_true.n();
    let true_positive = a_hat.edges().filter(|&(i, j)| a_true.get(i, j)).count();
    let estimated_edges = a_hat.edge_count();
    Ok(PairCounts {
        pairs: n * n.saturating_sub(1) / 2,
        true_edges: a_true.edge_count(),
        estimated_edges,
        true_positive,
        false_positive: estimated_edges - true_positive,
    })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl PairCounts {
    pub fn rates(&self, convention: RateConvention) -> Rates {
        match convention {
            RateConvention::Paper => Rates {
                tpr: ratio(self.true_positive, self.pairs),
                fpr: ratio(self.false_positive, self.pairs),
            },
            RateConvention::Roc => Rates {
                tpr: ratio(self.true_positive, self.true_edges),
                fpr: ratio(self.false_positive, self.pairs - self.true_edges),
            },
        }
    }
}

pub fn tpr_fpr(a_hat: &AdjacencyMatrix, a_true: &AdjacencyMatrix, convention: RateConvention) -> Result<Rates> {
    Ok(pair_counts(a_hat, a_true)?.rates(convention))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tpr: f64,
    pub fpr: f64,
    pub paper_tpr: f64,
    pub paper_fpr: f64,
    #[serde(flatten)]
    pub counts: PairCounts,
    /// `theta_hat - theta` componentwise, when both share a family.
    pub theta_bias: Option<Vec<f64>>,
}

impl MetricsReport {
    pub fn new(
        a_hat: &AdjacencyMatrix,
        a_true: &AdjacencyMatrix,
        theta_hat: Option<&WaitingTimeModel>,
        theta_true: Option<&WaitingTimeModel>,
    ) -> Result<Self> {
        let counts = pair_counts(a_hat, a_true)?;
        let roc = counts.rates(RateConvention::Roc);
        let paper = counts.rates(RateConvention::Paper);
        let theta_bias = match (theta_hat, theta_true) {
            (Some(h), Some(t)) if h.family() == t.family() => {
                Some(h.params().iter().zip(t.params()).map(|(a, b)| a - b).collect())
            }
            _ => None,
        };
        Ok(Self {
            tpr: roc.tpr,
            fpr: roc.fpr,
            paper_tpr: paper.tpr,
            paper_fpr: paper.fpr,
            counts,
            theta_bias,
        })
    }
}

/// Shared simulation and reconstruction settings of the experiment drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub population: PopulationSpec,
    pub sample_size: usize,
    pub seeds: usize,
    pub seed_interval: f64,
    pub coupons: u32,
    pub max_time: Option<f64>,
    /// Fresh seed draws allowed when recruitment dies out early.
    pub max_attempts: usize,
    pub render: RenderConfig,
    /// Record wall-clock runtimes (which makes outputs non-reproducible).
    pub timing: bool,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        let mut render = RenderConfig::new(WaitingTimeModel::gamma(1.0, 1.0).expect("valid"));
        render.anneal.iters = 20_000;
        render.theta_space = ThetaSpace::UnitMean;
        Self {
            population: PopulationSpec::default(),
            sample_size: 50,
            seeds: 3,
            seed_interval: 1.0,
            coupons: crate::sim::DEFAULT_COUPONS,
            max_time: None,
            max_attempts: 20,
            render,
            timing: false,
        }
    }
}

/// Random stream reserved for the population graph of an experiment.
pub const POPULATION_STREAM: u64 = u64::MAX;

impl ExperimentSettings {
    pub fn population_graph(&self, master_seed: u64) -> Result<PopulationGraph> {
        generate_population(&self.population, &mut crate::stream(master_seed, POPULATION_STREAM))
    }

    /// Simulates one study of the requested size, redrawing seeds if the
    /// recruitment dies out.
    pub fn simulate_study(
        &self,
        graph: &PopulationGraph,
        model: &WaitingTimeModel,
        rng: &mut crate::Rng,
    ) -> Result<SimResult> {
        let mut last = None;
        for _ in 0..self.max_attempts.max(1) {
            let seeds = random_seeds(graph, self.seeds, self.seed_interval, rng)?;
            let cfg = SimConfig {
                seeds,
                coupons: self.coupons,
                target_n: self.sample_size,
                model: *model,
                max_time: self.max_time,
            };
            let out = simulate(graph, &cfg, rng)?;
            if out.stop != StopReason::Exhausted {
                return Ok(out);
            }
            last = Some(out);
        }
        log::warn!("recruitment died out in every attempt; keeping the last partial sample");
        Ok(last.expect("at least one attempt"))
    }
}

fn elapsed(timing: bool, start: Instant) -> Option<f64> {
    timing.then(|| start.elapsed().as_secs_f64())
}

/// One replicate of the shape sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: usize,
    pub alpha: f64,
    pub replicate: usize,
    pub n: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub paper_tpr: f64,
    pub paper_fpr: f64,
    pub alpha_hat: f64,
    pub alpha_bias: f64,
    pub true_edges: usize,
    pub estimated_edges: usize,
    pub runtime_secs: Option<f64>,
    pub status: String,
}

fn failed_status(e: &Error) -> String {
    format!("failed: {e}")
}

/// For every shape `alpha` and replicate: simulate with gamma waiting
/// times of shape `alpha` and mean 1, reconstruct with the gamma family,
/// and score against the true subgraph. Replicate `r` of shape `k` uses
/// stream `k * replicates + r` of `master_seed`.
pub fn experiment_gamma_sweep(
    alphas: &[f64],
    replicates: usize,
    settings: &ExperimentSettings,
    master_seed: u64,
    exec: Exec,
) -> Result<Vec<SweepRow>> {
    let graph = settings.population_graph(master_seed)?;
    let models = alphas
        .iter()
        .map(|&a| WaitingTimeModel::gamma_unit_mean(a))
        .collect::<Result<Vec<_>>>()?;
    let rows = exec.map_range(alphas.len() * replicates, |dataset| {
        let (k, r) = (dataset / replicates, dataset % replicates);
        let start = Instant::now();
        let mut rng = crate::stream(master_seed, dataset as u64);
        let mut run = || -> Result<SweepRow> {
            let sim = settings.simulate_study(&graph, &models[k], &mut rng)?;
            let mut render_cfg = settings.render.clone();
            if render_cfg.theta0.family() != Family::Gamma {
                render_cfg.theta0 = WaitingTimeModel::gamma(1.0, 1.0)?;
            }
            let out = render(&sim.observed, &render_cfg, rng.random(), Exec::Sequential)?;
            let m = MetricsReport::new(&out.a_hat, &sim.true_subgraph, None, None)?;
            let alpha_hat = out.theta_hat.params()[0];
            Ok(SweepRow {
                dataset,
                alpha: alphas[k],
                replicate: r,
                n: sim.observed.n(),
                tpr: m.tpr,
                fpr: m.fpr,
                paper_tpr: m.paper_tpr,
                paper_fpr: m.paper_fpr,
                alpha_hat,
                alpha_bias: alpha_hat - alphas[k],
                true_edges: m.counts.true_edges,
                estimated_edges: m.counts.estimated_edges,
                runtime_secs: None,
                status: "ok".into(),
            })
        };
        let mut row = run().unwrap_or_else(|e| {
            log::error!("dataset {dataset} failed: {e}");
            SweepRow {
                dataset,
                alpha: alphas[k],
                replicate: r,
                n: 0,
                tpr: f64::NAN,
                fpr: f64::NAN,
                paper_tpr: f64::NAN,
                paper_fpr: f64::NAN,
                alpha_hat: f64::NAN,
                alpha_bias: f64::NAN,
                true_edges: 0,
                estimated_edges: 0,
                runtime_secs: None,
                status: failed_status(&e),
            }
        });
        row.runtime_secs = elapsed(settings.timing, start);
        row
    });
    Ok(rows)
}

/// One reconstruction of a misspecification pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisspecRow {
    pub dataset: usize,
    pub model: String,
    pub n: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub paper_tpr: f64,
    pub paper_fpr: f64,
    pub logpost: f64,
    pub estimated_edges: usize,
    pub runtime_secs: Option<f64>,
    pub status: String,
}

/// Simulates each dataset under `truth` and reconstructs it twice, starting
/// once from `truth` and once from `alternative` (a different family).
/// Rows come in pairs sharing a dataset id.
pub fn experiment_misspecification(
    truth: &WaitingTimeModel,
    alternative: &WaitingTimeModel,
    replicates: usize,
    settings: &ExperimentSettings,
    master_seed: u64,
    exec: Exec,
) -> Result<Vec<MisspecRow>> {
    let graph = settings.population_graph(master_seed)?;
    let pairs = exec.map_range(replicates, |dataset| {
        let mut rng = crate::stream(master_seed, dataset as u64);
        let sim = settings.simulate_study(&graph, truth, &mut rng);
        let seed: u64 = rng.random();
        [truth, alternative].map(|model| {
            let start = Instant::now();
            let run = || -> Result<MisspecRow> {
                let sim = sim.as_ref().map_err(|e| Error::InvalidParameter(e.to_string()))?;
                let mut cfg = settings.render.clone();
                cfg.theta0 = *model;
                let out = render(&sim.observed, &cfg, seed, Exec::Sequential)?;
                let m = MetricsReport::new(&out.a_hat, &sim.true_subgraph, None, None)?;
                Ok(MisspecRow {
                    dataset,
                    model: model.to_string(),
                    n: sim.observed.n(),
                    tpr: m.tpr,
                    fpr: m.fpr,
                    paper_tpr: m.paper_tpr,
                    paper_fpr: m.paper_fpr,
                    logpost: out.logpost,
                    estimated_edges: m.counts.estimated_edges,
                    runtime_secs: None,
                    status: "ok".into(),
                })
            };
            let mut row = run().unwrap_or_else(|e| {
                log::error!("dataset {dataset} under {model} failed: {e}");
                MisspecRow {
                    dataset,
                    model: model.to_string(),
                    n: 0,
                    tpr: f64::NAN,
                    fpr: f64::NAN,
                    paper_tpr: f64::NAN,
                    paper_fpr: f64::NAN,
                    logpost: f64::NAN,
                    estimated_edges: 0,
                    runtime_secs: None,
                    status: failed_status(&e),
                }
            });
            row.runtime_secs = elapsed(settings.timing, start);
            row
        })
    });
    Ok(pairs.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgraphSource {
    /// Parameters estimated from the true subgraph.
    True,
    /// Parameters from the full alternating reconstruction.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub dataset: usize,
    pub alpha: f64,
    pub replicate: usize,
    pub source: SubgraphSource,
    pub n: usize,
    pub alpha_hat: f64,
    pub bias: f64,
    pub converged: bool,
    pub runtime_secs: Option<f64>,
    pub status: String,
}

/// Shape-estimation bias under gamma waiting times of mean 1, from the true
/// subgraph and (when `sources` includes it) from the reconstructed one.
pub fn experiment_bias(
    alphas: &[f64],
    replicates: usize,
    sources: &[SubgraphSource],
    settings: &ExperimentSettings,
    master_seed: u64,
    exec: Exec,
) -> Result<Vec<BiasRow>> {
    let graph = settings.population_graph(master_seed)?;
    let models = alphas
        .iter()
        .map(|&a| WaitingTimeModel::gamma_unit_mean(a))
        .collect::<Result<Vec<_>>>()?;
    let theta0 = if settings.render.theta0.family() == Family::Gamma {
        settings.render.theta0
    } else {
        WaitingTimeModel::gamma(1.0, 1.0)?
    };
    let per_dataset = exec.map_range(alphas.len() * replicates, |dataset| {
        let (k, r) = (dataset / replicates, dataset % replicates);
        let mut rng = crate::stream(master_seed, dataset as u64);
        let sim = settings.simulate_study(&graph, &models[k], &mut rng);
        let seed: u64 = rng.random();
        sources
            .iter()
            .map(|&source| {
                let start = Instant::now();
                let run = || -> Result<(usize, f64, bool)> {
                    let sim = sim.as_ref().map_err(|e| Error::InvalidParameter(e.to_string()))?;
                    let study = &sim.observed;
                    match source {
                        SubgraphSource::True => {
                            let space = settings.render.theta_space.resolve(Family::Gamma, study);
                            let est = estimate_theta(
                                &sim.true_subgraph,
                                study,
                                space,
                                &theta0,
                                &settings.render.nelder_mead,
                            )?;
                            Ok((study.n(), est.model.params()[0], est.converged))
                        }
                        SubgraphSource::Estimated => {
                            let mut cfg = settings.render.clone();
                            cfg.theta0 = theta0;
                            let out = render(study, &cfg, seed, Exec::Sequential)?;
                            let ok = out.iterations.iter().all(|it| it.theta_converged);
                            Ok((study.n(), out.theta_hat.params()[0], ok))
                        }
                    }
                };
                let (n, alpha_hat, converged, status) = match run() {
                    Ok((n, a, c)) => (n, a, c, "ok".to_string()),
                    Err(e) => {
                        log::error!("dataset {dataset} ({source:?}) failed: {e}");
                        (0, f64::NAN, false, failed_status(&e))
                    }
                };
                BiasRow {
                    dataset,
                    alpha: alphas[k],
                    replicate: r,
                    source,
                    n,
                    alpha_hat,
                    bias: alpha_hat - alphas[k],
                    converged,
                    runtime_secs: elapsed(settings.timing, start),
                    status,
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(per_dataset.into_iter().flatten().collect())
}
