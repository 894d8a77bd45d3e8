//! Simulated annealing over compatible adjacency matrices.
//!
//! A chain moves by single-edge toggles drawn uniformly from the valid
//! moves of the current state and accepts with
//! `min(1, exp(dlogpost / gamma) * ratio)`, where `ratio` is the count of
//! valid moves before the toggle over the count after it. At `gamma = 1`
//! this is Metropolis-Hastings for the posterior.

pub mod moves;
pub mod schedule;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{is_compatible, AdjacencyMatrix, ObservedStudy, Toggle};
use crate::likelihood::{EdgePrior, LikelihoodCache, LikelihoodWorkspace};
use crate::par::Exec;
use crate::Rng;

pub use moves::MoveSet;
pub use schedule::{CoolingKind, CoolingSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalMode {
    /// Direct draw from the maintained move set.
    #[default]
    Uniform,
    /// Redraw random vertex pairs until one admits a valid toggle.
    RejectionLoop,
}

/// Ratio of valid-move counts before and after a toggle.
pub fn proposal_ratio(before: usize, after: usize) -> f64 {
    before as f64 / after as f64
}

/// `min(1, exp(delta_logpost / gamma) * ratio)`, computed in log space.
pub fn acceptance_prob(delta_logpost: f64, ratio: f64, gamma: f64) -> f64 {
    if delta_logpost.is_nan() {
        return 0.0;
    }
    let log_psi = delta_logpost / gamma + ratio.ln();
    if log_psi >= 0.0 {
        1.0
    } else {
        log_psi.exp()
    }
}

/// Unnormalized log density a chain targets.
pub trait LogTarget {
    /// Value at the chain's current state.
    fn value(&self) -> f64;
    /// Value after applying `toggle` to the current state.
    fn candidate(&self, toggle: &Toggle) -> f64;
    /// Records that `toggle` was accepted with the given candidate value.
    fn commit(&mut self, toggle: &Toggle, value: f64);
    /// Recomputes any incremental state from the move set's matrix.
    fn resync(&mut self, _moves: &MoveSet<'_>) {}
}

/// Log-posterior `l(A) + log Pr(A)` maintained through a [`LikelihoodCache`].
#[derive(Debug, Clone)]
pub struct PosteriorTarget<'w> {
    ws: &'w LikelihoodWorkspace,
    prior: EdgePrior,
    cache: LikelihoodCache,
    loglik: f64,
    logprior: f64,
}

impl<'w> PosteriorTarget<'w> {
    pub fn new(ws: &'w LikelihoodWorkspace, prior: EdgePrior, moves: &MoveSet<'_>) -> Self {
        let cache = LikelihoodCache::init(moves.matrix(), ws);
        Self {
            ws,
            prior,
            loglik: cache.log_likelihood(ws),
            logprior: prior.log_prior(moves.matrix(), moves.study()),
            cache,
        }
    }

    pub fn cache(&self) -> &LikelihoodCache {
        &self.cache
    }

    pub fn log_likelihood(&self) -> f64 {
        self.loglik
    }
}

impl LogTarget for PosteriorTarget<'_> {
    fn value(&self) -> f64 {
        self.loglik + self.logprior
    }

    fn candidate(&self, toggle: &Toggle) -> f64 {
        let lik = if self.loglik.is_finite() {
            self.loglik + self.cache.delta_log_likelihood(self.ws, toggle)
        } else {
            self.cache.log_likelihood_after(self.ws, toggle)
        };
        lik + self.logprior + self.prior.delta(toggle)
    }

    fn commit(&mut self, toggle: &Toggle, value: f64) {
        self.cache.apply_toggle(self.ws, toggle);
        self.logprior += self.prior.delta(toggle);
        self.loglik = value - self.logprior;
    }

    fn resync(&mut self, moves: &MoveSet<'_>) {
        debug_assert!(self.cache.verify(moves.matrix(), self.ws, 1e-6).is_ok());
        *self = Self::new(self.ws, self.prior, moves);
    }
}

/// Constant target: the chain samples uniformly over compatible matrices.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatTarget;

impl LogTarget for FlatTarget {
    fn value(&self) -> f64 {
        0.0
    }

    fn candidate(&self, _toggle: &Toggle) -> f64 {
        0.0
    }

    fn commit(&mut self, _toggle: &Toggle, _value: f64) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// No valid move exists; the state is frozen.
    Stuck,
    Moved {
        toggle: Toggle,
        accepted: bool,
        psi: f64,
    },
}

const COMPAT_CHECK_EVERY: u64 = 4096;

/// One annealing chain with its own random stream.
#[derive(Debug, Clone)]
pub struct Chain<'a, T> {
    moves: MoveSet<'a>,
    target: T,
    rng: Rng,
    mode: ProposalMode,
    iter: u64,
    accepted: u64,
    resync_every: u64,
    since_resync: u64,
    best_value: f64,
    best_extra: Vec<(usize, usize)>,
}

impl<'a, T: LogTarget> Chain<'a, T> {
    pub fn new(moves: MoveSet<'a>, target: T, rng: Rng, mode: ProposalMode) -> Self {
        let best_value = target.value();
        let best_extra = moves.removable_edges().to_vec();
        Self {
            moves,
            target,
            rng,
            mode,
            iter: 0,
            accepted: 0,
            resync_every: 10_000,
            since_resync: 0,
            best_value,
            best_extra,
        }
    }

    /// Number of accepted moves between full recomputations of the target.
    pub fn with_resync_every(mut self, accepted_moves: u64) -> Self {
        self.resync_every = accepted_moves.max(1);
        self
    }

    pub fn propose(&mut self) -> Option<Toggle> {
        match self.mode {
            ProposalMode::Uniform => self.moves.sample_uniform(&mut self.rng),
            ProposalMode::RejectionLoop => self.moves.sample_rejection(&mut self.rng),
        }
    }

    pub fn step(&mut self, gamma: f64) -> StepOutcome {
        let Some(toggle) = self.propose() else {
            return StepOutcome::Stuck;
        };
        let before = self.moves.total();
        let candidate = self.target.candidate(&toggle);
        self.moves.apply(toggle);
        let ratio = proposal_ratio(before, self.moves.total());
        let current = self.target.value();
        let delta = if current == f64::NEG_INFINITY && candidate == f64::NEG_INFINITY {
            0.0
        } else {
            candidate - current
        };
        let psi = acceptance_prob(delta, ratio, gamma);
        let accepted = self.rng.random::<f64>() < psi;
        if accepted {
            self.target.commit(&toggle, candidate);
            self.accepted += 1;
            self.since_resync += 1;
            if self.since_resync >= self.resync_every {
                self.target.resync(&self.moves);
                self.since_resync = 0;
            }
            if self.target.value() > self.best_value {
                self.best_value = self.target.value();
                self.best_extra.clear();
                self.best_extra.extend_from_slice(self.moves.removable_edges());
            }
        } else {
            self.moves.apply(toggle.inverse());
        }
        self.iter += 1;
        if cfg!(debug_assertions) && self.iter % COMPAT_CHECK_EVERY == 0 {
            assert!(is_compatible(self.moves.matrix(), self.moves.study()));
        }
        StepOutcome::Moved {
            toggle,
            accepted,
            psi,
        }
    }

    pub fn value(&self) -> f64 {
        self.target.value()
    }

    pub fn target(&self) -> &T {
        &self.target
    }

    pub fn moves(&self) -> &MoveSet<'a> {
        &self.moves
    }

    pub fn matrix(&self) -> &AdjacencyMatrix {
        self.moves.matrix()
    }

    pub fn iterations(&self) -> u64 {
        self.iter
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn best_value(&self) -> f64 {
        self.best_value
    }

    pub fn best_matrix(&self) -> AdjacencyMatrix {
        let mut a = self.moves.study().recruitment_adjacency().clone();
        for &(i, j) in &self.best_extra {
            a.set(i, j, true);
        }
        a
    }

    pub fn rng_mut(&mut self) -> &mut Rng {
        &mut self.rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    pub iters: u64,
    /// Initial temperature; probed from the starting state when absent.
    pub gamma0: Option<f64>,
    pub cooling: CoolingKind,
    pub cool_rate: f64,
    pub floor: f64,
    pub chains: usize,
    pub proposal: ProposalMode,
    /// Moves sampled when probing `gamma0`.
    pub probes: usize,
    /// Record every `trace_every`-th iteration; `0` disables the trace.
    pub trace_every: u64,
    pub resync_every: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            iters: 100_000,
            gamma0: None,
            cooling: CoolingKind::Geometric,
            cool_rate: CoolingSchedule::DEFAULT_RATE,
            floor: CoolingSchedule::DEFAULT_FLOOR,
            chains: 1,
            proposal: ProposalMode::Uniform,
            probes: 100,
            trace_every: 0,
            resync_every: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: u64,
    pub gamma: f64,
    pub logpost: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct AnnealOutcome {
    /// Highest-posterior state visited.
    pub best: AdjacencyMatrix,
    pub best_logpost: f64,
    /// State at the end of the run.
    pub last: AdjacencyMatrix,
    pub last_logpost: f64,
    pub gamma0: f64,
    pub iterations: u64,
    pub accepted: u64,
    /// The move set was empty, so the run stopped early.
    pub stuck: bool,
    pub trace: Vec<TraceRow>,
}

/// Standard deviation of `dlogpost` over `probes` proposals from the
/// current state, or `1` when it is zero or undefined.
pub fn probe_gamma0<T: LogTarget>(chain: &mut Chain<'_, T>, probes: usize) -> f64 {
    let current = chain.value();
    let mut deltas = Vec::with_capacity(probes);
    for _ in 0..probes {
        let Some(t) = chain.propose() else { break };
        let d = chain.target().candidate(&t) - current;
        if d.is_finite() {
            deltas.push(d);
        }
    }
    if deltas.len() < 2 {
        return 1.0;
    }
    let m = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let var = deltas.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (deltas.len() - 1) as f64;
    let sd = var.sqrt();
    if sd.is_finite() && sd > 0.0 {
        sd
    } else {
        1.0
    }
}

/// Runs one annealing chain from `init`.
pub fn anneal(
    study: &ObservedStudy,
    ws: &LikelihoodWorkspace,
    prior: EdgePrior,
    init: AdjacencyMatrix,
    config: &AnnealConfig,
    rng: Rng,
) -> Result<AnnealOutcome> {
    let moves = MoveSet::new(init, study)?;
    let target = PosteriorTarget::new(ws, prior, &moves);
    let mut chain =
        Chain::new(moves, target, rng, config.proposal).with_resync_every(config.resync_every);
    let gamma0 = match config.gamma0 {
        Some(g) => g,
        None => probe_gamma0(&mut chain, config.probes),
    };
    let schedule = CoolingSchedule::new(config.cooling, gamma0, config.cool_rate, config.floor)?;
    let mut trace = Vec::new();
    let mut stuck = false;
    for j in 0..config.iters {
        let gamma = schedule.gamma(j);
        match chain.step(gamma) {
            StepOutcome::Stuck => {
                log::debug!("no valid toggle from the current state; stopping after {j} iterations");
                stuck = true;
                break;
            }
            StepOutcome::Moved { accepted, .. } => {
                let every = config.trace_every;
                if every > 0 && (j % every == 0 || j + 1 == config.iters) {
                    trace.push(TraceRow {
                        iter: j,
                        gamma,
                        logpost: chain.value(),
                        accepted,
                    });
                }
            }
        }
    }
    Ok(AnnealOutcome {
        best: chain.best_matrix(),
        best_logpost: chain.best_value(),
        last_logpost: chain.value(),
        gamma0,
        iterations: chain.iterations(),
        accepted: chain.accepted(),
        stuck,
        trace,
        last: chain.moves.into_matrix(),
    })
}

#[derive(Debug, Clone)]
pub struct ChainsOutcome {
    pub chains: Vec<AnnealOutcome>,
    /// Index of the chain with the highest best posterior; ties go to the
    /// lowest index.
    pub best_chain: usize,
}

impl ChainsOutcome {
    pub fn best(&self) -> &AnnealOutcome {
        &self.chains[self.best_chain]
    }

    pub fn into_best(mut self) -> AnnealOutcome {
        self.chains.swap_remove(self.best_chain)
    }
}

/// Runs `config.chains` independent chains from `init`, chain `c` on stream
/// `c` of `seed`.
pub fn anneal_chains(
    study: &ObservedStudy,
    ws: &LikelihoodWorkspace,
    prior: EdgePrior,
    init: &AdjacencyMatrix,
    config: &AnnealConfig,
    seed: u64,
    exec: Exec,
) -> Result<ChainsOutcome> {
    let k = config.chains.max(1);
    let chains = exec
        .map_range(k, |c| {
            anneal(study, ws, prior, init.clone(), config, crate::stream(seed, c as u64))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut best_chain = 0;
    for (c, out) in chains.iter().enumerate() {
        if out.best_logpost > chains[best_chain].best_logpost {
            best_chain = c;
        }
    }
    Ok(ChainsOutcome { chains, best_chain })
}
