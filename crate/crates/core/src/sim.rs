//! Continuous-time recruitment diffusion over a known population graph, and
//! synthetic population generators.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, CouponMatrix, ObservedStudy, RecruitmentGraph};
use crate::waiting::WaitingTimeModel;
use crate::Rng;

pub const DEFAULT_COUPONS: u32 = 3;

/// Simple undirected graph as sorted adjacency lists over vertices
/// `0..n`, each carrying an external label (`1..=n` unless loaded from a
/// file).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationGraph {
    adj: Vec<Vec<usize>>,
    labels: Vec<u64>,
}

impl PopulationGraph {
    /// Builds from an edge list; duplicate edges are merged, self-loops and
    /// out-of-range endpoints rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adj = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::validation(
                    "edges",
                    format!("edge ({u}, {v}) out of range for {n} vertices"),
                ));
            }
            if u == v {
                return Err(Error::validation("edges", format!("self-loop at vertex {u}")));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            adj,
            labels: (1..=n as u64).collect(),
        })
    }

    /// Replaces the vertex labels; they must be distinct.
    pub fn with_labels(mut self, labels: Vec<u64>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::validation(
                "labels",
                format!("has length {}, expected {}", labels.len(), self.n()),
            ));
        }
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("labels", "duplicate vertex label"));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn label(&self, v: usize) -> u64 {
        self.labels[v]
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn index_of(&self, label: u64) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n() == 0 {
            0.0
        } else {
            2.0 * self.edge_count() as f64 / self.n() as f64
        }
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, l)| l.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }
}

/// Synthetic population graph families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopulationSpec {
    ErdosRenyi { n: usize, p: f64 },
    /// Watts-Strogatz ring with `k` nearest neighbours (`k` even) and
    /// rewiring probability `beta`.
    SmallWorld { n: usize, k: usize, beta: f64 },
    /// Erased configuration model on an explicit degree sequence.
    ConfigModel { degrees: Vec<u32> },
    /// Erased configuration model on a discretized Pareto degree sequence
    /// with tail `P(k) ~ k^-exponent`, calibrated to the requested mean.
    HeavyTailed {
        n: usize,
        mean_degree: f64,
        exponent: f64,
    },
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec::HeavyTailed {
            n: 1000,
            mean_degree: 8.0,
            exponent: 2.5,
        }
    }
}

pub fn generate_population(spec: &PopulationSpec, rng: &mut Rng) -> Result<PopulationGraph> {
    match *spec {
        PopulationSpec::ErdosRenyi { n, p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("edge probability {p} outside [0, 1]")));
            }
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.random_bool(p) {
                        edges.push((u, v));
                    }
                }
            }
            PopulationGraph::from_edges(n, edges)
        }
        PopulationSpec::SmallWorld { n, k, beta } => small_world(n, k, beta, rng),
        PopulationSpec::ConfigModel { ref degrees } => config_model(degrees, rng),
        PopulationSpec::HeavyTailed {
            n,
            mean_degree,
            exponent,
        } => {
            // erasure loses edges at the hubs; rescale the sequence mean until
            // the realized graph is within 2% of the target
            let mut seq_mean = mean_degree;
            let mut last = None;
            for _ in 0..8 {
                let mut trial = rng.clone();
                let degrees = heavy_tailed_degrees(n, seq_mean, exponent, &mut trial)?;
                let g = config_model(&degrees, &mut trial)?;
                let realized = g.mean_degree();
                let done = (realized - mean_degree).abs() <= 0.02 * mean_degree;
                last = Some((g, trial));
                if done || realized <= 0.0 {
                    break;
                }
                seq_mean = (seq_mean * mean_degree / realized).min((n - 2) as f64);
            }
            let (g, trial) = last.expect("at least one attempt");
            *rng = trial;
            Ok(g)
        }
    }
}

fn small_world(n: usize, k: usize, beta: f64, rng: &mut Rng) -> Result<PopulationGraph> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!("rewiring probability {beta} outside [0, 1]")));
    }
    if k % 2 != 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "small-world needs even k < n, got k = {k}, n = {n}"
        )));
    }
    let mut present = std::collections::BTreeSet::new();
    for u in 0..n {
        for s in 1..=k / 2 {
            let v = (u + s) % n;
            present.insert((u.min(v), u.max(v)));
        }
    }
    for s in 1..=k / 2 {
        for u in 0..n {
            let v = (u + s) % n;
            let e = (u.min(v), u.max(v));
            if !present.contains(&e) || !rng.random_bool(beta) {
                continue;
            }
            // rewire the far endpoint, avoiding self-loops and duplicates
            let free: Vec<usize> = (0..n)
                .filter(|&w| w != u && !present.contains(&(u.min(w), u.max(w))))
                .collect();
            if let Some(&w) = free.get(rng.random_range(0..free.len().max(1))) {
                present.remove(&e);
                present.insert((u.min(w), u.max(w)));
            }
        }
    }
    PopulationGraph::from_edges(n, present)
}

fn config_model(degrees: &[u32], rng: &mut Rng) -> Result<PopulationGraph> {
    let n = degrees.len();
    let total: u64 = degrees.iter().map(|&d| d as u64).sum();
    if total % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "degree sequence sums to {total}, which is odd"
        )));
    }
    if let Some(v) = degrees.iter().position(|&d| d as usize >= n.max(1)) {
        return Err(Error::InvalidParameter(format!(
            "degree {} at vertex {v} exceeds n - 1",
            degrees[v]
        )));
    }
    let mut stubs: Vec<usize> = degrees
        .iter()
        .enumerate()
        .flat_map(|(v, &d)| std::iter::repeat_n(v, d as usize))
        .collect();
    stubs.shuffle(rng);
    // erased: self-loops and repeated pairs are dropped
    let edges = stubs
        .chunks_exact(2)
        .filter(|p| p[0] != p[1])
        .map(|p| (p[0], p[1]));
    PopulationGraph::from_edges(n, edges)
}

/// Degree sequence `round(x_m * U^(-1 / (exponent - 1)))`, clamped to
/// `[1, n - 1]`, with `x_m` bisected so the sequence mean matches
/// `mean_degree`. The last entry is bumped if needed to make the sum even.
pub fn heavy_tailed_degrees(
    n: usize,
    mean_degree: f64,
    exponent: f64,
    rng: &mut Rng,
) -> Result<Vec<u32>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 vertices, got {n}")));
    }
    if !(exponent > 2.0) {
        return Err(Error::InvalidParameter(format!(
            "tail exponent must exceed 2 for a finite mean, got {exponent}"
        )));
    }
    if !(mean_degree >= 1.0 && mean_degree < (n - 1) as f64) {
        return Err(Error::InvalidParameter(format!(
            "mean degree {mean_degree} outside [1, n - 1)"
        )));
    }
    let cap = (n - 1) as f64;
    let quantiles: Vec<f64> = (0..n)
        .map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / (exponent - 1.0)))
        .collect();
    let seq = |xm: f64| -> Vec<u32> {
        quantiles
            .iter()
            .map(|q| (xm * q).round().clamp(1.0, cap) as u32)
            .collect()
    };
    let mean = |d: &[u32]| d.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
    let (mut lo, mut hi) = (0.0, mean_degree);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mean(&seq(mid)) < mean_degree {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut degrees = seq(hi);
    if degrees.iter().map(|&d| d as u64).sum::<u64>() % 2 == 1 {
        let last = degrees.last_mut().expect("n >= 2");
        if (*last as f64) < cap {
            *last += 1;
        } else {
            *last -= 1;
        }
    }
    Ok(degrees)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub vertex: usize,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Seed vertices with nondecreasing entry times.
    pub seeds: Vec<SeedEntry>,
    pub coupons: u32,
    pub target_n: usize,
    pub model: WaitingTimeModel,
    pub max_time: Option<f64>,
}

impl SimConfig {
    pub fn validate(&self, graph: &PopulationGraph) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds", "at least one seed is required"));
        }
        if self.target_n == 0 || self.target_n > graph.n() {
            return Err(Error::validation(
                "target_n",
                format!("{} outside 1..={}", self.target_n, graph.n()),
            ));
        }
        if self.coupons == 0 {
            return Err(Error::validation("coupons", "must be positive"));
        }
        let mut prev = 0.0;
        for (k, s) in self.seeds.iter().enumerate() {
            if s.vertex >= graph.n() {
                return Err(Error::validation(
                    "seeds",
                    format!("seed {k} names vertex {} outside the graph", s.vertex),
                ));
            }
            if !(s.time.is_finite() && s.time >= prev) {
                return Err(Error::validation(
                    "seeds",
                    format!("seed {k} time {} is not finite, nonnegative and nondecreasing", s.time),
                ));
            }
            prev = s.time;
        }
        if let Some(t) = self.max_time {
            if !(t >= 0.0) {
                return Err(Error::validation("max_time", format!("{t} is negative")));
            }
        }
        Ok(())
    }
}

/// Draws `count` distinct non-isolated seed vertices entering at
/// `0, interval, 2 interval, ...`.
pub fn random_seeds(
    graph: &PopulationGraph,
    count: usize,
    interval: f64,
    rng: &mut Rng,
) -> Result<Vec<SeedEntry>> {
    let pool: Vec<usize> = (0..graph.n()).filter(|&v| graph.degree(v) > 0).collect();
    if count == 0 || count > pool.len() {
        return Err(Error::validation(
            "seeds",
            format!("cannot draw {count} seeds from {} non-isolated vertices", pool.len()),
        ));
    }
    if !(interval.is_finite() && interval >= 0.0) {
        return Err(Error::validation("seed_interval", format!("{interval} is invalid")));
    }
    Ok(index::sample(rng, pool.len(), count)
        .into_iter()
        .enumerate()
        .map(|(k, i)| SeedEntry {
            vertex: pool[i],
            time: k as f64 * interval,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    /// Population label of the recruiter, `None` for seeds.
    pub recruiter: Option<u64>,
    pub recruitee: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetReached,
    MaxTime,
    /// The queue emptied before the target size was reached.
    Exhausted,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    /// Subjects are indexed by recruitment order; `ids` hold population labels.
    pub observed: ObservedStudy,
    pub true_subgraph: AdjacencyMatrix,
    pub events: Vec<SimEvent>,
    pub stop: StopReason,
}

impl SimResult {
    pub fn truncated(&self) -> bool {
        self.stop == StopReason::Exhausted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    /// bit pattern of a nonnegative finite time, which orders like the value
    time: u64,
    /// 0 for seeds, recruiter label + 1 otherwise
    from: usize,
    to: usize,
}

pub fn simulate(graph: &PopulationGraph, config: &SimConfig, rng: &mut Rng) -> Result<SimResult> {
    config.validate(graph)?;
    let n_pop = graph.n();
    let cap = config.target_n;
    let mut heap = BinaryHeap::new();
    for s in &config.seeds {
        heap.push(Reverse(Key {
            time: s.time.to_bits(),
            from: 0,
            to: s.vertex,
        }));
    }
    let mut index_of = vec![usize::MAX; n_pop];
    let mut coupons_left: Vec<u32> = Vec::with_capacity(cap);
    let mut label: Vec<usize> = Vec::with_capacity(cap);
    let mut recruiter: Vec<Option<usize>> = Vec::with_capacity(cap);
    let mut times: Vec<f64> = Vec::with_capacity(cap);
    // holders[j] = subjects holding a coupon just before event j
    let mut holders: Vec<Vec<usize>> = Vec::with_capacity(cap);
    let mut events = Vec::with_capacity(cap);
    let mut stop = StopReason::Exhausted;

    while let Some(Reverse(key)) = heap.pop() {
        if label.len() == cap {
            stop = StopReason::TargetReached;
            break;
        }
        let t = f64::from_bits(key.time);
        if config.max_time.is_some_and(|tf| t > tf) {
            stop = StopReason::MaxTime;
            break;
        }
        let v = key.to;
        if index_of[v] != usize::MAX {
            continue;
        }
        let parent = if key.from == 0 {
            None
        } else {
            let u = index_of[key.from - 1];
            if coupons_left[u] == 0 {
                continue;
            }
            Some(u)
        };
        let j = label.len();
        holders.push((0..j).filter(|&k| coupons_left[k] > 0).collect());
        if let Some(u) = parent {
            coupons_left[u] -= 1;
        }
        // equal floating-point times are separated by one ulp
        let t = match times.last() {
            Some(&prev) if t <= prev => prev.next_up(),
            _ => t,
        };
        index_of[v] = j;
        label.push(v);
        recruiter.push(parent);
        times.push(t);
        coupons_left.push(config.coupons);
        events.push(SimEvent {
            time: t,
            recruiter: parent.map(|u| graph.label(label[u])),
            recruitee: graph.label(v),
        });
        for &w in graph.neighbors(v) {
            if index_of[w] == usize::MAX {
                let fire = t + config.model.sample(rng);
                heap.push(Reverse(Key {
                    time: fire.to_bits(),
                    from: v + 1,
                    to: w,
                }));
            }
        }
    }
    if label.len() == cap {
        stop = StopReason::TargetReached;
    }
    if stop == StopReason::Exhausted {
        log::warn!(
            "recruitment died out after {} of {} subjects",
            label.len(),
            cap
        );
    }

    let n = label.len();
    let mut rows = vec![vec![0u8; n]; n];
    for (j, hs) in holders.iter().enumerate() {
        for &k in hs {
            rows[k][j] = 1;
        }
    }
    let coupons = CouponMatrix::from_rows(&rows)?;
    let degrees = label.iter().map(|&v| graph.degree(v) as u32).collect();
    let observed = ObservedStudy::new(RecruitmentGraph::new(recruiter)?, degrees, times, coupons)?
        .with_ids(label.iter().map(|&v| graph.label(v)).collect())?;
    let mut true_subgraph = AdjacencyMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if graph.has_edge(label[i], label[j]) {
                true_subgraph.set(i, j, true);
            }
        }
    }
    Ok(SimResult {
        observed,
        true_subgraph,
        events,
        stop,
    })
}
