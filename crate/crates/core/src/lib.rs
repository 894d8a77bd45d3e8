//! Respondent-driven sampling (RDS) as a continuous-time diffusion on a
//! graph, and reconstruction of the hidden recruitment-induced subgraph
//! together with the inter-recruitment time distribution.
//!
//! * [`graph`]: study data model and compatibility constraints
//! * [`waiting`]: waiting-time families and their conditional curves
//! * [`sim`]: recruitment diffusion simulator and population generators
//! * [`likelihood`]: recruitment time-series likelihood and incremental caches
//! * [`anneal`]: simulated annealing over compatible adjacency matrices
//! * [`estimate`]: Nelder-Mead estimation of distribution parameters
//! * [`pipeline`]: alternating reconstruction, metrics and experiments

pub mod anneal;
pub mod error;
pub mod estimate;
pub mod graph;
pub mod io;
pub mod likelihood;
pub mod par;
pub mod pipeline;
pub mod sim;
pub mod special;
pub mod waiting;

pub use error::{Error, Result};
pub use graph::{AdjacencyMatrix, CouponMatrix, ObservedStudy, RecruitmentGraph, Toggle};
pub use par::Exec;
pub use waiting::{Family, WaitingTimeModel};

/// Random stream used throughout. Independent streams for replicates and
/// chains come from [`stream`].
pub type Rng = rand_chacha::ChaCha8Rng;

/// Deterministic stream `index` under `master_seed`.
pub fn stream(master_seed: u64, index: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}
