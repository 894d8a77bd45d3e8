//! Study data model: adjacency matrices, the directed recruitment graph,
//! coupon matrix, and the compatibility predicate on candidate subgraphs.
//!
//! Vertices are indexed `0..n` in recruitment order: index `i` is the
//! subject recruited at the `(i + 1)`-th recruitment event. File formats
//! use 1-based labels or original IDs; see [`crate::io`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric, binary, zero-diagonal `n x n` matrix stored densely.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct AdjacencyMatrix {
    n: usize,
    bits: Vec<u8>,
}

impl AdjacencyMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            bits: vec![0; n * n],
        }
    }

    /// Builds a matrix from undirected edges. Duplicates are merged;
    /// self-loops and out-of-range endpoints are rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut a = Self::zeros(n);
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::validation(
                    "edge",
                    format!("({i}, {j}) out of range for n = {n}"),
                ));
            }
            if i == j {
                return Err(Error::validation("edge", format!("self-loop at {i}")));
            }
            a.set(i, j, true);
        }
        Ok(a)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j] != 0
    }

    /// Sets entry `(i, j)` and its mirror. Panics on the diagonal.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, present: bool) {
        assert_ne!(i, j, "adjacency matrices have a zero diagonal");
        let v = present as u8;
        self.bits[i * self.n + j] = v;
        self.bits[j * self.n + i] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        &self.bits[i * self.n..(i + 1) * self.n]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|&b| b as usize).sum()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(j, _)| j)
    }

    /// Undirected edges `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            ((i + 1)..self.n)
                .filter(move |&j| self.get(i, j))
                .map(move |j| (i, j))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum::<usize>() / 2
    }

    /// Entrywise product: the largest common subgraph.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.n)?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| a & b)
            .collect();
        Ok(Self { n: self.n, bits })
    }

    /// `self <= other` entrywise.
    pub fn is_subgraph_of(&self, other: &Self) -> bool {
        self.n == other.n && self.bits.iter().zip(&other.bits).all(|(a, b)| a <= b)
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if self.n != n {
            return Err(Error::Dimension {
                expected: self.n,
                found: n,
            });
        }
        Ok(())
    }
}

impl fmt::Debug for AdjacencyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdjacencyMatrix")
            .field("n", &self.n)
            .field("edges", &self.edges().collect::<Vec<_>>())
            .finish()
    }
}

/// Directed who-recruited-whom graph. `recruiter[i]` is `None` for seeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecruitmentGraph {
    recruiter: Vec<Option<usize>>,
}

impl RecruitmentGraph {
    /// Every recruiter must precede its recruitee in recruitment order.
    pub fn new(recruiter: Vec<Option<usize>>) -> Result<Self> {
        for (i, r) in recruiter.iter().enumerate() {
            if let Some(r) = *r {
                if r >= i {
                    return Err(Error::validation(
                        "recruitment_edges",
                        format!(
                            "recruiter {} of subject {} does not precede it in recruitment order",
                            r + 1,
                            i + 1
                        ),
                    ));
                }
            }
        }
        Ok(Self { recruiter })
    }

    /// Builds the graph from a seed list and directed `(recruiter, recruitee)`
    /// pairs, enforcing in-degree 0 for seeds and exactly 1 otherwise.
    pub fn from_edges(n: usize, seeds: &[usize], edges: &[(usize, usize)]) -> Result<Self> {
        let mut recruiter = vec![None; n];
        let mut is_seed = vec![false; n];
        for &s in seeds {
            if s >= n {
                return Err(Error::validation("seeds", format!("seed {} out of range", s + 1)));
            }
            is_seed[s] = true;
        }
        for &(r, e) in edges {
            if r >= n || e >= n {
                return Err(Error::validation(
                    "recruitment_edges",
                    format!("({}, {}) out of range for n = {n}", r + 1, e + 1),
                ));
            }
            if is_seed[e] {
                return Err(Error::validation(
                    "recruitment_edges",
                    format!("seed {} has a recruiter", e + 1),
                ));
            }
            if recruiter[e].replace(r).is_some() {
                return Err(Error::validation(
                    "recruitment_edges",
                    format!("subject {} has more than one recruiter", e + 1),
                ));
            }
        }
        if let Some(i) = (0..n).find(|&i| !is_seed[i] && recruiter[i].is_none()) {
            return Err(Error::validation(
                "seeds",
                format!("subject {} is neither a seed nor recruited", i + 1),
            ));
        }
        Self::new(recruiter)
    }

    pub fn n(&self) -> usize {
        self.recruiter.len()
    }

    pub fn recruiter_of(&self, i: usize) -> Option<usize> {
        self.recruiter[i]
    }

    pub fn is_seed(&self, i: usize) -> bool {
        self.recruiter[i].is_none()
    }

    pub fn seeds(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.is_seed(i)).collect()
    }

    /// Directed edges `(recruiter, recruitee)` ordered by recruitee.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.recruiter
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.map(|r| (r, i)))
            .collect()
    }
}

/// Entry `(i, j)` is set iff subject `i` holds at least one coupon just
/// before recruitment event `j`.
#[derive(Clone, PartialEq, Eq)]
pub struct CouponMatrix {
    n: usize,
    bits: Vec<u8>,
}

impl CouponMatrix {
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut bits = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::validation(
                    "coupons",
                    format!("row {} has {} entries, expected {n}", i + 1, row.len()),
                ));
            }
            for &v in row {
                if v > 1 {
                    return Err(Error::validation("coupons", format!("row {} is not 0/1", i + 1)));
                }
                bits.push(v);
            }
        }
        Ok(Self { n, bits })
    }

    /// Derives holdings from a uniform coupon allotment and the recruitment
    /// order: subject `i` holds a coupon before event `j > i` iff it made
    /// fewer than `per_subject` recruitments among events `< j`.
    pub fn derive(graph: &RecruitmentGraph, per_subject: u32) -> Self {
        let n = graph.n();
        let mut bits = vec![0u8; n * n];
        let mut used = vec![0u32; n];
        for j in 0..n {
            for i in 0..j {
                if used[i] < per_subject {
                    bits[i * n + j] = 1;
                }
            }
            if let Some(r) = graph.recruiter_of(j) {
                used[r] += 1;
            }
        }
        Self { n, bits }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j] != 0
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.bits.chunks(self.n.max(1)).take(self.n).map(|r| r.to_vec()).collect()
    }
}

impl fmt::Debug for CouponMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CouponMatrix").field("n", &self.n).finish_non_exhaustive()
    }
}

/// The observables of one study: recruitment graph, reported degrees,
/// recruitment times and coupon holdings.
#[derive(Debug, Clone)]
pub struct ObservedStudy {
    graph: RecruitmentGraph,
    degrees: Vec<u32>,
    times: Vec<f64>,
    coupons: CouponMatrix,
    recruitment_adjacency: AdjacencyMatrix,
    ids: Vec<u64>,
}

impl ObservedStudy {
    pub fn new(
        graph: RecruitmentGraph,
        degrees: Vec<u32>,
        times: Vec<f64>,
        coupons: CouponMatrix,
    ) -> Result<Self> {
        let n = graph.n();
        for (field, len) in [
            ("degrees", degrees.len()),
            ("times", times.len()),
            ("coupons", coupons.n()),
        ] {
            if len != n {
                return Err(Error::validation(
                    field,
                    format!("has length {len}, expected n = {n}"),
                ));
            }
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite()) {
            return Err(Error::validation("times", format!("entry {} is not finite", i + 1)));
        }
        if let Some(i) = (1..n).find(|&i| times[i] <= times[i - 1]) {
            return Err(Error::validation(
                "times",
                format!("not strictly increasing at entry {}", i + 1),
            ));
        }
        for i in 0..n {
            for j in 0..=i {
                if coupons.get(i, j) {
                    return Err(Error::validation(
                        "coupons",
                        format!(
                            "subject {} holds a coupon at event {} (not after its own recruitment)",
                            i + 1,
                            j + 1
                        ),
                    ));
                }
            }
        }
        for (r, e) in graph.edges() {
            if !coupons.get(r, e) {
                return Err(Error::validation(
                    "coupons",
                    format!("recruiter {} holds no coupon at the event recruiting {}", r + 1, e + 1),
                ));
            }
        }
        let recruitment_adjacency = undirected_projection(&graph);
        for (i, &d) in degrees.iter().enumerate() {
            let observed = recruitment_adjacency.degree(i);
            if (d as usize) < observed {
                return Err(Error::validation(
                    "degrees",
                    format!(
                        "subject {} reports degree {d} but took part in {observed} recruitments",
                        i + 1
                    ),
                ));
            }
        }
        Ok(Self {
            graph,
            degrees,
            times,
            coupons,
            recruitment_adjacency,
            ids: (1..=n as u64).collect(),
        })
    }

    /// Attaches original subject IDs, one per recruitment-ordered index.
    pub fn with_ids(mut self, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != self.n() {
            return Err(Error::validation(
                "ids",
                format!("has length {}, expected n = {}", ids.len(), self.n()),
            ));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("ids", "duplicate subject id"));
        }
        self.ids = ids;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn graph(&self) -> &RecruitmentGraph {
        &self.graph
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn coupons(&self) -> &CouponMatrix {
        &self.coupons
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// `A_R`: the recruitment graph with directions dropped.
    pub fn recruitment_adjacency(&self) -> &AdjacencyMatrix {
        &self.recruitment_adjacency
    }

    pub fn is_seed(&self, i: usize) -> bool {
        self.graph.is_seed(i)
    }

    pub fn seed_count(&self) -> usize {
        (0..self.n()).filter(|&i| self.is_seed(i)).count()
    }
}

pub fn undirected_projection(g: &RecruitmentGraph) -> AdjacencyMatrix {
    let mut a = AdjacencyMatrix::zeros(g.n());
    for (r, e) in g.edges() {
        a.set(r, e, true);
    }
    a
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub is_compatible: bool,
    /// Pairs `(i, j)`, `i < j`, present in `A_R` but missing from the candidate.
    pub violated_subgraph_pairs: Vec<(usize, usize)>,
    /// Vertices whose candidate degree exceeds the reported degree.
    pub violated_degree_vertices: Vec<usize>,
}

/// Checks `A >= A_R` entrywise and `A 1 <= d`.
pub fn check_compatible(a: &AdjacencyMatrix, study: &ObservedStudy) -> Result<CompatibilityReport> {
    a.check_dim(study.n())?;
    let ar = study.recruitment_adjacency();
    let violated_subgraph_pairs: Vec<_> = ar.edges().filter(|&(i, j)| !a.get(i, j)).collect();
    let violated_degree_vertices: Vec<_> = (0..a.n())
        .filter(|&i| a.degree(i) > study.degrees()[i] as usize)
        .collect();
    Ok(CompatibilityReport {
        is_compatible: violated_subgraph_pairs.is_empty() && violated_degree_vertices.is_empty(),
        violated_subgraph_pairs,
        violated_degree_vertices,
    })
}

pub(crate) fn is_compatible(a: &AdjacencyMatrix, study: &ObservedStudy) -> bool {
    check_compatible(a, study).map(|r| r.is_compatible).unwrap_or(false)
}

/// Number of absent pairs whose addition keeps both endpoints within degree.
pub fn count_addable(a: &AdjacencyMatrix, study: &ObservedStudy) -> usize {
    let n = a.n();
    let open: Vec<bool> = (0..n)
        .map(|i| a.degree(i) < study.degrees()[i] as usize)
        .collect();
    let mut count = 0;
    for i in 0..n {
        if !open[i] {
            continue;
        }
        for j in (i + 1)..n {
            if open[j] && !a.get(i, j) {
                count += 1;
            }
        }
    }
    count
}

/// Number of present edges outside `A_R`.
pub fn count_removable(a: &AdjacencyMatrix, study: &ObservedStudy) -> usize {
    let ar = study.recruitment_adjacency();
    a.edges().filter(|&(i, j)| !ar.get(i, j)).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Add,
    Remove,
}

/// A single-edge toggle on the unordered pair `{i, j}`, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Toggle {
    pub i: usize,
    pub j: usize,
    pub kind: MoveKind,
}

impl Toggle {
    pub fn new(i: usize, j: usize, kind: MoveKind) -> Self {
        assert_ne!(i, j);
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        Self { i, j, kind }
    }

    pub fn add(i: usize, j: usize) -> Self {
        Self::new(i, j, MoveKind::Add)
    }

    pub fn remove(i: usize, j: usize) -> Self {
        Self::new(i, j, MoveKind::Remove)
    }

    pub fn inverse(self) -> Self {
        let kind = match self.kind {
            MoveKind::Add => MoveKind::Remove,
            MoveKind::Remove => MoveKind::Add,
        };
        Self { kind, ..self }
    }

    pub fn apply(&self, a: &mut AdjacencyMatrix) {
        a.set(self.i, self.j, self.kind == MoveKind::Add);
    }
}

/// Single-edge path from `a1` to `a2` through compatible matrices: remove
/// the edges of `a1` outside the common subgraph, then add the edges of
/// `a2` outside it. Both removal and addition stay compatible because the
/// common subgraph contains `A_R` and every intermediate degree is bounded
/// by a degree of `a1` or `a2`.
pub fn compatible_path(
    a1: &AdjacencyMatrix,
    a2: &AdjacencyMatrix,
    study: &ObservedStudy,
) -> Result<Vec<Toggle>> {
    a1.check_dim(study.n())?;
    a2.check_dim(study.n())?;
    if !is_compatible(a1, study) || !is_compatible(a2, study) {
        return Err(Error::Incompatible);
    }
    let common = a1.hadamard(a2)?;
    let removals = a1
        .edges()
        .filter(|&(i, j)| !common.get(i, j))
        .map(|(i, j)| Toggle::remove(i, j));
    let additions = a2
        .edges()
        .filter(|&(i, j)| !common.get(i, j))
        .map(|(i, j)| Toggle::add(i, j));
    Ok(removals.chain(additions).collect())
}


#[cfg(test)]
mod tests {
    use super::fixtures::chain3;
    use super::*;

    #[test]
    fn projection_of_chain() {
        let g = RecruitmentGraph::new(vec![None, Some(0), Some(1)]).unwrap();
        let a = undirected_projection(&g);
        assert_eq!(a.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn projection_of_single_seed() {
        let g = RecruitmentGraph::new(vec![None]).unwrap();
        let a = undirected_projection(&g);
        assert_eq!(a.n(), 1);
        assert_eq!(a.edge_count(), 0);
    }

    #[test]
    fn projection_of_star() {
        let g = RecruitmentGraph::from_edges(4, &[0], &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let a = undirected_projection(&g);
        assert_eq!(a.degree(0), 3);
        assert_eq!(a.edge_count(), 3);
    }

    #[test]
    fn recruitment_graph_rejects_bad_structure() {
        assert!(RecruitmentGraph::new(vec![None, Some(1)]).is_err());
        assert!(RecruitmentGraph::from_edges(3, &[0], &[(0, 1)]).is_err());
        assert!(RecruitmentGraph::from_edges(3, &[0], &[(0, 1), (0, 2), (1, 2)]).is_err());
        assert!(RecruitmentGraph::from_edges(2, &[0, 1], &[(0, 1)]).is_err());
    }

    #[test]
    fn recruitment_adjacency_is_compatible_at_tight_degrees() {
        let s = chain3([1, 2, 1]);
        let r = check_compatible(s.recruitment_adjacency(), &s).unwrap();
        assert!(r.is_compatible);
    }

    #[test]
    fn degree_violation_reported() {
        let s = chain3([1, 2, 1]);
        let mut a = s.recruitment_adjacency().clone();
        a.set(0, 2, true);
        let r = check_compatible(&a, &s).unwrap();
        assert!(!r.is_compatible);
        assert_eq!(r.violated_degree_vertices, vec![0, 2]);
        assert!(r.violated_subgraph_pairs.is_empty());
    }

    #[test]
    fn subgraph_violation_reported() {
        let s = chain3([1, 2, 1]);
        let mut a = s.recruitment_adjacency().clone();
        a.set(0, 1, false);
        let r = check_compatible(&a, &s).unwrap();
        assert_eq!(r.violated_subgraph_pairs, vec![(0, 1)]);
        assert!(r.violated_degree_vertices.is_empty());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let s = chain3([1, 2, 1]);
        assert!(matches!(
            check_compatible(&AdjacencyMatrix::zeros(2), &s),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn move_counts_on_chain() {
        let s = chain3([2, 2, 2]);
        let ar = s.recruitment_adjacency().clone();
        assert_eq!(count_addable(&ar, &s), 1);
        assert_eq!(count_removable(&ar, &s), 0);
        let mut a = ar.clone();
        a.set(0, 2, true);
        assert_eq!(count_addable(&a, &s), 0);
        assert_eq!(count_removable(&a, &s), 1);
    }

    #[test]
    fn all_pairs_addable_without_recruitments() {
        let n = 6;
        let g = RecruitmentGraph::new(vec![None; n]).unwrap();
        let c = CouponMatrix::derive(&g, 3);
        let times = (0..n).map(|i| i as f64).collect();
        let s = ObservedStudy::new(g, vec![(n - 1) as u32; n], times, c).unwrap();
        assert_eq!(count_addable(&AdjacencyMatrix::zeros(n), &s), n * (n - 1) / 2);
    }

    #[test]
    fn path_identity_and_single_removal() {
        let s = chain3([2, 2, 2]);
        let ar = s.recruitment_adjacency().clone();
        assert!(compatible_path(&ar, &ar, &s).unwrap().is_empty());
        let mut a1 = ar.clone();
        a1.set(0, 2, true);
        assert_eq!(compatible_path(&a1, &ar, &s).unwrap(), vec![Toggle::remove(0, 2)]);
    }

    #[test]
    fn derived_coupons_track_usage() {
        // subject 0 with one coupon recruits 1; afterwards it holds none
        let g = RecruitmentGraph::new(vec![None, Some(0), Some(1)]).unwrap();
        let c = CouponMatrix::derive(&g, 1);
        assert!(c.get(0, 1));
        assert!(!c.get(0, 2));
        assert!(c.get(1, 2));
    }

    #[test]
    fn study_validation() {
        let g = RecruitmentGraph::new(vec![None, Some(0)]).unwrap();
        let c = CouponMatrix::derive(&g, 1);
        assert!(ObservedStudy::new(g.clone(), vec![1, 1], vec![1.0, 1.0], c.clone()).is_err());
        assert!(ObservedStudy::new(g.clone(), vec![0, 1], vec![0.0, 1.0], c.clone()).is_err());
        let empty = CouponMatrix::from_rows(&[vec![0, 0], vec![0, 0]]).unwrap();
        assert!(ObservedStudy::new(g.clone(), vec![1, 1], vec![0.0, 1.0], empty).is_err());
        let diag = CouponMatrix::from_rows(&[vec![1, 1], vec![0, 0]]).unwrap();
        assert!(ObservedStudy::new(g.clone(), vec![1, 1], vec![0.0, 1.0], diag).is_err());
        assert!(ObservedStudy::new(g, vec![1, 1], vec![0.0, 1.0], c).is_ok());
    }
}
