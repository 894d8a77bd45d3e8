//! The set of valid single-edge toggles from a compatible matrix, kept in
//! sync with the matrix so that `Add(A)`, `Remove(A)` and uniform draws over
//! valid moves cost `O(n)` or less per step.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{is_compatible, AdjacencyMatrix, MoveKind, ObservedStudy, Toggle};

const NONE: u32 = u32::MAX;
const REJECTION_TRIES: usize = 64;

#[derive(Debug, Clone)]
pub struct MoveSet<'a> {
    a: AdjacencyMatrix,
    study: &'a ObservedStudy,
    degree: Vec<u32>,
    /// vertices with degree below their reported degree
    open: Vec<usize>,
    open_pos: Vec<u32>,
    /// edges with both endpoints open
    open_edges: usize,
    removable: Vec<(usize, usize)>,
    removable_pos: Vec<u32>,
}

impl<'a> MoveSet<'a> {
    pub fn new(a: AdjacencyMatrix, study: &'a ObservedStudy) -> Result<Self> {
        if a.n() != study.n() {
            return Err(Error::Dimension {
                expected: study.n(),
                found: a.n(),
            });
        }
        if !is_compatible(&a, study) {
            return Err(Error::Incompatible);
        }
        let n = a.n();
        let degree: Vec<u32> = (0..n).map(|i| a.degree(i) as u32).collect();
        let mut set = Self {
            a,
            study,
            degree,
            open: Vec::new(),
            open_pos: vec![NONE; n],
            open_edges: 0,
            removable: Vec::new(),
            removable_pos: vec![NONE; n * n],
        };
        for v in 0..n {
            if set.has_room(v) {
                set.open_pos[v] = set.open.len() as u32;
                set.open.push(v);
            }
        }
        set.open_edges = set
            .a
            .edges()
            .filter(|&(i, j)| set.is_open(i) && set.is_open(j))
            .count();
        let ar = study.recruitment_adjacency();
        let extra: Vec<_> = set.a.edges().filter(|&(i, j)| !ar.get(i, j)).collect();
        for (i, j) in extra {
            set.insert_removable(i, j);
        }
        Ok(set)
    }

    pub fn matrix(&self) -> &AdjacencyMatrix {
        &self.a
    }

    pub fn into_matrix(self) -> AdjacencyMatrix {
        self.a
    }

    pub fn study(&self) -> &'a ObservedStudy {
        self.study
    }

    /// Non-recruitment edges currently present.
    pub fn removable_edges(&self) -> &[(usize, usize)] {
        &self.removable
    }

    pub fn add_count(&self) -> usize {
        let k = self.open.len();
        k * k.saturating_sub(1) / 2 - self.open_edges
    }

    pub fn remove_count(&self) -> usize {
        self.removable.len()
    }

    pub fn total(&self) -> usize {
        self.add_count() + self.remove_count()
    }

    #[inline]
    fn has_room(&self, v: usize) -> bool {
        self.degree[v] < self.study.degrees()[v]
    }

    #[inline]
    fn is_open(&self, v: usize) -> bool {
        self.open_pos[v] != NONE
    }

    fn open_neighbors(&self, v: usize) -> usize {
        self.a.neighbors(v).filter(|&w| self.is_open(w)).count()
    }

    fn close(&mut self, v: usize) {
        self.open_edges -= self.open_neighbors(v);
        let pos = self.open_pos[v] as usize;
        let last = *self.open.last().expect("open vertex present");
        self.open.swap_remove(pos);
        if last != v {
            self.open_pos[last] = pos as u32;
        }
        self.open_pos[v] = NONE;
    }

    fn reopen(&mut self, v: usize) {
        self.open_edges += self.open_neighbors(v);
        self.open_pos[v] = self.open.len() as u32;
        self.open.push(v);
    }

    fn insert_removable(&mut self, i: usize, j: usize) {
        let n = self.a.n();
        self.removable_pos[i * n + j] = self.removable.len() as u32;
        self.removable.push((i, j));
    }

    fn erase_removable(&mut self, i: usize, j: usize) {
        let n = self.a.n();
        let pos = self.removable_pos[i * n + j] as usize;
        let last = *self.removable.last().expect("removable edge present");
        self.removable.swap_remove(pos);
        if last != (i, j) {
            self.removable_pos[last.0 * n + last.1] = pos as u32;
        }
        self.removable_pos[i * n + j] = NONE;
    }

    pub fn is_valid(&self, t: &Toggle) -> bool {
        match t.kind {
            MoveKind::Add => !self.a.get(t.i, t.j) && self.has_room(t.i) && self.has_room(t.j),
            MoveKind::Remove => {
                self.a.get(t.i, t.j) && !self.study.recruitment_adjacency().get(t.i, t.j)
            }
        }
    }

    /// Applies a valid toggle. Invalid toggles are a logic error.
    pub fn apply(&mut self, t: Toggle) {
        debug_assert!(self.is_valid(&t), "invalid toggle {t:?}");
        let (x, y) = (t.i, t.j);
        match t.kind {
            MoveKind::Add => {
                self.a.set(x, y, true);
                self.degree[x] += 1;
                self.degree[y] += 1;
                // both endpoints were open
                self.open_edges += 1;
                for v in [x, y] {
                    if !self.has_room(v) {
                        self.close(v);
                    }
                }
                self.insert_removable(x, y);
            }
            MoveKind::Remove => {
                if self.is_open(x) && self.is_open(y) {
                    self.open_edges -= 1;
                }
                self.a.set(x, y, false);
                self.degree[x] -= 1;
                self.degree[y] -= 1;
                for v in [x, y] {
                    if !self.is_open(v) && self.has_room(v) {
                        self.reopen(v);
                    }
                }
                self.erase_removable(x, y);
            }
        }
    }

    /// Uniform draw over the `Add(A) + Remove(A)` valid toggles, or `None`
    /// when no move exists.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Toggle> {
        let adds = self.add_count();
        let total = adds + self.remove_count();
        if total == 0 {
            return None;
        }
        let r = rng.random_range(0..total);
        if r >= adds {
            let (i, j) = self.removable[r - adds];
            return Some(Toggle::remove(i, j));
        }
        let k = self.open.len();
        for _ in 0..REJECTION_TRIES {
            let p = rng.random_range(0..k);
            let mut q = rng.random_range(0..k - 1);
            if q >= p {
                q += 1;
            }
            let (i, j) = (self.open[p], self.open[q]);
            if !self.a.get(i, j) {
                return Some(Toggle::add(i, j));
            }
        }
        // dense open set: enumerate
        let target = rng.random_range(0..adds);
        let mut seen = 0;
        for p in 0..k {
            for q in (p + 1)..k {
                let (i, j) = (self.open[p], self.open[q]);
                if !self.a.get(i, j) {
                    if seen == target {
                        return Some(Toggle::add(i, j));
                    }
                    seen += 1;
                }
            }
        }
        unreachable!("add count out of sync with the open set")
    }

    /// Draws ordered vertex pairs until one admits a valid toggle, exactly as
    /// the pairwise rejection proposal. Equivalent in law to
    /// [`MoveSet::sample_uniform`].
    pub fn sample_rejection<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Toggle> {
        if self.total() == 0 {
            return None;
        }
        let n = self.a.n();
        loop {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let add = Toggle::add(i, j);
            if self.is_valid(&add) {
                return Some(add);
            }
            let remove = Toggle::remove(i, j);
            if self.is_valid(&remove) {
                return Some(remove);
            }
        }
    }
}
