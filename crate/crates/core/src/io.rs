//! File formats: study JSON, TSV edge lists, event CSV and Graphviz DOT.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, CouponMatrix, ObservedStudy, RecruitmentGraph};
use crate::sim::{PopulationGraph, SimEvent};

/// Gap added per tie rank when separating equal recruitment times.
pub const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouponSpec {
    Dense(Vec<Vec<u8>>),
    Derived { per_subject_coupons: u32, derive: bool },
}

/// On-disk study record. Subjects are named by `ids` (default `1..=n` in
/// file order); `seeds` and `recruitment_edges` refer to those names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyFile {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<u64>>,
    pub seeds: Vec<u64>,
    pub times: Vec<f64>,
    pub degrees: Vec<u32>,
    pub recruitment_edges: Vec<[u64; 2]>,
    pub coupons: CouponSpec,
}

fn parse_error(path: &str, e: serde_json::Error) -> Error {
    Error::Parse {
        path: path.to_string(),
        line: e.line(),
        message: e.to_string(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

impl StudyFile {
    pub fn from_study(study: &ObservedStudy) -> Self {
        let ids = study.ids();
        let default_ids = ids.iter().enumerate().all(|(i, &id)| id == i as u64 + 1);
        Self {
            n: study.n(),
            ids: (!default_ids).then(|| ids.to_vec()),
            seeds: study.graph().seeds().into_iter().map(|i| ids[i]).collect(),
            times: study.times().to_vec(),
            degrees: study.degrees().to_vec(),
            recruitment_edges: study
                .graph()
                .edges()
                .into_iter()
                .map(|(r, e)| [ids[r], ids[e]])
                .collect(),
            coupons: CouponSpec::Dense(study.coupons().rows()),
        }
    }

    /// Validates the record and relabels subjects by recruitment time.
    pub fn into_study(self) -> Result<ObservedStudy> {
        let n = self.n;
        for (field, len) in [
            ("times", self.times.len()),
            ("degrees", self.degrees.len()),
        ] {
            if len != n {
                return Err(Error::validation(field, format!("has length {len}, expected n = {n}")));
            }
        }
        let ids = match self.ids {
            Some(ids) => {
                if ids.len() != n {
                    return Err(Error::validation(
                        "ids",
                        format!("has length {}, expected n = {n}", ids.len()),
                    ));
                }
                ids
            }
            None => (1..=n as u64).collect(),
        };
        let mut pos_of = HashMap::with_capacity(n);
        for (p, &id) in ids.iter().enumerate() {
            if pos_of.insert(id, p).is_some() {
                return Err(Error::validation("ids", format!("duplicate subject id {id}")));
            }
        }
        if let Some(p) = self.times.iter().position(|t| !t.is_finite()) {
            return Err(Error::validation("times", format!("entry {} is not finite", p + 1)));
        }
        // file position sorted by time, stable for ties
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.times[a].total_cmp(&self.times[b]));
        let mut rank_of = vec![0usize; n];
        for (r, &p) in order.iter().enumerate() {
            rank_of[p] = r;
        }
        let mut times = Vec::with_capacity(n);
        let mut tie = 0usize;
        for (r, &p) in order.iter().enumerate() {
            let t = self.times[p];
            if r > 0 && t == self.times[order[r - 1]] {
                tie += 1;
                log::warn!(
                    "subject {} shares recruitment time {t} with the previous subject; shifting by {} x {TIE_EPSILON}",
                    ids[p],
                    tie
                );
                times.push(t + tie as f64 * TIE_EPSILON);
            } else {
                tie = 0;
                times.push(t);
            }
        }
        let index = |field: &str, id: u64| -> Result<usize> {
            pos_of
                .get(&id)
                .map(|&p| rank_of[p])
                .ok_or_else(|| Error::validation(field, format!("unknown subject id {id}")))
        };
        let seeds = self
            .seeds
            .iter()
            .map(|&id| index("seeds", id))
            .collect::<Result<Vec<_>>>()?;
        let edges = self
            .recruitment_edges
            .iter()
            .map(|&[r, e]| Ok((index("recruitment_edges", r)?, index("recruitment_edges", e)?)))
            .collect::<Result<Vec<_>>>()?;
        let graph = RecruitmentGraph::from_edges(n, &seeds, &edges)?;
        let coupons = match self.coupons {
            CouponSpec::Dense(rows) => {
                if rows.len() != n {
                    return Err(Error::validation(
                        "coupons",
                        format!("has {} rows, expected n = {n}", rows.len()),
                    ));
                }
                if let Some(p) = rows.iter().position(|r| r.len() != n) {
                    return Err(Error::validation(
                        "coupons",
                        format!("row {} has {} entries, expected {n}", p + 1, rows[p].len()),
                    ));
                }
                let permuted: Vec<Vec<u8>> = order
                    .iter()
                    .map(|&pi| order.iter().map(|&pj| rows[pi][pj]).collect())
                    .collect();
                CouponMatrix::from_rows(&permuted)?
            }
            CouponSpec::Derived {
                per_subject_coupons,
                derive,
            } => {
                if !derive {
                    return Err(Error::validation(
                        "coupons",
                        "per_subject_coupons requires \"derive\": true",
                    ));
                }
                if per_subject_coupons == 0 {
                    return Err(Error::validation("coupons", "per_subject_coupons must be positive"));
                }
                CouponMatrix::derive(&graph, per_subject_coupons)
            }
        };
        let degrees = order.iter().map(|&p| self.degrees[p]).collect();
        let relabeled = order.iter().map(|&p| ids[p]).collect();
        ObservedStudy::new(graph, degrees, times, coupons)?.with_ids(relabeled)
    }
}

pub fn parse_study(text: &str, source: &str) -> Result<ObservedStudy> {
    let file: StudyFile = serde_json::from_str(text).map_err(|e| parse_error(source, e))?;
    file.into_study()
}

pub fn read_study(path: &Path) -> Result<ObservedStudy> {
    parse_study(&read_text(path)?, &path.display().to_string())
}

pub fn write_study(path: &Path, study: &ObservedStudy) -> Result<()> {
    write_json(path, &StudyFile::from_study(study))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json_string(value)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let source = path.display().to_string();
    serde_json::from_str(&read_text(path)?).map_err(|e| parse_error(&source, e))
}

/// Parses whitespace-separated `u v` pairs, one per line; `#` starts a
/// comment.
pub fn parse_edge_list(text: &str, source: &str) -> Result<Vec<(u64, u64)>> {
    let mut edges = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: source.to_string(),
            line: k + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(bad(format!("expected two vertex ids, found {}", fields.len())));
        }
        let parse = |f: &str| f.parse::<u64>().map_err(|_| bad(format!("'{f}' is not a vertex id")));
        edges.push((parse(fields[0])?, parse(fields[1])?));
    }
    Ok(edges)
}

pub fn read_edge_list(path: &Path) -> Result<Vec<(u64, u64)>> {
    parse_edge_list(&read_text(path)?, &path.display().to_string())
}

pub fn write_edge_list(path: &Path, edges: &[(u64, u64)]) -> Result<()> {
    let mut s = String::new();
    for (u, v) in edges {
        let _ = writeln!(s, "{u}\t{v}");
    }
    write_text(path, &s)
}

/// Population graph over the ids appearing in `edges`, indexed in
/// ascending id order.
pub fn population_from_edges(edges: &[(u64, u64)]) -> Result<PopulationGraph> {
    let mut labels: Vec<u64> = edges.iter().flat_map(|&(u, v)| [u, v]).collect();
    labels.sort_unstable();
    labels.dedup();
    let index: HashMap<u64, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    PopulationGraph::from_edges(labels.len(), edges.iter().map(|(u, v)| (index[u], index[v])))?
        .with_labels(labels)
}

pub fn population_edges(graph: &PopulationGraph) -> Vec<(u64, u64)> {
    graph.edges().map(|(u, v)| (graph.label(u), graph.label(v))).collect()
}

/// Subgraph on the study's subjects from an id edge list.
pub fn subgraph_from_edges(study: &ObservedStudy, edges: &[(u64, u64)]) -> Result<AdjacencyMatrix> {
    let index: HashMap<u64, usize> = study.ids().iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let lookup = |id: u64| {
        index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::validation("edges", format!("unknown subject id {id}")))
    };
    let pairs = edges
        .iter()
        .map(|&(u, v)| Ok((lookup(u)?, lookup(v)?)))
        .collect::<Result<Vec<_>>>()?;
    AdjacencyMatrix::from_edges(study.n(), pairs)
}

/// Edges of `a` as id pairs, ordered by recruitment index.
pub fn subgraph_edges(study: &ObservedStudy, a: &AdjacencyMatrix) -> Vec<(u64, u64)> {
    let ids = study.ids();
    a.edges().map(|(i, j)| (ids[i], ids[j])).collect()
}

pub fn write_events_csv(path: &Path, events: &[SimEvent]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    w.write_record(["time", "recruiter", "recruitee"]).map_err(csv_error(path))?;
    for e in events {
        let recruiter = e.recruiter.map_or_else(|| "SEED".to_string(), |r| r.to_string());
        w.write_record([e.time.to_string(), recruiter, e.recruitee.to_string()])
            .map_err(csv_error(path))?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub(crate) fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    }
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_error(path))?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn dot_header(name: &str, directed: bool, study: &ObservedStudy) -> String {
    let mut s = format!(
        "{} {name} {{\n  node [shape=circle, fontsize=10];\n",
        if directed { "digraph" } else { "graph" }
    );
    for &id in study.ids() {
        let _ = writeln!(s, "  {id};");
    }
    s
}

/// Recruitment graph as solid arrows.
pub fn dot_recruitment(study: &ObservedStudy) -> String {
    let ids = study.ids();
    let mut s = dot_header("observed_gr", true, study);
    for (r, e) in study.graph().edges() {
        let _ = writeln!(s, "  {} -> {};", ids[r], ids[e]);
    }
    s.push_str("}\n");
    s
}

/// A subgraph of the study drawn with recruitment edges as solid arrows and
/// every other edge as a dashed gray line.
pub fn dot_inferred(study: &ObservedStudy, a: &AdjacencyMatrix, name: &str) -> String {
    let ids = study.ids();
    let mut s = dot_header(name, true, study);
    for (r, e) in study.graph().edges() {
        let _ = writeln!(s, "  {} -> {};", ids[r], ids[e]);
    }
    let ar = study.recruitment_adjacency();
    for (i, j) in a.edges().filter(|&(i, j)| !ar.get(i, j)) {
        let _ = writeln!(
            s,
            "  {} -> {} [dir=none, style=dashed, color=gray];",
            ids[i], ids[j]
        );
    }
    s.push_str("}\n");
    s
}

/// Undirected drawing of a subgraph.
pub fn dot_undirected(study: &ObservedStudy, a: &AdjacencyMatrix, name: &str) -> String {
    let ids = study.ids();
    let mut s = dot_header(name, false, study);
    for (i, j) in a.edges() {
        let _ = writeln!(s, "  {} -- {};", ids[i], ids[j]);
    }
    s.push_str("}\n");
    s
}

/// Four drawings for comparing a reconstruction with the truth: the true
/// subgraph, the recruitment graph, the recruitment graph over the true
/// subgraph, and the estimate.
pub fn write_dot_panels(
    dir: &Path,
    study: &ObservedStudy,
    truth: Option<&AdjacencyMatrix>,
    estimate: &AdjacencyMatrix,
) -> Result<Vec<String>> {
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        write_text(&dir.join(name), &body)?;
        written.push(name.to_string());
        Ok(())
    };
    if let Some(t) = truth {
        put("true_gs.dot", dot_undirected(study, t, "true_gs"))?;
    }
    put("observed_gr.dot", dot_recruitment(study))?;
    if let Some(t) = truth {
        put("overlay.dot", dot_inferred(study, t, "overlay"))?;
    }
    put("estimated_gs.dot", dot_inferred(study, estimate, "estimated_gs"))?;
    Ok(written)
}
