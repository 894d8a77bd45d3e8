//! Log-likelihood of the recruitment time series given a candidate
//! subgraph `A` and a waiting-time model.
//!
//! Notation: `t` recruitment times, `C` coupon matrix, `d` degrees,
//! `u = d - A 1` the pendant-edge counts (edges to never-sampled
//! neighbors), `m_i = 1{i is not a seed}`. For recruiter `k < i` let
//! `s = t[i-1] - t[k]` be the time its edge clocks have already survived at
//! the previous event. Then
//!
//! ```text
//! H[k][i] = H_s(t[i] - t[k])          B = C o H
//! S[k][i] = ln S_s(t[i] - t[k])       D = C o S
//! e^beta  = B' u + LowerTri(A B)' 1
//! delta   = D' u + LowerTri(A D)' 1
//! l       = m' beta + 1' delta
//! ```
//!
//! [`log_likelihood_direct`] evaluates the product form by explicit
//! iteration and is the slow oracle; [`log_likelihood_matrix`] evaluates
//! the matrix form; [`LikelihoodCache`] keeps `e^beta` and `delta` up to
//! date under single-edge toggles in `O(n)`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{count_removable, AdjacencyMatrix, MoveKind, ObservedStudy, Toggle};
use crate::par::Exec;
use crate::waiting::WaitingTimeModel;

fn check_dim(a: &AdjacencyMatrix, study: &ObservedStudy) -> Result<()> {
    if a.n() != study.n() {
        return Err(Error::Dimension {
            expected: study.n(),
            found: a.n(),
        });
    }
    Ok(())
}

/// Product form, evaluated by iterating over recruiter sets. Returns
/// `-inf` when some non-seed event has zero total hazard.
pub fn log_likelihood_direct(
    a: &AdjacencyMatrix,
    study: &ObservedStudy,
    model: &WaitingTimeModel,
) -> Result<f64> {
    check_dim(a, study)?;
    let n = study.n();
    let t = study.times();
    let c = study.coupons();
    let pendant: Vec<i64> = (0..n)
        .map(|k| study.degrees()[k] as i64 - a.degree(k) as i64)
        .collect();
    let mut total = 0.0;
    for i in 0..n {
        let mut hazard_sum = 0.0;
        let mut log_surv = 0.0;
        for j in (0..i).filter(|&j| c.get(j, i)) {
            // |I_j(i)|: neighbors of j not yet recruited just before event i
            let unrecruited = (i..n).filter(|&k| a.get(j, k)).count() as i64 + pendant[j];
            if unrecruited <= 0 {
                continue;
            }
            let w = unrecruited as f64;
            let (s, dt) = (t[i - 1] - t[j], t[i] - t[j]);
            let domain = |e: Error| Error::Domain {
                recruiter: j,
                event: i,
                message: e.to_string(),
            };
            hazard_sum += w * model.cond_hazard(s, dt).map_err(domain)?;
            log_surv += w * model.log_cond_survival(s, dt).map_err(domain)?;
        }
        if !study.is_seed(i) {
            if hazard_sum <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            total += hazard_sum.ln();
        }
        total += log_surv;
    }
    Ok(total)
}

/// Precomputed `B` and `D` for one `(study, model)` pair. Independent of
/// the candidate subgraph.
#[derive(Debug, Clone)]
pub struct LikelihoodWorkspace {
    n: usize,
    model: WaitingTimeModel,
    b: Vec<f64>,
    d: Vec<f64>,
    not_seed: Vec<bool>,
    degrees: Vec<f64>,
    times: Vec<f64>,
}

impl LikelihoodWorkspace {
    pub fn build(study: &ObservedStudy, model: &WaitingTimeModel) -> Result<Self> {
        Self::build_with(study, model, Exec::default())
    }

    pub fn build_with(study: &ObservedStudy, model: &WaitingTimeModel, exec: Exec) -> Result<Self> {
        let n = study.n();
        let t = study.times();
        let c = study.coupons();
        let rows = exec.map_range(n, |k| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut b_row = vec![0.0; n];
            let mut d_row = vec![0.0; n];
            let Some(last) = (k + 1..n).rev().find(|&i| c.get(k, i)) else {
                return Ok((b_row, d_row));
            };
            // ln(1 - F) at the previous event; zero at the recruiter's own entry
            let mut prev = 0.0;
            for i in (k + 1)..=last {
                let dt = t[i] - t[k];
                let cur = model.ln_survival(dt);
                if c.get(k, i) {
                    if prev == f64::NEG_INFINITY {
                        return Err(Error::Domain {
                            recruiter: k,
                            event: i,
                            message: format!("F(s) = 1 at s = {}", t[i - 1] - t[k]),
                        });
                    }
                    b_row[i] = model.ln_hazard_given_survival(dt, cur).exp();
                    d_row[i] = (cur - prev).min(0.0);
                }
                prev = cur;
            }
            Ok((b_row, d_row))
        });
        let mut b = Vec::with_capacity(n * n);
        let mut d = Vec::with_capacity(n * n);
        for row in rows {
            let (br, dr) = row?;
            b.extend(br);
            d.extend(dr);
        }
        Ok(Self {
            n,
            model: *model,
            b,
            d,
            not_seed: (0..n).map(|i| !study.is_seed(i)).collect(),
            degrees: study.degrees().iter().map(|&x| x as f64).collect(),
            times: t.to_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn model(&self) -> &WaitingTimeModel {
        &self.model
    }

    /// `B[k][i]`: masked conditional hazard of recruiter `k` at event `i`.
    #[inline]
    pub fn b(&self, k: usize, i: usize) -> f64 {
        self.b[k * self.n + i]
    }

    /// `D[k][i]`: masked conditional log-survival of recruiter `k` over the
    /// interval ending at event `i`.
    #[inline]
    pub fn d(&self, k: usize, i: usize) -> f64 {
        self.d[k * self.n + i]
    }

    #[inline]
    fn b_row(&self, k: usize) -> &[f64] {
        &self.b[k * self.n..(k + 1) * self.n]
    }

    #[inline]
    fn d_row(&self, k: usize) -> &[f64] {
        &self.d[k * self.n..(k + 1) * self.n]
    }

    /// Unmasked `H[k][i]` for `k < i` (zero otherwise).
    pub fn hazard_entry(&self, k: usize, i: usize) -> Result<f64> {
        if k >= i {
            return Ok(0.0);
        }
        let t = &self.times;
        self.model.cond_hazard(t[i - 1] - t[k], t[i] - t[k])
    }

    /// Unmasked `S[k][i]` for `k < i` (zero otherwise).
    pub fn log_survival_entry(&self, k: usize, i: usize) -> Result<f64> {
        if k >= i {
            return Ok(0.0);
        }
        let t = &self.times;
        self.model.log_cond_survival(t[i - 1] - t[k], t[i] - t[k])
    }

    pub fn is_seed(&self, i: usize) -> bool {
        !self.not_seed[i]
    }
}

fn combine(not_seed: &[bool], expbeta: &[f64], delta: &[f64]) -> f64 {
    let mut beta_sum = 0.0;
    for (i, &eb) in expbeta.iter().enumerate() {
        if not_seed[i] {
            if eb <= 0.0 {
                return f64::NEG_INFINITY;
            }
            beta_sum += eb.ln();
        }
    }
    beta_sum + delta.iter().sum::<f64>()
}

/// Matrix form: `m' log(B' u + LowerTri(A B)' 1) + 1'(D' u + LowerTri(A D)' 1)`.
/// Seed entries of `beta` are masked out even when `e^beta` is zero.
pub fn log_likelihood_matrix(
    a: &AdjacencyMatrix,
    study: &ObservedStudy,
    ws: &LikelihoodWorkspace,
) -> Result<f64> {
    check_dim(a, study)?;
    if ws.n != a.n() {
        return Err(Error::Dimension {
            expected: ws.n,
            found: a.n(),
        });
    }
    let n = a.n();
    let u: Vec<f64> = (0..n).map(|k| ws.degrees[k] - a.degree(k) as f64).collect();
    // B' u and D' u
    let mut expbeta = vec![0.0; n];
    let mut delta = vec![0.0; n];
    for k in 0..n {
        let (br, dr) = (ws.b_row(k), ws.d_row(k));
        for i in 0..n {
            expbeta[i] += br[i] * u[k];
            delta[i] += dr[i] * u[k];
        }
    }
    // LowerTri(A B)' 1: column i sums (A B)[r][i] over rows r >= i
    for r in 0..n {
        for k in a.neighbors(r) {
            let (br, dr) = (ws.b_row(k), ws.d_row(k));
            for i in 0..=r {
                expbeta[i] += br[i];
                delta[i] += dr[i];
            }
        }
    }
    Ok(combine(&ws.not_seed, &expbeta, &delta))
}

/// Incrementally maintained `u`, `e^beta` and `delta` for one subgraph.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodCache {
    pendant: Vec<i64>,
    expbeta: Vec<f64>,
    delta: Vec<f64>,
}

impl LikelihoodCache {
    /// Builds the cache from `e^beta = B' d - StrictlyUpperTri(A B)' 1`,
    /// grouped per recruiter as `sum_k B[k][i] (d_k - #{r < i : A[r][k]})`
    /// so that structurally zero entries stay exactly zero.
    pub fn init(a: &AdjacencyMatrix, ws: &LikelihoodWorkspace) -> Self {
        let n = ws.n;
        assert_eq!(a.n(), n, "matrix and workspace sizes differ");
        let mut expbeta = vec![0.0; n];
        let mut delta = vec![0.0; n];
        let mut pendant = vec![0i64; n];
        for k in 0..n {
            let (br, dr) = (ws.b_row(k), ws.d_row(k));
            let row = a.row(k);
            let mut weight = ws.degrees[k];
            for i in 0..n {
                if i > 0 && row[i - 1] != 0 {
                    weight -= 1.0;
                }
                expbeta[i] += br[i] * weight;
                delta[i] += dr[i] * weight;
            }
            pendant[k] = ws.degrees[k] as i64 - a.degree(k) as i64;
        }
        Self {
            pendant,
            expbeta,
            delta,
        }
    }

    pub fn pendant(&self) -> &[i64] {
        &self.pendant
    }

    pub fn expbeta(&self) -> &[f64] {
        &self.expbeta
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn log_likelihood(&self, ws: &LikelihoodWorkspace) -> f64 {
        combine(&ws.not_seed, &self.expbeta, &self.delta)
    }

    /// Change of `(e^beta_j, delta_j)` caused by `toggle`. Adding `{x, y}`
    /// removes `B[y][j] 1{x<j} + B[x][j] 1{y<j}` from every `e^beta_j`
    /// (both strictly-upper-triangular contributions of the new entries);
    /// removal adds them back.
    #[inline]
    fn change(ws: &LikelihoodWorkspace, toggle: &Toggle, j: usize) -> (f64, f64) {
        let (x, y) = (toggle.i, toggle.j);
        let sign = match toggle.kind {
            MoveKind::Add => -1.0,
            MoveKind::Remove => 1.0,
        };
        let mut db = 0.0;
        let mut dd = 0.0;
        if x < j {
            db += ws.b(y, j);
            dd += ws.d(y, j);
        }
        if y < j {
            db += ws.b(x, j);
            dd += ws.d(x, j);
        }
        (sign * db, sign * dd)
    }

    pub fn apply_toggle(&mut self, ws: &LikelihoodWorkspace, toggle: &Toggle) {
        for j in (toggle.i + 1)..ws.n {
            let (db, dd) = Self::change(ws, toggle, j);
            self.expbeta[j] += db;
            self.delta[j] += dd;
        }
        let step = match toggle.kind {
            MoveKind::Add => -1,
            MoveKind::Remove => 1,
        };
        self.pendant[toggle.i] += step;
        self.pendant[toggle.j] += step;
    }

    /// Log-likelihood difference `l(A') - l(A)` for the toggled matrix
    /// without mutating the cache. Only valid when `l(A)` is finite.
    pub fn delta_log_likelihood(&self, ws: &LikelihoodWorkspace, toggle: &Toggle) -> f64 {
        let mut diff = 0.0;
        for j in (toggle.i + 1)..ws.n {
            let (db, dd) = Self::change(ws, toggle, j);
            diff += dd;
            if ws.not_seed[j] && db != 0.0 {
                let eb = self.expbeta[j];
                if eb + db <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                diff += (db / eb).ln_1p();
            }
        }
        diff
    }

    /// Full log-likelihood of the toggled matrix, `O(n)`.
    pub fn log_likelihood_after(&self, ws: &LikelihoodWorkspace, toggle: &Toggle) -> f64 {
        let mut eb = self.expbeta.clone();
        let mut de = self.delta.clone();
        for j in (toggle.i + 1)..ws.n {
            let (db, dd) = Self::change(ws, toggle, j);
            eb[j] += db;
            de[j] += dd;
        }
        combine(&ws.not_seed, &eb, &de)
    }

    /// Largest relative deviation from `other` over `e^beta` and `delta`,
    /// scaled by `1 + |other|`.
    pub fn max_rel_error(&self, other: &Self) -> f64 {
        let pair = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs() / (1.0 + y.abs()))
                .fold(0.0, f64::max)
        };
        pair(&self.expbeta, &other.expbeta).max(pair(&self.delta, &other.delta))
    }

    /// Recomputes from scratch and fails if the cache drifted beyond `tol`.
    pub fn verify(&self, a: &AdjacencyMatrix, ws: &LikelihoodWorkspace, tol: f64) -> Result<()> {
        let fresh = Self::init(a, ws);
        let err = self.max_rel_error(&fresh);
        if err > tol || self.pendant != fresh.pendant {
            return Err(Error::CacheMismatch(err));
        }
        Ok(())
    }
}

/// Prior over compatible matrices. `Bernoulli(p)` is the independent-edge
/// prior restricted to non-recruitment edges, with the additive constant
/// dropped: `log Pr(A) = #(A \ A_R) * ln(p / (1 - p))`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgePrior {
    #[default]
    Uniform,
    Bernoulli(f64),
}

impl EdgePrior {
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "bernoulli prior needs 0 < p < 1, got {p}"
            )));
        }
        Ok(Self::Bernoulli(p))
    }

    fn edge_weight(&self) -> f64 {
        match *self {
            EdgePrior::Uniform => 0.0,
            EdgePrior::Bernoulli(p) => (p / (1.0 - p)).ln(),
        }
    }

    pub fn log_prior(&self, a: &AdjacencyMatrix, study: &ObservedStudy) -> f64 {
        match self {
            EdgePrior::Uniform => 0.0,
            EdgePrior::Bernoulli(_) => count_removable(a, study) as f64 * self.edge_weight(),
        }
    }

    /// Change of the log prior under a valid toggle.
    pub fn delta(&self, toggle: &Toggle) -> f64 {
        match toggle.kind {
            MoveKind::Add => self.edge_weight(),
            MoveKind::Remove => -self.edge_weight(),
        }
    }
}

impl FromStr for EdgePrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "uniform" => Ok(EdgePrior::Uniform),
            Some(("bernoulli", p)) => {
                let p: f64 = p
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad bernoulli probability '{p}'")))?;
                EdgePrior::bernoulli(p)
            }
            _ => Err(Error::InvalidParameter(format!(
                "unknown prior '{s}' (expected uniform or bernoulli:p)"
            ))),
        }
    }
}

impl std::fmt::Display for EdgePrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EdgePrior::Uniform => f.write_str("uniform"),
            EdgePrior::Bernoulli(p) => write!(f, "bernoulli:{p}"),
        }
    }
}

pub fn log_posterior(
    a: &AdjacencyMatrix,
    study: &ObservedStudy,
    ws: &LikelihoodWorkspace,
    prior: &EdgePrior,
) -> Result<f64> {
    Ok(log_likelihood_matrix(a, study, ws)? + prior.log_prior(a, study))
}

/// Exposure counts `|I_k(i)|` for a fixed subgraph, so the likelihood can
/// be re-evaluated for many parameter values without rebuilding `n x n`
/// matrices. Only entries with a held coupon and a positive count are kept;
/// for each recruiter they form a contiguous run of events.
#[derive(Debug, Clone)]
pub struct ExposureTable {
    times: Vec<f64>,
    not_seed: Vec<bool>,
    /// `(recruiter, first event, weights for consecutive events)`
    runs: Vec<(usize, usize, Vec<f64>)>,
}

impl ExposureTable {
    pub fn new(a: &AdjacencyMatrix, study: &ObservedStudy) -> Result<Self> {
        check_dim(a, study)?;
        let n = study.n();
        let c = study.coupons();
        let mut runs = Vec::new();
        for k in 0..n {
            let row = a.row(k);
            let mut weight = study.degrees()[k] as i64 - row[..=k].iter().map(|&b| b as i64).sum::<i64>();
            let mut weights = Vec::new();
            let mut first = None;
            for i in (k + 1)..n {
                let w = if c.get(k, i) { weight.max(0) } else { 0 };
                match (w > 0, first) {
                    (true, None) => {
                        first = Some(i);
                        weights.push(w as f64);
                    }
                    (true, Some(_)) => weights.push(w as f64),
                    (false, None) => {}
                    (false, Some(_)) => {
                        // holdings never resume and counts never grow, but a
                        // hand-written coupon matrix may be irregular
                        weights.push(0.0);
                    }
                }
                weight -= row[i] as i64;
            }
            if let Some(f) = first {
                while weights.last() == Some(&0.0) {
                    weights.pop();
                }
                runs.push((k, f, weights));
            }
        }
        Ok(Self {
            times: study.times().to_vec(),
            not_seed: (0..n).map(|i| !study.is_seed(i)).collect(),
            runs,
        })
    }

    pub fn log_likelihood(&self, model: &WaitingTimeModel) -> Result<f64> {
        self.log_likelihood_with(model, Exec::Sequential)
    }

    pub fn log_likelihood_with(&self, model: &WaitingTimeModel, exec: Exec) -> Result<f64> {
        let t = &self.times;
        let per_run = exec.map_range(self.runs.len(), |r| -> Result<(Vec<f64>, f64)> {
            let (k, first, ref weights) = self.runs[r];
            let mut hazards = Vec::with_capacity(weights.len());
            let mut surv = 0.0;
            let mut prev = model.ln_survival(t[first - 1] - t[k]);
            for (off, &w) in weights.iter().enumerate() {
                let i = first + off;
                let dt = t[i] - t[k];
                let cur = model.ln_survival(dt);
                if w > 0.0 {
                    if prev == f64::NEG_INFINITY {
                        return Err(Error::Domain {
                            recruiter: k,
                            event: i,
                            message: "F(s) = 1".into(),
                        });
                    }
                    surv += w * (cur - prev).min(0.0);
                    hazards.push(w * model.ln_hazard_given_survival(dt, cur).exp());
                } else {
                    hazards.push(0.0);
                }
                prev = cur;
            }
            Ok((hazards, surv))
        });
        let mut hazard_sum = vec![0.0; self.times.len()];
        let mut total = 0.0;
        for (r, res) in per_run.into_iter().enumerate() {
            let (hazards, surv) = res?;
            let first = self.runs[r].1;
            for (off, h) in hazards.into_iter().enumerate() {
                hazard_sum[first + off] += h;
            }
            total += surv;
        }
        for (i, &h) in hazard_sum.iter().enumerate() {
            if self.not_seed[i] {
                if h <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                total += h.ln();
            }
        }
        Ok(total)
    }
}
