//! Derivative-free maximum-likelihood estimation of waiting-time parameters
//! for a fixed subgraph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, ObservedStudy};
use crate::likelihood::ExposureTable;
use crate::waiting::{Family, WaitingTimeModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    pub x_tol: f64,
    pub f_tol: f64,
    /// Iteration cap per dimension.
    pub iters_per_dim: usize,
    /// Fresh-simplex restarts from the incumbent; stops early once a restart
    /// no longer improves by more than `f_tol`.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_restarts() -> usize {
    3
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            initial_step: 0.05,
            x_tol: 1e-6,
            f_tol: 1e-8,
            iters_per_dim: 500,
            restarts: default_restarts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` with the Nelder-Mead simplex method. Non-finite values
/// are treated as `+inf`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let p = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(p + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..p {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let fx = eval(&x);
        simplex.push((x, fx));
    }
    let max_iter = opts.iters_per_dim * p.max(1);
    let mut iterations = 0;
    let mut converged = false;
    let along = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(w).map(|(ci, wi)| ci + t * (ci - wi)).collect()
    };
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&best.0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let spread = simplex[p].1 - best.1;
        if diameter < opts.x_tol && (spread < opts.f_tol || spread.is_nan()) {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;
        let mut centroid = vec![0.0; p];
        for (x, _) in &simplex[..p] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / p as f64;
            }
        }
        let worst = simplex[p].0.clone();
        let (f_best, f_second, f_worst) = (simplex[0].1, simplex[p - 1].1, simplex[p].1);
        let xr = along(&centroid, &worst, opts.reflection);
        let fr = eval(&xr);
        if fr < f_best {
            let xe = along(&centroid, &worst, opts.reflection * opts.expansion);
            let fe = eval(&xe);
            simplex[p] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[p] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < f_worst {
            let xc = along(&centroid, &worst, opts.reflection * opts.contraction);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(&centroid, &worst, -opts.contraction);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < fr.min(f_worst) {
            simplex[p] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = x_best
                .iter()
                .zip(&v.0)
                .map(|(b, xi)| b + opts.shrink * (xi - b))
                .collect();
            let fx = eval(&x);
            *v = (x, fx);
        }
    }
    let (x, fx) = simplex.swap_remove(0);
    Minimum {
        x,
        fx,
        iterations,
        evaluations,
        converged,
    }
}

/// How parameters map to the optimizer's coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamTransform {
    /// Log for positive parameters, `ln(alpha - 1)` for the power-law
    /// exponent, logistic onto `(0, bound)` for the power-law lower bound.
    #[default]
    Unconstrained,
    /// Raw parameters, clipped into the feasible box.
    RawClipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Exponential,
    Gamma,
    /// Gamma with scale tied to `1 / shape`, so only the shape is free.
    GammaUnitMean,
    /// `x_min` is confined to `(0, x_min_bound)`.
    PowerLaw { x_min_bound: f64 },
}

/// Feasible parameter set of one family and its coordinate map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub kind: SpaceKind,
    pub transform: ParamTransform,
}

const CLIP: f64 = 1e-9;

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Smallest elapsed time between a recruiter's entry and a recruitee's entry
/// along recruitment edges; a power-law lower bound above it would give the
/// observed recruitment zero hazard.
pub fn min_recruitment_gap(study: &ObservedStudy) -> f64 {
    let t = study.times();
    (0..study.n())
        .filter_map(|i| study.graph().recruiter_of(i).map(|k| t[i] - t[k]))
        .fold(f64::INFINITY, f64::min)
}

impl ParamSpace {
    pub fn for_family(family: Family, study: &ObservedStudy) -> Self {
        let kind = match family {
            Family::Exponential => SpaceKind::Exponential,
            Family::Gamma => SpaceKind::Gamma,
            Family::PowerLaw => SpaceKind::PowerLaw {
                x_min_bound: min_recruitment_gap(study),
            },
        };
        Self {
            kind,
            transform: ParamTransform::Unconstrained,
        }
    }

    pub fn gamma_unit_mean() -> Self {
        Self {
            kind: SpaceKind::GammaUnitMean,
            transform: ParamTransform::Unconstrained,
        }
    }

    pub fn with_transform(mut self, transform: ParamTransform) -> Self {
        self.transform = transform;
        self
    }

    pub fn dimension(&self) -> usize {
        match self.kind {
            SpaceKind::Exponential | SpaceKind::GammaUnitMean => 1,
            SpaceKind::Gamma | SpaceKind::PowerLaw { .. } => 2,
        }
    }

    pub fn family(&self) -> Family {
        match self.kind {
            SpaceKind::Exponential => Family::Exponential,
            SpaceKind::Gamma | SpaceKind::GammaUnitMean => Family::Gamma,
            SpaceKind::PowerLaw { .. } => Family::PowerLaw,
        }
    }

    /// Optimizer coordinates of `model`.
    pub fn to_coords(&self, model: &WaitingTimeModel) -> Result<Vec<f64>> {
        if model.family() != self.family() {
            return Err(Error::InvalidParameter(format!(
                "starting point is {} but the parameter space is {}",
                model.family(),
                self.family()
            )));
        }
        let raw = model.params();
        let raw = match self.kind {
            SpaceKind::GammaUnitMean => vec![raw[0]],
            _ => raw,
        };
        if self.transform == ParamTransform::RawClipped {
            return Ok(raw);
        }
        Ok(match self.kind {
            SpaceKind::Exponential | SpaceKind::Gamma | SpaceKind::GammaUnitMean => {
                raw.iter().map(|v| v.ln()).collect()
            }
            SpaceKind::PowerLaw { x_min_bound } => {
                let x = if x_min_bound.is_finite() {
                    let r = raw[1] / x_min_bound;
                    if !(r > 0.0 && r < 1.0) {
                        return Err(Error::InvalidParameter(format!(
                            "x_min = {} must lie below the smallest recruitment gap {x_min_bound}",
                            raw[1]
                        )));
                    }
                    (r / (1.0 - r)).ln()
                } else {
                    raw[1].ln()
                };
                vec![(raw[0] - 1.0).ln(), x]
            }
        })
    }

    /// Model at optimizer coordinates `z`.
    pub fn to_model(&self, z: &[f64]) -> Result<WaitingTimeModel> {
        if z.len() != self.dimension() {
            return Err(Error::Dimension {
                expected: self.dimension(),
                found: z.len(),
            });
        }
        let pos = |v: f64| match self.transform {
            ParamTransform::Unconstrained => v.exp(),
            ParamTransform::RawClipped => v.max(CLIP),
        };
        match self.kind {
            SpaceKind::Exponential => WaitingTimeModel::exponential(pos(z[0])),
            SpaceKind::Gamma => WaitingTimeModel::gamma(pos(z[0]), pos(z[1])),
            SpaceKind::GammaUnitMean => WaitingTimeModel::gamma_unit_mean(pos(z[0])),
            SpaceKind::PowerLaw { x_min_bound } => {
                let (alpha, x_min) = match self.transform {
                    ParamTransform::Unconstrained => {
                        let x = if x_min_bound.is_finite() {
                            x_min_bound * logistic(z[1])
                        } else {
                            z[1].exp()
                        };
                        (1.0 + z[0].exp(), x)
                    }
                    ParamTransform::RawClipped => {
                        let hi = if x_min_bound.is_finite() {
                            x_min_bound * (1.0 - CLIP)
                        } else {
                            f64::INFINITY
                        };
                        (z[0].max(1.0 + CLIP), z[1].clamp(CLIP, hi))
                    }
                };
                WaitingTimeModel::power_law(alpha, x_min)
            }
        }
    }
}

/// Log-likelihood of a fixed subgraph as a function of the parameters.
#[derive(Debug, Clone)]
pub struct ThetaObjective {
    table: ExposureTable,
    space: ParamSpace,
}

impl ThetaObjective {
    pub fn new(a: &AdjacencyMatrix, study: &ObservedStudy, space: ParamSpace) -> Result<Self> {
        Ok(Self {
            table: ExposureTable::new(a, study)?,
            space,
        })
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn log_likelihood(&self, model: &WaitingTimeModel) -> f64 {
        self.table.log_likelihood(model).unwrap_or(f64::NEG_INFINITY)
    }

    /// Log-likelihood at optimizer coordinates; `-inf` outside the domain.
    pub fn at(&self, z: &[f64]) -> f64 {
        match self.space.to_model(z) {
            Ok(m) => self.log_likelihood(&m),
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub model: WaitingTimeModel,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Maximizes the log-likelihood of `a` over `space` starting from `theta0`.
/// The parameter prior is flat, so this is the maximum-likelihood estimate.
pub fn estimate_theta(
    a: &AdjacencyMatrix,
    study: &ObservedStudy,
    space: ParamSpace,
    theta0: &WaitingTimeModel,
    opts: &NelderMeadOptions,
) -> Result<ThetaEstimate> {
    let objective = ThetaObjective::new(a, study, space)?;
    let z0 = space.to_coords(theta0)?;
    let start = objective.at(&z0);
    if !start.is_finite() {
        return Err(Error::NonFiniteStart(theta0.params()));
    }
    let mut min = nelder_mead(|z| -objective.at(z), &z0, opts);
    // collapsed simplices are common near kinks of the power-law objective
    for _ in 0..opts.restarts {
        let next = nelder_mead(|z| -objective.at(z), &min.x, opts);
        let gain = min.fx - next.fx;
        let (iterations, evaluations) = (min.iterations + next.iterations, min.evaluations + next.evaluations);
        if gain > 0.0 {
            min = next;
        } else {
            min.converged = next.converged;
        }
        min.iterations = iterations;
        min.evaluations = evaluations;
        if gain <= opts.f_tol {
            break;
        }
    }
    if !min.converged {
        log::warn!(
            "parameter search stopped after {} iterations without meeting the tolerances",
            min.iterations
        );
    }
    Ok(ThetaEstimate {
        model: space.to_model(&min.x)?,
        log_likelihood: -min.fx,
        iterations: min.iterations,
        evaluations: min.evaluations,
        converged: min.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::chain3;

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2);
        let m = nelder_mead(f, &[0.0, 0.0], &NelderMeadOptions::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] + 2.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let opts = NelderMeadOptions {
            initial_step: 0.5,
            ..Default::default()
        };
        let m = nelder_mead(f, &[-1.2, 1.0], &opts);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn nelder_mead_respects_iteration_cap() {
        let opts = NelderMeadOptions {
            iters_per_dim: 3,
            ..Default::default()
        };
        let m = nelder_mead(|x: &[f64]| (x[0] - 100.0).powi(2), &[0.0], &opts);
        assert!(!m.converged);
        assert_eq!(m.iterations, 3);
    }

    #[test]
    fn transforms_round_trip() {
        let s = chain3([2, 2, 2]);
        let cases = [
            (Family::Exponential, WaitingTimeModel::exponential(0.7).unwrap()),
            (Family::Gamma, WaitingTimeModel::gamma(0.5, 2.0).unwrap()),
            (Family::PowerLaw, WaitingTimeModel::power_law(2.0, 0.4).unwrap()),
        ];
        for (family, model) in cases {
            for transform in [ParamTransform::Unconstrained, ParamTransform::RawClipped] {
                let space = ParamSpace::for_family(family, &s).with_transform(transform);
                let z = space.to_coords(&model).unwrap();
                let back = space.to_model(&z).unwrap();
                for (a, b) in back.params().iter().zip(model.params()) {
                    assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} vs {b}");
                }
            }
        }
        let space = ParamSpace::gamma_unit_mean();
        let z = space.to_coords(&WaitingTimeModel::gamma_unit_mean(0.25).unwrap()).unwrap();
        assert_eq!(space.to_model(&z).unwrap(), WaitingTimeModel::gamma_unit_mean(0.25).unwrap());
    }

    #[test]
    fn power_law_lower_bound_must_fit_the_data() {
        let s = chain3([2, 2, 2]);
        let space = ParamSpace::for_family(Family::PowerLaw, &s);
        assert_eq!(space.kind, SpaceKind::PowerLaw { x_min_bound: 1.0 });
        assert!(space.to_coords(&WaitingTimeModel::power_law(2.0, 1.5).unwrap()).is_err());
    }

    #[test]
    fn exponential_chain_estimate_is_closed_form() {
        // chain 1 -> 2 -> 3 at times 0, 1, 2 with A = A_R, degrees 1, 2, 1:
        // exposure 1 on (0, 1) and 1 on (1, 2), two events, rate = 2 / 2
        let s = chain3([1, 2, 1]);
        let est = estimate_theta(
            s.recruitment_adjacency(),
            &s,
            ParamSpace::for_family(Family::Exponential, &s),
            &WaitingTimeModel::exponential(0.3).unwrap(),
            &NelderMeadOptions::default(),
        )
        .unwrap();
        assert!(est.converged);
        assert!((est.model.params()[0] - 1.0).abs() < 1e-5, "{:?}", est.model);
    }

    #[test]
    fn start_from_another_family_is_rejected() {
        let s = chain3([1, 2, 1]);
        let res = estimate_theta(
            s.recruitment_adjacency(),
            &s,
            ParamSpace::for_family(Family::Gamma, &s),
            &WaitingTimeModel::power_law(2.0, 0.5).unwrap(),
            &NelderMeadOptions::default(),
        );
        assert!(matches!(res, Err(Error::InvalidParameter(_))));
    }
}
