#![allow(dead_code)]

use rand::Rng as _;
use rdsnet::anneal::MoveSet;
use rdsnet::estimate::min_recruitment_gap;
use rdsnet::{AdjacencyMatrix, CouponMatrix, ObservedStudy, RecruitmentGraph, Rng, WaitingTimeModel};

/// Random recruitment forest with exponential gaps between events, coupons
/// derived from a random allotment, and reported degrees a little above the
/// recruitment degrees.
pub fn random_study(rng: &mut Rng, n: usize) -> ObservedStudy {
    let coupons = rng.random_range(1..=3u32);
    let mut used = vec![0u32; n];
    let mut recruiter = vec![None; n];
    for i in 1..n {
        if rng.random_bool(0.15) {
            continue;
        }
        let holders: Vec<usize> = (0..i).filter(|&k| used[k] < coupons).collect();
        if holders.is_empty() {
            continue;
        }
        let r = holders[rng.random_range(0..holders.len())];
        used[r] += 1;
        recruiter[i] = Some(r);
    }
    let g = RecruitmentGraph::new(recruiter).unwrap();
    let c = CouponMatrix::derive(&g, coupons);
    let mut t = 0.0;
    let times = (0..n)
        .map(|_| {
            t += 0.05 - (1.0 - rng.random::<f64>()).ln();
            t
        })
        .collect();
    let probe = ObservedStudy::new(g.clone(), vec![n as u32; n], times, c.clone()).unwrap();
    let ar = probe.recruitment_adjacency();
    let degrees = (0..n)
        .map(|i| (ar.degree(i) as u32 + rng.random_range(0..=3)).max(1))
        .collect();
    ObservedStudy::new(g, degrees, probe.times().to_vec(), c).unwrap()
}

/// A compatible matrix reached by `steps` uniform toggles from `A_R`.
pub fn random_compatible(study: &ObservedStudy, steps: usize, rng: &mut Rng) -> AdjacencyMatrix {
    let mut m = MoveSet::new(study.recruitment_adjacency().clone(), study).unwrap();
    for _ in 0..steps {
        match m.sample_uniform(rng) {
            Some(t) => m.apply(t),
            None => break,
        }
    }
    m.into_matrix()
}

pub fn random_model(rng: &mut Rng, family: usize, study: &ObservedStudy) -> WaitingTimeModel {
    match family % 3 {
        0 => WaitingTimeModel::exponential(rng.random_range(0.3..3.0)).unwrap(),
        1 => WaitingTimeModel::gamma(rng.random_range(0.3..3.0), rng.random_range(0.3..3.0)).unwrap(),
        _ => {
            let gap = min_recruitment_gap(study);
            let hi = if gap.is_finite() { gap } else { 1.0 };
            WaitingTimeModel::power_law(rng.random_range(1.2..3.0), hi * rng.random_range(0.05..0.95)).unwrap()
        }
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / (1.0 + a.abs())
    }
}
