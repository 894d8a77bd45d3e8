use rdsnet::likelihood::log_likelihood_direct;
use rdsnet::sim::{generate_population, random_seeds, simulate, PopulationGraph, PopulationSpec, SeedEntry, SimConfig};
use rdsnet::{stream, WaitingTimeModel};

fn er_study(seed: u64, model: WaitingTimeModel, target_n: usize) -> (PopulationGraph, rdsnet::sim::SimResult) {
    let mut rng = stream(seed, 0);
    let g = generate_population(&PopulationSpec::ErdosRenyi { n: 300, p: 0.03 }, &mut rng).unwrap();
    let seeds = random_seeds(&g, 2, 0.5, &mut rng).unwrap();
    let cfg = SimConfig {
        seeds,
        coupons: 3,
        target_n,
        model,
        max_time: None,
    };
    let out = simulate(&g, &cfg, &mut rng).unwrap();
    (g, out)
}

#[test]
fn coupons_are_never_replenished() {
    for seed in 0..20 {
        let (_, out) = er_study(seed, WaitingTimeModel::gamma(0.5, 2.0).unwrap(), 80);
        let s = &out.observed;
        let n = s.n();
        let c = s.coupons();
        let edges = s.graph().edges();
        for i in 0..n {
            // issued 3, spent one per recruitment made before event j
            for j in (i + 1)..n {
                let spent = edges.iter().filter(|&&(r, e)| r == i && e < j).count();
                assert!(spent <= 3);
                assert_eq!(c.get(i, j), spent < 3, "subject {i} event {j}");
            }
            if let Some(first_zero) = ((i + 1)..n).find(|&j| !c.get(i, j)) {
                assert!((first_zero..n).all(|k| !c.get(i, k)));
            }
        }
    }
}

#[test]
fn recruiters_precede_recruitees_and_truth_is_induced() {
    for seed in 0..10 {
        let (g, out) = er_study(seed, WaitingTimeModel::exponential(1.0).unwrap(), 60);
        let s = &out.observed;
        for (r, e) in s.graph().edges() {
            assert!(s.times()[r] < s.times()[e]);
        }
        let idx: Vec<usize> = s.ids().iter().map(|&id| g.index_of(id).unwrap()).collect();
        for i in 0..s.n() {
            for j in 0..s.n() {
                if i != j {
                    assert_eq!(out.true_subgraph.get(i, j), g.has_edge(idx[i], idx[j]));
                }
            }
        }
        assert!(s.recruitment_adjacency().is_subgraph_of(&out.true_subgraph));
    }
}

#[test]
fn truth_has_finite_likelihood() {
    let models = [
        WaitingTimeModel::exponential(1.0).unwrap(),
        WaitingTimeModel::gamma(0.5, 2.0).unwrap(),
        WaitingTimeModel::power_law(2.0, 0.5).unwrap(),
    ];
    for (k, model) in models.into_iter().enumerate() {
        for seed in 0..5 {
            let (_, out) = er_study(100 + seed + 10 * k as u64, model, 60);
            let l = log_likelihood_direct(&out.true_subgraph, &out.observed, &model).unwrap();
            assert!(l.is_finite(), "{model}: {l}");
        }
    }
}

/// Kolmogorov distribution tail `P(sqrt(m) D > x)`.
fn ks_pvalue(x: f64) -> f64 {
    let mut p = 0.0;
    for k in 1..100 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * x * x).exp();
    }
    p.clamp(0.0, 1.0)
}

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / m).max((i + 1) as f64 / m - f)
        })
        .fold(0.0, f64::max)
}

#[test]
fn first_recruitment_follows_competing_exponentials() {
    // seed 0 adjacent to 1, 2, 3; vertex 1 also adjacent to 3. With rate 1
    // and enough coupons the first recruitment after the seed waits
    // Exp(3), and the next one Exp(#active edges) given the state.
    let g = PopulationGraph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 3)]).unwrap();
    let cfg = SimConfig {
        seeds: vec![SeedEntry { vertex: 0, time: 0.0 }],
        coupons: 3,
        target_n: 4,
        model: WaitingTimeModel::exponential(1.0).unwrap(),
        max_time: None,
    };
    let reps = 10_000;
    let mut first = Vec::with_capacity(reps);
    let mut second_after_leaf1 = Vec::new();
    for r in 0..reps {
        let out = simulate(&g, &cfg, &mut stream(55, r as u64)).unwrap();
        let t = out.observed.times();
        first.push(t[1] - t[0]);
        if out.observed.ids()[1] == 2 {
            // vertex 1 (label 2) recruited first: active edges 0-2, 0-3, 1-3
            second_after_leaf1.push(t[2] - t[1]);
        }
    }
    let d = ks_statistic(first, |x| 1.0 - (-3.0 * x).exp());
    assert!(ks_pvalue(d * (reps as f64).sqrt()) > 0.01, "first gap D = {d}");
    let m = second_after_leaf1.len();
    assert!(m > 2000);
    let d = ks_statistic(second_after_leaf1, |x| 1.0 - (-3.0 * x).exp());
    assert!(ks_pvalue(d * (m as f64).sqrt()) > 0.01, "second gap D = {d}");
}

#[test]
fn identical_seeds_reproduce_bit_for_bit() {
    let (_, a) = er_study(9, WaitingTimeModel::gamma(0.5, 2.0).unwrap(), 70);
    let (_, b) = er_study(9, WaitingTimeModel::gamma(0.5, 2.0).unwrap(), 70);
    assert_eq!(a.events, b.events);
    assert_eq!(a.true_subgraph, b.true_subgraph);
}
