mod common;

use common::{random_model, random_study};
use rdsnet::anneal::MoveSet;
use rdsnet::likelihood::{LikelihoodCache, LikelihoodWorkspace};
use rdsnet::stream;

#[test]
fn cache_tracks_ten_thousand_toggles() {
    let mut rng = stream(2024, 0);
    let study = random_study(&mut rng, 50);
    for family in 0..3 {
        let model = random_model(&mut rng, family, &study);
        let ws = LikelihoodWorkspace::build(&study, &model).unwrap();
        let mut moves = MoveSet::new(study.recruitment_adjacency().clone(), &study).unwrap();
        let mut cache = LikelihoodCache::init(moves.matrix(), &ws);
        for _ in 0..10_000 {
            let t = moves.sample_uniform(&mut rng).unwrap();
            moves.apply(t);
            cache.apply_toggle(&ws, &t);
        }
        let fresh = LikelihoodCache::init(moves.matrix(), &ws);
        let err = cache.max_rel_error(&fresh);
        assert!(err < 1e-9, "family {family}: drift {err:e}");
        assert_eq!(cache.pendant(), fresh.pendant());
    }
}

#[test]
fn toggle_then_inverse_restores_cache() {
    let mut rng = stream(99, 0);
    let study = random_study(&mut rng, 50);
    let model = random_model(&mut rng, 1, &study);
    let ws = LikelihoodWorkspace::build(&study, &model).unwrap();
    let mut moves = MoveSet::new(study.recruitment_adjacency().clone(), &study).unwrap();
    let mut cache = LikelihoodCache::init(moves.matrix(), &ws);
    for _ in 0..500 {
        let t = moves.sample_uniform(&mut rng).unwrap();
        let before = cache.clone();
        cache.apply_toggle(&ws, &t);
        cache.apply_toggle(&ws, &t.inverse());
        assert!(cache.max_rel_error(&before) < 1e-12);
        assert_eq!(cache.pendant(), before.pendant());
        moves.apply(t);
        cache.apply_toggle(&ws, &t);
    }
}

#[test]
fn delta_matches_full_difference() {
    let mut rng = stream(5, 0);
    let study = random_study(&mut rng, 30);
    for family in 0..3 {
        let model = random_model(&mut rng, family, &study);
        let ws = LikelihoodWorkspace::build(&study, &model).unwrap();
        let mut moves = MoveSet::new(study.recruitment_adjacency().clone(), &study).unwrap();
        let mut cache = LikelihoodCache::init(moves.matrix(), &ws);
        for _ in 0..300 {
            let t = moves.sample_uniform(&mut rng).unwrap();
            let now = cache.log_likelihood(&ws);
            let after = cache.log_likelihood_after(&ws, &t);
            if now.is_finite() && after.is_finite() {
                let d = cache.delta_log_likelihood(&ws, &t);
                assert!((d - (after - now)).abs() < 1e-9 * (1.0 + now.abs()));
            }
            moves.apply(t);
            cache.apply_toggle(&ws, &t);
        }
    }
}
