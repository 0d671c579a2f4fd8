use std::sync::atomic::{AtomicUsize, Ordering};

use coopra_core::{Direction, FusedDataset};
use coopra_learn::featsel::{forward_select, select_features};
use coopra_learn::models::RfParams;
use coopra_learn::{LearnError, ModelSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Evaluator calls of a selection that accepted `s` of `p` candidates.
fn expected_calls(p: usize, s: usize) -> usize {
    let rounds = if s == p { s } else { s + 1 };
    (0..rounds).map(|i| p - i).sum()
}

fn planted(n: usize, seed: u64) -> FusedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let columns: Vec<String> = (1..=10).map(|i| format!("x{i}")).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..10).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let labels = rows.iter().map(|r| 2.0 * r[0] + noise.sample(&mut rng)).collect();
    FusedDataset::new(columns, rows, labels, Direction::Downlink).unwrap()
}

#[test]
fn planted_feature_is_selected_first() {
    let spec = ModelSpec::Rf(RfParams::with_trees(20));
    for seed in 0..5 {
        let ds = planted(300, seed);
        let sel = select_features(&spec, &ds, &ds.columns, 5, seed).unwrap();
        assert_eq!(sel.selected[0], "x1", "seed {seed}");
        assert_eq!(sel.models_trained, expected_calls(10, sel.selected.len()));
        assert!(sel.models_trained <= 10 * 11 / 2);
    }
}

#[test]
fn r2_path_increases_strictly() {
    let ds = planted(200, 3);
    let sel = select_features(&ModelSpec::Rf(RfParams::with_trees(10)), &ds, &ds.columns, 5, 1).unwrap();
    assert!(sel.r2_path.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(sel.r2_path.len(), sel.selected.len());
}

#[test]
fn candidate_errors_name_the_candidate() {
    let cands = vec!["a".to_string(), "b".to_string()];
    let err = forward_select(&cands, |set| {
        if set.contains(&"b".to_string()) {
            Err(LearnError::Numeric("boom".into()))
        } else {
            Ok(0.1)
        }
    })
    .unwrap_err();
    assert!(matches!(err, LearnError::Candidate { ref candidate, .. } if candidate == "b"));
}

proptest! {
    // Arbitrary (deterministic) scores: the counter must match the closed
    // form, and every accepted step must be the best of its round.
    #[test]
    fn call_count_matches_closed_form(p in 1usize..9, salt in any::<u64>()) {
        let cands: Vec<String> = (0..p).map(|i| format!("f{i}")).collect();
        let calls = AtomicUsize::new(0);
        let score = |set: &[String]| {
            let h = set.iter().fold(salt, |h, s| h.rotate_left(7) ^ s.bytes().map(u64::from).sum::<u64>().wrapping_mul(0x9e37_79b9));
            (h % 1000) as f64 / 1000.0 - 0.2 + 0.05 * set.len() as f64
        };
        let sel = forward_select(&cands, |set| {
            calls.fetch_add(1, Ordering::Relaxed);
            Ok(score(set))
        }).unwrap();
        prop_assert_eq!(sel.models_trained, calls.load(Ordering::Relaxed));
        prop_assert_eq!(sel.models_trained, expected_calls(p, sel.selected.len()));
        prop_assert!(sel.models_trained <= p * (p + 1) / 2);
        let mut chosen: Vec<String> = Vec::new();
        for (i, name) in sel.selected.iter().enumerate() {
            let best = cands.iter().filter(|c| !chosen.contains(c)).map(|c| {
                let mut s = chosen.clone();
                s.push(c.clone());
                score(&s)
            }).fold(f64::NEG_INFINITY, f64::max);
            chosen.push(name.clone());
            prop_assert_eq!(score(&chosen), best);
            prop_assert_eq!(sel.r2_path[i], best);
        }
    }
}
