use coopra_learn::eval::{mae, r2, rmse, Metrics};
use coopra_learn::LearnError;
use proptest::prelude::*;

fn direct(pred: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ss_res: f64 = pred.iter().zip(y).map(|(p, v)| (v - p) * (v - p)).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let abs: f64 = pred.iter().zip(y).map(|(p, v)| (v - p).abs()).sum();
    (1.0 - ss_res / ss_tot, abs / n, (ss_res / n).sqrt())
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..200).prop_flat_map(|n| {
        (
            prop::collection::vec(-1e3f64..1e3, n),
            prop::collection::vec(-1e3f64..1e3, n),
        )
    })
}

proptest! {
    #[test]
    fn metrics_match_direct_formulas((pred, y) in pairs()) {
        let (r, m, s) = direct(&pred, &y);
        prop_assert!(close(r2(&pred, &y).unwrap(), r, 1e-9));
        prop_assert!(close(mae(&pred, &y).unwrap(), m, 1e-9));
        prop_assert!(close(rmse(&pred, &y).unwrap(), s, 1e-9));
    }

    #[test]
    fn r2_is_one_minus_scaled_mse((pred, y) in pairs()) {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let e = rmse(&pred, &y).unwrap();
        let identity = 1.0 - e * e * n / sst;
        prop_assert!((r2(&pred, &y).unwrap() - identity).abs() <= 1e-9 * identity.abs().max(1.0));
    }

    #[test]
    fn joint_shuffle_leaves_metrics_unchanged((pred, y) in pairs(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut idx: Vec<usize> = (0..y.len()).collect();
        idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let p2: Vec<f64> = idx.iter().map(|&i| pred[i]).collect();
        let y2: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let a = Metrics::compute(&pred, &y).unwrap();
        let b = Metrics::compute(&p2, &y2).unwrap();
        prop_assert!(close(a.r2.unwrap(), b.r2.unwrap(), 1e-12));
        prop_assert!(close(a.mae, b.mae, 1e-12));
        prop_assert!(close(a.rmse, b.rmse, 1e-12));
    }
}

#[test]
fn anchors() {
    let y = [1.0, 2.0, 3.0];
    assert_eq!(r2(&y, &y).unwrap(), 1.0);
    assert!(r2(&[2.0; 3], &y).unwrap().abs() < 1e-12);
    let p = [1.0, 2.0, 2.0];
    assert!((r2(&p, &y).unwrap() - 0.5).abs() < 1e-12);
    assert!((mae(&p, &y).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert!((rmse(&p, &y).unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
}

#[test]
fn constant_labels_leave_r2_undefined() {
    assert!(matches!(r2(&[1.0, 2.0], &[3.0, 3.0]), Err(LearnError::Undefined(_))));
    let m = Metrics::compute(&[3.0, 3.0], &[3.0, 3.0]).unwrap();
    assert_eq!((m.r2, m.mae, m.rmse), (None, 0.0, 0.0));
}

#[test]
fn length_mismatch_is_a_contract_error() {
    assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(LearnError::Contract(_))));
    assert!(matches!(mae(&[], &[]), Err(LearnError::Contract(_))));
}
