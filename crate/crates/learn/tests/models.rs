use coopra_core::{Direction, FusedDataset};
use coopra_learn::eval::cross_validate;
use coopra_learn::models::mlp::Net;
use coopra_learn::models::svr::{rbf, solve};
use coopra_learn::models::{persist, Forest, GprModel, GprParams, M5Model, M5Params, MlpParams, RfParams, SvrParams};
use coopra_learn::{LearnError, ModelKind, ModelSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_rows(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

/// Every split attaining the minimum summed squared error of the two
/// children, by exhaustive search over midpoints.
fn brute_force_splits(rows: &[Vec<f64>], y: &[f64]) -> Vec<(usize, f64)> {
    let sse = |idx: &[usize]| {
        let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
    };
    let mut scored = Vec::new();
    for j in 0..rows[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = (0..rows.len()).partition(|&i| rows[i][j] <= t);
            scored.push((sse(&l) + sse(&r), j, t));
        }
    }
    let best = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    scored
        .into_iter()
        .filter(|s| s.0 <= best * (1.0 + 1e-12))
        .map(|s| (s.1, s.2))
        .collect()
}

#[test]
fn single_tree_root_split_is_the_exhaustive_optimum() {
    let single = RfParams {
        n_trees: 1,
        min_split: 2,
        mtry: Some(2),
        bootstrap: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for case in 0..20 {
        let rows = random_rows(20, 2, &mut rng);
        let y: Vec<f64> = rows.iter().map(|r| r[0] * r[1] + rng.random_range(-0.3..0.3)).collect();
        let forest = Forest::fit(&rows, &y, &single, case).unwrap();
        let (f, t) = forest.trees[0].root_split().unwrap();
        let optimal = brute_force_splits(&rows, &y);
        assert!(
            optimal.iter().any(|&(bf, bt)| bf == f && (bt - t).abs() < 1e-12),
            "case {case}: tree ({f}, {t}), optimal {optimal:?}"
        );
    }
}

#[test]
fn m5_recovers_a_line() {
    let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 20.0]).collect();
    let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] + 1.0).collect();
    let m = M5Model::fit(&rows, &y, &M5Params::default()).unwrap();
    assert_eq!(m.n_leaves(), 1);
    assert!((m.root_model().coef[0] - 3.0).abs() < 1e-6);
    assert!((m.root_model().intercept - 1.0).abs() < 1e-6);
    let ds = FusedDataset::new(vec!["ta".into()], rows, y, Direction::Uplink).unwrap();
    let cv = cross_validate(&ModelSpec::M5(M5Params::default()), &ds, 10, 0).unwrap();
    assert!(cv.pooled.r2.unwrap() >= 0.999);
}

#[test]
fn m5_splits_a_piecewise_line() {
    let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 10.0]).collect();
    let y: Vec<f64> = rows.iter().map(|r| if r[0] < 10.0 { 2.0 * r[0] } else { 50.0 + 0.5 * r[0] }).collect();
    let m = M5Model::fit(&rows, &y, &M5Params::default()).unwrap();
    let (f, t) = m.root_split().unwrap();
    assert_eq!(f, 0);
    assert!((t - 10.0).abs() < 0.5, "threshold {t}");
    let unsmoothed = M5Model::fit(&rows, &y, &M5Params { smooth: false, ..M5Params::default() }).unwrap();
    for (r, v) in rows.iter().zip(&y) {
        assert!((unsmoothed.predict_row(r) - v).abs() < 1e-6);
    }
}

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..5 {
        let p = rng.random_range(1..5);
        let net = Net::init(&[p, 15, 15, 1], &mut rng);
        let xs = random_rows(4, p, &mut rng);
        let ys: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grad) = net.loss_and_gradient(&xs, &ys);
        let h = 1e-5;
        for k in 0..net.params.len() {
            let mut plus = net.clone();
            plus.params[k] += h;
            let mut minus = net.clone();
            minus.params[k] -= h;
            let fd = (plus.loss_and_gradient(&xs, &ys).0 - minus.loss_and_gradient(&xs, &ys).0) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-7);
            assert!(rel < 1e-4, "param {k}: backprop {} fd {fd}", grad[k]);
        }
    }
}

/// ε-SVR optimality on (x, z): returns (worst KKT violation, |Σβ|, relative
/// duality gap).
fn svr_optimality(x: &[Vec<f64>], z: &[f64], p: &SvrParams, beta: &[f64], rho: f64) -> (f64, f64, f64) {
    let n = x.len();
    let k: Vec<Vec<f64>> = x.iter().map(|a| x.iter().map(|b| rbf(a, b, p.gamma)).collect()).collect();
    let kb: Vec<f64> = k.iter().map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    let f: Vec<f64> = kb.iter().map(|v| v - rho).collect();
    let mut worst = 0.0f64;
    for i in 0..n {
        let r = z[i] - f[i];
        let b = beta[i];
        let v = if b == 0.0 {
            (r.abs() - p.epsilon).max(0.0)
        } else if b >= p.c {
            (p.epsilon - r).max(0.0)
        } else if b <= -p.c {
            (p.epsilon + r).max(0.0)
        } else if b > 0.0 {
            (r - p.epsilon).abs()
        } else {
            (r + p.epsilon).abs()
        };
        worst = worst.max(v);
    }
    let quad: f64 = beta.iter().zip(&kb).map(|(a, b)| a * b).sum();
    let primal = 0.5 * quad + p.c * (0..n).map(|i| ((z[i] - f[i]).abs() - p.epsilon).max(0.0)).sum::<f64>();
    let dual = -0.5 * quad - p.epsilon * beta.iter().map(|b| b.abs()).sum::<f64>()
        + z.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
    (worst, beta.iter().sum::<f64>().abs(), (primal - dual) / primal.abs())
}

#[test]
fn smo_solutions_satisfy_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..6 {
        let n = rng.random_range(10..80);
        let d = rng.random_range(1..4);
        let x = random_rows(n, d, &mut rng);
        let z: Vec<f64> = x.iter().map(|r| r.iter().sum::<f64>().sin() + rng.random_range(-0.2..0.2)).collect();
        let p = SvrParams::new([1.0, 10.0, 100.0][case % 3], 0.05, [0.5, 2.0][case % 2]);
        let sol = solve(&x, &z, &p).unwrap();
        let (kkt, sum, gap) = svr_optimality(&x, &z, &p, &sol.beta, sol.rho);
        assert!(kkt <= p.tol, "case {case}: KKT violation {kkt}");
        assert!(sum < 1e-9, "case {case}: equality constraint off by {sum}");
        assert!((0.0..0.01).contains(&(gap + 1e-12)), "case {case}: gap {gap}");
    }
}

#[test]
fn gpr_band_covers_held_out_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let noise = Normal::new(0.0, 0.2).unwrap();
    let draw = |rng: &mut ChaCha8Rng| {
        let x: f64 = rng.random_range(-3.0..3.0);
        (x, x.sin() + noise.sample(rng))
    };
    let (x, y): (Vec<f64>, Vec<f64>) = (0..120).map(|_| draw(&mut rng)).unzip();
    let gp = GprModel::fit(&x, &y, &GprParams::default()).unwrap();
    let inside = (0..500)
        .filter(|_| {
            let (t, v) = draw(&mut rng);
            let (_, lo, hi) = gp.predict_band(t);
            lo <= v && v <= hi
        })
        .count();
    let frac = inside as f64 / 500.0;
    assert!((0.90..=0.99).contains(&frac), "coverage {frac}");
}

fn small_dataset(n: usize, seed: u64) -> FusedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = random_rows(n, 3, &mut rng);
    let labels = rows.iter().map(|r| 5.0 + r[0] * 2.0 - r[1] * r[2]).collect();
    FusedDataset::new(vec!["rsrp".into(), "cqi".into(), "ta".into()], rows, labels, Direction::Uplink).unwrap()
}

fn cheap_specs() -> Vec<ModelSpec> {
    vec![
        ModelSpec::Rf(RfParams::with_trees(10)),
        ModelSpec::M5(M5Params::default()),
        ModelSpec::Mlp(MlpParams {
            epochs: 30,
            ..MlpParams::default()
        }),
        ModelSpec::Svr(SvrParams::default()),
    ]
}

#[test]
fn saved_models_predict_bit_identically() {
    let ds = small_dataset(60, 1);
    let dir = tempfile::tempdir().unwrap();
    for spec in cheap_specs() {
        let model = spec.fit(&ds, 3).unwrap();
        let path = dir.path().join(format!("{}.model", spec.kind()));
        persist::save(&path, &model, None).unwrap();
        let (back, meta) = persist::load(&path).unwrap();
        assert_eq!(meta, None);
        let a = model.predict_dataset(&ds).unwrap();
        let b = back.predict_dataset(&ds).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()), "{}", spec.kind());
    }
}

#[test]
fn truncated_model_file_is_rejected() {
    let ds = small_dataset(30, 2);
    let model = ModelSpec::Rf(RfParams::with_trees(3)).fit(&ds, 0).unwrap();
    let text = persist::to_string(&model, None);
    let cut = &text[..text.len() / 2];
    let err = persist::from_str(cut, std::path::Path::new("m.model")).unwrap_err();
    assert!(matches!(err, LearnError::ModelFile { .. }));
    assert!(persist::from_str("{}", std::path::Path::new("m.model")).is_err());
}

#[test]
fn prediction_requires_the_training_columns() {
    let ds = small_dataset(30, 4);
    let model = ModelSpec::M5(M5Params::default()).fit(&ds, 0).unwrap();
    let swapped: Vec<String> = ds.columns.iter().rev().cloned().collect();
    assert!(matches!(model.predict(&swapped, &ds.rows), Err(LearnError::ColumnMismatch { .. })));
}

#[test]
fn fitting_is_deterministic_per_seed() {
    let ds = small_dataset(50, 5);
    for spec in cheap_specs() {
        assert_eq!(spec.fit(&ds, 9).unwrap(), spec.fit(&ds, 9).unwrap(), "{}", spec.kind());
    }
}

#[test]
fn non_finite_training_data_is_rejected() {
    let mut ds = small_dataset(20, 6);
    ds.rows[3][1] = f64::NAN;
    for kind in ModelKind::COMPARED {
        let err = ModelSpec::default_for(kind).fit(&ds, 0).unwrap_err();
        assert!(err.is_data_error(), "{kind}: {err}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn predictions_follow_row_permutations(seed in any::<u64>(), k in 0usize..4) {
        use rand::seq::SliceRandom;
        let ds = small_dataset(40, seed);
        let model = cheap_specs()[k].fit(&ds, seed).unwrap();
        let mut idx: Vec<usize> = (0..ds.n_rows()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let shuffled: Vec<Vec<f64>> = idx.iter().map(|&i| ds.rows[i].clone()).collect();
        let a = model.predict(&ds.columns, &ds.rows).unwrap();
        let b = model.predict(&ds.columns, &shuffled).unwrap();
        for (j, &i) in idx.iter().enumerate() {
            prop_assert_eq!(a[i].to_bits(), b[j].to_bits());
        }
    }
}
