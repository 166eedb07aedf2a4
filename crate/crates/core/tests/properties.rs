mod common;

use common::{pool, snapshot, uniform};
use holdout_al::nn::{softmax, Matrix};
use holdout_al::strategies::{
    bald_from_passes, badge_embedding, cover_radius, k_center_greedy, kernel_value, predictive_entropy, score_ours,
    score_ours_app, top_k, HoldoutCache, OursConfig, ScoredCandidate,
};
use proptest::prelude::*;

fn probs(rows: usize, cols: usize, seed: u64, scale: f64) -> Matrix<f64> {
    softmax(&uniform(rows, cols, scale, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn softmax_rows_sum_to_one(seed in 0u64..1000, scale in 0.1f64..200.0) {
        let p = probs(6, 5, seed, scale);
        for r in p.row_iter() {
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(r.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn bald_lies_between_zero_and_predictive_entropy(seed in 0u64..1000, passes in 1usize..8, scale in 0.1f64..30.0) {
        let ps: Vec<Matrix<f64>> = (0..passes).map(|t| probs(5, 4, seed * 31 + t as u64, scale)).collect();
        let bald = bald_from_passes(&ps).unwrap();
        let h = predictive_entropy(&ps).unwrap();
        for (b, h) in bald.iter().zip(&h) {
            prop_assert!(*b >= -1e-12 && *b <= h + 1e-12, "bald {b} entropy {h}");
        }
    }

    #[test]
    fn cover_radius_never_grows(seed in 0u64..1000, n in 2usize..30, m in 0usize..5) {
        let p = uniform(n, 3, 1.0, seed);
        let l = uniform(m, 3, 1.0, seed + 1);
        let picks = k_center_greedy(&p, &l, n).unwrap();
        let mut last = f64::INFINITY;
        for k in 1..=picks.len() {
            let r = cover_radius(&p, &l, &picks[..k]);
            prop_assert!(r <= last + 1e-12);
            last = r;
        }
        prop_assert!(last.abs() < 1e-12);
    }

    #[test]
    fn top_k_is_invariant_to_positive_scaling(seed in 0u64..1000, a in 0.01f64..100.0, b in -5.0f64..5.0) {
        let scores = uniform(1, 20, 1.0, seed).into_vec();
        let make = |f: &dyn Fn(f64) -> f64| -> Vec<ScoredCandidate<f64>> {
            scores.iter().enumerate().map(|(i, &s)| ScoredCandidate {
                pool_index: i, score: f(s), pseudo_label: 0, eval_only_is_wrong: None,
            }).collect()
        };
        let base = top_k(&make(&|s| s), 7).unwrap();
        prop_assert_eq!(base.clone(), top_k(&make(&|s| a * s + b), 7).unwrap());
        prop_assert_ne!(base, top_k(&make(&|s| -s), 7).unwrap());
    }

    #[test]
    fn first_order_score_is_minus_summed_kernel(seed in 0u64..1000) {
        let snap = snapshot(&[4, 6, 3], seed);
        let hx = uniform(5, 4, 1.0, seed + 7);
        let hy = common::labels(5, 3, seed + 8);
        let cache = HoldoutCache::build(&snap, &hx, &hy).unwrap();
        let p = pool(4, 4, seed + 9);
        let app = score_ours_app(&snap, &p, &cache).unwrap();
        for (i, c) in app.iter().enumerate() {
            let x = p.features().row(i);
            let sum: f64 = (0..hy.len())
                .map(|j| kernel_value(&snap, x, c.pseudo_label, hx.row(j), hy[j]).unwrap())
                .sum();
            prop_assert!((c.score + sum).abs() < 1e-9);
        }
    }

    #[test]
    fn badge_embedding_shape_and_norm(seed in 0u64..1000) {
        let snap = snapshot(&[3, 5, 4], seed);
        let p = pool(6, 3, seed + 1);
        let e = badge_embedding(&snap, &p).unwrap();
        prop_assert_eq!(e.shape(), (6, 4 * 5));
        let feats = snap.penultimate_features(p.features()).unwrap();
        let pr = snap.predict_proba(p.features()).unwrap();
        for i in 0..6 {
            let yhat = pr.row(i).iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            let r2: f64 = pr.row(i).iter().enumerate()
                .map(|(k, &q)| (q - if k == yhat { 1.0 } else { 0.0 }).powi(2)).sum();
            let f2: f64 = feats.row(i).iter().map(|v| v * v).sum();
            let e2: f64 = e.row(i).iter().map(|v| v * v).sum();
            prop_assert!((e2 - r2 * f2).abs() < 1e-10 * (1.0 + e2));
        }
    }
}

#[test]
fn ours_scores_are_rank_stable_under_small_eta() {
    let snap = snapshot(&[5, 8, 3], 4);
    let hx = uniform(12, 5, 1.0, 5);
    let hy = common::labels(12, 3, 6);
    let cache = HoldoutCache::build(&snap, &hx, &hy).unwrap();
    let p = pool(60, 5, 7);
    let app: Vec<f64> = score_ours_app(&snap, &p, &cache).unwrap().iter().map(|c| c.score).collect();
    let mut last = f64::INFINITY;
    for eta in [1e-3, 1e-4, 1e-5] {
        let cfg = OursConfig { eta, inner_iterations: 1 };
        let ours = score_ours(&snap, &p, &cache, &cfg).unwrap();
        let resid = ours
            .iter()
            .zip(&app)
            .map(|(o, a)| (o.score / eta - a).abs())
            .fold(0.0, f64::max);
        assert!(resid < last, "eta {eta}: {resid} >= {last}");
        last = resid;
        if eta == 1e-5 {
            let s: Vec<f64> = ours.iter().map(|c| c.score).collect();
            assert!(common::spearman(&s, &app) > 0.999);
        }
    }
}
