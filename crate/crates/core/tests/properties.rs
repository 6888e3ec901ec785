mod common;

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use proptest::prelude::*;

use insider_core::baseline::{kmeans, label_baseline, BaselineConfig, Label, WindowFeatures};
use insider_core::detect::{flag, rank, score_errors, EpsilonMode, Thresholds, Window};
use insider_core::enrich::{fisher_exact, hypergeometric_pmf, overexpression_test, ContingencyTable};
use insider_core::ingest::normalize_row;
use insider_core::pca::PcaModel;
use insider_core::select::jaccard;

fn matrix(max_n: usize, max_t: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (2..=max_n, 1..=max_t).prop_flat_map(|(n, t)| {
        prop::collection::vec(-1.0f64..1.0, n * t).prop_map(move |v| DMatrix::from_row_slice(n, t, &v))
    })
}

fn thresholds(eps: f64, n_theta: f64, net_buy: f64) -> Thresholds {
    Thresholds {
        epsilon_theta: eps,
        n_theta,
        d_theta: 3,
        net_buy_threshold: net_buy,
        epsilon_mode: EpsilonMode::BimodalMinimum,
        nt_on_tstar_only: false,
    }
}

/// Errors, positions and activity counts for `n` investors over 12 days.
fn detection_input() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, Vec<usize>)> {
    (3usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..1.0, n * 12),
            prop::collection::vec(-1.0f64..1.0, n * 12),
            prop::collection::vec(1usize..12, n),
        )
            .prop_map(move |(e, x, d)| (DMatrix::from_row_slice(n, 12, &e), DMatrix::from_row_slice(n, 12, &x), d))
    })
}

fn window() -> Window {
    Window {
        delta: 8..=11,
        start: 0,
        pse: 11,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn full_rank_pca_reproduces_input(x in matrix(12, 8)) {
        let t = x.ncols();
        let recon = PcaModel::fit(&x, t).unwrap().reconstruct(&x).unwrap();
        prop_assert!(recon.frobenius() < 1e-8);
    }

    #[test]
    fn loadings_are_orthonormal_and_errors_shrink_with_k(x in matrix(15, 7)) {
        let t = x.ncols();
        let full = PcaModel::fit(&x, t).unwrap();
        let p = full.loadings();
        prop_assert!((p.tr_mul(&p) - DMatrix::identity(t, t)).amax() < 1e-9);
        let errs: Vec<f64> = (1..=t).map(|k| full.with_k(k).unwrap().reconstruct(&x).unwrap().frobenius()).collect();
        prop_assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn normalized_rows_lie_in_unit_interval(row in prop::collection::vec(-1e6f64..1e6, 1..40)) {
        if let Some((x, scale)) = normalize_row(&row) {
            prop_assert!(scale > 0.0);
            prop_assert!(x.iter().all(|v| v.abs() <= 1.0));
            prop_assert!(x.iter().any(|v| v.abs() == 1.0));
        }
    }

    #[test]
    fn flagging_is_monotone((errors, x, d) in detection_input(), eps in 0.0f64..1.0, n_theta in 0.0f64..10.0, nb in -1.0f64..1.0, bump in 0.0f64..0.5) {
        let ids: Vec<String> = (0..errors.nrows()).map(|i| format!("i{i:03}")).collect();
        let scores = score_errors(&errors, &d).unwrap();
        let set = |th: &Thresholds| -> BTreeSet<usize> {
            flag(&scores, &errors, &x, &ids, &window(), th).unwrap().flagged.into_iter().collect()
        };
        let base = set(&thresholds(eps, n_theta, nb));
        prop_assert!(set(&thresholds(eps + bump, n_theta, nb)).is_subset(&base));
        prop_assert!(base.is_subset(&set(&thresholds(eps, n_theta + 10.0 * bump, nb))));
        prop_assert!(set(&thresholds(eps, n_theta, nb + bump)).is_subset(&base));
    }

    #[test]
    fn flagged_investors_exceed_threshold_inside_window((errors, x, d) in detection_input(), eps in 0.0f64..1.0) {
        let ids: Vec<String> = (0..errors.nrows()).map(|i| format!("i{i:03}")).collect();
        let scores = score_errors(&errors, &d).unwrap();
        let report = flag(&scores, &errors, &x, &ids, &window(), &thresholds(eps, 5.0, 0.0)).unwrap();
        for &i in &report.flagged {
            prop_assert!(scores.s_star[i] >= eps);
            prop_assert!((8..=11).any(|t| errors[(i, t)] >= eps));
        }
    }

    #[test]
    fn ranking_ignores_row_order_and_labels((errors, x, d) in detection_input(), seed in any::<u64>()) {
        let n = errors.nrows();
        let ids: Vec<String> = (0..n).map(|i| format!("i{i:03}")).collect();
        let th = thresholds(0.3, 4.0, -0.5);
        let scores = score_errors(&errors, &d).unwrap();
        let mut report = flag(&scores, &errors, &x, &ids, &window(), &th).unwrap();
        let ranked = rank(&mut report);

        let mut perm: Vec<usize> = (0..n).collect();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let pe = DMatrix::from_fn(n, 12, |r, c| errors[(perm[r], c)]);
        let px = DMatrix::from_fn(n, 12, |r, c| x[(perm[r], c)]);
        let pd: Vec<usize> = perm.iter().map(|&i| d[i]).collect();
        let pids: Vec<String> = perm.iter().map(|&i| ids[i].clone()).collect();
        let pscores = score_errors(&pe, &pd).unwrap();
        let mut preport = flag(&pscores, &pe, &px, &pids, &window(), &th).unwrap();
        prop_assert_eq!(&ranked, &rank(&mut preport));

        // renaming investors keeps the flagged positions
        let renamed: Vec<String> = (0..n).map(|i| format!("z{}", n - i)).collect();
        let r2 = flag(&scores, &errors, &x, &renamed, &window(), &th).unwrap();
        prop_assert_eq!(r2.flagged, report.flagged.iter().copied().collect::<BTreeSet<_>>().into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn low_activity_investors_are_not_crowd_penalised((errors, x, d) in detection_input()) {
        let ids: Vec<String> = (0..errors.nrows()).map(|i| format!("i{i:03}")).collect();
        let th = thresholds(0.0, 1e9, -2.0);
        let scores = score_errors(&errors, &d).unwrap();
        let mut report = flag(&scores, &errors, &x, &ids, &window(), &th).unwrap();
        rank(&mut report);
        // with every investor flagged and equal s*, those with d <= 3 all sit at n-bar = 0
        for r in report.records.iter().filter(|r| r.d <= 3) {
            prop_assert!(r.rank_distance.is_some());
        }
    }

    #[test]
    fn fisher_is_symmetric_under_swaps(a in 0u64..15, b in 0u64..15, c in 0u64..15, d in 0u64..15) {
        prop_assume!(a + b + c + d > 0);
        let p = fisher_exact(&ContingencyTable::new(a, b, c, d)).unwrap();
        let swapped = fisher_exact(&ContingencyTable::new(d, c, b, a)).unwrap();
        prop_assert!((p - swapped).abs() < 1e-12);
        prop_assert!(p > 0.0 && p <= 1.0);
    }

    #[test]
    fn hypergeometric_tails(pop in 1u64..200, kf in 0.0f64..1.0, gf in 0.0f64..1.0, of in 0.0f64..1.0) {
        let k = (pop as f64 * kf) as u64;
        let g = (pop as f64 * gf) as u64;
        let (lo, pmf) = hypergeometric_pmf(pop, k, g).unwrap();
        prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let obs = lo + ((pmf.len() - 1) as f64 * of) as u64;
        let t = overexpression_test(g, k, pop, obs).unwrap();
        prop_assert!(t.p_over + t.p_under >= 1.0 - 1e-12);
        prop_assert!(t.p_over > 0.0 && t.p_over <= 1.0 && t.p_under > 0.0 && t.p_under <= 1.0);
    }

    #[test]
    fn jaccard_is_bounded_and_symmetric(a in prop::collection::btree_set(0u8..30, 0..20), b in prop::collection::btree_set(0u8..30, 0..20)) {
        let j = jaccard(&a, &b);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(j, jaccard(&b, &a));
    }

    #[test]
    fn kmeans_is_deterministic_and_no_worse_than_one_cluster(points in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4..40), seed in any::<u64>()) {
        let pts: Vec<[f64; 2]> = points.iter().map(|(a, b)| [*a, *b]).collect();
        let r = kmeans(&pts, 3, seed, 2).unwrap();
        prop_assert_eq!(&r, &kmeans(&pts, 3, seed, 2).unwrap());
        let single = kmeans(&pts, 1, seed, 1).unwrap();
        prop_assert!(r.sse <= single.sse + 1e-12);
    }

    #[test]
    fn baseline_labels_follow_activity(rows in prop::collection::vec((any::<bool>(), -1.0f64..1.0, -1.0f64..1.0, any::<bool>(), -1.0f64..1.0, -1.0f64..1.0), 6..30)) {
        let feat = |i: usize, w: usize, active: bool, s: f64, e: f64| WindowFeatures {
            investor_id: format!("i{i:02}"),
            window_index: w,
            signed_turnover: if active { s } else { 0.0 },
            max_exposure: if active { e } else { 0.0 },
            active,
        };
        let reference: Vec<_> = rows.iter().enumerate().map(|(i, r)| feat(i, 0, r.0, r.1, r.2)).collect();
        let delta: Vec<_> = rows.iter().enumerate().map(|(i, r)| feat(i, 1, r.3, r.4, r.5)).collect();
        let labels = label_baseline(&[reference, delta], &BaselineConfig::default()).unwrap();
        for (l, r) in labels.iter().zip(&rows) {
            match l.label {
                Label::Hard => prop_assert!(!r.0 && r.3),
                Label::Soft => prop_assert!(r.0 && r.3),
                Label::Normal => {}
            }
        }
    }
}
