use proptest::prelude::*;

use drc_core::audit::{
    aggregate, calibrate_threshold, compute_auc, compute_metrics, roc_points, tpr_at_fpr,
    trapezoid_auc, Aggregated, AggregationStrategy, Confusion, Label, ScoreRecord,
};
use drc_core::compare::{membership_score, pixel_score, EncoderKind, PixelMetric};
use drc_core::degrade::{compose_degraded, invert_mask, saliency_map, top_p_mask, Mask};
use drc_core::diffusion::{ddim_step, forward_diffuse, x0_from_eps};
use drc_core::gridio::{decode_embedding, decode_grid, encode_embedding, encode_grid};
use drc_core::numerics::{linf_distance, pixel_l1, pixel_mse};
use drc_core::schedule::timestep_subsequence;
use drc_core::{Grid, NoiseSchedule, SeededRng};

fn grid(h: usize, w: usize, c: usize) -> impl Strategy<Value = Grid> {
    prop::collection::vec(-2.0f64..2.0, h * w * c).prop_map(move |d| Grid::new(h, w, c, d).unwrap())
}

fn shaped_grid() -> impl Strategy<Value = Grid> {
    (1usize..6, 1usize..6, prop::sample::select(vec![1usize, 3]))
        .prop_flat_map(|(h, w, c)| grid(h, w, c))
}

fn grid_pair() -> impl Strategy<Value = (Grid, Grid)> {
    (1usize..6, 1usize..6).prop_flat_map(|(h, w)| (grid(h, w, 1), grid(h, w, 1)))
}

/// Scores on a coarse lattice so ties are common, with both classes present.
fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
    prop::collection::vec((-8i32..8, any::<bool>()), 2..120).prop_map(|v| {
        let scores: Vec<f64> = v.iter().map(|(s, _)| *s as f64 / 4.0).collect();
        let mut labels: Vec<Label> = v.iter().map(|(_, m)| Label::from_member(*m)).collect();
        labels[0] = Label::Member;
        labels[1] = Label::Nonmember;
        (scores, labels)
    })
}

fn pairwise_auc(scores: &[f64], labels: &[Label]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, li) in labels.iter().enumerate() {
        for (j, lj) in labels.iter().enumerate() {
            if li.is_member() && !lj.is_member() {
                pairs += 1.0;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_format_roundtrips(g in shaped_grid()) {
        prop_assert_eq!(decode_grid(&encode_grid(&g)).unwrap(), g);
    }

    #[test]
    fn embedding_format_roundtrips(v in prop::collection::vec(-1e6f64..1e6, 1..50)) {
        prop_assert_eq!(decode_embedding(&encode_embedding(&v)).unwrap(), v);
    }

    #[test]
    fn distances_are_symmetric_and_vanish_on_the_diagonal((a, b) in grid_pair()) {
        for f in [linf_distance, pixel_l1, pixel_mse] {
            prop_assert_eq!(f(&a, &b).unwrap(), f(&b, &a).unwrap());
            prop_assert_eq!(f(&a, &a).unwrap(), 0.0);
            prop_assert_eq!(f(&a, &b).unwrap() == 0.0, a == b);
        }
    }

    #[test]
    fn alpha_bar_table_is_consistent(steps in 1usize..300, lo in 1e-5f64..0.01, span in 0.0f64..0.05) {
        let s = NoiseSchedule::linear(steps, lo, lo + span).unwrap();
        prop_assert_eq!(s.alpha_bar(0), 1.0);
        for t in 1..=steps {
            prop_assert_eq!(s.alpha_bar(t), s.alpha_bar(t - 1) * s.alpha(t));
            prop_assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            if t > 1 {
                prop_assert!(s.beta(t) >= s.beta(t - 1));
            }
        }
    }

    #[test]
    fn subsequence_shape(start in 1usize..500, k in 1usize..50) {
        prop_assume!(k <= start);
        let seq = timestep_subsequence(start, k).unwrap();
        prop_assert_eq!(seq[0], start);
        prop_assert_eq!(*seq.last().unwrap(), 0);
        prop_assert!(seq.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn ddim_inverts_forward(x0 in grid(3, 3, 1), eps in grid(3, 3, 1), t in 1usize..=100) {
        let s = NoiseSchedule::rescaled_linear(100).unwrap();
        let xt = forward_diffuse(&x0, t, &eps, &s).unwrap();
        prop_assert!(linf_distance(&x0_from_eps(&xt, t, &eps, &s).unwrap(), &x0).unwrap() < 1e-9);
    }

    #[test]
    fn exact_eps_chain_reproduces_x0(x0 in grid(2, 2, 1), eps in grid(2, 2, 1), k in 1usize..7) {
        let s = NoiseSchedule::rescaled_linear(60).unwrap();
        let seq = timestep_subsequence(60, k).unwrap();
        let mut x = forward_diffuse(&x0, 60, &eps, &s).unwrap();
        let mut rng = SeededRng::new(0, 0);
        for w in seq.windows(2) {
            x = ddim_step(&x, w[0], w[1], &eps, 0.0, &s, &mut rng).unwrap().x_prev;
        }
        prop_assert!(linf_distance(&x, &x0).unwrap() < 1e-9);
    }

    #[test]
    fn top_p_masks_are_nested(sal in grid(5, 4, 1), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let ml = top_p_mask(&sal, lo).unwrap();
        let mh = top_p_mask(&sal, hi).unwrap();
        prop_assert!(ml.is_subset_of(&mh));
        prop_assert_eq!(ml.count(), (lo * 20.0).round_ties_even() as usize);
    }

    #[test]
    fn compose_keeps_unmasked_pixels(x in grid(4, 4, 3), lq in grid(4, 4, 3), bits in prop::collection::vec(any::<bool>(), 16)) {
        let m = Mask::new(4, 4, bits).unwrap();
        let out = compose_degraded(&x, &lq, &m).unwrap();
        for p in 0..16 {
            let src = if m.is_set(p) { &lq } else { &x };
            prop_assert_eq!(&out.data()[p * 3..p * 3 + 3], &src.data()[p * 3..p * 3 + 3]);
        }
        prop_assert_eq!(invert_mask(&invert_mask(&m)), m.clone());
        prop_assert_eq!(invert_mask(&m).count(), 16 - m.count());
    }

    #[test]
    fn saliency_ignores_global_shifts(x in grid(5, 5, 1), c in -3.0f64..3.0) {
        let a = saliency_map(&x);
        let b = saliency_map(&x.map(|v| v + c).unwrap());
        prop_assert!(linf_distance(&a, &b).unwrap() < 1e-9);
        prop_assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn cosine_is_bounded_and_scale_invariant((a, b) in grid_pair(), k in 0.1f64..10.0) {
        let s = membership_score(&a, &b, &EncoderKind::Flatten).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        let scaled = membership_score(&a.map(|v| v * k).unwrap(), &b.map(|v| v * k).unwrap(), &EncoderKind::Flatten).unwrap();
        prop_assert!((s - scaled).abs() < 1e-12);
    }

    #[test]
    fn perturbing_away_never_raises_scores(x in grid(3, 3, 1), d in grid(3, 3, 1), t in 1.0f64..3.0) {
        prop_assume!(d.max_abs() > 1e-3);
        let near = x.lincomb(1.0, &d, 1.0).unwrap();
        let far = x.lincomb(1.0, &d, t).unwrap();
        for m in [PixelMetric::L1, PixelMetric::Mse] {
            prop_assert!(pixel_score(&x, &x, m).unwrap() > pixel_score(&x, &near, m).unwrap());
            prop_assert!(pixel_score(&x, &near, m).unwrap() >= pixel_score(&x, &far, m).unwrap());
        }
        let flat = |y: &Grid| membership_score(&x, y, &EncoderKind::Flatten).unwrap();
        prop_assert!(flat(&x) >= flat(&near) - 1e-12);
    }

    #[test]
    fn auc_matches_pairwise_and_trapezoid((scores, labels) in scored_labels()) {
        let oracle = pairwise_auc(&scores, &labels);
        prop_assert!((compute_auc(&scores, &labels).unwrap() - oracle).abs() < 1e-12);
        let roc = roc_points(&scores, &labels).unwrap();
        prop_assert!((trapezoid_auc(&roc) - oracle).abs() < 1e-12);
        prop_assert_eq!((roc[0].fpr, roc[0].tpr), (0.0, 0.0));
        prop_assert_eq!((roc.last().unwrap().fpr, roc.last().unwrap().tpr), (1.0, 1.0));
        prop_assert!(roc.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
    }

    #[test]
    fn monotone_transforms_preserve_rankings((scores, labels) in scored_labels(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let moved: Vec<f64> = scores.iter().map(|s| (a * s + b).exp()).collect();
        prop_assert_eq!(compute_auc(&scores, &labels).unwrap(), compute_auc(&moved, &labels).unwrap());
        for cap in [0.01, 0.1, 0.5] {
            prop_assert_eq!(tpr_at_fpr(&scores, &labels, cap).unwrap(), tpr_at_fpr(&moved, &labels, cap).unwrap());
        }
        let acc = |s: &[f64]| compute_metrics(s, &labels, calibrate_threshold(s, &labels).unwrap()).acc;
        prop_assert_eq!(acc(&scores), acc(&moved));
    }

    #[test]
    fn calibrated_threshold_is_optimal((scores, labels) in scored_labels()) {
        let thr = calibrate_threshold(&scores, &labels).unwrap();
        let best = compute_metrics(&scores, &labels, thr).acc;
        for &cand in scores.iter().chain(&[f64::INFINITY, f64::NEG_INFINITY]) {
            prop_assert!(compute_metrics(&scores, &labels, cand).acc <= best);
        }
    }

    #[test]
    fn metrics_match_confusion_counts((scores, labels) in scored_labels(), thr in -2.0f64..2.0) {
        let m = compute_metrics(&scores, &labels, thr);
        let predicted: Vec<bool> = scores.iter().map(|s| *s >= thr).collect();
        let c = Confusion::from_predictions(&predicted, &labels);
        prop_assert_eq!(m.confusion, c);
        prop_assert_eq!(m.acc, (c.tp + c.tn) as f64 / scores.len() as f64);
    }

    #[test]
    fn vote_sets_are_nested(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 5), 1..40), thr in prop::collection::vec(-0.5f64..0.5, 5)) {
        let tasks: Vec<String> = (0..5).map(|k| format!("t{k}")).collect();
        let records: Vec<ScoreRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| ScoreRecord {
                sample_id: format!("s{i}"),
                label: Label::Member,
                scores: tasks.iter().cloned().zip(r.iter().copied()).collect(),
            })
            .collect();
        let thresholds = tasks.iter().cloned().zip(thr).collect();
        let mut prev: Option<Vec<bool>> = None;
        for n in 1..=5 {
            let Aggregated::Decisions(d) = aggregate(&records, &tasks, AggregationStrategy::Vote { agree_n: n }, &thresholds).unwrap() else {
                panic!("votes produce decisions");
            };
            if let Some(p) = &prev {
                prop_assert!(d.iter().zip(p).all(|(now, before)| !now || *before));
            }
            prev = Some(d);
        }
    }
}
