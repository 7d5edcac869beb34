use approx::assert_abs_diff_eq;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::aggregate::{AggregatorConfig, AggregatorModel};
use crate::snippet::gather_rows;

/// Independent PR-curve integration: recount retrieved items from scratch
/// at every distinct threshold (O(n²)), no shared code with the
/// implementation under test.
fn brute_force_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let npos = labels.iter().filter(|&&l| l).count() as f64;
    assert!(npos > 0.0);
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &t in &thresholds {
        let tp = scores.iter().zip(labels).filter(|&(s, l)| *s >= t && *l).count() as f64;
        let retrieved = scores.iter().filter(|&&s| s >= t).count() as f64;
        let recall = tp / npos;
        ap += (recall - prev_recall) * (tp / retrieved);
        prev_recall = recall;
    }
    ap
}

fn pred(id: &str, scores: [f64; GENRE_COUNT], genres: &[usize]) -> TrailerPrediction {
    TrailerPrediction::new(
        id,
        Array1::from(scores.to_vec()),
        GenreSet::from_indices(genres).unwrap(),
    )
}

#[test]
fn perfect_ranking_scores_one() {
    let ap = average_precision(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap();
    assert_eq!(ap, 1.0);
}

#[test]
fn worked_three_item_case_is_five_sixths() {
    let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
    assert_abs_diff_eq!(ap, 5.0 / 6.0, epsilon = 1e-12);
}

#[test]
fn fully_tied_scores_reduce_to_prevalence() {
    for (n, k) in [(4usize, 1usize), (5, 3), (7, 7), (10, 2)] {
        let scores = vec![0.5; n];
        let labels: Vec<bool> = (0..n).map(|i| i < k).collect();
        let ap = average_precision(&scores, &labels).unwrap();
        assert_eq!(ap, k as f64 / n as f64, "n={n} k={k}");
    }
}

#[test]
fn degenerate_rankings_are_rejected() {
    let no_pos = average_precision(&[0.5, 0.4], &[false, false]).unwrap_err();
    assert_eq!(no_pos.exit_code(), 1);
    assert!(average_precision(&[], &[]).is_err());
    assert!(average_precision(&[0.5], &[true, false]).is_err());
    let nan = average_precision(&[f64::NAN, 0.2], &[true, false]).unwrap_err();
    assert_eq!(nan.exit_code(), 3);
}

#[test]
fn ap_is_invariant_under_monotone_score_transforms() {
    let scores = [0.91, 0.33, 0.52, 0.52, 0.07, 0.78];
    let labels = [true, false, true, false, true, false];
    let base = average_precision(&scores, &labels).unwrap();
    for transform in [
        (|s: f64| 2.0 * s + 1.0) as fn(f64) -> f64,
        |s| s.exp(),
        |s| s.powi(3),
    ] {
        let mapped: Vec<f64> = scores.iter().map(|&s| transform(s)).collect();
        assert_eq!(average_precision(&mapped, &labels).unwrap(), base);
    }
}

#[test]
fn matches_brute_force_on_exhaustive_six_item_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let tie_pool = [0.25, 0.5, 0.75];
    for mask in 1u32..64 {
        let labels: Vec<bool> = (0..6).map(|i| mask >> i & 1 == 1).collect();
        for draw in 0..20 {
            let scores: Vec<f64> = if draw % 2 == 0 {
                (0..6).map(|_| rng.gen_range(0.0..1.0)).collect()
            } else {
                (0..6).map(|_| tie_pool[rng.gen_range(0..3)]).collect()
            };
            let got = average_precision(&scores, &labels).unwrap();
            let want = brute_force_ap(&scores, &labels);
            assert!(
                (got - want).abs() <= 1e-12,
                "mask {mask:06b} scores {scores:?}: got {got}, brute force {want}"
            );
        }
        let flat = vec![0.5; 6];
        let got = average_precision(&flat, &labels).unwrap();
        assert!((got - brute_force_ap(&flat, &labels)).abs() <= 1e-12);
    }
}

proptest! {
    #[test]
    fn ap_is_one_exactly_when_positives_outrank_negatives(
        items in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 1..12)
            .prop_filter("needs a positive", |v| v.iter().any(|&(_, l)| l))
    ) {
        let scores: Vec<f64> = items.iter().map(|&(s, _)| s).collect();
        let labels: Vec<bool> = items.iter().map(|&(_, l)| l).collect();
        let ap = average_precision(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&ap));
        let min_pos = scores.iter().zip(&labels).filter(|&(_, &l)| l).map(|(s, _)| *s)
            .fold(f64::INFINITY, f64::min);
        let max_neg = scores.iter().zip(&labels).filter(|&(_, &l)| !l).map(|(s, _)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(ap == 1.0, min_pos > max_neg);
    }
}

#[test]
fn pr_curve_reports_one_point_per_distinct_score() {
    let points = pr_curve(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
    assert_eq!(points.len(), 3);
    assert_eq!(points[0], PrPoint { threshold: 0.9, recall: 0.5, precision: 1.0 });
    assert_eq!(points[1], PrPoint { threshold: 0.8, recall: 0.5, precision: 0.5 });
    assert_abs_diff_eq!(points[2].precision, 2.0 / 3.0, epsilon = 1e-15);
    assert_eq!(points[2].recall, 1.0);

    let csv = pr_curve_to_csv(&points);
    assert!(csv.starts_with("threshold,recall,precision\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn micro_ap_is_one_for_a_perfect_prediction() {
    let mut scores = [0.0; GENRE_COUNT];
    scores[2] = 1.0;
    scores[4] = 1.0;
    let preds = vec![pred("t1", scores, &[2, 4])];
    assert_eq!(micro_ap(&preds).unwrap(), 1.0);
}

#[test]
fn confidently_wrong_genre_drags_micro_below_macro() {
    // Genre 0 is ranked perfectly; genre 1 is confidently inverted. The
    // micro ranking interleaves them, so the wrong genre's high scores
    // push genre 0's hits down.
    let z = [0.0; GENRE_COUNT];
    let mk = |s0: f64, s1: f64, genres: &[usize], id: &str| {
        let mut s = z;
        s[0] = s0;
        s[1] = s1;
        pred(id, s, genres)
    };
    let preds = vec![
        mk(0.9, 0.95, &[0], "t1"),
        mk(0.8, 0.85, &[0], "t2"),
        mk(0.2, 0.15, &[1], "t3"),
        mk(0.1, 0.05, &[1], "t4"),
    ];
    let micro = micro_ap(&preds).unwrap();
    assert_abs_diff_eq!(micro, 0.5, epsilon = 1e-12);
    let breakdown = per_genre_ap(&preds).unwrap();
    assert_eq!(breakdown.ap[0], Some(1.0));
    assert_abs_diff_eq!(breakdown.ap[1].unwrap(), 5.0 / 12.0, epsilon = 1e-12);
    assert_abs_diff_eq!(macro_ap(&preds).unwrap(), 17.0 / 24.0, epsilon = 1e-12);
    assert!(micro < breakdown.ap[0].unwrap());
    assert_eq!(breakdown.excluded().len(), GENRE_COUNT - 2);
}

#[test]
fn macro_ap_averages_only_genres_with_positives() {
    let mut s1 = [0.0; GENRE_COUNT];
    s1[0] = 0.9;
    s1[1] = 0.2;
    let mut s2 = [0.0; GENRE_COUNT];
    s2[0] = 0.8;
    s2[1] = 0.8;
    // Genre 0: labels (1,1) → AP 1. Genre 1: positive scored below the
    // negative → AP 1/2. All other genres have no positives.
    let preds = vec![pred("a", s1, &[0, 1]), pred("b", s2, &[0])];
    assert_abs_diff_eq!(macro_ap(&preds).unwrap(), 0.75, epsilon = 1e-12);
}

#[test]
fn weighted_ap_scales_by_positive_counts() {
    // Genre 0: three positives ranked perfectly (AP 1). Genre 1: one
    // positive ranked last of four (AP 1/4). wAP = (3·1 + 1·¼)/4.
    let mk = |s0: f64, s1: f64, genres: &[usize], id: &str| {
        let mut s = [0.0; GENRE_COUNT];
        s[0] = s0;
        s[1] = s1;
        pred(id, s, genres)
    };
    let preds = vec![
        mk(0.9, 0.9, &[0], "a"),
        mk(0.8, 0.8, &[0], "b"),
        mk(0.7, 0.7, &[0], "c"),
        mk(0.1, 0.1, &[1], "d"),
    ];
    assert_abs_diff_eq!(weighted_ap(&preds).unwrap(), 0.8125, epsilon = 1e-12);
    assert_abs_diff_eq!(macro_ap(&preds).unwrap(), 0.625, epsilon = 1e-12);
}

#[test]
fn equal_genre_frequencies_make_macro_and_weighted_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let preds: Vec<TrailerPrediction> = (0..8)
        .map(|i| {
            let mut s = [0.0; GENRE_COUNT];
            for v in s.iter_mut() {
                *v = rng.gen_range(0.0..1.0);
            }
            // Genres 0 and 1 each get exactly four positives.
            pred(&format!("t{i}"), s, &[i % 2])
        })
        .collect();
    let m = macro_ap(&preds).unwrap();
    let w = weighted_ap(&preds).unwrap();
    assert_abs_diff_eq!(m, w, epsilon = 1e-15);
}

#[test]
fn weighted_ap_matches_a_brute_force_weighted_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let preds: Vec<TrailerPrediction> = (0..12)
        .map(|i| {
            let mut s = [0.0; GENRE_COUNT];
            for v in s.iter_mut() {
                *v = rng.gen_range(0.0..1.0);
            }
            let n_genres = rng.gen_range(1..4);
            let mut genres: Vec<usize> = Vec::new();
            while genres.len() < n_genres {
                let g = rng.gen_range(0..GENRE_COUNT);
                if !genres.contains(&g) {
                    genres.push(g);
                }
            }
            pred(&format!("t{i}"), s, &genres)
        })
        .collect();

    let mut total = 0usize;
    let mut acc = 0.0;
    for g in 0..GENRE_COUNT {
        let scores: Vec<f64> = preds.iter().map(|p| p.probs[g]).collect();
        let labels: Vec<bool> = preds.iter().map(|p| p.truth.contains(g)).collect();
        let npos = labels.iter().filter(|&&l| l).count();
        if npos > 0 {
            acc += npos as f64 * brute_force_ap(&scores, &labels);
            total += npos;
        }
    }
    let want = acc / total as f64;
    assert_abs_diff_eq!(weighted_ap(&preds).unwrap(), want, epsilon = 1e-12);
}

#[test]
fn sample_ap_is_one_when_true_genres_take_the_top_scores() {
    let mut s = [0.1; GENRE_COUNT];
    s[3] = 0.9;
    s[7] = 0.8;
    let preds = vec![pred("t", s, &[3, 7])];
    assert_eq!(sample_ap(&preds).unwrap(), 1.0);
}

#[test]
fn constant_scores_reduce_every_metric_to_its_prevalence_baseline() {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    let n = 40usize;
    let preds: Vec<TrailerPrediction> = (0..n)
        .map(|i| {
            let k = rng.gen_range(1..4);
            let mut genres = Vec::new();
            while genres.len() < k {
                let g = rng.gen_range(0..GENRE_COUNT);
                if !genres.contains(&g) {
                    genres.push(g);
                }
            }
            pred(&format!("t{i}"), [0.5; GENRE_COUNT], &genres)
        })
        .collect();

    let pos_per_genre: Vec<usize> = (0..GENRE_COUNT)
        .map(|g| preds.iter().filter(|p| p.truth.contains(g)).count())
        .collect();
    let total_pos: usize = pos_per_genre.iter().sum();

    let micro_want = total_pos as f64 / (n * GENRE_COUNT) as f64;
    assert_abs_diff_eq!(micro_ap(&preds).unwrap(), micro_want, epsilon = 1e-12);

    let included: Vec<f64> = pos_per_genre
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64 / n as f64)
        .collect();
    let macro_want = included.iter().sum::<f64>() / included.len() as f64;
    assert_abs_diff_eq!(macro_ap(&preds).unwrap(), macro_want, epsilon = 1e-12);

    let weighted_want = pos_per_genre
        .iter()
        .map(|&c| c as f64 / total_pos as f64 * (c as f64 / n as f64))
        .sum::<f64>();
    assert_abs_diff_eq!(weighted_ap(&preds).unwrap(), weighted_want, epsilon = 1e-12);

    let sample_want = preds
        .iter()
        .map(|p| p.truth.len() as f64 / GENRE_COUNT as f64)
        .sum::<f64>()
        / n as f64;
    assert_abs_diff_eq!(sample_ap(&preds).unwrap(), sample_want, epsilon = 1e-12);
}

#[test]
fn prediction_sets_are_validated() {
    let ok = pred("a", [0.5; GENRE_COUNT], &[1]);
    let dup = vec![ok.clone(), ok.clone()];
    assert!(micro_ap(&dup).is_err());
    let short = TrailerPrediction::new("b", Array1::zeros(4), GenreSet::from_indices(&[0]).unwrap());
    assert!(micro_ap(&[short]).is_err());
    assert!(micro_ap(&[]).is_err());
}

#[test]
fn fold_summary_arithmetic_matches_the_worked_example() {
    let s = MetricSummary::from_fold_values(&[0.70, 0.72, 0.74]);
    assert_abs_diff_eq!(s.mean, 72.0, epsilon = 1e-9);
    assert_abs_diff_eq!(s.std, (8.0f64 / 3.0).sqrt(), epsilon = 1e-9);
    assert_eq!(s.per_fold.len(), 3);

    let flat = MetricSummary::from_fold_values(&[0.5, 0.5, 0.5]);
    assert_eq!(flat.std, 0.0);
}

#[test]
fn identical_folds_evaluate_with_zero_spread() {
    let fold = vec![
        pred("a", { let mut s = [0.1; GENRE_COUNT]; s[0] = 0.9; s }, &[0]),
        pred("b", { let mut s = [0.2; GENRE_COUNT]; s[1] = 0.8; s }, &[1]),
        pred("c", { let mut s = [0.15; GENRE_COUNT]; s[2] = 0.7; s }, &[2]),
    ];
    let report = evaluate_folds(&[fold.clone(), fold.clone(), fold]).unwrap();
    for summary in [&report.micro_ap, &report.macro_ap, &report.weighted_ap, &report.sample_ap] {
        assert_eq!(summary.std, 0.0);
        assert_eq!(summary.per_fold.len(), 3);
    }
    assert_eq!(report.per_genre.len(), GENRE_COUNT);
    // Genres 3..10 never have positives → one warning per fold each, and
    // their table rows carry no AP.
    assert!(report.per_genre[5].mean_ap.is_none());
    assert!(!report.warnings.is_empty());
    let text = report.render_text();
    assert!(text.contains("micro AP"));
    assert!(text.contains("no positives"));
}

#[test]
fn report_round_trips_through_json() {
    let fold = vec![
        pred("a", { let mut s = [0.3; GENRE_COUNT]; s[0] = 0.9; s }, &[0]),
        pred("b", { let mut s = [0.4; GENRE_COUNT]; s[3] = 0.6; s }, &[3]),
    ];
    let report = evaluate_folds(&[fold]).unwrap();
    let json = serde_json::to_string(&report).unwrap();
    let back: EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(report, back);
}

fn toy_model(seed: u64) -> AggregatorModel {
    let config = AggregatorConfig::new(10)
        .with_model_width(8)
        .with_heads(2)
        .with_blocks(1)
        .with_dropout(0.0);
    AggregatorModel::new(config, seed).unwrap()
}

fn random_features(rows: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, 10), |_| rng.gen_range(-1.0..1.0))
}

#[test]
fn single_snippet_trailer_prediction_equals_the_snippet_prediction() {
    let model = toy_model(70);
    let features = random_features(6, 71);
    let direct = model.predict(&features).unwrap().1;
    let via_trailer = predict_trailer(&model, &features, 6).unwrap();
    assert_eq!(via_trailer, direct);
}

#[test]
fn trailer_prediction_averages_snippet_probabilities() {
    let model = toy_model(72);
    let features = random_features(12, 73);
    let snip1 = model.predict(&gather_rows(&features, &(0..6).collect::<Vec<_>>())).unwrap().1;
    let snip2 = model.predict(&gather_rows(&features, &(6..12).collect::<Vec<_>>())).unwrap().1;
    let want = (&snip1 + &snip2) / 2.0;
    let got = predict_trailer(&model, &features, 6).unwrap();
    let max_diff = (&got - &want).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max_diff <= 1e-15);
}

#[test]
fn fusing_a_stream_with_itself_changes_nothing() {
    let model = toy_model(74);
    let features = random_features(11, 75);
    let single = predict_trailer(&model, &features, 4).unwrap();
    let fused = predict_trailer_fused(&model, &features, &model, &features, 4).unwrap();
    let max_diff = (&fused - &single).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max_diff <= 1e-15, "max diff {max_diff}");
    assert!(predict_trailer_fused(&model, &features, &model, &random_features(9, 76), 4).is_err());
}

#[test]
fn trailer_prediction_rejects_mismatched_feature_width() {
    let model = toy_model(77);
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let wrong = Array2::from_shape_fn((6, 9), |_| rng.gen_range(-1.0..1.0));
    assert!(predict_trailer(&model, &wrong, 3).is_err());
}
