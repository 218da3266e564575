use denshift::losses::{batch_loss, delta_margins, DahConfig, HeadObjective, LossKind};
use denshift::metrics::{auc_roc, calibration_bins, temperature_apply, temperature_fit, ScoredSet};
use denshift::nn::{backward, forward, init_mlp, HeadMask, MlpShape, ParamGroup};
use denshift::sampling::class_probs;
use denshift::training::positive_scores;
use ndarray::Array2;
use proptest::prelude::*;

fn logit_matrix(rows: usize, k: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-6.0f64..6.0, rows * k).prop_map(move |v| Array2::from_shape_vec((rows, k), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn class_probs_form_a_distribution(counts in prop::collection::vec(1usize..5000, 2..8), q in 0.0f64..=1.0) {
        let p = class_probs(&counts, q).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..counts.len() {
            for j in 0..counts.len() {
                if counts[i] > counts[j] {
                    prop_assert!(p[i] >= p[j]);
                }
            }
        }
    }

    #[test]
    fn smaller_classes_get_larger_margins(counts in prop::collection::vec(1usize..10_000, 2..6)) {
        let dah = DahConfig::from_counts(&counts, None).unwrap();
        let smallest = *counts.iter().min().unwrap();
        for (i, &n) in counts.iter().enumerate() {
            prop_assert!(dah.deltas[i] > 0.0 && dah.deltas[i] <= 0.5 + 1e-15);
            if n == smallest {
                prop_assert!((dah.deltas[i] - 0.5).abs() < 1e-15);
            }
        }
        prop_assert_eq!(delta_margins(&counts, dah.k).unwrap(), dah.deltas);
    }

    #[test]
    fn head_masks_isolate_heads(seed in 0u64..1000, x in logit_matrix(5, 4)) {
        let params = init_mlp(MlpShape::new(4, 2), seed).unwrap();
        let trace = forward(&params, &x).unwrap();
        let objective = HeadObjective { base: LossKind::CrossEntropy, cost_weight: None };
        let labels = [0, 1, 1, 0, 1];
        let d_reg = batch_loss(&objective, &trace.logits_regular, &labels, None).unwrap().d_logits;
        let d_bal = batch_loss(&objective, &trace.logits_balanced, &labels, None).unwrap().d_logits;
        let reg = backward(&params, &trace, &d_reg, &d_bal, HeadMask::REGULAR).unwrap();
        let bal = backward(&params, &trace, &d_reg, &d_bal, HeadMask::BALANCED).unwrap();
        prop_assert!(reg.group_is_zero(ParamGroup::HeadBalanced));
        prop_assert!(bal.group_is_zero(ParamGroup::HeadRegular));

        // both heads together equal the sum of the masked passes
        let both = backward(&params, &trace, &d_reg, &d_bal, HeadMask::BOTH).unwrap();
        let mut sum = reg.clone();
        sum.accumulate(&bal);
        for (a, b) in both.0.to_flat().iter().zip(sum.0.to_flat()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    // below T = 0.5 the scaled gaps exceed ~25 and softmax rounds to exactly 0 or 1
    #[test]
    fn temperature_keeps_ranking(logits in logit_matrix(40, 2), t in 0.5f64..20.0) {
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 3 == 0)).collect();
        let auc = |temp: f64| {
            let p = positive_scores(&temperature_apply(&logits, temp).unwrap()).unwrap();
            auc_roc(&ScoredSet::new(p, labels.clone()).unwrap()).unwrap()
        };
        prop_assert!((auc(1.0) - auc(t)).abs() < 1e-12);
    }

    #[test]
    fn fitted_temperature_never_raises_nll(logits in logit_matrix(30, 3)) {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let t = temperature_fit(&logits, &labels).unwrap();
        let nll = |temp| denshift::metrics::nll_at_temperature(&logits, &labels, temp).unwrap();
        prop_assert!(nll(t) <= nll(1.0));
    }

    #[test]
    fn calibration_bins_cover_every_prediction(
        scores in prop::collection::vec(0.0f64..=1.0, 1..200),
        n_bins in 1usize..20,
    ) {
        let labels: Vec<u8> = scores.iter().map(|s| u8::from(*s > 0.5)).collect();
        let table = calibration_bins(&ScoredSet::new(scores.clone(), labels).unwrap(), n_bins).unwrap();
        prop_assert_eq!(table.rows.len(), n_bins);
        prop_assert_eq!(table.total(), scores.len());
        for row in &table.rows {
            if let Some(m) = row.mean_pred {
                prop_assert!(m >= row.bin_lo - 1e-12 && m <= row.bin_hi + 1e-12);
            }
        }
    }
}
