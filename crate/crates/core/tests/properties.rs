//! Property tests over randomized inputs: filter monotonicity and
//! idempotence, crop geometry bounds, slerp norms, and kernel invariants.

use proptest::prelude::*;

use lambda_prior::dataprep::{
    compute_crop, filter_record, AnnotationRecord, FilterOutcome, FilterRules, SubjectBox,
    SubjectSpan,
};
use lambda_prior::embedspace::{slerp, EmbedVec};
use lambda_prior::tensorcore::{FloatMode, Tape, Tensor};

fn arb_record() -> impl Strategy<Value = AnnotationRecord> {
    let subject = (
        0.0f64..0.9,
        0.0f64..0.9,
        0.01f64..0.1,
        0.01f64..0.1,
        -0.5f64..1.5,
        0.0f64..1.0,
        0.0f64..0.4,
    );
    (
        800u32..2000,
        800u32..2000,
        prop::collection::vec(subject, 1..6),
        1u32..9,
    )
        .prop_map(|(width, height, subs, identical)| {
            let n = subs.len();
            let mut boxes = Vec::new();
            let mut mask_area = Vec::new();
            let mut bg = Vec::new();
            let mut spans = Vec::new();
            for (i, (fx, fy, fw, fh, logit, mask_frac, bg_frac)) in subs.into_iter().enumerate() {
                let x0 = fx * f64::from(width) * 0.5;
                let y0 = fy * f64::from(height) * 0.5;
                let w = (fw * f64::from(width)).max(1.0);
                let h = (fh * f64::from(height)).max(1.0);
                let x1 = (x0 + w).min(f64::from(width));
                let y1 = (y0 + h).min(f64::from(height));
                let area = (x1 - x0) * (y1 - y0);
                boxes.push(SubjectBox { x0, y0, x1, y1, logit });
                mask_area.push(mask_frac * area);
                bg.push(bg_frac);
                spans.push(SubjectSpan {
                    label: format!("s{i}"),
                    token_start: 2 * i,
                    token_end: 2 * i + 1,
                });
            }
            AnnotationRecord {
                image_id: "prop".into(),
                width,
                height,
                caption_tokens: (0..2 * n).map(|i| format!("t{i}")).collect(),
                subject_spans: spans,
                boxes,
                mask_area_px: mask_area,
                mask_bg_fraction: bg,
                identical_object_count: identical,
            }
        })
}

fn loosened(rules: &FilterRules, which: usize) -> FilterRules {
    let mut r = rules.clone();
    match which {
        0 => r.min_resolution = r.min_resolution.saturating_sub(200),
        1 => r.box_count_range = [r.box_count_range[0].saturating_sub(1), r.box_count_range[1] + 2],
        2 => r.max_identical += 2,
        3 => r.ratio_range = [r.ratio_range[0] * 0.5, (r.ratio_range[1] * 1.2).min(1.0)],
        4 => r.min_logit -= 0.2,
        5 => r.min_mask_box_fraction -= 0.1,
        6 => r.max_bg_fraction += 0.1,
        _ => {
            r.subjects_per_image_range =
                [r.subjects_per_image_range[0].saturating_sub(1).max(1), r.subjects_per_image_range[1] + 2]
        }
    }
    r
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn filtering_is_idempotent(rec in arb_record()) {
        let rules = FilterRules::default();
        if let FilterOutcome::Accept { kept_subjects } = filter_record(&rec, &rules).unwrap() {
            let surviving = rec.retain_subjects(&kept_subjects);
            let again = filter_record(&surviving, &rules).unwrap();
            let all: Vec<usize> = (0..surviving.subject_count()).collect();
            prop_assert_eq!(again, FilterOutcome::Accept { kept_subjects: all });
        }
    }

    #[test]
    fn loosening_one_rule_never_rejects_an_accepted_record(
        rec in arb_record(),
        which in 0usize..8,
    ) {
        let rules = FilterRules::default();
        if matches!(filter_record(&rec, &rules).unwrap(), FilterOutcome::Accept { .. }) {
            let relaxed = loosened(&rules, which);
            prop_assert!(
                matches!(filter_record(&rec, &relaxed).unwrap(), FilterOutcome::Accept { .. }),
                "loosening rule {} rejected a previously accepted record", which
            );
        }
    }

    #[test]
    fn crop_never_exceeds_target_and_holds_aspect(
        w in 1.0f64..4000.0,
        h in 1.0f64..4000.0,
    ) {
        let b = SubjectBox { x0: 0.0, y0: 0.0, x1: w, y1: h, logit: 1.0 };
        let spec = compute_crop(&b, 224).unwrap();
        let (rw, rh) = spec.resized;
        prop_assert!(rw <= 224 && rh <= 224);
        prop_assert_eq!(rw.max(rh), 224);
        let exact_short = w.min(h) * spec.scale;
        prop_assert!((exact_short - f64::from(rw.min(rh))).abs() <= 1.0);
    }

    #[test]
    fn slerp_stays_unit_norm(
        a in prop::collection::vec(-1.0f64..1.0, 8),
        b in prop::collection::vec(-1.0f64..1.0, 8),
        t in 0.0f64..1.0,
    ) {
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(na > 0.1 && nb > 0.1);
        let ua = EmbedVec::unit(a).unwrap();
        let ub = EmbedVec::unit(b).unwrap();
        prop_assume!(ua.dot(&ub) > -0.999);
        let p = slerp(&ua, &ub, t).unwrap();
        prop_assert!((p.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_rows_always_sum_to_one(
        rows in 1usize..6,
        cols in 1usize..8,
        seed in 0u64..1000,
    ) {
        let data: Vec<f64> = (0..rows * cols)
            .map(|i| (((seed as usize + i) * 2654435761) % 1000) as f64 / 50.0 - 10.0)
            .collect();
        let mut tape = Tape::new(FloatMode::F64);
        let x = tape.leaf(Tensor::new(rows, cols, data).unwrap()).unwrap();
        let y = tape.softmax_rows(x).unwrap();
        for i in 0..rows {
            let s: f64 = tape.value(y).row_slice(i).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
