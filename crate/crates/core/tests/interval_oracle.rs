//! Interval metrics against a 1 ms rasterization oracle.

use proptest::prelude::*;
use tapwater_core::annotations::{
    coverage, filter_min_duration, iou, AnnotationRecord, Interval, IntervalSet,
};

const TIMELINE_MS: usize = 600_000;

fn raster(spans_ms: &[(u32, u32)]) -> Vec<bool> {
    let mut bits = vec![false; TIMELINE_MS];
    for &(s, e) in spans_ms {
        bits[s as usize..e as usize].fill(true);
    }
    bits
}

fn to_set(spans_ms: &[(u32, u32)]) -> IntervalSet {
    IntervalSet::from_intervals(
        spans_ms
            .iter()
            .map(|&(s, e)| Interval::new(s as f64 / 1000.0, e as f64 / 1000.0)),
    )
}

fn spans() -> impl Strategy<Value = Vec<(u32, u32)>> {
    prop::collection::vec(
        (0u32..TIMELINE_MS as u32 - 1).prop_flat_map(|s| {
            let max_len = (TIMELINE_MS as u32 - s).min(60_000);
            (Just(s), 1..=max_len).prop_map(|(s, l)| (s, s + l))
        }),
        0..12,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_match_raster(a in spans(), b in spans()) {
        let (ra, rb) = (raster(&a), raster(&b));
        let inter = ra.iter().zip(&rb).filter(|(x, y)| **x && **y).count();
        let union = ra.iter().zip(&rb).filter(|(x, y)| **x || **y).count();
        let a_ms = ra.iter().filter(|x| **x).count();

        let (sa, sb) = (to_set(&a), to_set(&b));
        prop_assert!((sa.total_duration() - a_ms as f64 / 1000.0).abs() < 1e-9);
        let expected_iou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        prop_assert!((iou(&sa, &sb) - expected_iou).abs() < 1e-12);
        match coverage(&sa, &sb) {
            None => prop_assert_eq!(a_ms, 0),
            Some(c) => prop_assert!((c - inter as f64 / a_ms as f64).abs() < 1e-12),
        }
    }

    #[test]
    fn iou_symmetric_and_bounded(a in spans(), b in spans()) {
        let (sa, sb) = (to_set(&a), to_set(&b));
        let i = iou(&sa, &sb);
        prop_assert_eq!(i, iou(&sb, &sa));
        prop_assert!((0.0..=1.0).contains(&i));
        if let (Some(ca), Some(cb)) = (coverage(&sa, &sb), coverage(&sb, &sa)) {
            prop_assert!(i <= ca.min(cb) + 1e-12);
        }
    }

    #[test]
    fn merge_is_idempotent(a in spans()) {
        let once = to_set(&a);
        let twice = IntervalSet::from_intervals(once.intervals().iter().copied());
        prop_assert_eq!(&once, &twice);
        for w in once.intervals().windows(2) {
            prop_assert!(w[0].end < w[1].start);
        }
    }

    #[test]
    fn contained_records_are_fully_covered(outer in spans(), picks in prop::collection::vec((0usize..100, 0.0f64..1.0, 0.0f64..1.0), 1..8)) {
        prop_assume!(!outer.is_empty());
        let inner: Vec<(u32, u32)> = picks
            .iter()
            .filter_map(|&(k, u, v)| {
                let (s, e) = outer[k % outer.len()];
                let (lo, hi) = if u < v { (u, v) } else { (v, u) };
                let a = s + ((e - s) as f64 * lo) as u32;
                let b = s + ((e - s) as f64 * hi) as u32;
                (b > a).then_some((a, b))
            })
            .collect();
        prop_assume!(!inner.is_empty());
        prop_assert_eq!(coverage(&to_set(&inner), &to_set(&outer)), Some(1.0));
    }

    #[test]
    fn filtering_never_adds_duration(a in spans()) {
        let records: Vec<AnnotationRecord> = a
            .iter()
            .map(|&(s, e)| AnnotationRecord {
                participant_id: "P01".into(),
                recording_id: "r".into(),
                class_label: "water".into(),
                start_s: s as f64 / 1000.0,
                end_s: e as f64 / 1000.0,
            })
            .collect();
        let all: f64 = to_set(&a).total_duration();
        let kept = filter_min_duration(&records, 3.0);
        let kept_set = IntervalSet::from_intervals(kept.iter().map(|r| Interval::new(r.start_s, r.end_s)));
        prop_assert!(kept_set.total_duration() <= all + 1e-9);
    }
}
