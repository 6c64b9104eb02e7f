mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tonelab::eval::{f1_from_confusion, pattern_accuracy, Confusion, PatternScore};
use tonelab::{Error, Tone};

#[test]
fn fixtures_match_oracles_exactly() {
    let (n, worst) = metric_fixture_deviation();
    assert!(n >= 20);
    assert!(worst <= 1e-12, "{worst}");
}

#[test]
fn two_class_fixture() {
    let c = Confusion::from_pairs(2, &[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 1, 0]).unwrap();
    assert_eq!(c.counts, vec![vec![2, 1], vec![1, 2]]);
    for m in f1_from_confusion(&c) {
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(format!("{:.4}", m.f1), "0.6667");
    }
}

#[test]
fn absent_class_scores_zero() {
    let c = Confusion::from_pairs(3, &[0, 1], &[0, 1]).unwrap();
    let m = f1_from_confusion(&c);
    assert_eq!((m[2].precision, m[2].recall, m[2].f1, m[2].support), (0.0, 0.0, 0.0, 0));
}

#[test]
fn accuracy_is_trace_over_total() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let refs: Vec<usize> = (0..500).map(|_| rng.gen_range(0..6)).collect();
    let preds: Vec<usize> = refs.iter().map(|&r| if rng.gen_bool(0.7) { r } else { rng.gen_range(0..6) }).collect();
    let c = Confusion::from_pairs(6, &refs, &preds).unwrap();
    let hits = refs.iter().zip(&preds).filter(|(a, b)| a == b).count();
    assert_eq!(c.total(), 500);
    assert!((c.accuracy() - hits as f64 / 500.0).abs() < 1e-12);
}

#[test]
fn random_pattern_scores_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pats = ["T4-T4", "T2-T2", "T3-T3", "T4-T3-T4"].map(parse_seq);
    for _ in 0..200 {
        let utts = rng.gen_range(1..5);
        let mut refs = Vec::new();
        let mut preds = Vec::new();
        for _ in 0..utts {
            let n = rng.gen_range(1..15);
            let r: Vec<Tone> = (0..n).map(|_| Tone::from_index(rng.gen_range(0..6)).unwrap()).collect();
            let p = r.iter().map(|&t| if rng.gen_bool(0.7) { t } else { Tone::from_index(rng.gen_range(0..6)).unwrap() }).collect();
            refs.push(r);
            preds.push(p);
        }
        for pat in &pats {
            let got = pattern_accuracy(&refs, &preds, pat).unwrap().accuracy();
            match (got, brute_pattern(&refs, &preds, pat)) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                (a, b) => assert_eq!(a, b),
            }
        }
    }
}

#[test]
fn pattern_counts_overlapping_windows() {
    let r = vec![parse_seq("T4-T4-T4")];
    match pattern_accuracy(&r, &r, &parse_seq("T4-T4")).unwrap() {
        PatternScore::Scored { occurrences, slots, accuracy } => assert_eq!((occurrences, slots, accuracy), (2, 4, 1.0)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let r = vec![parse_seq("T1-T2")];
    assert!(matches!(pattern_accuracy(&r, &r, &[]), Err(Error::BadPattern(_))));
    assert!(matches!(pattern_accuracy(&r, &r, &[Tone::T0]), Err(Error::BadPattern(_))));
    assert!(pattern_accuracy(&r, &[parse_seq("T1")], &parse_seq("T1")).is_err());
    assert!(Confusion::from_pairs(2, &[0, 2], &[0, 1]).is_err());
}
