//! IoU against a set-based oracle.

use std::collections::HashSet;

use fieldpipe::metrics::{accumulate_confusion, iou, mean_iou};
use fieldpipe::{ClassMask, ConfusionCounts, GridGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mask(w: usize, h: usize, codes: Vec<u8>) -> ClassMask {
    ClassMask::new(GridGeometry::new(0.0, 0.0, 1.0, w, h, 32631).unwrap(), codes).unwrap()
}

fn set_iou(pred: &[u8], truth: &[u8], k: u8) -> Option<f64> {
    let a: HashSet<usize> = (0..pred.len()).filter(|&i| pred[i] == k).collect();
    let b: HashSet<usize> = (0..truth.len()).filter(|&i| truth[i] == k).collect();
    let union = a.union(&b).count();
    (union > 0).then(|| a.intersection(&b).count() as f64 / union as f64)
}

fn counts(p: &ClassMask, t: &ClassMask) -> ConfusionCounts {
    accumulate_confusion(p, t, ConfusionCounts::default()).unwrap()
}

#[test]
fn every_3x3_truth_against_random_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for t in 0..3usize.pow(9) {
        let truth: Vec<u8> = (0..9).map(|i| (t / 3usize.pow(i) % 3) as u8).collect();
        let pred: Vec<u8> = (0..9).map(|_| rng.gen_range(0..3)).collect();
        let (pm, tm) = (mask(3, 3, pred.clone()), mask(3, 3, truth.clone()));
        let c = counts(&pm, &tm);
        let rc = counts(&tm, &pm);
        let mut defined = Vec::new();
        for k in 0..3u8 {
            let want = set_iou(&pred, &truth, k);
            assert_eq!(iou(&c, k).unwrap(), want);
            assert_eq!(iou(&rc, k).unwrap(), want);
            defined.extend(want);
        }
        let want_mean = defined.iter().sum::<f64>() / defined.len() as f64;
        assert_eq!(mean_iou(&c).unwrap(), want_mean);
        assert_eq!(iou(&counts(&tm, &tm), truth[0]).unwrap(), Some(1.0));
    }
}

#[test]
fn accumulation_is_additive() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let (w, h1, h2) = (rng.gen_range(1..10), rng.gen_range(1..10), rng.gen_range(1..10));
        let gen = |rng: &mut ChaCha8Rng, n: usize| -> Vec<u8> {
            (0..n).map(|_| [0, 1, 2, 255][rng.gen_range(0..4)]).collect()
        };
        let (p1, t1, p2, t2) = (gen(&mut rng, w * h1), gen(&mut rng, w * h1), gen(&mut rng, w * h2), gen(&mut rng, w * h2));
        let a = counts(&mask(w, h1, p1.clone()), &mask(w, h1, t1.clone()));
        let b = counts(&mask(w, h2, p2.clone()), &mask(w, h2, t2.clone()));
        let joined = counts(&mask(w, h1 + h2, [p1, p2].concat()), &mask(w, h1 + h2, [t1, t2].concat()));
        assert_eq!(a + b, joined);
        assert_eq!(b + a, joined);
    }
}

#[test]
fn disjoint_prediction_scores_zero() {
    let c = counts(&mask(2, 2, vec![1, 1, 1, 1]), &mask(2, 2, vec![2, 2, 2, 2]));
    assert_eq!(iou(&c, 1).unwrap(), Some(0.0));
    assert_eq!(iou(&c, 2).unwrap(), Some(0.0));
    assert_eq!(mean_iou(&c).unwrap(), 0.0);
}
