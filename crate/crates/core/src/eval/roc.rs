use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Label;

/// ROC for "abnormal" as the positive class, where a lower score is more
/// abnormal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// Sweep every distinct score as a threshold. Tied scores move together,
/// which makes the trapezoid give ties half credit.
pub fn frame_roc(scores: &[(f64, Label)]) -> Result<RocCurve> {
    if scores.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let p = scores.iter().filter(|(_, l)| l.is_abnormal()).count();
    let n = scores.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::InsufficientData(
            "ROC needs both normal and abnormal frames".into(),
        ));
    }
    let mut sorted: Vec<(f64, Label)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1.is_abnormal() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    let auc = trapezoid(&points);
    Ok(RocCurve {
        points,
        auc,
        positives: p,
        negatives: n,
    })
}

pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Probability that a random abnormal frame scores below a random normal
/// one, ties counting one half. Quadratic; meant for checking.
pub fn pair_ordering_auc(scores: &[(f64, Label)]) -> f64 {
    let (mut good, mut pairs) = (0.0, 0usize);
    for &(sa, _) in scores.iter().filter(|(_, l)| l.is_abnormal()) {
        for &(sn, _) in scores.iter().filter(|(_, l)| !l.is_abnormal()) {
            pairs += 1;
            if sa < sn {
                good += 1.0;
            } else if sa == sn {
                good += 0.5;
            }
        }
    }
    good / pairs as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    use Label::{Abnormal as A, Normal as N};

    #[test]
    fn perfect_separation() {
        let s = [(-5.0, A), (-4.0, A), (1.0, N), (2.0, N)];
        let r = frame_roc(&s).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn six_point_hand_case() {
        // pairs (A, N): 3 abnormal x 3 normal = 9; one tie
        let s = [(1.0, A), (2.0, N), (3.0, A), (3.0, N), (4.0, N), (5.0, A)];
        // A=1 beats all 3; A=3 beats N=4, ties N=3; A=5 beats none
        let expect = (3.0 + 1.0 + 0.5) / 9.0;
        assert!((frame_roc(&s).unwrap().auc - expect).abs() < 1e-15);
        assert!((pair_ordering_auc(&s) - expect).abs() < 1e-15);
    }

    #[test]
    fn random_scores_give_half() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let s: Vec<(f64, Label)> = (0..10_000)
            .map(|_| {
                (
                    rng.random::<f64>(),
                    Label::abnormal_if(rng.random::<bool>()),
                )
            })
            .collect();
        let auc = frame_roc(&s).unwrap().auc;
        assert!((auc - 0.5).abs() <= 0.02, "{auc}");
    }

    #[test]
    fn single_class_fails() {
        assert!(frame_roc(&[(1.0, N), (2.0, N)]).is_err());
    }

    proptest! {
        #[test]
        fn auc_is_the_pair_statistic(v in proptest::collection::vec((0u8..20, any::<bool>()), 2..120)) {
            let s: Vec<(f64, Label)> = v.iter().map(|&(x, a)| (x as f64, Label::abnormal_if(a))).collect();
            prop_assume!(s.iter().any(|p| p.1 == A) && s.iter().any(|p| p.1 == N));
            let r = frame_roc(&s).unwrap();
            prop_assert!((r.auc - pair_ordering_auc(&s)).abs() < 1e-12);
            for w in r.points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
            prop_assert!((trapezoid(&r.points) - r.auc).abs() == 0.0);
        }
    }
}
