//! Otsu's threshold on an equal-width histogram.
//!
//! The between-class variance for a split after bin `k` is proportional to
//! `(n0*S1 - n1*S0)^2 / (n0*n1)` where `n` are class counts and `S` the sums
//! of bin indices. Everything is integral, so splits are compared exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equal-width binning grid over `[lo, lo + bins * width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub lo: f64,
    pub width: f64,
    pub bins: usize,
}

impl Binning {
    pub fn over(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 bins, got {bins}"
            )));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InsufficientData(
                "threshold needs at least two distinct finite values".into(),
            ));
        }
        Ok(Self {
            lo,
            width: (hi - lo) / bins as f64,
            bins,
        })
    }

    /// Bin index on the extended grid; may fall outside `0..bins`.
    pub fn index(&self, v: f64) -> i64 {
        let b = ((v - self.lo) / self.width).floor();
        let b = b.clamp(i64::MIN as f64 / 2.0, i64::MAX as f64 / 2.0) as i64;
        // the top edge belongs to the last bin
        if b == self.bins as i64 && v <= self.edge(self.bins) {
            b - 1
        } else {
            b
        }
    }

    /// Index clamped into the training grid.
    pub fn clamped_index(&self, v: f64) -> usize {
        self.index(v).clamp(0, self.bins as i64 - 1) as usize
    }

    pub fn edge(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.width
    }

    pub fn center(&self, b: i64) -> f64 {
        self.lo + (b as f64 + 0.5) * self.width
    }

    pub fn histogram(&self, values: &[f64]) -> Vec<u64> {
        let mut h = vec![0u64; self.bins];
        for &v in values {
            h[self.clamped_index(v)] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtsuThreshold {
    pub binning: Binning,
    /// Class 0 is bins `0..split`.
    pub split: usize,
    pub threshold: f64,
}

/// Histogram `values` into `bins` bins over their range and pick the edge
/// maximizing between-class variance.
pub fn otsu_threshold(values: &[f64], bins: usize) -> Result<OtsuThreshold> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value passed to Otsu".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let binning = Binning::over(lo, hi, bins)?;
    let split = otsu_bin_split(&binning.histogram(values))?;
    Ok(OtsuThreshold {
        binning,
        split,
        threshold: binning.edge(split),
    })
}

/// Best split `k` in `1..bins` for a histogram; class 0 is bins `0..k`.
/// Ties go to the smallest `k`.
pub fn otsu_bin_split(hist: &[u64]) -> Result<usize> {
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InsufficientData(
            "threshold needs at least two occupied bins".into(),
        ));
    }
    let n: u128 = hist.iter().map(|&c| c as u128).sum();
    let s: u128 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u128 * c as u128)
        .sum();
    let (mut n0, mut s0) = (0u128, 0u128);
    let mut best: Option<(usize, Wide, u128)> = None;
    for k in 1..hist.len() {
        n0 += hist[k - 1] as u128;
        s0 += (k as u128 - 1) * hist[k - 1] as u128;
        let (n1, s1) = (n - n0, s - s0);
        let (num, den) = if n0 == 0 || n1 == 0 {
            (0u128, 1u128)
        } else {
            let d = (n0 * s1).abs_diff(n1 * s0);
            (d, n0 * n1)
        };
        let sq = Wide::square(num);
        let better = match &best {
            None => true,
            Some((_, bsq, bden)) => Wide::mul(sq, *bden) > Wide::mul(*bsq, den),
        };
        if better {
            best = Some((k, sq, den));
        }
    }
    Ok(best.expect("at least two bins").0)
}

/// Unsigned 384-bit integer, just enough for exact fraction comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Wide([u64; 6]);

impl Wide {
    fn from_limbs(l: &[u64]) -> Self {
        let mut out = [0u64; 6];
        out[..l.len()].copy_from_slice(l);
        // most significant limb first for the derived ordering
        out.reverse();
        Wide(out)
    }

    fn limbs(self) -> [u64; 6] {
        let mut l = self.0;
        l.reverse();
        l
    }

    fn square(x: u128) -> Self {
        Self::mul(Self::from_limbs(&[x as u64, (x >> 64) as u64]), x)
    }

    fn mul(a: Self, b: u128) -> Self {
        let a = a.limbs();
        let b = [b as u64, (b >> 64) as u64];
        let mut out = [0u64; 6];
        for (i, &ai) in a.iter().enumerate() {
            let mut carry = 0u128;
            for (j, &bj) in b.iter().enumerate() {
                if i + j >= 6 {
                    break;
                }
                let cur = out[i + j] as u128 + ai as u128 * bj as u128 + carry;
                out[i + j] = cur as u64;
                carry = cur >> 64;
            }
            if i + 2 < 6 {
                out[i + 2] = out[i + 2].wrapping_add(carry as u64);
            }
        }
        Self::from_limbs(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive search minimizing within-class variance, in exact rationals.
    /// Within-class scatter = total - (S0^2/n0 + S1^2/n1), so maximize the
    /// bracket; fractions are compared by cross-multiplication.
    fn brute_split(hist: &[u64]) -> usize {
        let mut best_k = 0;
        let mut best: (u128, u128) = (0, 1);
        for k in 1..hist.len() {
            let (mut n0, mut s0, mut n1, mut s1) = (0u128, 0u128, 0u128, 0u128);
            for (i, &c) in hist.iter().enumerate() {
                if i < k {
                    n0 += c as u128;
                    s0 += i as u128 * c as u128;
                } else {
                    n1 += c as u128;
                    s1 += i as u128 * c as u128;
                }
            }
            let (num, den) = match (n0, n1) {
                (0, _) => (s1 * s1, n1),
                (_, 0) => (s0 * s0, n0),
                _ => (s0 * s0 * n1 + s1 * s1 * n0, n0 * n1),
            };
            if best_k == 0 || num * best.1 > best.0 * den {
                best_k = k;
                best = (num, den);
            }
        }
        best_k
    }

    #[test]
    fn bimodal_values() {
        let t = otsu_threshold(&[0.0, 0.0, 0.0, 10.0, 10.0, 10.0], 256).unwrap();
        assert!(t.threshold > 0.0 && t.threshold <= 10.0);
        assert_eq!(t.split, 1);
    }

    #[test]
    fn identical_values_fail() {
        assert!(otsu_threshold(&[3.0; 10], 256).is_err());
        assert!(otsu_bin_split(&[0, 7, 0]).is_err());
    }

    #[test]
    fn plateau_tie_goes_low() {
        assert_eq!(otsu_bin_split(&[5, 0, 0, 0, 5]).unwrap(), 1);
        assert_eq!(brute_split(&[5, 0, 0, 0, 5]), 1);
    }

    #[test]
    fn large_counts_compare_exactly() {
        let mut h = vec![0u64; 256];
        h[3] = 4_000_000_000;
        h[200] = 3_999_999_999;
        h[254] = 1;
        let k = otsu_bin_split(&h).unwrap();
        assert!((4..=200).contains(&k));
    }

    #[test]
    fn overlapping_gaussians_threshold_between_means() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = Normal::new(-20.0, 3.0).unwrap();
        let b = Normal::new(-5.0, 2.0).unwrap();
        let mut v: Vec<f64> = (0..3000).map(|_| a.sample(&mut rng)).collect();
        v.extend((0..7000).map(|_| b.sample(&mut rng)));
        let t = otsu_threshold(&v, 256).unwrap().threshold;
        assert!(t > -20.0 && t < -5.0, "{t}");
    }

    #[test]
    fn binning_extends_beyond_range() {
        let b = Binning::over(0.0, 10.0, 10).unwrap();
        assert_eq!(b.index(10.0), 9);
        assert_eq!(b.index(-0.5), -1);
        assert_eq!(b.index(25.0), 25);
        assert_eq!(b.center(-1), -0.5);
    }

    proptest! {
        #[test]
        fn matches_brute_force(h in proptest::collection::vec(0u64..1000, 2..=256)) {
            prop_assume!(h.iter().filter(|&&c| c > 0).count() >= 2);
            prop_assert_eq!(otsu_bin_split(&h).unwrap(), brute_split(&h));
        }
    }
}
