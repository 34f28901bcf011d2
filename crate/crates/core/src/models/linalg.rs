//! Small dense symmetric positive-definite helpers (row-major `d x d`).

/// Lower Cholesky factor of `a`, or `None` if `a` is not positive definite.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), d * d);
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// `log |A|` from its Cholesky factor.
pub fn log_det_from_cholesky(l: &[f64], d: usize) -> f64 {
    (0..d).map(|i| l[i * d + i].ln()).sum::<f64>() * 2.0
}

/// Squared Mahalanobis length `x^T A^-1 x` given `A = L L^T`.
pub fn mahalanobis_sq(l: &[f64], d: usize, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut z = [0.0f64; 16];
    let z = if d <= 16 {
        &mut z[..d]
    } else {
        unreachable!("dimension {d} too large")
    };
    for i in 0..d {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * d + k] * z[k];
        }
        z[i] = s / l[i * d + i];
        acc += z[i] * z[i];
    }
    acc
}
