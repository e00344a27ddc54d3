//! Log-domain arithmetic on natural logarithms.

use crate::Scalar;

/// `ln(Σ e^x)`. Returns −∞ for an empty slice or when every entry is −∞.
pub fn logsumexp<S: Scalar>(xs: &[S]) -> S {
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() {
        return max;
    }
    if max == S::infinity() {
        return max;
    }
    let sum: S = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn logaddexp<S: Scalar>(a: S, b: S) -> S {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == S::neg_infinity() {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(Σ w_k e^{x_k})` for nonnegative weights. Zero weights drop their term.
pub fn weighted_logsumexp<S: Scalar>(xs: &[S], weights: &[S]) -> S {
    debug_assert_eq!(xs.len(), weights.len());
    let mut max = S::neg_infinity();
    for (&x, &w) in xs.iter().zip(weights) {
        if w > S::zero() && x > max {
            max = x;
        }
    }
    if max == S::neg_infinity() {
        return max;
    }
    let sum: S = xs
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > S::zero())
        .map(|(&x, &w)| w * (x - max).exp())
        .sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn edge_cases() {
        assert_eq!(logsumexp::<f64>(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[0.0, f64::NEG_INFINITY]), 0.0);
        assert_eq!(logaddexp(f64::NEG_INFINITY, -3.0), -3.0);
        assert_eq!(weighted_logsumexp(&[-1.0, 5.0], &[1.0, 0.0]), -1.0);
        // large magnitudes stay finite
        assert!((logsumexp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn logaddexp_matches_direct(a in -29.9f64..29.9, b in -29.9f64..29.9) {
            let direct = (a.exp() + b.exp()).ln();
            prop_assert!((logaddexp(a, b) - direct).abs() < 1e-12);
            prop_assert!((logsumexp(&[a, b]) - direct).abs() < 1e-12);
        }

        #[test]
        fn weighted_matches_direct(a in -29.9f64..29.9, b in -29.9f64..29.9, w in 0.0f64..1.0) {
            let direct = (w * a.exp() + (1.0 - w) * b.exp()).ln();
            prop_assert!((weighted_logsumexp(&[a, b], &[w, 1.0 - w]) - direct).abs() < 1e-12);
        }
    }
}
