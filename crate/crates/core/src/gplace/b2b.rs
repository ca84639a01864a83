//! Bound-to-bound linearization of net wirelength.

/// Distance floor for pin pairs, in site units.
pub const B2B_EPS: f64 = 1e-4;

/// Weighted pin pairs reproducing the span of `coords` at the linearization
/// point: the two boundary pins are connected, and every interior pin is
/// connected to both boundary pins, each pair with weight
/// `1 / ((P - 1) max(|d|, eps))`.
pub fn b2b_pairs(coords: &[f64]) -> Vec<(usize, usize, f64)> {
    let p = coords.len();
    if p < 2 {
        return Vec::new();
    }
    let mut lo = 0;
    let mut hi = 0;
    for (i, &c) in coords.iter().enumerate() {
        if c < coords[lo] {
            lo = i;
        }
        if c > coords[hi] {
            hi = i;
        }
    }
    if lo == hi {
        hi = if lo == 0 { 1 } else { 0 };
    }
    let w = |a: usize, b: usize| 1.0 / ((p - 1) as f64 * (coords[a] - coords[b]).abs().max(B2B_EPS));
    let mut out = Vec::with_capacity(2 * p - 3);
    out.push((lo, hi, w(lo, hi)));
    for k in 0..p {
        if k != lo && k != hi {
            out.push((k, lo, w(k, lo)));
            out.push((k, hi, w(k, hi)));
        }
    }
    out
}

/// Value of the quadratic `sum w (c_i - c_j)^2` at `coords`.
pub fn b2b_evaluate(coords: &[f64], pairs: &[(usize, usize, f64)]) -> f64 {
    pairs.iter().map(|&(i, j, w)| w * (coords[i] - coords[j]).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn span(c: &[f64]) -> f64 {
        c.iter().copied().fold(f64::NEG_INFINITY, f64::max) - c.iter().copied().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn two_pin_net() {
        let c = [0.0, 4.0];
        let pairs = b2b_pairs(&c);
        assert_eq!(pairs.len(), 1);
        assert!((b2b_evaluate(&c, &pairs) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn three_pin_net_pair_values() {
        let c = [0.0, 2.0, 4.0];
        let pairs = b2b_pairs(&c);
        let mut parts: Vec<f64> = pairs.iter().map(|&(i, j, w)| w * (c[i] - c[j]).powi(2)).collect();
        parts.sort_by(f64::total_cmp);
        assert_eq!(parts, vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn coincident_pins_are_finite() {
        let c = [3.0, 3.0, 3.0];
        let pairs = b2b_pairs(&c);
        assert!(pairs.iter().all(|p| p.2.is_finite()));
        assert_eq!(b2b_evaluate(&c, &pairs), 0.0);
    }

    proptest! {
        #[test]
        fn reproduces_span(c in proptest::collection::vec(-50.0f64..50.0, 2..12)) {
            let pairs = b2b_pairs(&c);
            let s = span(&c);
            prop_assert!((b2b_evaluate(&c, &pairs) - s).abs() <= 1e-6 * s.max(1.0));
        }
    }
}
