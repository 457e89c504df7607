//! Jacobian logarithm.

/// `max*(a, b) = max(a, b) + ln(1 + e^{−|a − b|}) = ln(e^a + e^b)`.
#[inline]
pub fn max_star(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

/// Pairwise `max*` fold over a non-empty list.
///
/// # Panics
///
/// Panics on an empty list.
pub fn max_star_all(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "max_star of an empty list");
    values[1..]
        .iter()
        .fold(values[0], |acc, &v| max_star(acc, v))
}
