//! Fixed significant-digit formatting for JSON boxes and CSV tables.

/// Formats `v` with exactly `digits` significant digits, positional when the
/// exponent is moderate and scientific otherwise.
pub fn format_significant(v: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return format!("{:.*}", digits - 1, 0.0);
    }
    // Rounding may bump the exponent (9.99.. -> 1.00e1), so read it back.
    let sci = format!("{:.*e}", digits - 1, v);
    let exp: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    if (-5..digits as i32).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        sci
    }
}
