//! Small shared helpers.

/// Formats a number with 12 significant digits, the precision used by every
/// emitted table. Keeps re-runs byte-identical.
pub fn fmt_sig12(x: f64) -> String {
    format!("{:.11e}", x)
}

/// Formats an optional number, empty when absent (default states in policy
/// tables).
pub fn fmt_opt_sig12(x: Option<f64>) -> String {
    match x {
        Some(v) => fmt_sig12(v),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_sig12(172.5), "1.72500000000e2");
        assert_eq!(fmt_sig12(0.0), "0.00000000000e0");
        assert_eq!(fmt_sig12(-1.0 / 3.0), "-3.33333333333e-1");
    }
}
