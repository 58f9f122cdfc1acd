//! Locale-independent number formatting for output files.

/// Rounds to 12 significant digits.
pub fn round12(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

/// Shortest round-trip representation of `v` rounded to 12 significant
/// digits. Uses scientific notation outside `[1e-6, 1e15)`.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round12(v);
    let a = r.abs();
    if r == 0.0 {
        "0".into()
    } else if !(1e-6..1e15).contains(&a) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caps_significant_digits() {
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(fmt_num(0.1), "0.1");
        assert_eq!(fmt_num(-1.5e-9), "-1.5e-9");
        assert_eq!(fmt_num(123456789012345.6), "123456789012000");
        assert_eq!(fmt_num(0.0), "0");
    }
}
