//! Locale-free float formatting with 17 significant digits.

pub fn f17(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// JSON has no infinities; they are written as strings.
pub fn f17_json(x: f64) -> String {
    if x.is_finite() {
        f17(x)
    } else {
        format!("\"{}\"", f17(x))
    }
}
