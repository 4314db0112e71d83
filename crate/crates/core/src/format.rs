/// Formats a real with 17 significant digits, enough to round-trip any `f64`.
pub(crate) fn real(x: f64) -> String {
    format!("{x:.16e}")
}
