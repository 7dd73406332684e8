/// Shortest decimal text that parses back to the same `f64`, without an
/// exponent. Integral values print without a fractional part.
pub fn format_number(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        if v == 0.0 {
            return "0".into();
        }
        return format!("{}", v as i64);
    }
    format!("{v}")
}
