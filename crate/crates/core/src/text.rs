//! Helpers shared by the comma-separated file formats.
//!
//! The formats never quote fields: identifiers and labels are forbidden from
//! containing commas or line breaks, so splitting on ',' is exact.

/// Shortest round-trip decimal rendering, always with a fractional part
/// or exponent (`4.0`, `6.5`, `1e-7`).
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Yields `(line_number, line)` pairs, 1-based, skipping a single trailing
/// empty line and stripping a carriage return if one slipped in.
pub(crate) fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut it = body.split('\n').enumerate();
    let empty = body.is_empty();
    std::iter::from_fn(move || {
        if empty {
            return None;
        }
        it.next()
            .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
    })
}

/// Decimal grammar used by every numeric field: optional sign, digits with
/// an optional fraction and exponent. Rejects `inf`, `nan` and hex.
pub(crate) fn parse_decimal(field: &str) -> Option<f64> {
    let t = field.trim();
    let body = t.strip_prefix(['-', '+']).unwrap_or(t);
    if body.is_empty() || !body.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        return None;
    }
    if !body
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '-' | '+'))
    {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub(crate) fn is_plain_field(s: &str) -> bool {
    !s.is_empty() && !s.contains([',', '\n', '\r'])
}
