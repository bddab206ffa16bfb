//! Plain-text output helpers shared by reports, rule selections and the CLI.

use std::fmt::Write as _;

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Two-column whitespace-separated `x y` lines, the format read by gnuplot
/// and pgfplots.
pub fn dat_string(points: &[(f64, f64)]) -> String {
    let mut s = String::new();
    for (x, y) in points {
        let _ = writeln!(s, "{} {}", fmt_f64(*x), fmt_f64(*y));
    }
    s
}

/// Parses the output of [`dat_string`].
pub fn parse_dat(text: &str) -> Option<Vec<(f64, f64)>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let mut it = l.split_whitespace();
            let x = it.next()?.parse().ok()?;
            let y = it.next()?.parse().ok()?;
            Some((x, y))
        })
        .collect()
}
