//! Amplitude and probability literals.

use crate::state::C64;

/// Named surds, in the order they are tried when printing.
const CONSTANTS: [(&str, f64); 3] = [
    ("R2", std::f64::consts::FRAC_1_SQRT_2),
    ("R3", 0.577_350_269_189_625_8),
    ("R6", 0.408_248_290_463_863),
];

const SNAP: f64 = 1e-12;

fn real(s: &str) -> Option<f64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    if body.is_empty() || body.starts_with(['-', '+']) {
        return None;
    }
    let v = if let Some((_, c)) = CONSTANTS.iter().find(|(n, _)| *n == body) {
        *c
    } else {
        if !body.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '-' | '+')) {
            return None;
        }
        if !body.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
            return None;
        }
        body.parse::<f64>().ok().filter(|v| v.is_finite())?
    };
    Some(if neg { -v } else { v })
}

/// Imaginary coefficient of a part ending in `i` (`i`, `-i`, `0.5i`, `R2i`).
fn imag(s: &str) -> Option<f64> {
    let body = s.strip_suffix('i')?;
    match body {
        "" | "+" => Some(1.0),
        "-" => Some(-1.0),
        b => real(b),
    }
}

/// Parses `x`, `yi` or `x±yi`, where each part is a decimal or named surd.
pub(crate) fn parse_amplitude(s: &str) -> Option<C64> {
    if let Some(v) = real(s) {
        return Some(C64::new(v, 0.0));
    }
    if let Some(v) = imag(s) {
        return Some(C64::new(0.0, v));
    }
    let bytes = s.as_bytes();
    for k in 1..bytes.len() {
        if matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E') {
            let (re, im) = s.split_at(k);
            if let (Some(a), Some(b)) = (real(re), imag(im)) {
                return Some(C64::new(a, b));
            }
        }
    }
    None
}

/// Parses a probability: a decimal or `p/q`, within `[0, 1]`.
pub(crate) fn parse_probability(s: &str) -> Option<f64> {
    let v = if let Some((p, q)) = s.split_once('/') {
        let p: u64 = p.parse().ok()?;
        let q: u64 = q.parse().ok()?;
        if q == 0 {
            return None;
        }
        p as f64 / q as f64
    } else {
        if !s.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
            return None;
        }
        s.parse::<f64>().ok()?
    };
    (v.is_finite() && (0.0..=1.0).contains(&v)).then_some(v)
}

/// A named surd when within 1e-12 of one, else the shortest decimal within
/// 1e-14, else the shortest round-trip decimal.
pub(crate) fn format_real(x: f64) -> String {
    for (name, c) in CONSTANTS {
        if (x - c).abs() <= SNAP {
            return name.to_string();
        }
        if (x + c).abs() <= SNAP {
            return format!("-{name}");
        }
    }
    let x = if x == 0.0 { 0.0 } else { x };
    if x.abs() >= 1e-6 {
        for digits in 1..=12 {
            let s = format!("{x:.digits$}");
            if (s.parse::<f64>().unwrap_or(f64::NAN) - x).abs() <= 1e-14 {
                let s = s.trim_end_matches('0').trim_end_matches('.');
                return if s == "-0" { "0".into() } else { s.into() };
            }
        }
    }
    format_real_plain(x)
}

pub(crate) fn format_amplitude(a: C64) -> String {
    if a.im == 0.0 {
        return format_real(a.re);
    }
    let im = format_real(a.im);
    if a.re == 0.0 {
        return format!("{im}i");
    }
    let sign = if im.starts_with('-') { "" } else { "+" };
    format!("{}{sign}{im}i", format_real(a.re))
}

/// Decimal when short, else a small fraction when within 1e-15, else the
/// shortest round-trip decimal.
pub(crate) fn format_probability(p: f64) -> String {
    let plain = format_real_plain(p);
    if plain.len() <= 6 {
        return plain;
    }
    for q in 2..=24u64 {
        let n = (p * q as f64).round();
        if (p - n / q as f64).abs() <= 1e-15 {
            return format!("{}/{q}", n as u64);
        }
    }
    plain
}

fn format_real_plain(x: f64) -> String {
    format!("{x:?}").trim_end_matches(".0").to_string()
}
