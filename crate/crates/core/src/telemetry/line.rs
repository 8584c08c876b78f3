//! Line grammar for point uploads:
//!
//! ```text
//! sensor,node=<node_id> value=<decimal> <timestamp_ms>\n
//! ```
//!
//! One point per line, LF terminated, identifiers `[a-zA-Z0-9_]+`, decimals in
//! shortest round-trip form.

use std::fmt::Write as _;

use crate::datastore::Point;
use crate::hydro::is_identifier;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

pub fn encode_points(points: &[Point]) -> String {
    let mut out = String::with_capacity(points.len() * 48);
    for p in points {
        // f64's Display is the shortest representation that round-trips.
        let _ = writeln!(out, "{},node={} value={} {}", p.series.sensor, p.series.node, p.value, p.timestamp);
    }
    out
}

pub fn decode_points(text: &str) -> Result<Vec<Point>, ParseError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split('\n')
        .enumerate()
        .map(|(i, line)| {
            decode_line(line).map_err(|reason| ParseError { line: i + 1, reason })
        })
        .collect()
}

fn decode_line(line: &str) -> Result<Point, String> {
    let (sensor, rest) = line.split_once(",node=").ok_or("missing ',node=' tag")?;
    let (node, rest) = rest.split_once(" value=").ok_or("missing ' value=' field")?;
    let (value, timestamp) = rest.split_once(' ').ok_or("missing timestamp")?;
    if !is_identifier(sensor) {
        return Err(format!("bad sensor name {sensor:?}"));
    }
    if !is_identifier(node) {
        return Err(format!("bad node id {node:?}"));
    }
    if !is_decimal(value) {
        return Err(format!("non-numeric value {value:?}"));
    }
    let value: f64 = value.parse().map_err(|_| format!("non-numeric value {value:?}"))?;
    if !value.is_finite() {
        return Err(format!("non-finite value {value}"));
    }
    let digits = timestamp.strip_prefix('-').unwrap_or(timestamp);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("non-integer timestamp {timestamp:?}"));
    }
    let timestamp = timestamp.parse().map_err(|_| format!("timestamp out of range {timestamp:?}"))?;
    Ok(Point::new(node, sensor, timestamp, value))
}

/// `-?digits(.digits)?([eE][+-]?digits)?`
fn is_decimal(s: &str) -> bool {
    let s = s.strip_prefix('-').unwrap_or(s);
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], Some(&s[i + 1..])),
        None => (s, None),
    };
    let all_digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
    let mantissa_ok = match mantissa.split_once('.') {
        Some((int, frac)) => all_digits(int) && all_digits(frac),
        None => all_digits(mantissa),
    };
    let exponent_ok = exponent.map_or(true, |e| all_digits(e.strip_prefix(['+', '-']).unwrap_or(e)));
    mantissa_ok && exponent_ok
}
