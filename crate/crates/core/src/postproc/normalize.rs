//! Number and date normalization for post-processing.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormalizeError {
    #[error("not a number: {0:?}")]
    NotANumber(String),
    #[error("not a date: {0:?}")]
    NotADate(String),
    #[error("unit table: {0}")]
    UnitTable(String),
}

/// Space-separated unit names and their factor to the base unit. Names are case-sensitive.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitTable {
    pub units: BTreeMap<String, f64>,
}

impl Default for UnitTable {
    fn default() -> Self {
        UnitTable {
            units: BTreeMap::from([("km".to_string(), 1000.0), ("m".to_string(), 1.0)]),
        }
    }
}

impl UnitTable {
    /// `{"km": 1000, "m": 1, ...}`; entries extend the defaults.
    pub fn from_json(text: &str) -> Result<Self, NormalizeError> {
        let extra: BTreeMap<String, f64> =
            serde_json::from_str(text).map_err(|e| NormalizeError::UnitTable(e.to_string()))?;
        if let Some((k, v)) = extra.iter().find(|(_, v)| !v.is_finite() || **v <= 0.0) {
            return Err(NormalizeError::UnitTable(format!("factor for {k} must be positive, got {v}")));
        }
        let mut t = UnitTable::default();
        t.units.extend(extra);
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, NormalizeError> {
        let text = std::fs::read_to_string(path).map_err(|e| NormalizeError::UnitTable(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

fn magnitude(suffix: &str) -> Option<f64> {
    Some(match suffix.to_ascii_lowercase().as_str() {
        "k" | "thousand" => 1e3,
        "m" | "mn" | "million" => 1e6,
        "b" | "bn" | "billion" => 1e9,
        _ => return None,
    })
}

/// Leading `[-+]digits[.digits][e[-+]digits]`; returns the number and the rest.
fn leading_number(s: &str) -> Option<(f64, &str)> {
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'-' || b[i] == b'+') {
        i += 1;
    }
    let digits_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    if i < b.len() && b[i] == b'.' {
        i += 1;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i == digits_start || (i == digits_start + 1 && b[digits_start] == b'.') {
        return None;
    }
    // exponent only when followed by digits, so "5e" keeps its suffix
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'-' || b[j] == b'+') {
            j += 1;
        }
        if j < b.len() && b[j].is_ascii_digit() {
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    let n: f64 = s[..i].parse().ok()?;
    Some((n, &s[i..]))
}

/// Parse a number with optional currency symbol, thousands separators and magnitude or unit.
///
/// Attached suffixes (`120M`, `8500k`) are magnitudes. Space-separated words are looked up in the
/// unit table first (`5 km` is 5000), then as magnitudes (`3 million`).
pub fn normalize_number_with(s: &str, units: &UnitTable) -> Result<f64, NormalizeError> {
    let err = || NormalizeError::NotANumber(s.to_string());
    let cleaned: String = s
        .trim()
        .chars()
        .filter(|c| !matches!(c, ',' | '$' | '\u{20ac}' | '\u{a3}' | '\u{a5}'))
        .collect();
    let (n, rest) = leading_number(&cleaned).ok_or_else(err)?;
    let factor = if rest.is_empty() {
        1.0
    } else if !rest.starts_with(char::is_whitespace) {
        match units.units.get(rest) {
            Some(f) if rest.len() > 1 => *f,
            _ => magnitude(rest).ok_or_else(err)?,
        }
    } else {
        let word = rest.trim();
        match units.units.get(word) {
            Some(f) => *f,
            None => magnitude(word).ok_or_else(err)?,
        }
    };
    let v = n * factor;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(err())
    }
}

pub fn normalize_number(s: &str) -> Result<f64, NormalizeError> {
    normalize_number_with(s, &UnitTable::default())
}

const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

fn month_number(name: &str) -> Option<u32> {
    let n = name.trim_end_matches('.').to_lowercase();
    if n.len() < 3 {
        return None;
    }
    MONTHS
        .iter()
        .position(|m| *m == n || (n.len() == 3 && m.starts_with(&n)) || (n == "sept" && *m == "september"))
        .map(|i| i as u32 + 1)
}

fn ymd(y: i32, m: u32, d: u32) -> Option<String> {
    NaiveDate::from_ymd_opt(y, m, d).map(|date| date.format("%Y-%m-%d").to_string())
}

fn parse_int<T: std::str::FromStr>(s: &str, max_len: usize) -> Option<T> {
    if s.is_empty() || s.len() > max_len || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// ISO `YYYY-MM-DD` from `YYYY-MM-DD`, `Month D, YYYY`, `M/D/YYYY` or `D/M/YYYY`.
///
/// Slash dates are read month-first; day-first is used only when month-first is invalid.
pub fn normalize_date(s: &str) -> Result<String, NormalizeError> {
    let t = s.trim();
    let err = || NormalizeError::NotADate(s.to_string());
    let parts: Vec<&str> = t.split('-').collect();
    if parts.len() == 3 && parts[0].len() == 4 {
        let (y, m, d) = (
            parse_int::<i32>(parts[0], 4).ok_or_else(err)?,
            parse_int::<u32>(parts[1], 2).ok_or_else(err)?,
            parse_int::<u32>(parts[2], 2).ok_or_else(err)?,
        );
        return ymd(y, m, d).ok_or_else(err);
    }
    let parts: Vec<&str> = t.split('/').collect();
    if parts.len() == 3 {
        let a = parse_int::<u32>(parts[0], 2).ok_or_else(err)?;
        let b = parse_int::<u32>(parts[1], 2).ok_or_else(err)?;
        let y = parse_int::<i32>(parts[2], 4).filter(|_| parts[2].len() == 4).ok_or_else(err)?;
        return ymd(y, a, b).or_else(|| ymd(y, b, a)).ok_or_else(err);
    }
    // Month D, YYYY
    let words: Vec<&str> = t.split(|c: char| c.is_whitespace() || c == ',').filter(|w| !w.is_empty()).collect();
    if words.len() == 3 {
        let m = month_number(words[0]).ok_or_else(err)?;
        let d = parse_int::<u32>(words[1].trim_end_matches(|c: char| c.is_ascii_alphabetic()), 2).ok_or_else(err)?;
        let y = parse_int::<i32>(words[2], 4).ok_or_else(err)?;
        return ymd(y, m, d).ok_or_else(err);
    }
    Err(err())
}
