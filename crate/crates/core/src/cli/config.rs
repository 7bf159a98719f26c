//! Flat `key = value` configuration files with `#` comments.

use std::collections::BTreeMap;

/// Parses `text` into a key-value map. Later duplicates override earlier ones.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(head, _)| head).trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Parses a comma-separated list, or `start:step:end` (inclusive) when the
/// value contains colons.
pub fn parse_values(text: &str) -> Result<Vec<f64>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    if text.contains(':') {
        let parts: Vec<f64> = text.split(':').map(parse_f64).collect::<Result<_, _>>()?;
        let &[start, step, end] = parts.as_slice() else {
            return Err(format!("range `{text}` must have the form start:step:end"));
        };
        if step <= 0.0 || end < start {
            return Err(format!(
                "range `{text}` needs a positive step and end >= start"
            ));
        }
        let count = ((end - start) / step + 1e-9).floor() as usize;
        return Ok((0..=count)
            .map(|i| {
                let v = start + i as f64 * step;
                super::fmt_sig(v).parse().unwrap_or(v)
            })
            .collect());
    }
    text.split(',').map(parse_f64).collect()
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let s = s.trim();
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a finite number")),
    }
}

pub fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(format!("`{other}` is not a boolean")),
    }
}
