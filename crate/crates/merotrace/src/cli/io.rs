//! Input file formats and deterministic output helpers.
//!
//! Metric files are diff-friendly key-value text:
//!
//! ```text
//! # comment
//! N = 2
//! domain.1 = plane
//! domain.2 = disc
//! b1 = 1/u
//! a.2 = u^2+1
//! f.2 = exp(u)
//! ```
//!
//! Path files hold one leg per line, complex literals written `x+yi`:
//!
//! ```text
//! seg 0+0i 1+0i
//! arc 0+0i 1 0 3.141592653589793
//! ```
//!
//! Quadrature-class spec files use keys `N`, `h`, `f.k`, `P.k` with the
//! polynomial given as ascending comma-separated coefficients.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::continuation::{Leg, PathSpec};
use crate::expr::{parse as parse_expr, ExprNode};
use crate::metric::{FactorDomain, MetricSpec};
use crate::quad::Polynomial;
use crate::coercivity::QuadratureClassSpec;
use crate::C64;

/// Input-layer error: anything that makes the inputs unusable.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InputError(pub String);

impl InputError {
    pub fn new(msg: impl Into<String>) -> Self {
        InputError(msg.into())
    }
}

/// Parses a complex literal of the form `x+yi`, `x`, `yi`, or `i`.
pub fn parse_complex(text: &str) -> Result<C64, InputError> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err(InputError::new("empty complex literal"));
    }
    let bad = || InputError::new(format!("malformed complex literal '{text}'"));
    let parse_imag_magnitude = |m: &str| -> Result<f64, InputError> {
        match m {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            other => other.parse().map_err(|_| bad()),
        }
    };
    if let Some(body) = s.strip_suffix('i') {
        // find the sign splitting real and imaginary parts, skipping a
        // leading sign and exponent signs
        let bytes = body.as_bytes();
        let mut split = None;
        for i in (1..bytes.len()).rev() {
            let c = bytes[i];
            if (c == b'+' || c == b'-') && !matches!(bytes[i - 1], b'e' | b'E') {
                split = Some(i);
                break;
            }
        }
        match split {
            Some(i) => {
                let re: f64 = body[..i].parse().map_err(|_| bad())?;
                let im = parse_imag_magnitude(&body[i..])?;
                Ok(C64::new(re, im))
            }
            None => Ok(C64::new(0.0, parse_imag_magnitude(body)?)),
        }
    } else {
        let re: f64 = s.parse().map_err(|_| bad())?;
        Ok(C64::new(re, 0.0))
    }
}

/// Parses a comma-separated tuple of complex literals.
pub fn parse_point(text: &str) -> Result<Vec<C64>, InputError> {
    text.split(',').map(parse_complex).collect()
}

fn key_value_lines(text: &str) -> Result<BTreeMap<String, String>, InputError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(InputError::new(format!(
                "line {}: expected 'key = value', got '{line}'",
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn take(map: &mut BTreeMap<String, String>, key: &str) -> Result<String, InputError> {
    map.remove(key)
        .ok_or_else(|| InputError::new(format!("missing key '{key}'")))
}

fn parse_expr_value(key: &str, value: &str) -> Result<ExprNode, InputError> {
    parse_expr(value).map_err(|e| InputError::new(format!("{key}: {e}")))
}

/// Parses the metric key-value format into a [`MetricSpec`].
pub fn parse_metric_file(text: &str) -> Result<MetricSpec, InputError> {
    let mut map = key_value_lines(text)?;
    let n: usize = take(&mut map, "N")?
        .parse()
        .map_err(|_| InputError::new("N must be a positive integer"))?;
    if n < 2 {
        return Err(InputError::new("N must be at least 2"));
    }
    let mut domains = Vec::with_capacity(n);
    for i in 1..=n {
        let d = map
            .remove(&format!("domain.{i}"))
            .unwrap_or_else(|| "plane".to_string());
        domains.push(match d.as_str() {
            "plane" => FactorDomain::Plane,
            "disc" => FactorDomain::UnitDisc,
            other => {
                return Err(InputError::new(format!(
                    "domain.{i}: expected 'plane' or 'disc', got '{other}'"
                )))
            }
        });
    }
    let b1 = parse_expr_value("b1", &take(&mut map, "b1")?)?;
    let mut warp = Vec::with_capacity(n - 1);
    let mut fiber = Vec::with_capacity(n - 1);
    for k in 2..=n {
        warp.push(parse_expr_value(
            &format!("a.{k}"),
            &take(&mut map, &format!("a.{k}"))?,
        )?);
        fiber.push(parse_expr_value(
            &format!("f.{k}"),
            &take(&mut map, &format!("f.{k}"))?,
        )?);
    }
    if let Some(extra) = map.keys().next() {
        return Err(InputError::new(format!("unknown key '{extra}'")));
    }
    MetricSpec::new(domains, b1, warp, fiber).map_err(|e| InputError::new(e.to_string()))
}

/// Parses the leg-per-line path format.
pub fn parse_path_file(text: &str) -> Result<PathSpec, InputError> {
    let mut legs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: &str| InputError::new(format!("line {}: {msg}", lineno + 1));
        match fields[0] {
            "seg" => {
                if fields.len() != 3 {
                    return Err(err("seg needs exactly two complex endpoints"));
                }
                legs.push(Leg::Segment {
                    from: parse_complex(fields[1])?,
                    to: parse_complex(fields[2])?,
                });
            }
            "arc" => {
                if fields.len() != 5 {
                    return Err(err("arc needs center, radius, and two angles"));
                }
                let radius: f64 = fields[2]
                    .parse()
                    .map_err(|_| err("radius must be a real number"))?;
                let angle_from: f64 = fields[3]
                    .parse()
                    .map_err(|_| err("angle must be a real number"))?;
                let angle_to: f64 = fields[4]
                    .parse()
                    .map_err(|_| err("angle must be a real number"))?;
                legs.push(Leg::Arc {
                    center: parse_complex(fields[1])?,
                    radius,
                    angle_from,
                    angle_to,
                });
            }
            other => return Err(err(&format!("unknown leg kind '{other}'"))),
        }
    }
    PathSpec::new(legs).map_err(|e| InputError::new(e.to_string()))
}

/// Parses the quadrature-class spec format.
pub fn parse_class_spec_file(text: &str) -> Result<QuadratureClassSpec, InputError> {
    let mut map = key_value_lines(text)?;
    let n: usize = take(&mut map, "N")?
        .parse()
        .map_err(|_| InputError::new("N must be a positive integer"))?;
    if n < 2 {
        return Err(InputError::new("N must be at least 2"));
    }
    let h = parse_expr_value("h", &take(&mut map, "h")?)?;
    let mut f = Vec::with_capacity(n - 1);
    let mut p = Vec::with_capacity(n - 1);
    for k in 2..=n {
        f.push(parse_expr_value(
            &format!("f.{k}"),
            &take(&mut map, &format!("f.{k}"))?,
        )?);
        let coeffs = take(&mut map, &format!("P.{k}"))?;
        let coeffs: Result<Vec<C64>, _> = coeffs.split(',').map(parse_complex).collect();
        p.push(Polynomial::new(coeffs?));
    }
    if let Some(extra) = map.keys().next() {
        return Err(InputError::new(format!("unknown key '{extra}'")));
    }
    Ok(QuadratureClassSpec::on_planes(h, f, p))
}

/// 17-significant-digit float formatting: round-trip exact for binary64
/// and byte-stable across runs.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    format!("{x:.16e}")
}

/// Writes a file atomically: temp file in the same directory plus rename.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.tmp", e.to_string_lossy()),
        None => "tmp".to_string(),
    });
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

/// Minimal JSON string escaping for embedded config values.
pub fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}
