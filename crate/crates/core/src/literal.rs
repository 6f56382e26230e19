//! Text form of a configuration: `ALIGN:TYPE:VALUE` items joined by `;`.
//!
//! `P:C:1m;S:R:1;S:L:0.5u` is a 1 mF shunt capacitor, a 1 Ω series resistor
//! and a 0.5 µH series inductor. Values accept an optional SI suffix.

use std::fmt;
use std::str::FromStr;

use crate::circuit::{Alignment, Component, ComponentType, Configuration};
use crate::error::{Error, Result};

fn bad(token: &str, reason: impl Into<String>) -> Error {
    Error::Literal {
        token: token.to_string(),
        reason: reason.into(),
    }
}

/// Parses a decimal with an optional SI suffix (`f p n u µ m k M G`).
pub fn parse_si(token: &str) -> Result<f64> {
    let t = token.trim();
    let (num, scale): (&str, Option<f64>) = match t.char_indices().last() {
        Some((i, ch)) if ch.is_alphabetic() && !matches!(ch, 'e' | 'E') => {
            let scale = match ch {
                'f' => 1e-15,
                'p' => 1e-12,
                'n' => 1e-9,
                'u' | 'µ' | 'μ' => 1e-6,
                'm' => 1e-3,
                'k' | 'K' => 1e3,
                'M' => 1e6,
                'G' => 1e9,
                _ => return Err(bad(token, format!("unknown SI suffix `{ch}`"))),
            };
            (&t[..i], Some(scale))
        }
        _ => (t, None),
    };
    let x: f64 = num
        .parse()
        .map_err(|_| bad(token, "not a decimal number"))?;
    let x = match scale {
        // divide for sub-unit prefixes so that e.g. 1m is exactly 0.001
        Some(s) if s < 1.0 => x / (1.0 / s).round(),
        Some(s) => x * s,
        None => x,
    };
    if !(x > 0.0) || !x.is_finite() {
        return Err(bad(token, "value must be positive and finite"));
    }
    Ok(x)
}

pub fn parse_component(token: &str) -> Result<Component> {
    let parts: Vec<&str> = token.trim().split(':').collect();
    if parts.len() != 3 {
        return Err(bad(token, "expected ALIGN:TYPE:VALUE"));
    }
    let alignment = match parts[0].trim() {
        "S" | "s" => Alignment::Series,
        "P" | "p" => Alignment::Parallel,
        _ => return Err(bad(parts[0], "alignment must be S or P")),
    };
    let ctype = match parts[1].trim() {
        "R" | "r" => ComponentType::Resistor,
        "C" | "c" => ComponentType::Capacitor,
        "L" | "l" => ComponentType::Inductor,
        _ => return Err(bad(parts[1], "type must be R, C or L")),
    };
    let value = parse_si(parts[2])?;
    Component::new(alignment, ctype, value)
}

impl FromStr for Configuration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let comps = s
            .split(';')
            .filter(|t| !t.trim().is_empty())
            .map(parse_component)
            .collect::<Result<Vec<_>>>()?;
        if comps.is_empty() {
            return Err(bad(s, "empty configuration"));
        }
        Configuration::new(comps)
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.components().iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}
