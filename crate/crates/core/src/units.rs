//! Numbers with optional unit suffixes, e.g. `0.65`, `"650 kW"`, `"1 ms"`.
//! Each field declares its canonical unit; values are stored in that unit.

use serde::de::{self, Deserializer, Visitor};
use std::fmt;

struct UnitVisitor {
    canonical: &'static str,
    table: &'static [(&'static str, f64)],
}

impl Visitor<'_> for UnitVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a number or a string like \"1.0 {}\"", self.canonical)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
        Ok(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_str<E: de::Error>(self, s: &str) -> Result<f64, E> {
        parse(s, self.table).ok_or_else(|| {
            let allowed: Vec<&str> = self.table.iter().map(|(u, _)| *u).collect();
            E::custom(format!(
                "cannot read \"{s}\" as a quantity in {}",
                allowed.join(", ")
            ))
        })
    }
}

fn parse(s: &str, table: &[(&str, f64)]) -> Option<f64> {
    let s = s.trim();
    let split = s
        // 'e' belongs to the exponent; no unit starts with it.
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let value: f64 = num.trim().parse().ok()?;
    let unit = unit.trim();
    let factor = if unit.is_empty() {
        1.0
    } else {
        table.iter().find(|(u, _)| *u == unit)?.1
    };
    let out = value * factor;
    out.is_finite().then_some(out)
}

fn with_table<'de, D: Deserializer<'de>>(
    d: D,
    canonical: &'static str,
    table: &'static [(&'static str, f64)],
) -> Result<f64, D::Error> {
    d.deserialize_any(UnitVisitor { canonical, table })
}

const SECONDS: &[(&str, f64)] = &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6)];
const MEGAWATTS: &[(&str, f64)] = &[("MW", 1.0), ("kW", 1e-3), ("W", 1e-6)];
const MEGAJOULES: &[(&str, f64)] = &[("MJ", 1.0), ("kJ", 1e-3), ("J", 1e-6)];

pub fn seconds<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    with_table(d, "s", SECONDS)
}

pub fn megawatts<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    with_table(d, "MW", MEGAWATTS)
}

pub fn megajoules<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    with_table(d, "MJ", MEGAJOULES)
}

/// Parses a `--set` override value in the given canonical unit.
pub fn parse_in(s: &str, canonical: &str) -> Option<f64> {
    let table = match canonical {
        "s" => SECONDS,
        "MW" => MEGAWATTS,
        "MJ" => MEGAJOULES,
        _ => return s.trim().parse().ok(),
    };
    parse(s, table)
}
