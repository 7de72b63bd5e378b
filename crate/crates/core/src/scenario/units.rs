//! Unit-suffixed quantities in config documents.
//!
//! Values are either bare numbers (already SI) or strings of the form
//! `"<number> <unit>"`. Every quantity is converted to SI on load.

use crate::{Error, Result};

/// Physical dimension a config key is expected to carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Power,
    Time,
    Energy,
    Rate,
    Distance,
    /// Linear ratio; accepts a `dB` suffix.
    Ratio,
    /// Kept in dB; accepts an optional `dB` suffix.
    Decibels,
    /// Plain number, no suffix allowed.
    Dimensionless,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts `value <unit>` to SI for the given quantity.
pub fn to_si(key: &str, value: f64, unit: &str, quantity: Quantity) -> Result<f64> {
    use Quantity::*;
    let unknown = || Error::UnknownUnit {
        key: key.to_string(),
        unit: unit.to_string(),
    };
    let si = match (quantity, unit) {
        (_, "") => value,
        (Power, "W") => value,
        (Power, "mW") => value * 1e-3,
        (Power, "uW" | "μW" | "µW") => value * 1e-6,
        (Power, "dBm") => dbm_to_watts(value),
        (Power, "dBW") => db_to_linear(value),
        (Time, "s") => value,
        (Time, "ms") => value * 1e-3,
        (Time, "us" | "μs" | "µs") => value * 1e-6,
        (Energy, "J") => value,
        (Energy, "mJ") => value * 1e-3,
        (Energy, "uJ" | "μJ" | "µJ") => value * 1e-6,
        (Rate, "bps" | "bit/s") => value,
        (Rate, "Kbps" | "kbps") => value * 1e3,
        (Rate, "Mbps") => value * 1e6,
        (Rate, "Hz" | "cps") => value,
        (Rate, "KHz" | "kHz" | "Kcps" | "kcps") => value * 1e3,
        (Rate, "MHz" | "Mcps") => value * 1e6,
        (Distance, "m") => value,
        (Distance, "km") => value * 1e3,
        (Ratio, "dB") => db_to_linear(value),
        (Decibels, "dB") => value,
        _ => return Err(unknown()),
    };
    Ok(si)
}

/// Splits `"9 dBm"` into `(9.0, "dBm")`. A missing space is accepted.
pub fn split_number_unit(key: &str, text: &str) -> Result<(f64, String)> {
    let text = text.trim();
    let end = text
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-' && (i == 0 || matches!(text.as_bytes()[i - 1], b'e' | b'E'))
                || (c == 'e' || c == 'E') && i > 0)
        })
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(end);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::invalid(key, text, "expected `<number> <unit>`"))?;
    Ok((value, unit.trim().to_string()))
}
