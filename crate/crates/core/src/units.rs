//! Unit handling.
//!
//! Frequencies enter and leave the toolkit as linear frequencies (Hz, MHz,
//! GHz) and live internally as angular frequencies in rad/s. Times are
//! seconds internally and nanoseconds at the file boundary. Units of ħ = 1.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Linear frequency in MHz to angular frequency in rad/s.
pub fn mhz(value: f64) -> f64 {
    TAU * value * 1e6
}

/// Linear frequency in GHz to angular frequency in rad/s.
pub fn ghz(value: f64) -> f64 {
    TAU * value * 1e9
}

/// Angular frequency (rad/s) to linear MHz.
pub fn to_mhz(angular: f64) -> f64 {
    angular / (TAU * 1e6)
}

pub fn ns(value: f64) -> f64 {
    value / 1e9
}

pub fn to_ns(seconds: f64) -> f64 {
    seconds * 1e9
}

/// Parses a frequency string with a mandatory unit suffix (`Hz`, `kHz`,
/// `MHz`, `GHz`) into an angular frequency in rad/s.
///
/// ```
/// use cqed_synth::units::{parse_frequency, mhz};
/// assert_eq!(parse_frequency("0.6 MHz").unwrap(), mhz(0.6));
/// assert!(parse_frequency("0.6").is_err());
/// ```
pub fn parse_frequency(text: &str) -> Result<f64> {
    let trimmed = text.trim();
    let split = trimmed
        .find(|c: char| c.is_ascii_alphabetic())
        .ok_or_else(|| Error::Unit(format!("`{text}` has no unit suffix (Hz, kHz, MHz, GHz)")))?;
    let (number, unit) = trimmed.split_at(split);
    let value: f64 = number
        .trim()
        .parse()
        .map_err(|_| Error::Unit(format!("`{text}` does not start with a number")))?;
    let scale = match unit.trim() {
        "Hz" => 1.0,
        "kHz" => 1e3,
        "MHz" => 1e6,
        "GHz" => 1e9,
        other => return Err(Error::Unit(format!("unknown frequency unit `{other}` in `{text}`"))),
    };
    Ok(TAU * value * scale)
}

/// Formats an angular frequency as a MHz string accepted by [`parse_frequency`].
pub fn format_mhz(angular: f64) -> String {
    format!("{} MHz", to_mhz(angular))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_suffixes() {
        assert_eq!(parse_frequency("5 GHz").unwrap(), ghz(5.0));
        assert_eq!(parse_frequency("200MHz").unwrap(), mhz(200.0));
        assert_eq!(parse_frequency("1 kHz").unwrap(), TAU * 1e3);
        assert_eq!(parse_frequency("-3 Hz").unwrap(), -TAU * 3.0);
    }

    #[test]
    fn rejects_bad_units() {
        assert!(parse_frequency("5 THz").is_err());
        assert!(parse_frequency("GHz").is_err());
        assert!(parse_frequency("12").is_err());
    }

    #[test]
    fn mhz_roundtrip() {
        let w = mhz(10.95);
        assert!((to_mhz(w) - 10.95).abs() < 1e-12);
        assert_eq!(parse_frequency(&format_mhz(w)).unwrap(), w);
    }
}
