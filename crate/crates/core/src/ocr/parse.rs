//! Text-to-value conversion for recognised HUD fields.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roi::RoiKind;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ParseError {
    #[error("empty after stripping units")]
    Empty,
    #[error("invalid characters in {text:?}")]
    CharInvalid { text: String },
    #[error("{value} outside [{min}, {max}]")]
    RangeInvalid { value: f64, min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Degrees,
    Meters,
    KilometersPerHour,
    MetersPerSecond,
    Percent,
    Volts,
    MilliampHours,
    Unitless,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParsedValue {
    pub value: f64,
    pub unit: Unit,
}

pub const ALTITUDE_RANGE_M: (f64, f64) = (-500.0, 10_000.0);
pub const SPEED_RANGE_KMH: (f64, f64) = (0.0, 500.0);
pub const VSPEED_RANGE_MS: (f64, f64) = (-100.0, 100.0);
pub const BATTERY_PERCENT_RANGE: (f64, f64) = (0.0, 100.0);
pub const BATTERY_VOLT_RANGE: (f64, f64) = (0.0, 30.0);

/// Removes one matching suffix (ASCII case-insensitive).
fn strip_suffix<'a>(s: &'a str, suffixes: &[&str]) -> (&'a str, Option<usize>) {
    for (i, suf) in suffixes.iter().enumerate() {
        if s.len() >= suf.len() {
            let cut = s.len() - suf.len();
            if s.is_char_boundary(cut) && s[cut..].eq_ignore_ascii_case(suf) {
                return (&s[..cut], Some(i));
            }
        }
    }
    (s, None)
}

/// Strips whitespace and units and inserts the decimal point for
/// coordinates. Returns the numeric text and the unit it represents.
pub fn normalize_text(kind: &RoiKind, raw: &str, int_digits: Option<u32>) -> Result<(String, Unit), ParseError> {
    let compact: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
    let (body, unit) = match kind {
        RoiKind::Latitude | RoiKind::Longitude => (strip_suffix(&compact, &["°"]).0, Unit::Degrees),
        RoiKind::Altitude => (strip_suffix(&compact, &["m"]).0, Unit::Meters),
        RoiKind::AirSpeed => (strip_suffix(&compact, &["km/h", "kmh", "kph"]).0, Unit::KilometersPerHour),
        RoiKind::VerticalSpeed => (strip_suffix(&compact, &["m/s"]).0, Unit::MetersPerSecond),
        RoiKind::Battery => match strip_suffix(&compact, &["%", "V"]) {
            (b, Some(1)) => (b, Unit::Volts),
            (b, _) => (b, Unit::Percent),
        },
        RoiKind::CapacityUsed => (strip_suffix(&compact, &["mAh", "mh"]).0, Unit::MilliampHours),
        RoiKind::Auxiliary(_) => (
            compact.trim_end_matches(|c: char| c.is_alphabetic() || c == '%' || c == '/'),
            Unit::Unitless,
        ),
    };
    if body.is_empty() {
        return Err(ParseError::Empty);
    }
    let invalid = || ParseError::CharInvalid { text: raw.to_string() };
    let (sign, digits) = match body.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", body),
    };
    if digits.is_empty()
        || !digits.chars().all(|c| c.is_ascii_digit() || c == '.')
        || digits.matches('.').count() > 1
        || !digits.chars().any(|c| c.is_ascii_digit())
    {
        return Err(invalid());
    }
    let mut text = format!("{sign}{digits}");
    if kind.is_coordinate() && !digits.contains('.') {
        if let Some(n) = int_digits {
            let n = n as usize;
            if digits.len() > n {
                text = format!("{sign}{}.{}", &digits[..n], &digits[n..]);
            }
        }
    }
    Ok((text, unit))
}

/// Parses a recognised field into a typed value with range checks.
pub fn parse_value(kind: &RoiKind, raw: &str, int_digits: Option<u32>) -> Result<ParsedValue, ParseError> {
    let (text, unit) = normalize_text(kind, raw, int_digits)?;
    let value: f64 = text
        .parse()
        .map_err(|_| ParseError::CharInvalid { text: raw.to_string() })?;
    let range = match (kind, unit) {
        (RoiKind::Latitude, _) => Some((-90.0, 90.0)),
        (RoiKind::Longitude, _) => Some((-180.0, 180.0)),
        (RoiKind::Altitude, _) => Some(ALTITUDE_RANGE_M),
        (RoiKind::AirSpeed, _) => Some(SPEED_RANGE_KMH),
        (RoiKind::VerticalSpeed, _) => Some(VSPEED_RANGE_MS),
        (RoiKind::Battery, Unit::Volts) => Some(BATTERY_VOLT_RANGE),
        (RoiKind::Battery, _) => Some(BATTERY_PERCENT_RANGE),
        (RoiKind::CapacityUsed, _) => Some((0.0, f64::INFINITY)),
        (RoiKind::Auxiliary(_), _) => None,
    };
    if let Some((min, max)) = range {
        if !(min..=max).contains(&value) {
            return Err(ParseError::RangeInvalid { value, min, max });
        }
    }
    Ok(ParsedValue { value, unit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decimal_insertion() {
        let v = parse_value(&RoiKind::Latitude, "46123456", Some(2)).unwrap();
        assert_eq!(v.value, 46.123456);
        assert_eq!(parse_value(&RoiKind::Longitude, "-0751234", Some(3)).unwrap().value, -75.1234);
        // an explicit point wins
        assert_eq!(parse_value(&RoiKind::Latitude, "4.6123", Some(2)).unwrap().value, 4.6123);
    }

    #[test]
    fn unit_suffixes() {
        let alt = parse_value(&RoiKind::Altitude, "1501m", None).unwrap();
        assert_eq!((alt.value, alt.unit), (1501.0, Unit::Meters));
        assert_eq!(parse_value(&RoiKind::AirSpeed, " 67 km/h", None).unwrap().value, 67.0);
        assert_eq!(parse_value(&RoiKind::VerticalSpeed, "-2.5", None).unwrap().value, -2.5);
        let pct = parse_value(&RoiKind::Battery, "87%", None).unwrap();
        assert_eq!((pct.value, pct.unit), (87.0, Unit::Percent));
        let volts = parse_value(&RoiKind::Battery, "16.2V", None).unwrap();
        assert_eq!((volts.value, volts.unit), (16.2, Unit::Volts));
        assert_eq!(parse_value(&RoiKind::CapacityUsed, "850mAh", None).unwrap().value, 850.0);
        assert_eq!(parse_value(&RoiKind::Auxiliary("rssi".into()), "-71dB", None).unwrap().value, -71.0);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(
            parse_value(&RoiKind::Longitude, "195.0", Some(3)),
            Err(ParseError::RangeInvalid { .. })
        ));
        assert!(matches!(
            parse_value(&RoiKind::Latitude, "4A.12", Some(2)),
            Err(ParseError::CharInvalid { .. })
        ));
        assert_eq!(parse_value(&RoiKind::Altitude, " m ", None), Err(ParseError::Empty));
        assert!(matches!(parse_value(&RoiKind::Altitude, "-", None), Err(ParseError::CharInvalid { .. })));
        assert!(matches!(parse_value(&RoiKind::Altitude, "1.2.3", None), Err(ParseError::CharInvalid { .. })));
        assert!(matches!(parse_value(&RoiKind::AirSpeed, "-5", None), Err(ParseError::RangeInvalid { .. })));
        assert!(matches!(parse_value(&RoiKind::Battery, "31V", None), Err(ParseError::RangeInvalid { .. })));
    }

    proptest! {
        #[test]
        fn never_panics(raw in "\\PC{0,12}", digits in prop::option::of(0u32..5)) {
            let _ = parse_value(&RoiKind::Latitude, &raw, digits);
            let _ = parse_value(&RoiKind::Battery, &raw, None);
            let _ = parse_value(&RoiKind::Auxiliary("x".into()), &raw, None);
        }

        #[test]
        fn insertion_keeps_digit_order(neg in any::<bool>(), body in "[0-9]{1,10}", n in 1u32..=3) {
            let raw = format!("{}{body}", if neg { "-" } else { "" });
            let (text, _) = normalize_text(&RoiKind::Longitude, &raw, Some(n)).unwrap();
            let digits: String = text.chars().filter(|c| c.is_ascii_digit()).collect();
            prop_assert_eq!(digits, body);
        }
    }
}
