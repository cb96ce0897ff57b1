//! Durations at the config boundary: a bare number is seconds, a string
//! must carry an explicit unit suffix.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Seconds(pub f64);

impl Seconds {
    pub fn get(self) -> f64 {
        self.0
    }

    pub fn ns(v: f64) -> Self {
        Seconds(v / 1e9)
    }
}

/// Unit suffixes and their count per second. Dividing by an exact power
/// of ten gives the same double as the literal (`"6ns"` is `6e-9`).
const SUFFIXES: [(&str, f64); 5] = [("ns", 1e9), ("us", 1e6), ("µs", 1e6), ("ms", 1e3), ("s", 1.0)];

/// Parses `"15ns"`, `"2.5 us"`, `"1e-3 s"` and similar.
pub fn parse_seconds(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let (number, per_second) = SUFFIXES
        .iter()
        .find_map(|&(suffix, per)| t.strip_suffix(suffix).map(|n| (n.trim_end(), per)))
        .ok_or_else(|| format!("time {text:?} needs a unit suffix (ns, us, ms or s)"))?;
    let value: f64 = number
        .parse()
        .map_err(|_| format!("time {text:?} is not a number with a unit"))?;
    if !value.is_finite() {
        return Err(format!("time {text:?} is not finite"));
    }
    Ok(value / per_second)
}

impl Serialize for Seconds {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Seconds {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct SecondsVisitor;

        impl Visitor<'_> for SecondsVisitor {
            type Value = Seconds;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("seconds as a number, or a string with a unit suffix such as \"15ns\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Seconds, E> {
                Ok(Seconds(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Seconds, E> {
                Ok(Seconds(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Seconds, E> {
                Ok(Seconds(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Seconds, E> {
                parse_seconds(v).map(Seconds).map_err(E::custom)
            }
        }

        d.deserialize_any(SecondsVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes() {
        assert_eq!(parse_seconds("15ns").unwrap(), 15e-9);
        assert_eq!(parse_seconds("6ns").unwrap(), 6e-9);
        assert_eq!(Seconds::ns(66.0), Seconds(66e-9));
        assert_eq!(parse_seconds(" 2.5 us").unwrap(), 2.5e-6);
        assert_eq!(parse_seconds("3µs").unwrap(), 3e-6);
        assert_eq!(parse_seconds("1e-3 s").unwrap(), 1e-3);
        assert_eq!(parse_seconds("20ms").unwrap(), 0.02);
    }

    #[test]
    fn bare_strings_and_junk_rejected() {
        for bad in ["15", "ns", "fifteen ns", "inf s", ""] {
            assert!(parse_seconds(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn json_forms() {
        let v: Vec<Seconds> = serde_json::from_str(r#"[1, 2.5, "26ns", -3]"#).unwrap();
        assert_eq!(v, vec![Seconds(1.0), Seconds(2.5), Seconds(26e-9), Seconds(-3.0)]);
        assert!(serde_json::from_str::<Seconds>(r#""26""#).is_err());
        assert!(serde_json::from_str::<Seconds>("true").is_err());
        assert_eq!(serde_json::to_string(&Seconds(26e-9)).unwrap(), "2.6e-8");
    }
}
