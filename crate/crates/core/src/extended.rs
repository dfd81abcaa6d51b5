//! Non-negative reals extended with an explicit `+∞` state.
//!
//! Rates saturate to `+∞` outside the empirical domain. Keeping that as an
//! enum variant instead of `f64::INFINITY` keeps serialized output
//! unambiguous: finite values are JSON numbers, infinity is the string `"inf"`.

use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A real value or the `+∞` marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub const INF_LITERAL: &'static str = "inf";

    pub fn is_infinite(&self) -> bool {
        matches!(self, Extended::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    /// Lossy view as `f64`, mapping the marker to `f64::INFINITY`.
    pub fn to_f64(&self) -> f64 {
        match *self {
            Extended::Finite(v) => v,
            Extended::Infinite => f64::INFINITY,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v == f64::INFINITY {
            Extended::Infinite
        } else {
            Extended::Finite(v)
        }
    }

    /// Renders finite values with 17 significant digits, infinity as `inf`.
    pub fn render(&self) -> String {
        match *self {
            Extended::Finite(v) => render_f64(v),
            Extended::Infinite => Self::INF_LITERAL.to_string(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case(Self::INF_LITERAL) || s.eq_ignore_ascii_case("+inf") {
            return Some(Extended::Infinite);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Extended::Finite)
    }
}

impl PartialOrd for Extended {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => f.write_str(Self::INF_LITERAL),
        }
    }
}

/// 17 significant digits in scientific notation; parses back to the same bits.
pub fn render_f64(v: f64) -> String {
    if v == 0.0 {
        // avoid "-0.0000000000000000e0"
        return "0.0000000000000000e0".to_string();
    }
    format!("{v:.16e}")
}

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match *self {
            Extended::Finite(v) => serializer.serialize_f64(v),
            Extended::Infinite => serializer.serialize_str(Self::INF_LITERAL),
        }
    }
}

impl<'de> Deserialize<'de> for Extended {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ExtendedVisitor;

        impl Visitor<'_> for ExtendedVisitor {
            type Value = Extended;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Extended, E> {
                Ok(Extended::Finite(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Extended, E> {
                Ok(Extended::Finite(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Extended, E> {
                Ok(Extended::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Extended, E> {
                Extended::parse(v).ok_or_else(|| E::invalid_value(de::Unexpected::Str(v), &self))
            }
        }

        deserializer.deserialize_any(ExtendedVisitor)
    }
}

/// Serde adapter for plain `f64` fields that may hold `+∞`.
pub mod f64_or_inf {
    use super::Extended;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        Extended::from_f64(*v).serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        Extended::deserialize(deserializer).map(|e| e.to_f64())
    }
}
