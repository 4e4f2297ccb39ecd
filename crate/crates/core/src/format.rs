//! Fixed-precision float output for the JSON artifacts.

use serde::ser::Error as _;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// Serializes as a JSON number with exactly six decimal digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixed6(pub f64);

pub fn fixed6(x: f64) -> Fixed6 {
    Fixed6(x)
}

impl Serialize for Fixed6 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return serializer.serialize_none();
        }
        let text = format!("{:.6}", self.0);
        let raw = RawValue::from_string(text).map_err(S::Error::custom)?;
        raw.serialize(serializer)
    }
}

impl std::fmt::Display for Fixed6 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

pub fn serialize_fixed6<S: Serializer>(x: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    Fixed6(*x).serialize(serializer)
}

pub fn serialize_fixed6_vec<S: Serializer>(xs: &[f64], serializer: S) -> Result<S::Ok, S::Error> {
    let v: Vec<Fixed6> = xs.iter().copied().map(Fixed6).collect();
    v.serialize(serializer)
}
