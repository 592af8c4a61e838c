//! JSON helpers shared by every emitted artifact.
//!
//! Floats are rounded to 12 significant digits before serialization. Rounding
//! is idempotent, so parsing an emitted file and writing it again reproduces
//! the same bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::marker::PhantomData;
use std::str::FromStr;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::de::{self, Visitor};
use serde::{Deserializer, Serializer};

/// Rounds `x` to 12 significant decimal digits.
pub fn round12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        // collapses -0.0 as well
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

pub fn f64_12<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round12(*x))
}

pub fn vec_f64_12<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for x in xs {
        seq.serialize_element(&round12(*x))?;
    }
    seq.end()
}

pub fn map_f64_12<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        map.serialize_entry(k, &round12(*v))?;
    }
    map.end()
}

pub fn map_vec_f64_12<S: Serializer>(
    m: &BTreeMap<String, Vec<f64>>,
    s: S,
) -> Result<S::Ok, S::Error> {
    struct Row<'a>(&'a [f64]);
    impl serde::Serialize for Row<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            vec_f64_12(self.0, s)
        }
    }
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        map.serialize_entry(k, &Row(v))?;
    }
    map.end()
}

/// Deserializes a string through `FromStr`. Errors are raised while the
/// parser still points at the offending value, so line numbers are accurate.
pub fn deserialize_from_str<'de, D, T>(d: D) -> Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: fmt::Display,
{
    struct StrVisitor<T>(PhantomData<T>);
    impl<T> Visitor<'_> for StrVisitor<T>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        type Value = T;
        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a string")
        }
        fn visit_str<E: de::Error>(self, s: &str) -> Result<T, E> {
            s.parse().map_err(E::custom)
        }
    }
    d.deserialize_str(StrVisitor(PhantomData))
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_pretty<T: serde::Serialize>(value: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rounding() {
        assert_eq!(round12(0.1 + 0.2), 0.3);
        assert_eq!(round12(-0.0), 0.0);
        assert_eq!(round12(0.25), 0.25);
        assert_eq!(round12(1.0 / 3.0), 0.333333333333);
    }

    proptest! {
        #[test]
        fn round12_is_idempotent(x in -1e6f64..1e6) {
            let once = round12(x);
            prop_assert_eq!(round12(once), once);
            let text = serde_json::to_string(&once).unwrap();
            let back: f64 = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, once);
        }
    }
}
