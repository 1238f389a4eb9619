//! Deterministic encoding for signed and hashed regions.
//!
//! Values go through `serde_json::Value` and are written back out with object
//! keys in lexicographic (byte) order and no insignificant whitespace. Reals
//! never appear as JSON numbers: [`Real`] renders as a decimal string with 12
//! significant digits, and the writer rejects any floating-point number that
//! slips through.

use std::fmt;

use chrono::{DateTime, TimeZone, Utc};
use serde::de::{DeserializeOwned, Error as _};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::ProtocolError;

/// Number of significant decimal digits kept for reals in signed regions.
pub const REAL_SIGNIFICANT_DIGITS: usize = 12;

const UNREPRESENTABLE: &str = "unrepresentable real";

/// A real number as carried in signed regions.
///
/// Decoding also accepts a plain JSON number, for hand-written input.
///
/// Construction quantizes to [`REAL_SIGNIFICANT_DIGITS`] significant digits so
/// that a decoded value compares equal to the value that was encoded.
/// Non-finite values can be held but fail to serialize.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Real(f64);

impl Real {
    pub fn new(value: f64) -> Result<Self, ProtocolError> {
        if value.is_finite() {
            Ok(Self(quantize(value)))
        } else {
            Err(ProtocolError::UnrepresentableValue(value.to_string()))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<f64> for Real {
    fn from(value: f64) -> Self {
        Self(quantize(value))
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Round to [`REAL_SIGNIFICANT_DIGITS`] significant digits. Idempotent.
pub fn quantize(value: f64) -> f64 {
    if !value.is_finite() {
        return value;
    }
    format_real(value).parse().unwrap_or(value)
}

fn format_real(value: f64) -> String {
    format!("{:.*e}", REAL_SIGNIFICANT_DIGITS - 1, value)
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom(format!("{UNREPRESENTABLE}: {}", self.0)));
        }
        serializer.serialize_str(&format_real(self.0))
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Number(f64),
        }
        let value = match Repr::deserialize(deserializer)? {
            Repr::Text(text) => text
                .parse()
                .map_err(|_| D::Error::custom(format!("invalid real `{text}`")))?,
            Repr::Number(n) => n,
        };
        Real::new(value).map_err(D::Error::custom)
    }
}

/// UTC timestamp with second resolution, rendered as ISO-8601 (`...Z`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

impl Timestamp {
    pub fn now() -> Self {
        Self(Utc::now().timestamp())
    }

    pub fn from_unix(seconds: i64) -> Self {
        Self(seconds)
    }

    pub fn unix(self) -> i64 {
        self.0
    }

    pub fn to_datetime(self) -> DateTime<Utc> {
        Utc.timestamp_opt(self.0, 0).single().unwrap_or_default()
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_datetime().format("%Y-%m-%dT%H:%M:%SZ"))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        let parsed = DateTime::parse_from_rfc3339(&text)
            .map_err(|e| D::Error::custom(format!("invalid timestamp `{text}`: {e}")))?;
        Ok(Self(parsed.timestamp()))
    }
}

/// Serde adapter rendering byte vectors as standard base64 strings.
pub mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(deserializer)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }

    pub fn encode(bytes: &[u8]) -> String {
        STANDARD.encode(bytes)
    }

    pub fn decode(text: &str) -> Result<Vec<u8>, base64::DecodeError> {
        STANDARD.decode(text)
    }

    /// The same adapter for optional byte vectors.
    pub mod option {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(bytes: &Option<Vec<u8>>, serializer: S) -> Result<S::Ok, S::Error> {
            match bytes {
                Some(b) => serializer.serialize_some(&super::encode(b)),
                None => serializer.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<Vec<u8>>, D::Error> {
            Option::<String>::deserialize(deserializer)?
                .map(|t| super::decode(&t).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}

/// Encode `value` deterministically.
///
/// Equal values always produce identical bytes, independent of map insertion
/// order.
pub fn canonical_serialize<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, ProtocolError> {
    let tree = serde_json::to_value(value).map_err(|e| {
        let msg = e.to_string();
        if msg.contains(UNREPRESENTABLE) {
            ProtocolError::UnrepresentableValue(msg)
        } else {
            ProtocolError::Invalid(msg)
        }
    })?;
    let mut out = Vec::with_capacity(256);
    write_value(&tree, &mut out)?;
    Ok(out)
}

pub fn canonical_deserialize<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ProtocolError> {
    serde_json::from_slice(bytes).map_err(|e| ProtocolError::Decode(e.to_string()))
}

fn write_value(value: &Value, out: &mut Vec<u8>) -> Result<(), ProtocolError> {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => {
            if n.is_f64() {
                return Err(ProtocolError::UnrepresentableValue(format!(
                    "floating-point number {n} in signed region"
                )));
            }
            out.extend_from_slice(n.to_string().as_bytes());
        }
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out)?;
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_unstable_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (key, item)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                write_value(item, out)?;
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    // serde_json's string escaping is deterministic; reuse it.
    out.extend_from_slice(serde_json::to_string(s).expect("string serialization").as_bytes());
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, HashMap};

    use super::*;

    #[test]
    fn real_renders_twelve_significant_digits() {
        let bytes = canonical_serialize(&Real::from(0.1)).unwrap();
        assert_eq!(bytes, b"\"1.00000000000e-1\"");
        let back: Real = canonical_deserialize(&bytes).unwrap();
        assert_eq!(back, Real::from(0.1));
        let plain: Real = serde_json::from_str("0.1").unwrap();
        assert_eq!(plain, back);
    }

    #[test]
    fn quantize_is_idempotent() {
        for x in [std::f64::consts::PI, -1.0e-300, 123456789.123456789, 0.0, -0.0] {
            let q = quantize(x);
            assert_eq!(quantize(q).to_bits(), q.to_bits());
        }
    }

    #[test]
    fn nan_is_unrepresentable() {
        let mut metrics = BTreeMap::new();
        metrics.insert("auc".to_string(), Real::from(f64::NAN));
        let err = canonical_serialize(&metrics).unwrap_err();
        assert!(matches!(err, ProtocolError::UnrepresentableValue(_)));
        assert!(Real::new(f64::INFINITY).is_err());
    }

    #[test]
    fn raw_floats_are_rejected() {
        let err = canonical_serialize(&vec![1.5f64]).unwrap_err();
        assert!(matches!(err, ProtocolError::UnrepresentableValue(_)));
    }

    #[test]
    fn map_insertion_order_does_not_matter() {
        let mut a = HashMap::new();
        let mut b = HashMap::new();
        for i in 0..50 {
            a.insert(format!("k{i}"), i);
        }
        for i in (0..50).rev() {
            b.insert(format!("k{i}"), i);
        }
        assert_eq!(canonical_serialize(&a).unwrap(), canonical_serialize(&b).unwrap());
    }

    #[test]
    fn keys_are_sorted_bytewise() {
        let value = serde_json::json!({"b": 1, "a": {"z": true, "Z": null}, "aa": [1, 2]});
        let bytes = canonical_serialize(&value).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            r#"{"a":{"Z":null,"z":true},"aa":[1,2],"b":1}"#
        );
    }

    #[test]
    fn timestamp_round_trips_at_second_resolution() {
        let ts = Timestamp::from_unix(1_760_000_000);
        let bytes = canonical_serialize(&ts).unwrap();
        assert_eq!(bytes, b"\"2025-10-09T08:53:20Z\"");
        assert_eq!(canonical_deserialize::<Timestamp>(&bytes).unwrap(), ts);
    }
}
