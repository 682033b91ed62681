//! Canonical text encoding.
//!
//! Every record is written as a compact JSON object whose first field is the
//! format version `"fmt":"1"`, followed by the remaining fields with keys in
//! lexicographic byte order at every nesting level. Byte fields are lowercase
//! hex, integers are decimal, and there is no insignificant whitespace. The
//! same bytes are what gets signed, hashed and persisted, so any two
//! implementations that agree on this encoding agree on every signature.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub const FORMAT_VERSION: &str = "1";
const FMT_KEY: &str = "fmt";

#[derive(Debug, thiserror::Error)]
pub enum CanonicalError {
    #[error("value is not representable: {0}")]
    Unrepresentable(String),
    #[error("top-level value must be a map")]
    NotAMap,
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("unsupported format version {0:?}")]
    Version(Option<String>),
    #[error("record is not in canonical form")]
    NotCanonical,
}

/// Serializes `value` canonically, dropping the top-level fields named in
/// `exclude` (used to strip a record's own signature from its signing
/// payload).
pub fn to_bytes_excluding<T: Serialize + ?Sized>(value: &T, exclude: &[&str]) -> Result<Vec<u8>, CanonicalError> {
    let value = serde_json::to_value(value).map_err(|e| CanonicalError::Unrepresentable(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(CanonicalError::NotAMap);
    };
    let mut keys: Vec<&String> = map
        .keys()
        .filter(|k| k.as_str() != FMT_KEY && !exclude.contains(&k.as_str()))
        .collect();
    keys.sort();

    let mut out = Vec::with_capacity(256);
    out.extend_from_slice(br#"{"fmt":"1""#);
    for k in keys {
        out.push(b',');
        write_string(&mut out, k);
        out.push(b':');
        write_value(&mut out, &map[k])?;
    }
    out.push(b'}');
    Ok(out)
}

pub fn to_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    to_bytes_excluding(value, &[])
}

/// Canonical text as a `String` (the encoding is always valid UTF-8).
pub fn to_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    Ok(String::from_utf8(to_bytes(value)?).expect("canonical encoding is UTF-8"))
}

/// Parses a canonical record, checking the format version. Field order and
/// whitespace are not enforced; see [`from_bytes_strict`].
pub fn from_bytes<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CanonicalError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| CanonicalError::Malformed(e.to_string()))?;
    let Value::Object(mut map) = value else {
        return Err(CanonicalError::NotAMap);
    };
    match map.remove(FMT_KEY) {
        Some(Value::String(v)) if v == FORMAT_VERSION => {}
        Some(Value::String(v)) => return Err(CanonicalError::Version(Some(v))),
        _ => return Err(CanonicalError::Version(None)),
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| CanonicalError::Malformed(e.to_string()))
}

/// Parses a record and additionally requires `bytes` to be exactly its
/// canonical re-encoding, so that no two byte strings decode to one record.
pub fn from_bytes_strict<T: DeserializeOwned + Serialize>(bytes: &[u8]) -> Result<T, CanonicalError> {
    let parsed: T = from_bytes(bytes)?;
    if to_bytes(&parsed)? != bytes {
        return Err(CanonicalError::NotCanonical);
    }
    Ok(parsed)
}

fn write_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(serde_json::to_string(s).expect("string serialization is infallible").as_bytes());
}

fn write_value(out: &mut Vec<u8>, value: &Value) -> Result<(), CanonicalError> {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push(b'{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(out, k);
                out.push(b':');
                write_value(out, &map[k])?;
            }
            out.push(b'}');
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(out, item)?;
            }
            out.push(b']');
        }
        Value::Number(n) => {
            if n.as_f64().is_some_and(|f| !f.is_finite()) {
                return Err(CanonicalError::Unrepresentable("non-finite number".into()));
            }
            out.extend_from_slice(n.to_string().as_bytes());
        }
        Value::String(s) => write_string(out, s),
        Value::Bool(b) => out.extend_from_slice(if *b { b"true" } else { b"false" }),
        Value::Null => out.extend_from_slice(b"null"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use std::collections::HashMap;

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    struct Sample {
        zeta: u64,
        alpha: String,
        nested: HashMap<String, f64>,
    }

    fn sample() -> Sample {
        let mut nested = HashMap::new();
        nested.insert("b".into(), 0.25);
        nested.insert("a".into(), 1.0);
        Sample { zeta: 42, alpha: "x y".into(), nested }
    }

    #[test]
    fn fmt_leads_and_keys_sorted() {
        let s = to_string(&sample()).unwrap();
        assert_eq!(s, r#"{"fmt":"1","alpha":"x y","nested":{"a":1.0,"b":0.25},"zeta":42}"#);
    }

    #[test]
    fn excluded_fields_dropped() {
        let s = String::from_utf8(to_bytes_excluding(&sample(), &["nested"]).unwrap()).unwrap();
        assert_eq!(s, r#"{"fmt":"1","alpha":"x y","zeta":42}"#);
    }

    #[test]
    fn strict_parse_rejects_whitespace_and_reordering() {
        let canonical = to_bytes(&sample()).unwrap();
        let back: Sample = from_bytes_strict(&canonical).unwrap();
        assert_eq!(back, sample());

        let spaced = br#"{"fmt":"1", "alpha":"x y","nested":{"a":1.0,"b":0.25},"zeta":42}"#;
        assert!(from_bytes::<Sample>(spaced).is_ok());
        assert!(matches!(from_bytes_strict::<Sample>(spaced), Err(CanonicalError::NotCanonical)));

        let exp = br#"{"fmt":"1","alpha":"x y","nested":{"a":1.0,"b":2.5E-1},"zeta":42}"#;
        assert!(matches!(from_bytes_strict::<Sample>(exp), Err(CanonicalError::NotCanonical)));
    }

    #[test]
    fn version_checked() {
        let bad = br#"{"fmt":"2","alpha":"","nested":{},"zeta":1}"#;
        assert!(matches!(from_bytes::<Sample>(bad), Err(CanonicalError::Version(Some(_)))));
        let missing = br#"{"alpha":"","nested":{},"zeta":1}"#;
        assert!(matches!(from_bytes::<Sample>(missing), Err(CanonicalError::Version(None))));
    }
}
