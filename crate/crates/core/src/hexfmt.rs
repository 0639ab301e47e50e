//! Serde helpers rendering byte strings as lowercase hex.

use serde::Serializer;

pub fn bytes<S: Serializer>(value: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
    serializer.serialize_str(&hex::encode(value))
}

pub fn opt_bytes<S: Serializer>(value: &Option<Vec<u8>>, serializer: S) -> Result<S::Ok, S::Error> {
    match value {
        Some(v) => serializer.serialize_some(&hex::encode(v)),
        None => serializer.serialize_none(),
    }
}
