//! Length-prefixed byte framing used for session payloads and collector
//! states.
//!
//! A frame is a sequence of fields, each written as a little-endian `u32`
//! length followed by the raw bytes. The encoding is canonical: a given
//! list of fields has exactly one encoding.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated frame at offset {0}")]
    Truncated(usize),
    #[error("expected {expected} fields, found {found}")]
    Arity { expected: usize, found: usize },
}

pub fn encode<I, F>(fields: I) -> Vec<u8>
where
    I: IntoIterator<Item = F>,
    F: AsRef<[u8]>,
{
    let mut out = Vec::new();
    for field in fields {
        let field = field.as_ref();
        out.extend_from_slice(&(field.len() as u32).to_le_bytes());
        out.extend_from_slice(field);
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Vec<u8>>, WireError> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let header = bytes
            .get(pos..pos + 4)
            .ok_or(WireError::Truncated(pos))?;
        let len = u32::from_le_bytes(header.try_into().unwrap()) as usize;
        pos += 4;
        let body = bytes
            .get(pos..pos + len)
            .ok_or(WireError::Truncated(pos))?;
        fields.push(body.to_vec());
        pos += len;
    }
    Ok(fields)
}

/// Decodes a frame that must contain exactly `N` fields.
pub fn decode_exact<const N: usize>(bytes: &[u8]) -> Result<[Vec<u8>; N], WireError> {
    let fields = decode(bytes)?;
    let found = fields.len();
    fields
        .try_into()
        .map_err(|_| WireError::Arity { expected: N, found })
}
