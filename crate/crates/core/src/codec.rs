//! Base64 packing of `f64` buffers as little-endian IEEE-754 bytes.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use crate::error::{Error, Result};

pub fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

/// Decodes a base64 payload of packed `f64`s. `offset` is the byte position of
/// the payload in the enclosing file and is used for error reporting only.
pub fn decode_f64s(payload: &str, expected_len: usize, offset: usize) -> Result<Vec<f64>> {
    let bytes = STANDARD.decode(payload).map_err(|e| Error::Format {
        offset,
        message: format!("invalid base64 payload: {e}"),
    })?;
    if bytes.len() != expected_len * 8 {
        return Err(Error::Format {
            offset: offset + bytes.len().min(expected_len * 8),
            message: format!(
                "payload holds {} bytes, expected {} ({} values)",
                bytes.len(),
                expected_len * 8,
                expected_len
            ),
        });
    }
    let mut out = Vec::with_capacity(expected_len);
    for (i, chunk) in bytes.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        if !v.is_finite() {
            return Err(Error::Format {
                offset: offset + i * 8,
                message: format!("non-finite value at element {i}"),
            });
        }
        out.push(v);
    }
    Ok(out)
}

/// Locates the byte offset of `"key"` in a JSON document, for error messages.
pub(crate) fn key_offset(text: &str, key: &str) -> usize {
    text.find(&format!("\"{key}\"")).unwrap_or(0)
}

/// Converts a serde_json line/column pair into a byte offset within `text`.
pub(crate) fn json_error_offset(text: &str, err: &serde_json::Error) -> usize {
    let line = err.line();
    if line == 0 {
        return text.len();
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + err.column().saturating_sub(1)).min(text.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let values = [0.1, -0.0, 1e-300, f64::MAX, -3.5];
        let decoded = decode_f64s(&encode_f64s(&values), values.len(), 0).unwrap();
        for (a, b) in values.iter().zip(&decoded) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_short_payload_and_nan() {
        let enc = encode_f64s(&[1.0, 2.0]);
        assert!(matches!(
            decode_f64s(&enc, 3, 10),
            Err(Error::Format { offset: 26, .. })
        ));
        let nan = encode_f64s(&[1.0, f64::NAN]);
        assert!(matches!(
            decode_f64s(&nan, 2, 0),
            Err(Error::Format { offset: 8, .. })
        ));
    }
}
