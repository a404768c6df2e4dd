//! Lossless text encoding for captured byte-strings.
//!
//! Usernames, passwords and client banners arrive off the wire as raw
//! bytes and may contain anything, including invalid UTF-8. Wherever they
//! surface in a text format (CSV export, reports, structured output) they
//! are rendered with this scheme: valid UTF-8 passes through unchanged,
//! every other byte becomes `\xHH`, and a literal backslash becomes `\\`.
//! Decoding inverts the scheme exactly, so arbitrary byte-strings round
//! trip through text.

use alloc::string::String;
use alloc::vec::Vec;

const HEX: &[u8; 16] = b"0123456789abcdef";

/// Escapes raw bytes into a printable UTF-8 string.
pub fn escape_bytes(raw: &[u8]) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while !rest.is_empty() {
        match core::str::from_utf8(rest) {
            Ok(valid) => {
                push_escaped_str(&mut out, valid);
                break;
            }
            Err(err) => {
                let (valid, tail) = rest.split_at(err.valid_up_to());
                // valid_up_to guarantees this part decodes
                push_escaped_str(&mut out, core::str::from_utf8(valid).unwrap());
                let bad_len = err.error_len().unwrap_or(tail.len()).max(1);
                for &b in &tail[..bad_len.min(tail.len())] {
                    push_hex(&mut out, b);
                }
                rest = &tail[bad_len.min(tail.len())..];
            }
        }
    }
    out
}

fn push_escaped_str(out: &mut String, s: &str) {
    for ch in s.chars() {
        if ch == '\\' {
            out.push_str("\\\\");
        } else {
            out.push(ch);
        }
    }
}

fn push_hex(out: &mut String, b: u8) {
    out.push_str("\\x");
    out.push(HEX[(b >> 4) as usize] as char);
    out.push(HEX[(b & 0xf) as usize] as char);
}

/// Error from [`unescape_bytes`]: the byte offset of the malformed escape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnescapeError {
    pub offset: usize,
}

impl core::fmt::Display for UnescapeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "malformed escape sequence at byte {}", self.offset)
    }
}

/// Decodes a string produced by [`escape_bytes`] back into raw bytes.
pub fn unescape_bytes(text: &str) -> Result<Vec<u8>, UnescapeError> {
    let bytes = text.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'\\' {
            out.push(bytes[i]);
            i += 1;
            continue;
        }
        match bytes.get(i + 1) {
            Some(b'\\') => {
                out.push(b'\\');
                i += 2;
            }
            Some(b'x') | Some(b'X') => {
                let hi = bytes.get(i + 2).and_then(|&b| hex_val(b));
                let lo = bytes.get(i + 3).and_then(|&b| hex_val(b));
                match (hi, lo) {
                    (Some(h), Some(l)) => {
                        out.push((h << 4) | l);
                        i += 4;
                    }
                    _ => return Err(UnescapeError { offset: i }),
                }
            }
            _ => return Err(UnescapeError { offset: i }),
        }
    }
    Ok(out)
}

/// Unpadded base64 of arbitrary bytes (standard alphabet), as used in
/// OpenSSH-style `SHA256:` key fingerprints.
pub fn base64_nopad(data: &[u8]) -> String {
    const ALPHA: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    let mut out = String::with_capacity(data.len().div_ceil(3) * 4);
    for chunk in data.chunks(3) {
        let b0 = chunk[0] as u32;
        let b1 = chunk.get(1).copied().unwrap_or(0) as u32;
        let b2 = chunk.get(2).copied().unwrap_or(0) as u32;
        let n = (b0 << 16) | (b1 << 8) | b2;
        out.push(ALPHA[(n >> 18) as usize & 0x3f] as char);
        out.push(ALPHA[(n >> 12) as usize & 0x3f] as char);
        if chunk.len() > 1 {
            out.push(ALPHA[(n >> 6) as usize & 0x3f] as char);
        }
        if chunk.len() > 2 {
            out.push(ALPHA[n as usize & 0x3f] as char);
        }
    }
    out
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}
