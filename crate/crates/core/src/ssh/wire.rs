//! SSH wire primitives: byte, uint32, string, name-list, mpint.
//!
//! The reader returns `None` on any out-of-bounds access; callers convert
//! that into a protocol error. Nothing here panics on hostile input.

use alloc::string::String;
use alloc::vec::Vec;

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        if end > self.buf.len() {
            return None;
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Some(s)
    }

    pub fn byte(&mut self) -> Option<u8> {
        self.take(1).map(|s| s[0])
    }

    pub fn boolean(&mut self) -> Option<bool> {
        self.byte().map(|b| b != 0)
    }

    pub fn uint32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|s| u32::from_be_bytes(s.try_into().unwrap()))
    }

    pub fn string(&mut self) -> Option<&'a [u8]> {
        let len = self.uint32()? as usize;
        self.take(len)
    }

    /// Comma-separated name-list, kept as raw bytes per entry.
    pub fn name_list(&mut self) -> Option<Vec<&'a [u8]>> {
        let raw = self.string()?;
        if raw.is_empty() {
            return Some(Vec::new());
        }
        Some(raw.split(|&b| b == b',').collect())
    }
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn with_msg(msg_id: u8) -> Self {
        let mut w = Writer::default();
        w.byte(msg_id);
        w
    }

    pub fn byte(&mut self, b: u8) {
        self.buf.push(b);
    }

    pub fn boolean(&mut self, b: bool) {
        self.buf.push(u8::from(b));
    }

    pub fn uint32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn string(&mut self, s: &[u8]) {
        self.uint32(s.len() as u32);
        self.buf.extend_from_slice(s);
    }

    pub fn name_list(&mut self, names: &[&str]) {
        let joined = names.join(",");
        self.string(joined.as_bytes());
    }

    /// Multiple-precision integer: minimal two's complement encoding of a
    /// non-negative value (leading zeros stripped, 0x00 prepended when the
    /// high bit is set).
    pub fn mpint(&mut self, magnitude: &[u8]) {
        let first = magnitude.iter().position(|&b| b != 0);
        match first {
            None => self.uint32(0),
            Some(i) => {
                let m = &magnitude[i..];
                if m[0] & 0x80 != 0 {
                    self.uint32(m.len() as u32 + 1);
                    self.byte(0);
                } else {
                    self.uint32(m.len() as u32);
                }
                self.buf.extend_from_slice(m);
            }
        }
    }

    pub fn raw(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }
}

/// True when `name` occurs in a parsed name-list.
pub fn list_contains(list: &[&[u8]], name: &str) -> bool {
    list.contains(&name.as_bytes())
}

pub fn list_first_is(list: &[&[u8]], name: &str) -> bool {
    list.first().is_some_and(|n| *n == name.as_bytes())
}

/// Renders a name-list entry for error messages.
pub fn lossy(name: &[u8]) -> String {
    String::from_utf8_lossy(name).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn reader_stops_at_bounds() {
        let mut r = Reader::new(&[0, 0, 0, 5, b'a']);
        assert!(r.string().is_none()); // claims 5 bytes, only 1 present
        let mut r = Reader::new(&[0, 0, 0, 1, b'a']);
        assert_eq!(r.string(), Some(&b"a"[..]));
        assert!(r.byte().is_none());
    }

    #[test]
    fn huge_length_does_not_overflow() {
        let mut r = Reader::new(&[0xff, 0xff, 0xff, 0xff, 1, 2, 3]);
        assert!(r.string().is_none());
    }

    #[test]
    fn name_list_round_trip() {
        let mut w = Writer::new();
        w.name_list(&["aes128-ctr", "none"]);
        let bytes = w.into_bytes();
        let mut r = Reader::new(&bytes);
        let list = r.name_list().unwrap();
        assert!(list_contains(&list, "aes128-ctr"));
        assert!(list_contains(&list, "none"));
        assert!(!list_contains(&list, "aes256-ctr"));
        assert!(list_first_is(&list, "aes128-ctr"));
    }

    #[test]
    fn empty_name_list_is_empty() {
        let mut w = Writer::new();
        w.name_list(&[]);
        let bytes = w.into_bytes();
        let mut r = Reader::new(&bytes);
        assert_eq!(r.name_list().unwrap(), Vec::<&[u8]>::new());
    }

    #[test]
    fn mpint_strips_and_pads() {
        let mut w = Writer::new();
        w.mpint(&[0, 0, 0x7f]);
        assert_eq!(w.as_slice(), &[0, 0, 0, 1, 0x7f]);

        let mut w = Writer::new();
        w.mpint(&[0x80, 1]);
        assert_eq!(w.as_slice(), &[0, 0, 0, 3, 0, 0x80, 1]);

        let mut w = Writer::new();
        w.mpint(&[0, 0]);
        assert_eq!(w.as_slice(), &[0, 0, 0, 0]);
    }

    #[test]
    fn writer_string_prefixes_length() {
        let mut w = Writer::with_msg(50);
        w.string(b"root");
        assert_eq!(w.as_slice(), &[50, 0, 0, 0, 4, b'r', b'o', b'o', b't']);
    }

    #[test]
    fn single_name_list() {
        let mut r = Reader::new(&[0, 0, 0, 4, b'n', b'o', b'n', b'e']);
        let l = r.name_list().unwrap();
        assert_eq!(l, vec![&b"none"[..]]);
    }
}
