//! CSV interchange for the event log.
//!
//! This is the contract between live capture and offline analysis, so the
//! byte layout is pinned: RFC 4180 quoting, the exact header below, RFC
//! 3339 millisecond timestamps, and `\xHH` escaping (see [`crate::escape`])
//! for byte-string fields. `parse_events(write_events(s)) == s` for the
//! event list of any snapshot, and `write_events(parse_events(x)) == x`
//! for any well-formed file.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::net::IpAddr;

use crate::escape::{escape_bytes, unescape_bytes};
use crate::event::{format_ip, AuthAttemptEvent, AuthMethod, EventLogSnapshot};
use crate::timefmt::{format_utc_ms, parse_utc_ms};

pub const HEADER: &str =
    "seq,timestamp_utc,session_id,source_ip,source_port,client_banner,method,username,password,outcome";

/// Import failure, pointing at the offending 1-based line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvError {
    pub line: usize,
    pub message: String,
}

impl core::fmt::Display for CsvError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn err(line: usize, message: impl Into<String>) -> CsvError {
    CsvError {
        line,
        message: message.into(),
    }
}

/// Serializes a snapshot's events; returns the row count (header excluded).
pub fn write_events(snapshot: &EventLogSnapshot) -> (String, usize) {
    let mut out = String::with_capacity(64 + snapshot.events.len() * 80);
    out.push_str(HEADER);
    out.push_str("\r\n");
    for event in &snapshot.events {
        write_row(&mut out, event);
    }
    (out, snapshot.events.len())
}

fn write_row(out: &mut String, e: &AuthAttemptEvent) {
    push_field(out, &e.seq.to_string());
    out.push(',');
    push_field(out, &format_utc_ms(e.timestamp_ms));
    out.push(',');
    push_field(out, &e.session_id.to_string());
    out.push(',');
    push_field(out, &format_ip(&e.source_ip));
    out.push(',');
    push_field(out, &e.source_port.to_string());
    out.push(',');
    push_field(out, &escape_bytes(&e.client_banner));
    out.push(',');
    push_field(out, e.method.as_str());
    out.push(',');
    push_field(out, &escape_bytes(&e.username));
    out.push(',');
    push_field(out, &escape_bytes(&e.credential));
    out.push(',');
    push_field(out, "failure");
    out.push_str("\r\n");
}

fn needs_quoting(field: &str) -> bool {
    field
        .bytes()
        .any(|b| matches!(b, b',' | b'"' | b'\r' | b'\n'))
}

fn push_field(out: &mut String, field: &str) {
    if needs_quoting(field) {
        out.push('"');
        for ch in field.chars() {
            if ch == '"' {
                out.push('"');
            }
            out.push(ch);
        }
        out.push('"');
    } else {
        out.push_str(field);
    }
}

/// Parses a CSV event file back into a snapshot.
pub fn parse_events(input: &str) -> Result<EventLogSnapshot, CsvError> {
    let mut rows = RowReader::new(input);
    let header = rows
        .next_row()?
        .ok_or_else(|| err(1, "empty input, expected header"))?;
    let expected: Vec<&str> = HEADER.split(',').collect();
    if header.fields != expected {
        return Err(err(1, format!("bad header, expected: {HEADER}")));
    }

    let mut events = Vec::new();
    let mut last_seq: Option<u64> = None;
    while let Some(row) = rows.next_row()? {
        let line = row.line;
        let f = &row.fields;
        if f.len() != 10 {
            return Err(err(line, format!("expected 10 columns, found {}", f.len())));
        }
        let seq: u64 = f[0]
            .parse()
            .map_err(|_| err(line, format!("bad seq {:?}", f[0])))?;
        if let Some(prev) = last_seq {
            if seq <= prev {
                return Err(err(line, format!("seq {seq} not above previous {prev}")));
            }
        }
        last_seq = Some(seq);
        let timestamp_ms =
            parse_utc_ms(&f[1]).ok_or_else(|| err(line, format!("bad timestamp {:?}", f[1])))?;
        let session_id: u64 = f[2]
            .parse()
            .map_err(|_| err(line, format!("bad session_id {:?}", f[2])))?;
        let source_ip: IpAddr = f[3]
            .parse()
            .map_err(|_| err(line, format!("bad source_ip {:?}", f[3])))?;
        let source_port: u16 = f[4]
            .parse()
            .map_err(|_| err(line, format!("bad source_port {:?}", f[4])))?;
        let client_banner =
            unescape_bytes(&f[5]).map_err(|e| err(line, format!("bad client_banner: {e}")))?;
        let method =
            AuthMethod::parse(&f[6]).ok_or_else(|| err(line, format!("bad method {:?}", f[6])))?;
        let username =
            unescape_bytes(&f[7]).map_err(|e| err(line, format!("bad username: {e}")))?;
        let credential =
            unescape_bytes(&f[8]).map_err(|e| err(line, format!("bad password: {e}")))?;
        if f[9] != "failure" {
            return Err(err(line, format!("bad outcome {:?}", f[9])));
        }
        events.push(AuthAttemptEvent {
            seq,
            timestamp_ms,
            session_id,
            source_ip,
            source_port,
            client_banner,
            method,
            username,
            credential,
        });
    }
    Ok(EventLogSnapshot {
        events,
        sessions: Vec::new(),
    })
}

/// A `(username, password)` pair as loaded from credential lists.
pub type CredentialPair = (Vec<u8>, Vec<u8>);

/// Parses a `username,password` credential list (RFC 4180, `\xHH` escapes).
/// Blank lines and `#` comment lines are skipped.
pub fn parse_credential_list(input: &str) -> Result<Vec<CredentialPair>, CsvError> {
    let mut rows = RowReader::new(input);
    let mut out = Vec::new();
    while let Some(row) = rows.next_row()? {
        if row.fields.len() == 1 && row.fields[0].trim().is_empty() {
            continue;
        }
        if row.fields[0].trim_start().starts_with('#') && row.fields.len() == 1 {
            continue;
        }
        if row.fields.len() != 2 {
            return Err(err(
                row.line,
                format!("expected 2 columns, found {}", row.fields.len()),
            ));
        }
        let user = unescape_bytes(&row.fields[0])
            .map_err(|e| err(row.line, format!("bad username: {e}")))?;
        let pass = unescape_bytes(&row.fields[1])
            .map_err(|e| err(row.line, format!("bad password: {e}")))?;
        out.push((user, pass));
    }
    Ok(out)
}

struct Row {
    line: usize,
    fields: Vec<String>,
}

/// RFC 4180 reader over a string. Tracks physical line numbers so errors
/// point at the right place even when quoted fields span lines.
struct RowReader<'a> {
    rest: &'a str,
    line: usize,
}

impl<'a> RowReader<'a> {
    fn new(input: &'a str) -> Self {
        RowReader {
            rest: input,
            line: 0,
        }
    }

    fn next_row(&mut self) -> Result<Option<Row>, CsvError> {
        if self.rest.is_empty() {
            return Ok(None);
        }
        self.line += 1;
        let start_line = self.line;
        let bytes = self.rest.as_bytes();
        let mut fields = Vec::new();
        let mut field = String::new();
        let mut i = 0;
        let mut in_quotes = false;
        loop {
            if i >= bytes.len() {
                if in_quotes {
                    return Err(err(start_line, "unterminated quoted field"));
                }
                fields.push(field);
                self.rest = "";
                return Ok(Some(Row {
                    line: start_line,
                    fields,
                }));
            }
            let b = bytes[i];
            if in_quotes {
                match b {
                    b'"' if bytes.get(i + 1) == Some(&b'"') => {
                        field.push('"');
                        i += 2;
                    }
                    b'"' => {
                        in_quotes = false;
                        i += 1;
                    }
                    b'\n' => {
                        self.line += 1;
                        field.push('\n');
                        i += 1;
                    }
                    _ => {
                        // multi-byte chars are copied byte-for-byte below
                        let ch_len = utf8_len(b);
                        field.push_str(&self.rest[i..i + ch_len]);
                        i += ch_len;
                    }
                }
            } else {
                match b {
                    b',' => {
                        fields.push(core::mem::take(&mut field));
                        i += 1;
                    }
                    b'"' if field.is_empty() => {
                        in_quotes = true;
                        i += 1;
                    }
                    b'"' => return Err(err(start_line, "stray quote inside unquoted field")),
                    b'\r' if bytes.get(i + 1) == Some(&b'\n') => {
                        fields.push(field);
                        self.rest = &self.rest[i + 2..];
                        return Ok(Some(Row {
                            line: start_line,
                            fields,
                        }));
                    }
                    b'\n' => {
                        fields.push(field);
                        self.rest = &self.rest[i + 1..];
                        return Ok(Some(Row {
                            line: start_line,
                            fields,
                        }));
                    }
                    _ => {
                        let ch_len = utf8_len(b);
                        field.push_str(&self.rest[i..i + ch_len]);
                        i += ch_len;
                    }
                }
            }
        }
    }
}

fn utf8_len(first: u8) -> usize {
    match first {
        0x00..=0x7f => 1,
        0xc0..=0xdf => 2,
        0xe0..=0xef => 3,
        _ => 4,
    }
}
