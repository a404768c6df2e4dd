//! Captured authentication attempts, sessions, and snapshots of the log.

use alloc::string::String;
use alloc::vec::Vec;
use core::net::IpAddr;

/// How a client tried to authenticate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AuthMethod {
    Password,
    Publickey,
    None,
    KeyboardInteractive,
    Other,
}

impl AuthMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AuthMethod::Password => "password",
            AuthMethod::Publickey => "publickey",
            AuthMethod::None => "none",
            AuthMethod::KeyboardInteractive => "keyboard-interactive",
            AuthMethod::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "password" => AuthMethod::Password,
            "publickey" => AuthMethod::Publickey,
            "none" => AuthMethod::None,
            "keyboard-interactive" => AuthMethod::KeyboardInteractive,
            "other" => AuthMethod::Other,
            _ => return None,
        })
    }

    fn tag(self) -> u8 {
        match self {
            AuthMethod::Password => 0,
            AuthMethod::Publickey => 1,
            AuthMethod::None => 2,
            AuthMethod::KeyboardInteractive => 3,
            AuthMethod::Other => 4,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        Some(match t {
            0 => AuthMethod::Password,
            1 => AuthMethod::Publickey,
            2 => AuthMethod::None,
            3 => AuthMethod::KeyboardInteractive,
            4 => AuthMethod::Other,
            _ => return None,
        })
    }
}

/// Why a session ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EndReason {
    MaxAttempts,
    IdleTimeout,
    ClientDisconnect,
    ProtocolError,
}

impl EndReason {
    pub fn as_str(self) -> &'static str {
        match self {
            EndReason::MaxAttempts => "max-attempts",
            EndReason::IdleTimeout => "idle-timeout",
            EndReason::ClientDisconnect => "client-disconnect",
            EndReason::ProtocolError => "protocol-error",
        }
    }

    fn tag(self) -> u8 {
        match self {
            EndReason::MaxAttempts => 0,
            EndReason::IdleTimeout => 1,
            EndReason::ClientDisconnect => 2,
            EndReason::ProtocolError => 3,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        Some(match t {
            0 => EndReason::MaxAttempts,
            1 => EndReason::IdleTimeout,
            2 => EndReason::ClientDisconnect,
            3 => EndReason::ProtocolError,
            _ => return None,
        })
    }
}

/// One captured authentication attempt. The outcome is always failure, so
/// it is not stored per event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthAttemptEvent {
    pub seq: u64,
    pub timestamp_ms: i64,
    pub session_id: u64,
    pub source_ip: IpAddr,
    pub source_port: u16,
    pub client_banner: Vec<u8>,
    pub method: AuthMethod,
    pub username: Vec<u8>,
    pub credential: Vec<u8>,
}

/// One attacker connection, covering all its attempts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRecord {
    pub session_id: u64,
    pub source_ip: IpAddr,
    pub source_port: u16,
    pub client_banner: Vec<u8>,
    pub started_at_ms: i64,
    pub ended_at_ms: i64,
    pub end_reason: EndReason,
    pub attempt_count: u32,
}

/// Immutable point-in-time view of the event log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLogSnapshot {
    pub events: Vec<AuthAttemptEvent>,
    pub sessions: Vec<SessionRecord>,
}

impl EventLogSnapshot {
    /// (min, max) event timestamp, or None when empty.
    pub fn captured_range(&self) -> Option<(i64, i64)> {
        let mut it = self.events.iter().map(|e| e.timestamp_ms);
        let first = it.next()?;
        let (mut lo, mut hi) = (first, first);
        for t in it {
            lo = lo.min(t);
            hi = hi.max(t);
        }
        Some((lo, hi))
    }
}

/// Failure while decoding a stored record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordDecodeError {
    Truncated,
    BadTag(u8),
    BadEnum,
    TrailingBytes,
}

impl core::fmt::Display for RecordDecodeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RecordDecodeError::Truncated => write!(f, "record body truncated"),
            RecordDecodeError::BadTag(t) => write!(f, "unknown record tag {t}"),
            RecordDecodeError::BadEnum => write!(f, "invalid enum value in record"),
            RecordDecodeError::TrailingBytes => write!(f, "trailing bytes after record"),
        }
    }
}

/// A stored record is either an attempt event or a finished session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogRecord {
    Attempt(AuthAttemptEvent),
    Session(SessionRecord),
}

const TAG_ATTEMPT: u8 = 1;
const TAG_SESSION: u8 = 2;

pub fn encode_record(record: &LogRecord, out: &mut Vec<u8>) {
    match record {
        LogRecord::Attempt(e) => {
            out.push(TAG_ATTEMPT);
            put_u64(out, e.seq);
            put_i64(out, e.timestamp_ms);
            put_u64(out, e.session_id);
            put_ip(out, e.source_ip);
            put_u16(out, e.source_port);
            put_bytes(out, &e.client_banner);
            out.push(e.method.tag());
            put_bytes(out, &e.username);
            put_bytes(out, &e.credential);
        }
        LogRecord::Session(s) => {
            out.push(TAG_SESSION);
            put_u64(out, s.session_id);
            put_ip(out, s.source_ip);
            put_u16(out, s.source_port);
            put_bytes(out, &s.client_banner);
            put_i64(out, s.started_at_ms);
            put_i64(out, s.ended_at_ms);
            out.push(s.end_reason.tag());
            put_u32(out, s.attempt_count);
        }
    }
}

pub fn decode_record(body: &[u8]) -> Result<LogRecord, RecordDecodeError> {
    let mut r = Cursor { buf: body, pos: 0 };
    let tag = r.u8()?;
    let record = match tag {
        TAG_ATTEMPT => LogRecord::Attempt(AuthAttemptEvent {
            seq: r.u64()?,
            timestamp_ms: r.i64()?,
            session_id: r.u64()?,
            source_ip: r.ip()?,
            source_port: r.u16()?,
            client_banner: r.bytes()?,
            method: AuthMethod::from_tag(r.u8()?).ok_or(RecordDecodeError::BadEnum)?,
            username: r.bytes()?,
            credential: r.bytes()?,
        }),
        TAG_SESSION => LogRecord::Session(SessionRecord {
            session_id: r.u64()?,
            source_ip: r.ip()?,
            source_port: r.u16()?,
            client_banner: r.bytes()?,
            started_at_ms: r.i64()?,
            ended_at_ms: r.i64()?,
            end_reason: EndReason::from_tag(r.u8()?).ok_or(RecordDecodeError::BadEnum)?,
            attempt_count: r.u32()?,
        }),
        other => return Err(RecordDecodeError::BadTag(other)),
    };
    if r.pos != body.len() {
        return Err(RecordDecodeError::TrailingBytes);
    }
    Ok(record)
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_i64(out: &mut Vec<u8>, v: i64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, b.len() as u32);
    out.extend_from_slice(b);
}

fn put_ip(out: &mut Vec<u8>, ip: IpAddr) {
    match ip {
        IpAddr::V4(v4) => {
            out.push(4);
            out.extend_from_slice(&v4.octets());
        }
        IpAddr::V6(v6) => {
            out.push(6);
            out.extend_from_slice(&v6.octets());
        }
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RecordDecodeError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(RecordDecodeError::Truncated)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, RecordDecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, RecordDecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, RecordDecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, RecordDecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64, RecordDecodeError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<Vec<u8>, RecordDecodeError> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    fn ip(&mut self) -> Result<IpAddr, RecordDecodeError> {
        match self.u8()? {
            4 => {
                let o: [u8; 4] = self.take(4)?.try_into().unwrap();
                Ok(IpAddr::from(o))
            }
            6 => {
                let o: [u8; 16] = self.take(16)?.try_into().unwrap();
                Ok(IpAddr::from(o))
            }
            _ => Err(RecordDecodeError::BadEnum),
        }
    }
}

/// Renders an IP for reports and CSV without allocating surprises.
pub fn format_ip(ip: &IpAddr) -> String {
    use core::fmt::Write;
    let mut s = String::new();
    let _ = write!(s, "{ip}");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample_event() -> AuthAttemptEvent {
        AuthAttemptEvent {
            seq: 17,
            timestamp_ms: 1_614_556_800_123,
            session_id: 3,
            source_ip: "203.0.113.5".parse().unwrap(),
            source_port: 50000,
            client_banner: b"SSH-2.0-test".to_vec(),
            method: AuthMethod::Password,
            username: b"root".to_vec(),
            credential: b"toor".to_vec(),
        }
    }

    #[test]
    fn attempt_record_round_trips() {
        let rec = LogRecord::Attempt(sample_event());
        let mut buf = Vec::new();
        encode_record(&rec, &mut buf);
        assert_eq!(decode_record(&buf).unwrap(), rec);
    }

    #[test]
    fn session_record_round_trips() {
        let rec = LogRecord::Session(SessionRecord {
            session_id: 3,
            source_ip: "2001:db8::7".parse().unwrap(),
            source_port: 40000,
            client_banner: vec![0xff, 0x00],
            started_at_ms: 100,
            ended_at_ms: 250,
            end_reason: EndReason::MaxAttempts,
            attempt_count: 6,
        });
        let mut buf = Vec::new();
        encode_record(&rec, &mut buf);
        assert_eq!(decode_record(&buf).unwrap(), rec);
    }

    #[test]
    fn truncated_body_is_an_error() {
        let mut buf = Vec::new();
        encode_record(&LogRecord::Attempt(sample_event()), &mut buf);
        for cut in [0, 1, 5, buf.len() - 1] {
            assert!(decode_record(&buf[..cut]).is_err());
        }
    }

    #[test]
    fn trailing_bytes_are_an_error() {
        let mut buf = Vec::new();
        encode_record(&LogRecord::Attempt(sample_event()), &mut buf);
        buf.push(0);
        assert_eq!(decode_record(&buf), Err(RecordDecodeError::TrailingBytes));
    }

    #[test]
    fn captured_range_tracks_min_max() {
        let mut snap = EventLogSnapshot::default();
        assert_eq!(snap.captured_range(), None);
        for ts in [50, 10, 90] {
            let mut e = sample_event();
            e.timestamp_ms = ts;
            snap.events.push(e);
        }
        assert_eq!(snap.captured_range(), Some((10, 90)));
    }
}
