//! Durable append-only event store.
//!
//! On-disk layout: an 8-byte magic, then length-prefixed records, each
//! `u32 len | u32 crc32(body) | body` (little endian). The live file is
//! binary, CSV is interchange only. Opening for append takes an exclusive
//! flock, so exactly one process writes at a time; a trailing torn record
//! is truncated away on open, while corruption before the tail refuses to
//! open.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use fs2::FileExt;

use sshtrap_core::event::{
    decode_record, encode_record, AuthAttemptEvent, AuthMethod, EventLogSnapshot, LogRecord,
    SessionRecord,
};

const MAGIC: &[u8; 8] = b"SSHTRAP1";
const MAX_RECORD: u32 = 16 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("store {path} is locked by another process")]
    Locked { path: PathBuf },
    #[error("store {path} corrupt at byte {offset}: {reason}")]
    Corrupt {
        path: PathBuf,
        offset: u64,
        reason: String,
    },
    #[error("store {path} is not an sshtrap event log")]
    BadMagic { path: PathBuf },
    #[error("store failed on an earlier write; appends disabled")]
    Failed,
}

/// What `open` found on disk.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpenReport {
    pub events_recovered: usize,
    pub sessions_recovered: usize,
    /// Bytes of trailing torn record dropped, 0 when the log was clean.
    pub truncated_bytes: u64,
}

struct State {
    file: File,
    next_seq: u64,
    next_session_id: u64,
    events: Vec<AuthAttemptEvent>,
    sessions: Vec<SessionRecord>,
    failed: bool,
}

/// Handle shared by every capture session; appends are serialized
/// internally and durable before they return.
#[derive(Clone)]
pub struct EventStore {
    path: Arc<PathBuf>,
    state: Arc<Mutex<State>>,
}

/// An attempt as captured, before the store assigns its sequence number.
#[derive(Debug, Clone)]
pub struct NewAttempt {
    pub timestamp_ms: i64,
    pub session_id: u64,
    pub source_ip: IpAddr,
    pub source_port: u16,
    pub client_banner: Vec<u8>,
    pub method: AuthMethod,
    pub username: Vec<u8>,
    pub credential: Vec<u8>,
}

impl EventStore {
    /// Opens or creates a log for appending, recovering a torn tail.
    pub fn open(path: impl AsRef<Path>) -> Result<(EventStore, OpenReport), StoreError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)
            .map_err(io_err)?;
        file.try_lock_exclusive()
            .map_err(|_| StoreError::Locked { path: path.clone() })?;

        let scan = scan_log(&mut file, &path)?;
        if scan.fresh {
            file.write_all(MAGIC).map_err(io_err)?;
            file.sync_data().map_err(io_err)?;
        } else if scan.truncated_bytes > 0 {
            file.set_len(scan.keep_len).map_err(io_err)?;
            file.sync_data().map_err(io_err)?;
        }
        file.seek(SeekFrom::End(0)).map_err(io_err)?;

        let report = OpenReport {
            events_recovered: scan.events.len(),
            sessions_recovered: scan.sessions.len(),
            truncated_bytes: scan.truncated_bytes,
        };
        let next_seq = scan.events.last().map(|e| e.seq + 1).unwrap_or(1);
        let next_session_id = scan
            .events
            .iter()
            .map(|e| e.session_id)
            .chain(scan.sessions.iter().map(|s| s.session_id))
            .max()
            .unwrap_or(0)
            + 1;
        Ok((
            EventStore {
                path: Arc::new(path),
                state: Arc::new(Mutex::new(State {
                    file,
                    next_seq,
                    next_session_id,
                    events: scan.events,
                    sessions: scan.sessions,
                    failed: false,
                })),
            },
            report,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Highest sequence number handed out so far.
    pub fn high_water(&self) -> u64 {
        self.state.lock().unwrap().next_seq - 1
    }

    pub fn allocate_session_id(&self) -> u64 {
        let mut st = self.state.lock().unwrap();
        let id = st.next_session_id;
        st.next_session_id += 1;
        id
    }

    /// Appends one attempt; the record is on disk before this returns.
    pub fn append(&self, attempt: NewAttempt) -> Result<u64, StoreError> {
        let mut st = self.state.lock().unwrap();
        if st.failed {
            return Err(StoreError::Failed);
        }
        let seq = st.next_seq;
        let event = AuthAttemptEvent {
            seq,
            timestamp_ms: attempt.timestamp_ms,
            session_id: attempt.session_id,
            source_ip: attempt.source_ip,
            source_port: attempt.source_port,
            client_banner: attempt.client_banner,
            method: attempt.method,
            username: attempt.username,
            credential: attempt.credential,
        };
        let framed = frame_record(&LogRecord::Attempt(event.clone()));
        if let Err(source) = st.file.write_all(&framed).and_then(|_| st.file.sync_data()) {
            st.failed = true;
            return Err(StoreError::Io {
                path: (*self.path).clone(),
                source,
            });
        }
        st.next_seq += 1;
        st.events.push(event);
        Ok(seq)
    }

    /// Appends a finished session record.
    pub fn append_session(&self, record: SessionRecord) -> Result<(), StoreError> {
        let mut st = self.state.lock().unwrap();
        if st.failed {
            return Err(StoreError::Failed);
        }
        let framed = frame_record(&LogRecord::Session(record.clone()));
        if let Err(source) = st.file.write_all(&framed).and_then(|_| st.file.sync_data()) {
            st.failed = true;
            return Err(StoreError::Io {
                path: (*self.path).clone(),
                source,
            });
        }
        st.sessions.push(record);
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn poison_for_tests(&self) {
        self.state.lock().unwrap().failed = true;
    }

    /// Immutable point-in-time copy; later appends do not affect it.
    pub fn snapshot(&self) -> EventLogSnapshot {
        let st = self.state.lock().unwrap();
        EventLogSnapshot {
            events: st.events.clone(),
            sessions: st.sessions.clone(),
        }
    }
}

/// Writes a whole snapshot as a fresh log file with a single final sync
/// (the bulk path used by the simulator).
pub fn write_snapshot_file(
    path: impl AsRef<Path>,
    snapshot: &EventLogSnapshot,
) -> Result<(), StoreError> {
    let path = path.as_ref().to_path_buf();
    let io_err = |source| StoreError::Io {
        path: path.clone(),
        source,
    };
    let file = OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .open(&path)
        .map_err(io_err)?;
    file.try_lock_exclusive()
        .map_err(|_| StoreError::Locked { path: path.clone() })?;
    let mut out = std::io::BufWriter::with_capacity(1 << 20, file);
    out.write_all(MAGIC).map_err(io_err)?;
    for event in &snapshot.events {
        out.write_all(&frame_record(&LogRecord::Attempt(event.clone())))
            .map_err(io_err)?;
    }
    for session in &snapshot.sessions {
        out.write_all(&frame_record(&LogRecord::Session(session.clone())))
            .map_err(io_err)?;
    }
    let file = out.into_inner().map_err(|e| io_err(e.into_error()))?;
    file.sync_data().map_err(io_err)?;
    Ok(())
}

/// Reads a log without taking the writer lock (offline analysis path).
pub fn read_snapshot_file(
    path: impl AsRef<Path>,
) -> Result<(EventLogSnapshot, OpenReport), StoreError> {
    let path = path.as_ref().to_path_buf();
    let mut file = File::open(&path).map_err(|source| StoreError::Io {
        path: path.clone(),
        source,
    })?;
    let scan = scan_log(&mut file, &path)?;
    if scan.fresh {
        return Err(StoreError::BadMagic { path });
    }
    let report = OpenReport {
        events_recovered: scan.events.len(),
        sessions_recovered: scan.sessions.len(),
        truncated_bytes: scan.truncated_bytes,
    };
    Ok((
        EventLogSnapshot {
            events: scan.events,
            sessions: scan.sessions,
        },
        report,
    ))
}

fn frame_record(record: &LogRecord) -> Vec<u8> {
    let mut body = Vec::with_capacity(128);
    encode_record(record, &mut body);
    let mut framed = Vec::with_capacity(body.len() + 8);
    framed.extend_from_slice(&(body.len() as u32).to_le_bytes());
    framed.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
    framed.extend_from_slice(&body);
    framed
}

struct Scan {
    events: Vec<AuthAttemptEvent>,
    sessions: Vec<SessionRecord>,
    /// Log length after dropping any torn tail.
    keep_len: u64,
    truncated_bytes: u64,
    /// True when the file was empty (magic still to be written).
    fresh: bool,
}

fn scan_log(file: &mut File, path: &Path) -> Result<Scan, StoreError> {
    let mut data = Vec::new();
    file.seek(SeekFrom::Start(0))
        .map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    file.read_to_end(&mut data)
        .map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;

    if data.is_empty() {
        return Ok(Scan {
            events: Vec::new(),
            sessions: Vec::new(),
            keep_len: 0,
            truncated_bytes: 0,
            fresh: true,
        });
    }
    if data.len() < MAGIC.len() || &data[..MAGIC.len()] != MAGIC {
        return Err(StoreError::BadMagic {
            path: path.to_path_buf(),
        });
    }

    let corrupt = |offset: usize, reason: &str| StoreError::Corrupt {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason: reason.to_string(),
    };

    let mut events = Vec::new();
    let mut sessions = Vec::new();
    let mut pos = MAGIC.len();
    let mut last_seq = 0u64;
    loop {
        let record_start = pos;
        if pos == data.len() {
            // clean end
            return Ok(Scan {
                events,
                sessions,
                keep_len: record_start as u64,
                truncated_bytes: 0,
                fresh: false,
            });
        }
        let torn = |events: Vec<AuthAttemptEvent>, sessions: Vec<SessionRecord>| Scan {
            truncated_bytes: (data.len() - record_start) as u64,
            keep_len: record_start as u64,
            events,
            sessions,
            fresh: false,
        };
        if data.len() - pos < 8 {
            return Ok(torn(events, sessions));
        }
        let len = u32::from_le_bytes(data[pos..pos + 4].try_into().unwrap());
        let crc = u32::from_le_bytes(data[pos + 4..pos + 8].try_into().unwrap());
        if len == 0 || len > MAX_RECORD {
            // an insane length in the middle of the file is corruption,
            // at the end it is a torn header
            if data.len() - pos <= 8 {
                return Ok(torn(events, sessions));
            }
            return Err(corrupt(record_start, "record length out of range"));
        }
        pos += 8;
        if data.len() - pos < len as usize {
            return Ok(torn(events, sessions));
        }
        let body = &data[pos..pos + len as usize];
        pos += len as usize;
        let at_eof = pos == data.len();
        if crc32fast::hash(body) != crc {
            if at_eof {
                return Ok(torn(events, sessions));
            }
            return Err(corrupt(record_start, "checksum mismatch"));
        }
        match decode_record(body) {
            Ok(LogRecord::Attempt(e)) => {
                if e.seq <= last_seq {
                    return Err(corrupt(record_start, "sequence numbers not increasing"));
                }
                last_seq = e.seq;
                events.push(e);
            }
            Ok(LogRecord::Session(s)) => sessions.push(s),
            Err(e) => return Err(corrupt(record_start, &e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::Ipv4Addr;

    fn attempt(n: u8) -> NewAttempt {
        NewAttempt {
            timestamp_ms: 1000 + n as i64,
            session_id: 1,
            source_ip: IpAddr::V4(Ipv4Addr::new(203, 0, 113, 5)),
            source_port: 50_000,
            client_banner: b"SSH-2.0-test".to_vec(),
            method: AuthMethod::Password,
            username: b"root".to_vec(),
            credential: vec![n],
        }
    }

    #[test]
    fn fresh_store_starts_at_seq_one() {
        let dir = tempfile::tempdir().unwrap();
        let (store, report) = EventStore::open(dir.path().join("log.bin")).unwrap();
        assert_eq!(report, OpenReport::default());
        assert_eq!(store.append(attempt(1)).unwrap(), 1);
        assert_eq!(store.append(attempt(2)).unwrap(), 2);
        assert_eq!(store.high_water(), 2);
    }

    #[test]
    fn reopen_recovers_all_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.bin");
        {
            let (store, _) = EventStore::open(&path).unwrap();
            for i in 0..3 {
                store.append(attempt(i)).unwrap();
            }
        }
        let (store, report) = EventStore::open(&path).unwrap();
        assert_eq!(report.events_recovered, 3);
        assert_eq!(report.truncated_bytes, 0);
        assert_eq!(store.high_water(), 3);
        assert_eq!(store.append(attempt(9)).unwrap(), 4);
    }

    #[test]
    fn torn_tail_is_truncated_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.bin");
        {
            let (store, _) = EventStore::open(&path).unwrap();
            for i in 0..4 {
                store.append(attempt(i)).unwrap();
            }
        }
        // cut the last record in half
        let data = std::fs::read(&path).unwrap();
        std::fs::write(&path, &data[..data.len() - 7]).unwrap();
        let (store, report) = EventStore::open(&path).unwrap();
        assert_eq!(report.events_recovered, 3);
        assert!(report.truncated_bytes > 0);
        assert_eq!(store.high_water(), 3);
        // store remains usable after recovery
        assert_eq!(store.append(attempt(7)).unwrap(), 4);
    }

    #[test]
    fn mid_file_corruption_refuses_to_open() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.bin");
        {
            let (store, _) = EventStore::open(&path).unwrap();
            for i in 0..4 {
                store.append(attempt(i)).unwrap();
            }
        }
        let mut data = std::fs::read(&path).unwrap();
        let mid = data.len() / 2;
        data[mid] ^= 0xff;
        std::fs::write(&path, &data).unwrap();
        match EventStore::open(&path) {
            Err(StoreError::Corrupt { offset, .. }) => assert!(offset >= 8),
            Err(other) => panic!("expected corrupt error, got {other:?}"),
            Ok(_) => panic!("corrupt log opened cleanly"),
        }
    }

    #[test]
    fn second_writer_is_locked_out() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.bin");
        let (_store, _) = EventStore::open(&path).unwrap();
        match EventStore::open(&path) {
            Err(StoreError::Locked { .. }) => {}
            Err(other) => panic!("expected lock error, got {other:?}"),
            Ok(_) => panic!("second writer was not locked out"),
        }
    }

    #[test]
    fn snapshot_is_immutable() {
        let dir = tempfile::tempdir().unwrap();
        let (store, _) = EventStore::open(dir.path().join("log.bin")).unwrap();
        store.append(attempt(1)).unwrap();
        let snap = store.snapshot();
        assert_eq!(snap.events.len(), 1);
        for i in 0..5 {
            store.append(attempt(i)).unwrap();
        }
        assert_eq!(snap.events.len(), 1);
        assert_eq!(store.snapshot().events.len(), 6);
    }

    #[test]
    fn concurrent_appends_get_unique_gapless_seqs() {
        let dir = tempfile::tempdir().unwrap();
        let (store, _) = EventStore::open(dir.path().join("log.bin")).unwrap();
        let mut handles = Vec::new();
        for t in 0..8 {
            let store = store.clone();
            handles.push(std::thread::spawn(move || {
                let mut seqs = Vec::new();
                for i in 0..125 {
                    seqs.push(store.append(attempt((t * 31 + i) as u8)).unwrap());
                }
                seqs
            }));
        }
        let mut all: Vec<u64> = handles
            .into_iter()
            .flat_map(|h| h.join().unwrap())
            .collect();
        all.sort_unstable();
        assert_eq!(all, (1..=1000).collect::<Vec<u64>>());
        assert_eq!(store.snapshot().events.len(), 1000);
    }

    #[test]
    fn failed_store_rejects_appends_but_reopens_clean() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.bin");
        {
            let (store, _) = EventStore::open(&path).unwrap();
            store.append(attempt(1)).unwrap();
            store.append(attempt(2)).unwrap();
            store.poison_for_tests();
            assert!(matches!(store.append(attempt(3)), Err(StoreError::Failed)));
            assert!(matches!(
                store.append_session(SessionRecord {
                    session_id: 1,
                    source_ip: IpAddr::V4(Ipv4Addr::new(1, 2, 3, 4)),
                    source_port: 1,
                    client_banner: vec![],
                    started_at_ms: 0,
                    ended_at_ms: 0,
                    end_reason: sshtrap_core::event::EndReason::ProtocolError,
                    attempt_count: 2,
                }),
                Err(StoreError::Failed)
            ));
        }
        // every pre-failure event survives reopen
        let (store, report) = EventStore::open(&path).unwrap();
        assert_eq!(report.events_recovered, 2);
        assert_eq!(store.append(attempt(9)).unwrap(), 3);
    }

    #[test]
    fn record_attempt_copies_fields_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let (store, _) = EventStore::open(dir.path().join("log.bin")).unwrap();
        let peer: std::net::SocketAddr = "203.0.113.5:50000".parse().unwrap();
        let request = sshtrap_core::ssh::server::AuthRequest {
            method: AuthMethod::Password,
            username: b"root".to_vec(),
            credential: b"toor".to_vec(),
        };
        let seq =
            crate::server::record_attempt(&store, 7, peer, b"SSH-2.0-scan", &request).unwrap();
        assert_eq!(seq, 1);
        let snap = store.snapshot();
        let e = &snap.events[0];
        assert_eq!(e.source_ip, peer.ip());
        assert_eq!(e.source_port, 50000);
        assert_eq!(e.session_id, 7);
        assert_eq!(e.method, AuthMethod::Password);
        assert_eq!(e.username, b"root");
        assert_eq!(e.credential, b"toor");
        assert_eq!(e.client_banner, b"SSH-2.0-scan");
    }

    #[test]
    fn bulk_written_snapshot_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.bin");
        let (store, _) = EventStore::open(&path).unwrap();
        for i in 0..10 {
            store.append(attempt(i)).unwrap();
        }
        let snap = store.snapshot();
        drop(store);

        let out = dir.path().join("copy.bin");
        write_snapshot_file(&out, &snap).unwrap();
        let (back, report) = read_snapshot_file(&out).unwrap();
        assert_eq!(back, snap);
        assert_eq!(report.events_recovered, 10);
    }

    #[test]
    fn session_records_round_trip_through_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.bin");
        let record = SessionRecord {
            session_id: 1,
            source_ip: IpAddr::V4(Ipv4Addr::new(198, 51, 100, 7)),
            source_port: 4444,
            client_banner: b"SSH-2.0-x".to_vec(),
            started_at_ms: 10,
            ended_at_ms: 20,
            end_reason: sshtrap_core::event::EndReason::ClientDisconnect,
            attempt_count: 0,
        };
        {
            let (store, _) = EventStore::open(&path).unwrap();
            store.append_session(record.clone()).unwrap();
        }
        let (store, report) = EventStore::open(&path).unwrap();
        assert_eq!(report.sessions_recovered, 1);
        assert_eq!(store.snapshot().sessions, vec![record]);
        assert_eq!(store.allocate_session_id(), 2);
    }
}
