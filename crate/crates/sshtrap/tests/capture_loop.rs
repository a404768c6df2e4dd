//! End-to-end capture over real sockets: a honeypot listener on loopback
//! versus the replay client, checking that the store ends up with exactly
//! what was sent, in order, and that session limits behave.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use sshtrap::config::CaptureConfig;
use sshtrap::replay::{replay, ReplayOptions};
use sshtrap::server::{run_session, start_listener, SessionStream};
use sshtrap::store::EventStore;
use sshtrap_core::event::EndReason;
use sshtrap_core::profile::parse_profile;
use sshtrap_core::rng::Prng;
use sshtrap_core::ssh::ServerConfig;

fn test_config(dir: &std::path::Path) -> CaptureConfig {
    CaptureConfig {
        bind: "127.0.0.1:0".parse().unwrap(),
        host_key_path: dir.join("hostkey"),
        idle_timeout: Duration::from_secs(5),
        ..CaptureConfig::default()
    }
}

const SMALL_PROFILE: &str = "\
[campaign]
total = 50
duration-seconds = 600
seed = 5

[sources]
10.0.0.1 50

[usernames]
30 root
20 admin

[passwords]
25 123456
15 password
10 admin
";

#[test]
fn replay_multiset_matches_store_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let store_path = dir.path().join("log.bin");
    let (store, _) = EventStore::open(&store_path).unwrap();
    let handle = start_listener(test_config(dir.path()), store.clone()).unwrap();

    let profile = parse_profile(SMALL_PROFILE).unwrap();
    let summary = replay(
        &profile,
        &ReplayOptions {
            target: handle.local_addr(),
            scale: 50,
            parallel: 2,
            ..ReplayOptions::default()
        },
    )
    .unwrap();
    handle.shutdown();

    assert_eq!(summary.attempts_sent, 50);
    assert_eq!(summary.attempts_acknowledged, 50);

    let snapshot = store.snapshot();
    assert_eq!(snapshot.events.len(), 50);
    assert!(snapshot
        .events
        .iter()
        .all(|e| e.method == sshtrap_core::event::AuthMethod::Password));

    // multiset equality of (username, credential)
    let mut sent: Vec<(Vec<u8>, Vec<u8>)> = summary
        .sessions
        .iter()
        .flat_map(|s| s.delivered.clone())
        .collect();
    let mut stored: Vec<(Vec<u8>, Vec<u8>)> = snapshot
        .events
        .iter()
        .map(|e| (e.username.clone(), e.credential.clone()))
        .collect();
    sent.sort();
    stored.sort();
    assert_eq!(sent, stored);

    // per-session order: compare the multiset of (port, attempt
    // sequence), grouping stored events by their session id so the check
    // holds even when the kernel reuses an ephemeral port
    type Pair = (Vec<u8>, Vec<u8>);
    let mut per_session: HashMap<u64, (u16, Vec<Pair>)> = HashMap::new();
    for e in &snapshot.events {
        per_session
            .entry(e.session_id)
            .or_insert_with(|| (e.source_port, Vec::new()))
            .1
            .push((e.username.clone(), e.credential.clone()));
    }
    let mut stored_sessions: Vec<(u16, Vec<Pair>)> = per_session.into_values().collect();
    let mut replay_sessions: Vec<(u16, Vec<Pair>)> = summary
        .sessions
        .iter()
        .map(|s| (s.local_port, s.delivered.clone()))
        .collect();
    stored_sessions.sort();
    replay_sessions.sort();
    assert_eq!(
        stored_sessions, replay_sessions,
        "order preserved per session"
    );

    // every stored event lies inside its session's window
    for e in &snapshot.events {
        let sess = snapshot
            .sessions
            .iter()
            .find(|s| s.session_id == e.session_id)
            .expect("session record stored");
        assert!(e.timestamp_ms >= sess.started_at_ms);
        assert!(e.timestamp_ms <= sess.ended_at_ms);
    }
}

#[test]
fn server_cap_forces_reconnects() {
    let dir = tempfile::tempdir().unwrap();
    let (store, _) = EventStore::open(dir.path().join("log.bin")).unwrap();
    let mut config = test_config(dir.path());
    config.max_auth_attempts = 6;
    let handle = start_listener(config, store.clone()).unwrap();

    let profile = parse_profile(SMALL_PROFILE).unwrap();
    // client happily sends 20 per connection; the server cuts at 6
    let summary = replay(
        &profile,
        &ReplayOptions {
            target: handle.local_addr(),
            scale: 20,
            parallel: 1,
            attempts_per_connection: 20,
            ..ReplayOptions::default()
        },
    )
    .unwrap();
    handle.shutdown();

    assert_eq!(summary.attempts_acknowledged, 20);
    assert!(summary.attempts_sent >= 20);
    assert!(
        summary.sessions_opened >= 4,
        "ceil(20/6) = 4 connections at least, got {}",
        summary.sessions_opened
    );
    let snapshot = store.snapshot();
    assert_eq!(snapshot.events.len(), 20);
    for s in &snapshot.sessions {
        assert!(s.attempt_count <= 6);
    }
    assert!(snapshot
        .sessions
        .iter()
        .any(|s| s.end_reason == EndReason::MaxAttempts));
}

#[test]
fn banner_only_client_recorded_as_disconnect() {
    let dir = tempfile::tempdir().unwrap();
    let (store, _) = EventStore::open(dir.path().join("log.bin")).unwrap();
    let handle = start_listener(test_config(dir.path()), store.clone()).unwrap();

    let mut stream = TcpStream::connect(handle.local_addr()).unwrap();
    stream.write_all(b"SSH-2.0-test\r\n").unwrap();
    drop(stream);
    // session thread needs a moment to observe the close
    std::thread::sleep(Duration::from_millis(300));
    handle.shutdown();

    let snapshot = store.snapshot();
    assert_eq!(snapshot.events.len(), 0);
    assert_eq!(snapshot.sessions.len(), 1);
    let s = &snapshot.sessions[0];
    assert_eq!(s.client_banner, b"SSH-2.0-test");
    assert_eq!(s.end_reason, EndReason::ClientDisconnect);
    assert_eq!(s.attempt_count, 0);
}

#[test]
fn silent_client_times_out_idle() {
    let dir = tempfile::tempdir().unwrap();
    let (store, _) = EventStore::open(dir.path().join("log.bin")).unwrap();
    let mut config = test_config(dir.path());
    config.idle_timeout = Duration::from_secs(1);
    let handle = start_listener(config, store.clone()).unwrap();

    let mut stream = TcpStream::connect(handle.local_addr()).unwrap();
    stream.write_all(b"SSH-2.0-quiet\r\n").unwrap();
    // hold the socket open silently past the timeout
    std::thread::sleep(Duration::from_millis(2200));
    let mut sink = Vec::new();
    let _ = stream.set_read_timeout(Some(Duration::from_millis(500)));
    let _ = stream.read_to_end(&mut sink);
    handle.shutdown();

    let snapshot = store.snapshot();
    assert_eq!(snapshot.sessions.len(), 1);
    assert_eq!(snapshot.sessions[0].end_reason, EndReason::IdleTimeout);
}

#[test]
fn connections_beyond_max_sessions_are_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let (store, _) = EventStore::open(dir.path().join("log.bin")).unwrap();
    let mut config = test_config(dir.path());
    config.max_sessions = 1;
    let handle = start_listener(config, store.clone()).unwrap();

    // first connection occupies the only slot
    let mut first = TcpStream::connect(handle.local_addr()).unwrap();
    let mut banner = [0u8; 8];
    first.read_exact(&mut banner).unwrap();
    assert_eq!(&banner, b"SSH-2.0-");

    // the listener needs a beat to register the active session
    std::thread::sleep(Duration::from_millis(200));

    // second connection is closed without a banner
    let mut second = TcpStream::connect(handle.local_addr()).unwrap();
    second
        .set_read_timeout(Some(Duration::from_secs(2)))
        .unwrap();
    let mut buf = Vec::new();
    let n = second.read_to_end(&mut buf).unwrap_or(0);
    assert_eq!(n, 0, "over-capacity connection got data: {buf:?}");

    drop(first);
    drop(second);
    handle.shutdown();
}

#[test]
fn bind_conflict_is_a_startup_error() {
    let dir = tempfile::tempdir().unwrap();
    let (store_a, _) = EventStore::open(dir.path().join("a.bin")).unwrap();
    let (store_b, _) = EventStore::open(dir.path().join("b.bin")).unwrap();
    let handle = start_listener(test_config(dir.path()), store_a).unwrap();

    let mut config = test_config(dir.path());
    config.bind = handle.local_addr();
    let msg = match start_listener(config, store_b) {
        Err(e) => e.to_string(),
        Ok(_) => panic!("second bind on the same address succeeded"),
    };
    assert!(
        msg.contains(&handle.local_addr().to_string()),
        "error names the address: {msg}"
    );
    handle.shutdown();
}

#[test]
fn unreadable_host_key_is_a_startup_error() {
    let dir = tempfile::tempdir().unwrap();
    let (store, _) = EventStore::open(dir.path().join("log.bin")).unwrap();
    let mut config = test_config(dir.path());
    std::fs::write(&config.host_key_path, "garbage\n").unwrap();
    config.bind = "127.0.0.1:0".parse().unwrap();
    assert!(start_listener(config, store).is_err());
}

#[test]
fn immediate_shutdown_leaves_empty_store() {
    let dir = tempfile::tempdir().unwrap();
    let (store, _) = EventStore::open(dir.path().join("log.bin")).unwrap();
    let handle = start_listener(test_config(dir.path()), store.clone()).unwrap();
    handle.shutdown();
    assert_eq!(store.snapshot().events.len(), 0);
    assert_eq!(store.high_water(), 0);
}

// ---- run_session driven directly over scripted in-memory streams ----

struct ScriptedStream {
    input: Vec<u8>,
    pos: usize,
    chunk: usize,
}

impl Read for ScriptedStream {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        if self.pos >= self.input.len() {
            return Ok(0);
        }
        let n = self.chunk.min(buf.len()).min(self.input.len() - self.pos);
        buf[..n].copy_from_slice(&self.input[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

impl Write for ScriptedStream {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl SessionStream for ScriptedStream {
    fn set_read_timeout(&mut self, _t: Option<Duration>) -> std::io::Result<()> {
        Ok(())
    }
}

#[test]
fn scripted_garbage_session_never_panics() {
    let dir = tempfile::tempdir().unwrap();
    let (store, _) = EventStore::open(dir.path().join("log.bin")).unwrap();
    let server_config = ServerConfig {
        banner: b"SSH-2.0-test".to_vec(),
        host_key_seed: [9u8; 32],
        max_auth_attempts: 6,
    };
    let peer = "203.0.113.1:55555".parse().unwrap();
    let mut rng = Prng::new(77);
    for case in 0..300u64 {
        let mut input = Vec::new();
        if case % 3 == 0 {
            input.extend_from_slice(b"SSH-2.0-noise\r\n");
        }
        let len = rng.next_below(900) as usize;
        let mut noise = vec![0u8; len];
        rng.fill_bytes(&mut noise);
        input.extend_from_slice(&noise);
        let stream = ScriptedStream {
            input,
            pos: 0,
            chunk: 61,
        };
        let record = run_session(stream, peer, &server_config, Duration::from_secs(5), &store);
        assert!(matches!(
            record.end_reason,
            EndReason::ProtocolError | EndReason::ClientDisconnect
        ));
    }
    // garbage produced no attempts, only session records
    assert_eq!(store.snapshot().events.len(), 0);
}
