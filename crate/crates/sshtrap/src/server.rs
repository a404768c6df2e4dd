//! TCP listener and per-connection session driver.
//!
//! Sessions run on plain threads, one per connection, bounded by
//! `max_sessions`; the event store is the only shared resource. The
//! driver is generic over the byte stream so tests can run it against
//! in-memory connections and hostile scripted input.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use sshtrap_core::event::{EndReason, SessionRecord};
use sshtrap_core::ssh::{ServerConfig, ServerOutput, ServerSession, SessionEntropy};

use crate::config::CaptureConfig;
use crate::hostkey;
use crate::store::{EventStore, NewAttempt, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    HostKey(#[from] crate::hostkey::HostKeyError),
    #[error("listener io: {0}")]
    Io(#[from] std::io::Error),
}

pub fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

fn session_entropy() -> SessionEntropy {
    let mut bytes = [0u8; SessionEntropy::LEN];
    // failure leaves zeroed entropy: still functional, only predictable,
    // which a honeypot can live with
    let _ = getrandom::fill(&mut bytes);
    SessionEntropy::from_bytes(&bytes)
}

/// A byte stream a session can be driven over. Reads that time out must
/// return `WouldBlock` or `TimedOut`.
pub trait SessionStream: Read + Write {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> std::io::Result<()>;
}

impl SessionStream for TcpStream {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> std::io::Result<()> {
        TcpStream::set_read_timeout(self, timeout)
    }
}

/// Persists one attempt; returns its sequence number.
pub fn record_attempt(
    store: &EventStore,
    session_id: u64,
    peer: SocketAddr,
    client_banner: &[u8],
    request: &sshtrap_core::ssh::server::AuthRequest,
) -> Result<u64, StoreError> {
    store.append(NewAttempt {
        timestamp_ms: now_ms(),
        session_id,
        source_ip: peer.ip(),
        source_port: peer.port(),
        client_banner: client_banner.to_vec(),
        method: request.method,
        username: request.username.clone(),
        credential: request.credential.clone(),
    })
}

/// Drives one connection to completion and stores its record.
///
/// Every auth attempt is appended to the store before its failure reply
/// is written back; a store failure cuts the connection instead.
pub fn run_session<S: SessionStream>(
    mut stream: S,
    peer: SocketAddr,
    server_config: &ServerConfig,
    idle_timeout: Duration,
    store: &EventStore,
) -> SessionRecord {
    let session_id = store.allocate_session_id();
    let started_at_ms = now_ms();
    let (mut session, first) = ServerSession::new(server_config, session_entropy());
    let _ = stream.set_read_timeout(Some(idle_timeout));

    let mut end_reason = if stream.write_all(&first).is_err() {
        session.eof();
        Some(EndReason::ClientDisconnect)
    } else {
        None
    };

    let mut buf = [0u8; 4096];
    while end_reason.is_none() {
        let outputs = match stream.read(&mut buf) {
            Ok(0) => session.eof(),
            Ok(n) => session.input(&buf[..n]),
            Err(e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                session.idle_timeout()
            }
            Err(_) => session.eof(),
        };
        end_reason = drive_outputs(&mut stream, &mut session, outputs, session_id, peer, store);
    }

    let record = SessionRecord {
        session_id,
        source_ip: peer.ip(),
        source_port: peer.port(),
        client_banner: session.client_banner().to_vec(),
        started_at_ms,
        ended_at_ms: now_ms().max(started_at_ms),
        end_reason: end_reason.unwrap_or(EndReason::ClientDisconnect),
        attempt_count: session.attempt_count(),
    };
    if let Err(e) = store.append_session(record.clone()) {
        eprintln!("sshtrap: failed to store session record: {e}");
    }
    record
}

/// Applies outputs until the queue drains or the session ends.
fn drive_outputs<S: SessionStream>(
    stream: &mut S,
    session: &mut ServerSession,
    outputs: Vec<ServerOutput>,
    session_id: u64,
    peer: SocketAddr,
    store: &EventStore,
) -> Option<EndReason> {
    let mut queue = std::collections::VecDeque::from(outputs);
    while let Some(output) = queue.pop_front() {
        match output {
            ServerOutput::Send(bytes) => {
                if stream.write_all(&bytes).is_err() {
                    // peer is gone; drop whatever else was queued
                    for late in session.eof() {
                        if let ServerOutput::End(reason) = late {
                            return Some(reason);
                        }
                    }
                    return Some(EndReason::ClientDisconnect);
                }
            }
            ServerOutput::Attempt(request) => {
                let followups = match record_attempt(
                    store,
                    session_id,
                    peer,
                    session.client_banner(),
                    &request,
                ) {
                    Ok(_seq) => session.attempt_recorded(),
                    Err(e) => {
                        eprintln!("sshtrap: store append failed, cutting session: {e}");
                        session.abort()
                    }
                };
                queue.extend(followups);
            }
            ServerOutput::End(reason) => return Some(reason),
        }
    }
    None
}

/// Running listener; dropping it does not stop the thread, call
/// [`ListenerHandle::shutdown`].
pub struct ListenerHandle {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_thread: Option<std::thread::JoinHandle<()>>,
    sessions: Arc<Mutex<Vec<std::thread::JoinHandle<()>>>>,
    active: Arc<AtomicUsize>,
}

impl ListenerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn active_sessions(&self) -> usize {
        self.active.load(Ordering::SeqCst)
    }

    /// Stops accepting, drains live sessions, and returns once the store
    /// holds every acknowledged attempt.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // poke the blocking accept
        let _ = TcpStream::connect(self.local_addr);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
        let sessions: Vec<_> = std::mem::take(&mut *self.sessions.lock().unwrap());
        for t in sessions {
            let _ = t.join();
        }
    }
}

/// Binds and starts accepting; fails before accepting anything when the
/// address is taken or the host key is unusable.
pub fn start_listener(
    config: CaptureConfig,
    store: EventStore,
) -> Result<ListenerHandle, ServeError> {
    config.validate()?;
    let host_key_seed = hostkey::load_or_generate(&config.host_key_path)?;
    let listener = TcpListener::bind(config.bind).map_err(|source| ServeError::Bind {
        addr: config.bind,
        source,
    })?;
    let local_addr = listener.local_addr()?;

    let server_config = Arc::new(ServerConfig {
        banner: config.banner.clone(),
        host_key_seed,
        max_auth_attempts: config.max_auth_attempts,
    });
    let stop = Arc::new(AtomicBool::new(false));
    let sessions = Arc::new(Mutex::new(Vec::new()));
    let active = Arc::new(AtomicUsize::new(0));

    let accept_thread = {
        let stop = stop.clone();
        let sessions = sessions.clone();
        let active = active.clone();
        let idle_timeout = config.idle_timeout;
        let max_sessions = config.max_sessions;
        std::thread::spawn(move || {
            for incoming in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let stream = match incoming {
                    Ok(s) => s,
                    Err(_) => continue,
                };
                if active.load(Ordering::SeqCst) >= max_sessions {
                    // at capacity: close instead of queueing
                    drop(stream);
                    continue;
                }
                let peer = match stream.peer_addr() {
                    Ok(p) => p,
                    Err(_) => continue,
                };
                active.fetch_add(1, Ordering::SeqCst);
                let store = store.clone();
                let server_config = server_config.clone();
                let active_in_session = active.clone();
                let handle = std::thread::spawn(move || {
                    run_session(stream, peer, &server_config, idle_timeout, &store);
                    active_in_session.fetch_sub(1, Ordering::SeqCst);
                });
                let mut guard = sessions.lock().unwrap();
                guard.retain(|t: &std::thread::JoinHandle<()>| !t.is_finished());
                guard.push(handle);
            }
        })
    };

    Ok(ListenerHandle {
        local_addr,
        stop,
        accept_thread: Some(accept_thread),
        sessions,
        active,
    })
}
