//! Live credential replay against a running honeypot.
//!
//! Draws (username, password) pairs from a campaign profile, opens real
//! SSH sessions and fires them, waiting for each failure reply before
//! the next attempt. The summary records exactly what was sent per
//! session, which is the other half of the capture-fidelity check: the
//! store must end up with the same multiset.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use sshtrap_core::profile::AttackProfile;
use sshtrap_core::rng::Prng;
use sshtrap_core::ssh::client::ClientConfig;
use sshtrap_core::ssh::{ClientEvent, ClientSession};
use sshtrap_core::synth::synthesize_log;

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("cannot connect to {addr}: {source}")]
    Connect {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("replay io: {0}")]
    Io(#[from] std::io::Error),
    #[error("protocol failure during {phase}: {message}")]
    Protocol {
        phase: &'static str,
        message: String,
    },
    #[error("server unexpectedly accepted an authentication attempt")]
    UnexpectedSuccess,
    #[error("profile yields no attempts to send")]
    EmptyProfile,
    #[error("worker thread panicked")]
    WorkerPanic,
}

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    pub target: SocketAddr,
    /// Total attempts to send.
    pub scale: u64,
    /// Concurrent connections.
    pub parallel: usize,
    /// Attempts per connection before reconnecting; keep at or below the
    /// server cap to avoid tripping it mid-burst.
    pub attempts_per_connection: u32,
    pub io_timeout: Duration,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions {
            target: "127.0.0.1:2222".parse().unwrap(),
            scale: 100,
            parallel: 1,
            attempts_per_connection: 6,
            io_timeout: Duration::from_secs(10),
        }
    }
}

/// Attempts carried by one TCP connection, in send order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionLog {
    pub local_port: u16,
    /// Attempts the server acknowledged with a failure reply. A trailing
    /// attempt the server cut off (cap reached) is not listed here; the
    /// worker re-sends it on the next connection.
    pub delivered: Vec<(Vec<u8>, Vec<u8>)>,
    /// Raw wire sends, including any unacknowledged trailing attempt.
    pub wire_sent: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplaySummary {
    pub attempts_sent: u64,
    pub attempts_acknowledged: u64,
    pub sessions_opened: u64,
    pub sessions: Vec<SessionLog>,
}

/// Replays `options.scale` attempts drawn from the profile.
pub fn replay(
    profile: &AttackProfile,
    options: &ReplayOptions,
) -> Result<ReplaySummary, ReplayError> {
    let snapshot = synthesize_log(profile);
    if snapshot.events.is_empty() {
        return Err(ReplayError::EmptyProfile);
    }
    let pairs: Vec<(Vec<u8>, Vec<u8>)> = (0..options.scale)
        .map(|i| {
            let e = &snapshot.events[(i % snapshot.events.len() as u64) as usize];
            (e.username.clone(), e.credential.clone())
        })
        .collect();

    let parallel = options.parallel.max(1).min(pairs.len().max(1));
    let mut workers = Vec::new();
    for w in 0..parallel {
        let mine: Vec<(Vec<u8>, Vec<u8>)> =
            pairs.iter().skip(w).step_by(parallel).cloned().collect();
        let opts = options.clone();
        let seed = profile.seed ^ (w as u64).wrapping_mul(0x9e3779b97f4a7c15);
        workers.push(std::thread::spawn(move || run_worker(&mine, &opts, seed)));
    }

    let mut summary = ReplaySummary::default();
    for worker in workers {
        let part = worker.join().map_err(|_| ReplayError::WorkerPanic)??;
        summary.attempts_sent += part.attempts_sent;
        summary.attempts_acknowledged += part.attempts_acknowledged;
        summary.sessions_opened += part.sessions_opened;
        summary.sessions.extend(part.sessions);
    }
    Ok(summary)
}

fn run_worker(
    pairs: &[(Vec<u8>, Vec<u8>)],
    options: &ReplayOptions,
    seed: u64,
) -> Result<ReplaySummary, ReplayError> {
    let mut rng = Prng::new(seed);
    let mut summary = ReplaySummary::default();
    let mut cursor = 0usize;
    while cursor < pairs.len() {
        let batch_len = (pairs.len() - cursor).min(options.attempts_per_connection.max(1) as usize);
        let batch = &pairs[cursor..cursor + batch_len];
        let log = run_connection(batch, options, &mut rng)?;
        if log.delivered.is_empty() {
            return Err(ReplayError::Protocol {
                phase: "auth",
                message: "server acknowledged nothing on a fresh connection".into(),
            });
        }
        summary.attempts_sent += log.wire_sent;
        summary.attempts_acknowledged += log.delivered.len() as u64;
        summary.sessions_opened += 1;
        // unacknowledged tail attempts are retried on the next connection
        cursor += log.delivered.len();
        summary.sessions.push(log);
    }
    Ok(summary)
}

/// Opens one connection and sends as much of `batch` as the server
/// tolerates; returns what actually went out.
fn run_connection(
    batch: &[(Vec<u8>, Vec<u8>)],
    options: &ReplayOptions,
    rng: &mut Prng,
) -> Result<SessionLog, ReplayError> {
    let mut stream = TcpStream::connect(options.target).map_err(|source| ReplayError::Connect {
        addr: options.target,
        source,
    })?;
    stream.set_read_timeout(Some(options.io_timeout))?;
    stream.set_nodelay(true)?;
    let local_port = stream.local_addr()?.port();

    let mut cookie = [0u8; 16];
    rng.fill_bytes(&mut cookie);
    let mut ephemeral = [0u8; 32];
    rng.fill_bytes(&mut ephemeral);
    let (mut client, first) =
        ClientSession::new(&ClientConfig::default(), cookie, ephemeral, rng.next_u64());
    stream.write_all(&first)?;

    let mut log = SessionLog {
        local_port,
        delivered: Vec::new(),
        wire_sent: 0,
    };

    // handshake until ready
    let mut buf = [0u8; 4096];
    'handshake: loop {
        let n = read_some(&mut stream, &mut buf, "handshake")?;
        if n == 0 {
            return Err(ReplayError::Protocol {
                phase: "handshake",
                message: "server closed the connection".into(),
            });
        }
        for event in client.input(&buf[..n]) {
            match event {
                ClientEvent::Send(bytes) => stream.write_all(&bytes)?,
                ClientEvent::ReadyForAuth => break 'handshake,
                ClientEvent::Failed(message) => {
                    return Err(ReplayError::Protocol {
                        phase: "handshake",
                        message,
                    })
                }
                ClientEvent::Disconnected { message } => {
                    return Err(ReplayError::Protocol {
                        phase: "handshake",
                        message,
                    })
                }
                _ => {}
            }
        }
    }

    // one attempt at a time, each acknowledged before the next
    for (username, password) in batch {
        let pkt = client
            .send_password(username, password)
            .map_err(|e| ReplayError::Protocol {
                phase: "auth",
                message: e.0,
            })?;
        stream.write_all(&pkt)?;
        log.wire_sent += 1;

        let mut acknowledged = false;
        let mut disconnected = false;
        while !acknowledged && !disconnected {
            let n = read_some(&mut stream, &mut buf, "auth")?;
            if n == 0 {
                disconnected = true;
                break;
            }
            for event in client.input(&buf[..n]) {
                match event {
                    ClientEvent::AuthFailure {
                        partial_success, ..
                    } => {
                        if partial_success {
                            return Err(ReplayError::Protocol {
                                phase: "auth",
                                message: "partial success from a honeypot".into(),
                            });
                        }
                        log.delivered.push((username.clone(), password.clone()));
                        acknowledged = true;
                    }
                    ClientEvent::AuthSuccess => return Err(ReplayError::UnexpectedSuccess),
                    ClientEvent::Disconnected { .. } => disconnected = true,
                    ClientEvent::Send(bytes) => stream.write_all(&bytes)?,
                    ClientEvent::Failed(message) => {
                        return Err(ReplayError::Protocol {
                            phase: "auth",
                            message,
                        })
                    }
                    ClientEvent::ReadyForAuth => {}
                }
            }
        }
        if disconnected {
            break;
        }
    }
    Ok(log)
}

fn read_some(
    stream: &mut TcpStream,
    buf: &mut [u8],
    phase: &'static str,
) -> Result<usize, ReplayError> {
    match stream.read(buf) {
        Ok(0) => Ok(0),
        Ok(n) => Ok(n),
        Err(e)
            if e.kind() == std::io::ErrorKind::WouldBlock
                || e.kind() == std::io::ErrorKind::TimedOut =>
        {
            Err(ReplayError::Protocol {
                phase,
                message: "timed out waiting for server".into(),
            })
        }
        Err(e) => Err(ReplayError::Io(e)),
    }
}
