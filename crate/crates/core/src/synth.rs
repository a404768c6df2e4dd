//! Deterministic event-log synthesis from an [`AttackProfile`].
//!
//! The generated snapshot reproduces the profile's counts exactly, not in
//! expectation: analyzing it returns the profile's username counts and
//! per-source totals verbatim. Everything is a pure function of
//! (profile, seed).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::net::IpAddr;

use crate::event::{AuthAttemptEvent, AuthMethod, EndReason, EventLogSnapshot, SessionRecord};
use crate::profile::AttackProfile;
use crate::rng::Prng;

const CLIENT_BANNERS: [&[u8]; 5] = [
    b"SSH-2.0-libssh-0.6.3",
    b"SSH-2.0-Go",
    b"SSH-2.0-PUTTY",
    b"SSH-2.0-libssh2_1.4.3",
    b"SSH-2.0-OpenSSH_7.3",
];

struct OpenSession {
    id: u64,
    source: IpAddr,
    port: u16,
    count: u32,
    started: i64,
    last: i64,
    banner_idx: usize,
}

impl OpenSession {
    fn close(&self, reason: EndReason) -> SessionRecord {
        SessionRecord {
            session_id: self.id,
            source_ip: self.source,
            source_port: self.port,
            client_banner: CLIENT_BANNERS[self.banner_idx].to_vec(),
            started_at_ms: self.started,
            ended_at_ms: self.last,
            end_reason: reason,
            attempt_count: self.count,
        }
    }
}

/// Synthesizes the campaign described by `profile`.
pub fn synthesize_log(profile: &AttackProfile) -> EventLogSnapshot {
    let base = profile.total as usize;

    // Independent deterministic streams so a change in one draw does not
    // reshuffle the others.
    let mut seed_gen = Prng::new(profile.seed);
    let mut rng_users = Prng::new(seed_gen.next_u64());
    let mut rng_passwords = Prng::new(seed_gen.next_u64());
    let mut rng_sources = Prng::new(seed_gen.next_u64());
    let mut rng_times = Prng::new(seed_gen.next_u64());
    let mut rng_sessions = Prng::new(seed_gen.next_u64());

    let mut usernames = expand_multiset(&profile.username_counts);
    rng_users.shuffle(&mut usernames);
    let mut passwords = expand_multiset(&profile.password_counts);
    rng_passwords.shuffle(&mut passwords);
    let mut sources: Vec<u32> = Vec::with_capacity(base);
    for (idx, spec) in profile.sources.iter().enumerate() {
        for _ in 0..spec.weight {
            sources.push(idx as u32);
        }
    }
    rng_sources.shuffle(&mut sources);

    let mut times: Vec<i64> = (0..base)
        .map(|_| profile.start_time_ms + rng_times.next_below(profile.duration_ms) as i64)
        .collect();
    times.sort_unstable();

    let source_banner: Vec<usize> = profile
        .sources
        .iter()
        .map(|_| rng_sessions.next_below(CLIENT_BANNERS.len() as u64) as usize)
        .collect();

    struct Raw {
        ts: i64,
        source: IpAddr,
        banner_idx: usize,
        username: Vec<u8>,
        credential: Vec<u8>,
    }

    let mut raw: Vec<Raw> = Vec::with_capacity(profile.total_events() as usize);
    for i in 0..base {
        raw.push(Raw {
            ts: times[i],
            source: profile.sources[sources[i] as usize].ip,
            banner_idx: source_banner[sources[i] as usize],
            username: core::mem::take(&mut usernames[i]),
            credential: core::mem::take(&mut passwords[i]),
        });
    }

    // Burst extensions: dense windows of distinct credentials against one
    // username, the fixture shape for dictionary-attack detection.
    for (b_idx, burst) in profile.bursts.iter().enumerate() {
        let start = profile.start_time_ms + (burst.start_offset_s * 1000) as i64;
        let span_ms = burst.window_s * 1000;
        let banner_idx = b_idx % CLIENT_BANNERS.len();
        for j in 0..burst.attempts {
            let ts = if burst.attempts == 1 {
                start
            } else {
                start + (span_ms * j / (burst.attempts - 1)) as i64
            };
            let cred = format!("burst{}-{}", b_idx, j % burst.distinct).into_bytes();
            raw.push(Raw {
                ts,
                source: burst.ip,
                banner_idx,
                username: burst.username.clone(),
                credential: cred,
            });
        }
    }

    raw.sort_by_key(|r| r.ts);

    // Group each source's attempts, in time order, into sessions capped at
    // attempts-per-session, the way a real client run lands in the log.
    let cap = profile.attempts_per_session;
    let mut open: BTreeMap<IpAddr, OpenSession> = BTreeMap::new();
    let mut next_session_id: u64 = 1;
    let mut events: Vec<AuthAttemptEvent> = Vec::with_capacity(raw.len());
    let mut sessions: Vec<SessionRecord> = Vec::new();

    for (i, r) in raw.iter().enumerate() {
        let needs_new = open.get(&r.source).is_none_or(|s| s.count >= cap);
        if needs_new {
            if let Some(done) = open.remove(&r.source) {
                sessions.push(done.close(EndReason::MaxAttempts));
            }
            open.insert(
                r.source,
                OpenSession {
                    id: next_session_id,
                    source: r.source,
                    port: 1024 + rng_sessions.next_below(64_000) as u16,
                    count: 0,
                    started: r.ts,
                    last: r.ts,
                    banner_idx: r.banner_idx,
                },
            );
            next_session_id += 1;
        }
        let sess = open.get_mut(&r.source).expect("session just ensured");
        sess.count += 1;
        sess.last = r.ts;
        events.push(AuthAttemptEvent {
            seq: i as u64 + 1,
            timestamp_ms: r.ts,
            session_id: sess.id,
            source_ip: r.source,
            source_port: sess.port,
            client_banner: CLIENT_BANNERS[sess.banner_idx].to_vec(),
            method: AuthMethod::Password,
            username: r.username.clone(),
            credential: r.credential.clone(),
        });
    }
    for (_, done) in open {
        let reason = if done.count >= cap {
            EndReason::MaxAttempts
        } else {
            EndReason::ClientDisconnect
        };
        sessions.push(done.close(reason));
    }
    sessions.sort_by_key(|s| s.session_id);

    EventLogSnapshot { events, sessions }
}

fn expand_multiset(counts: &[(Vec<u8>, u64)]) -> Vec<Vec<u8>> {
    let total: u64 = counts.iter().map(|(_, c)| *c).sum();
    let mut out = Vec::with_capacity(total as usize);
    for (value, count) in counts {
        for _ in 0..*count {
            out.push(value.clone());
        }
    }
    out
}
