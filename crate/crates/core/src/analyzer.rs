//! Forensic analysis over an event-log snapshot: totals, credential
//! rankings, per-source aggregates, country dispersion, dictionary-attack
//! detection and default-credential matching.
//!
//! All functions are pure and order-insensitive: shuffling the events of a
//! snapshot (timestamps preserved) never changes any output.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::net::IpAddr;

use crate::event::{AuthMethod, EventLogSnapshot};
use crate::geo::{CountryCode, GeoDatabase};

/// A ranked key (username or password) with its attempt count.
/// Ranks run 1..n; counts are non-increasing; ties order by ascending key
/// bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedCount {
    pub key: Vec<u8>,
    pub count: u64,
    pub rank: u32,
}

/// Per-source activity summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceAggregate {
    pub source_ip: IpAddr,
    pub attempt_count: u64,
    pub distinct_usernames: u64,
    pub distinct_credentials: u64,
    pub first_seen_ms: i64,
    pub last_seen_ms: i64,
}

/// Share of attempts attributed to one country (or to no known range).
#[derive(Debug, Clone, PartialEq)]
pub struct CountryShare {
    pub country: Option<CountryCode>,
    pub count: u64,
    /// Fraction of total attempts × 100, full precision.
    pub percent: f64,
}

/// A (source, username) pair that ran a credential dictionary within one
/// time window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DictionaryAttackFinding {
    pub source_ip: IpAddr,
    pub username: Vec<u8>,
    pub attempts: u64,
    pub distinct_credentials: u64,
    pub window_start_ms: i64,
    pub window_end_ms: i64,
}

/// A factory-default credential pair observed in the log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefaultCredentialHit {
    pub username: Vec<u8>,
    pub password: Vec<u8>,
    pub occurrences: u64,
}

/// Thresholds for the dictionary-attack detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectorParams {
    pub window_seconds: u64,
    pub min_attempts: u64,
    pub min_distinct: u64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            window_seconds: 60,
            min_attempts: 10,
            min_distinct: 5,
        }
    }
}

/// Everything the analyzer knows about one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub total_attempts: u64,
    pub distinct_sources: u64,
    pub top_usernames: Vec<RankedCount>,
    pub top_passwords: Vec<RankedCount>,
    pub sources: Vec<SourceAggregate>,
    pub country_shares: Vec<CountryShare>,
    pub dictionary_findings: Vec<DictionaryAttackFinding>,
    pub default_hits: Vec<DefaultCredentialHit>,
    pub parameters: DetectorParams,
}

/// Count of captured attempts.
pub fn total_attempts(snapshot: &EventLogSnapshot) -> u64 {
    snapshot.events.len() as u64
}

fn ranked_from_counts(counts: BTreeMap<Vec<u8>, u64>, n: usize) -> Vec<RankedCount> {
    let mut entries: Vec<(Vec<u8>, u64)> = counts.into_iter().collect();
    // BTreeMap iteration is already key-ascending, so a stable sort by
    // descending count leaves ties in ascending key order.
    entries.sort_by_key(|&(_, count)| core::cmp::Reverse(count));
    entries
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(i, (key, count))| RankedCount {
            key,
            count,
            rank: i as u32 + 1,
        })
        .collect()
}

/// Top-n usernames over credential-bearing probes (password and none
/// methods).
pub fn top_usernames(snapshot: &EventLogSnapshot, n: usize) -> Vec<RankedCount> {
    let mut counts: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
    for e in &snapshot.events {
        if matches!(e.method, AuthMethod::Password | AuthMethod::None) {
            *counts.entry(e.username.clone()).or_insert(0) += 1;
        }
    }
    ranked_from_counts(counts, n)
}

/// Top-n passwords over password-method attempts.
pub fn top_passwords(snapshot: &EventLogSnapshot, n: usize) -> Vec<RankedCount> {
    let mut counts: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
    for e in &snapshot.events {
        if e.method == AuthMethod::Password {
            *counts.entry(e.credential.clone()).or_insert(0) += 1;
        }
    }
    ranked_from_counts(counts, n)
}

/// One aggregate per source, descending by attempt count, ties by
/// ascending IP.
pub fn source_aggregates(snapshot: &EventLogSnapshot) -> Vec<SourceAggregate> {
    struct Acc {
        count: u64,
        usernames: BTreeSet<Vec<u8>>,
        credentials: BTreeSet<Vec<u8>>,
        first: i64,
        last: i64,
    }
    let mut by_ip: BTreeMap<IpAddr, Acc> = BTreeMap::new();
    for e in &snapshot.events {
        let acc = by_ip.entry(e.source_ip).or_insert_with(|| Acc {
            count: 0,
            usernames: BTreeSet::new(),
            credentials: BTreeSet::new(),
            first: e.timestamp_ms,
            last: e.timestamp_ms,
        });
        acc.count += 1;
        acc.usernames.insert(e.username.clone());
        acc.credentials.insert(e.credential.clone());
        acc.first = acc.first.min(e.timestamp_ms);
        acc.last = acc.last.max(e.timestamp_ms);
    }
    let mut out: Vec<SourceAggregate> = by_ip
        .into_iter()
        .map(|(ip, acc)| SourceAggregate {
            source_ip: ip,
            attempt_count: acc.count,
            distinct_usernames: acc.usernames.len() as u64,
            distinct_credentials: acc.credentials.len() as u64,
            first_seen_ms: acc.first,
            last_seen_ms: acc.last,
        })
        .collect();
    // stable sort keeps the ascending-IP order from the map on ties
    out.sort_by_key(|agg| core::cmp::Reverse(agg.attempt_count));
    out
}

/// Attempts grouped by resolved country, descending by count; sources the
/// database cannot place land in the `None` bucket. Ties order by country
/// code with unknown last.
pub fn country_shares(snapshot: &EventLogSnapshot, geo: &GeoDatabase) -> Vec<CountryShare> {
    let total = snapshot.events.len() as u64;
    let mut counts: BTreeMap<Option<CountryCode>, u64> = BTreeMap::new();
    let mut ip_cache: BTreeMap<IpAddr, Option<CountryCode>> = BTreeMap::new();
    for e in &snapshot.events {
        let country = *ip_cache
            .entry(e.source_ip)
            .or_insert_with(|| geo.resolve(e.source_ip));
        *counts.entry(country).or_insert(0) += 1;
    }
    let mut out: Vec<CountryShare> = counts
        .into_iter()
        .map(|(country, count)| CountryShare {
            country,
            count,
            percent: count as f64 / total as f64 * 100.0,
        })
        .collect();
    out.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| country_order(&a.country).cmp(&country_order(&b.country)))
    });
    out
}

fn country_order(c: &Option<CountryCode>) -> (bool, [u8; 2]) {
    match c {
        Some(code) => (false, code.0),
        None => (true, [0xff; 2]),
    }
}

/// Renders `count` as a percentage of `total` with two decimals,
/// round-half-even, using integer arithmetic so rendering is exact.
pub fn format_percent(count: u64, total: u64) -> String {
    use core::fmt::Write;
    let mut s = String::new();
    if total == 0 {
        let _ = write!(s, "0.00");
        return s;
    }
    let scaled = (count as u128) * 10_000;
    let total = total as u128;
    let mut q = scaled / total;
    let rem = scaled % total;
    match (rem * 2).cmp(&total) {
        core::cmp::Ordering::Greater => q += 1,
        core::cmp::Ordering::Equal => q += q & 1,
        core::cmp::Ordering::Less => {}
    }
    let _ = write!(s, "{}.{:02}", q / 100, q % 100);
    s
}

/// Flags (source, username) pairs where some window of
/// `params.window_seconds` holds at least `min_attempts` password attempts
/// using at least `min_distinct` distinct credentials. One finding per
/// pair, covering its densest qualifying window (most attempts, then most
/// distinct credentials, then earliest start).
pub fn detect_dictionary_attacks(
    snapshot: &EventLogSnapshot,
    params: &DetectorParams,
) -> Vec<DictionaryAttackFinding> {
    type TimedAttempt = (i64, Vec<u8>);
    let mut groups: BTreeMap<(IpAddr, Vec<u8>), Vec<TimedAttempt>> = BTreeMap::new();
    for e in &snapshot.events {
        if e.method == AuthMethod::Password {
            groups
                .entry((e.source_ip, e.username.clone()))
                .or_default()
                .push((e.timestamp_ms, e.credential.clone()));
        }
    }

    let window_ms = params.window_seconds.saturating_mul(1000) as i64;
    let mut findings = Vec::new();
    for ((ip, username), mut attempts) in groups {
        attempts.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        if (attempts.len() as u64) < params.min_attempts {
            continue;
        }
        if let Some(best) = densest_window(&attempts, window_ms, params) {
            findings.push(DictionaryAttackFinding {
                source_ip: ip,
                username,
                attempts: best.count,
                distinct_credentials: best.distinct,
                window_start_ms: best.start,
                window_end_ms: best.end,
            });
        }
    }
    findings.sort_by(|a, b| {
        b.attempts
            .cmp(&a.attempts)
            .then_with(|| a.source_ip.cmp(&b.source_ip))
            .then_with(|| a.username.cmp(&b.username))
    });
    findings
}

struct WindowResult {
    count: u64,
    distinct: u64,
    start: i64,
    end: i64,
}

/// Slides a window anchored at each distinct attempt time over a
/// time-sorted attempt list and returns the best qualifying window.
fn densest_window(
    attempts: &[(i64, Vec<u8>)],
    window_ms: i64,
    params: &DetectorParams,
) -> Option<WindowResult> {
    let mut best: Option<WindowResult> = None;
    let mut distinct: BTreeMap<&[u8], u64> = BTreeMap::new();
    let mut left = 0usize;
    let mut right = 0usize; // exclusive
    for anchor in 0..attempts.len() {
        let start = attempts[anchor].0;
        if anchor > 0 && attempts[anchor - 1].0 == start {
            continue; // same anchor time, same window
        }
        while left < anchor {
            let cred = attempts[left].1.as_slice();
            if let Some(c) = distinct.get_mut(cred) {
                *c -= 1;
                if *c == 0 {
                    distinct.remove(cred);
                }
            }
            left += 1;
        }
        let limit = start.saturating_add(window_ms);
        while right < attempts.len() && attempts[right].0 <= limit {
            *distinct.entry(attempts[right].1.as_slice()).or_insert(0) += 1;
            right += 1;
        }
        debug_assert!(right > anchor);
        let count = (right - left) as u64;
        let distinct_count = distinct.len() as u64;
        if count >= params.min_attempts && distinct_count >= params.min_distinct {
            let end = attempts[right - 1].0;
            let better = match &best {
                None => true,
                Some(b) => (count, distinct_count) > (b.count, b.distinct),
            };
            if better {
                best = Some(WindowResult {
                    count,
                    distinct: distinct_count,
                    start,
                    end,
                });
            }
        }
    }
    best
}

/// Matches password attempts against a defaults list with exact byte
/// equality; hits keep the defaults-list order.
pub fn match_default_credentials(
    snapshot: &EventLogSnapshot,
    defaults: &[(Vec<u8>, Vec<u8>)],
) -> Vec<DefaultCredentialHit> {
    let mut counts: BTreeMap<(&[u8], &[u8]), u64> = BTreeMap::new();
    for e in &snapshot.events {
        if e.method == AuthMethod::Password {
            if let Some(c) = counts.get_mut(&(e.username.as_slice(), e.credential.as_slice())) {
                *c += 1;
            } else if defaults
                .iter()
                .any(|(u, p)| u == &e.username && p == &e.credential)
            {
                counts.insert((e.username.as_slice(), e.credential.as_slice()), 1);
            }
        }
    }
    let mut seen: BTreeSet<(&[u8], &[u8])> = BTreeSet::new();
    let mut out = Vec::new();
    for (u, p) in defaults {
        if !seen.insert((u.as_slice(), p.as_slice())) {
            continue; // duplicate defaults entry
        }
        if let Some(&occurrences) = counts.get(&(u.as_slice(), p.as_slice())) {
            out.push(DefaultCredentialHit {
                username: u.clone(),
                password: p.clone(),
                occurrences,
            });
        }
    }
    out
}

/// Runs every analysis and assembles the full report.
pub fn build_report(
    snapshot: &EventLogSnapshot,
    geo: &GeoDatabase,
    params: &DetectorParams,
    defaults: &[(Vec<u8>, Vec<u8>)],
    n: usize,
) -> AnalysisReport {
    let sources = source_aggregates(snapshot);
    AnalysisReport {
        total_attempts: total_attempts(snapshot),
        distinct_sources: sources.len() as u64,
        top_usernames: top_usernames(snapshot, n),
        top_passwords: top_passwords(snapshot, n),
        country_shares: country_shares(snapshot, geo),
        dictionary_findings: detect_dictionary_attacks(snapshot, params),
        default_hits: match_default_credentials(snapshot, defaults),
        sources,
        parameters: *params,
    }
}
