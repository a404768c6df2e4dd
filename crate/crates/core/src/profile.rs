//! Attack campaign profiles.
//!
//! A profile is the generative inverse of the analyzer: it states the
//! exact per-source, per-username and per-password event counts that a
//! synthesized log must reproduce. The text format is line oriented:
//!
//! ```text
//! [campaign]
//! total = 105764            # base events (all password attempts)
//! duration-seconds = 540000
//! start-time = 2021-03-01T00:00:00.000Z
//! seed = 42
//! attempts-per-session = 6
//!
//! [sources]                 # ip weight [country-hint]
//! 218.92.0.107 24733 CN
//!
//! [usernames]               # count name
//! 101634 root
//!
//! [username-tail]           # long tail of distinct low-count names
//! events = 2553
//! max-per-name = 12
//! prefix = svc
//!
//! [passwords]               # count password, or bare lines for
//! 18000 admin               # rank-only mode with auto-assigned,
//!                           # strictly decreasing counts
//! [password-tail]
//! events = 3314
//! max-per-name = 400
//! prefix = trypw
//!
//! [bursts]                  # ip username start-offset-s window-s attempts distinct
//! 203.0.113.9 root 600 30 40 40
//! ```
//!
//! `#` starts a comment; names and passwords use the `\xHH` escaping from
//! [`crate::escape`], so values with spaces are written as `\x20`.
//! Sections `[usernames]`/`[sources]` must each sum to `total`; the
//! password side must too (tail included). Bursts add events on top of
//! `total`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::net::IpAddr;

use crate::escape::unescape_bytes;
use crate::timefmt::parse_utc_ms;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileError {
    pub line: usize,
    pub message: String,
}

impl core::fmt::Display for ProfileError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> ProfileError {
    ProfileError {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpec {
    pub ip: IpAddr,
    pub weight: u64,
    pub country_hint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BurstSpec {
    pub ip: IpAddr,
    pub username: Vec<u8>,
    pub start_offset_s: u64,
    pub window_s: u64,
    pub attempts: u64,
    pub distinct: u64,
}

/// A fully validated campaign description.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackProfile {
    pub total: u64,
    pub duration_ms: u64,
    pub start_time_ms: i64,
    pub seed: u64,
    pub attempts_per_session: u32,
    pub sources: Vec<SourceSpec>,
    /// (username, count), explicit entries first, then the expanded tail.
    pub username_counts: Vec<(Vec<u8>, u64)>,
    /// (password, count), explicit or auto-assigned, then the tail.
    pub password_counts: Vec<(Vec<u8>, u64)>,
    pub bursts: Vec<BurstSpec>,
}

impl AttackProfile {
    /// Base events plus burst events.
    pub fn total_events(&self) -> u64 {
        self.total + self.bursts.iter().map(|b| b.attempts).sum::<u64>()
    }
}

#[derive(Default)]
struct TailSpec {
    events: u64,
    max_per_name: u64,
    prefix: String,
    line: usize,
}

/// Rank-only password lists get strictly decreasing counts summing to
/// `total`: rank i of r receives `(r - i + 1) + extra/r`, with the
/// remainder of `extra` spread one-per-rank from the top.
pub fn auto_assign_counts(ranked: &[Vec<u8>], total: u64) -> Option<Vec<(Vec<u8>, u64)>> {
    let r = ranked.len() as u64;
    if r == 0 {
        return (total == 0).then(Vec::new);
    }
    let floor_sum = r * (r + 1) / 2;
    if total < floor_sum {
        return None;
    }
    let extra = total - floor_sum;
    let per = extra / r;
    let rem = extra % r;
    Some(
        ranked
            .iter()
            .enumerate()
            .map(|(i, key)| {
                let i = i as u64;
                let count = (r - i) + per + u64::from(i < rem);
                (key.clone(), count)
            })
            .collect(),
    )
}

fn expand_tail(
    tail: &TailSpec,
    explicit_min: Option<u64>,
    what: &str,
) -> Result<Vec<(Vec<u8>, u64)>, ProfileError> {
    if tail.events == 0 {
        return Ok(Vec::new());
    }
    if tail.max_per_name == 0 {
        return Err(err(
            tail.line,
            format!("{what} tail max-per-name must be positive"),
        ));
    }
    if let Some(min) = explicit_min {
        if tail.max_per_name >= min {
            return Err(err(
                tail.line,
                format!(
                    "{what} tail max-per-name {} would disturb the explicit ranking (smallest explicit count is {})",
                    tail.max_per_name, min
                ),
            ));
        }
    }
    let names_needed = tail.events.div_ceil(tail.max_per_name);
    let width = names_needed.to_string().len().max(4);
    let mut out = Vec::with_capacity(names_needed as usize);
    let mut remaining = tail.events;
    let mut idx = 0u64;
    while remaining > 0 {
        idx += 1;
        let take = remaining.min(tail.max_per_name);
        let name = format!("{}{:0width$}", tail.prefix, idx, width = width);
        out.push((name.into_bytes(), take));
        remaining -= take;
    }
    Ok(out)
}

/// Parses and validates a profile file.
pub fn parse_profile(text: &str) -> Result<AttackProfile, ProfileError> {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        None,
        Campaign,
        Sources,
        Usernames,
        UsernameTail,
        Passwords,
        PasswordTail,
        Bursts,
    }

    let mut section = Section::None;
    let mut total: Option<u64> = None;
    let mut duration_s: Option<u64> = None;
    let mut start_time_ms: i64 = 0;
    let mut seed: u64 = 0;
    let mut attempts_per_session: u32 = 6;
    let mut sources: Vec<SourceSpec> = Vec::new();
    let mut usernames: Vec<(Vec<u8>, u64)> = Vec::new();
    let mut passwords_explicit: Vec<(Vec<u8>, u64)> = Vec::new();
    let mut passwords_ranked: Vec<Vec<u8>> = Vec::new();
    let mut user_tail = TailSpec {
        prefix: "user".into(),
        ..Default::default()
    };
    let mut pass_tail = TailSpec {
        prefix: "pass".into(),
        ..Default::default()
    };
    let mut bursts: Vec<BurstSpec> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = match name {
                "campaign" => Section::Campaign,
                "sources" => Section::Sources,
                "usernames" => Section::Usernames,
                "username-tail" => Section::UsernameTail,
                "passwords" => Section::Passwords,
                "password-tail" => Section::PasswordTail,
                "bursts" => Section::Bursts,
                other => return Err(err(line_no, format!("unknown section [{other}]"))),
            };
            if section == Section::UsernameTail {
                user_tail.line = line_no;
            }
            if section == Section::PasswordTail {
                pass_tail.line = line_no;
            }
            continue;
        }
        match section {
            Section::None => return Err(err(line_no, "content before first section")),
            Section::Campaign => {
                let (key, value) =
                    split_kv(line).ok_or_else(|| err(line_no, "expected key = value"))?;
                match key {
                    "total" => total = Some(parse_u64(value, line_no, "total")?),
                    "duration-seconds" => {
                        duration_s = Some(parse_u64(value, line_no, "duration-seconds")?)
                    }
                    "start-time" => {
                        start_time_ms = parse_utc_ms(value)
                            .ok_or_else(|| err(line_no, format!("bad start-time {value:?}")))?
                    }
                    "seed" => seed = parse_u64(value, line_no, "seed")?,
                    "attempts-per-session" => {
                        let v = parse_u64(value, line_no, "attempts-per-session")?;
                        if v == 0 || v > u32::MAX as u64 {
                            return Err(err(line_no, "attempts-per-session out of range"));
                        }
                        attempts_per_session = v as u32;
                    }
                    other => return Err(err(line_no, format!("unknown campaign key {other:?}"))),
                }
            }
            Section::Sources => {
                let mut it = line.split_ascii_whitespace();
                let (ip, weight) = match (it.next(), it.next()) {
                    (Some(ip), Some(w)) => (ip, w),
                    _ => return Err(err(line_no, "expected: ip weight [country]")),
                };
                let country_hint = it.next().map(|s| s.to_string());
                if it.next().is_some() {
                    return Err(err(
                        line_no,
                        "too many fields, expected: ip weight [country]",
                    ));
                }
                let ip: IpAddr = ip
                    .parse()
                    .map_err(|_| err(line_no, format!("bad source ip {ip:?}")))?;
                let weight = parse_u64(weight, line_no, "weight")?;
                if weight == 0 {
                    return Err(err(line_no, "source weight must be positive"));
                }
                if sources.iter().any(|s| s.ip == ip) {
                    return Err(err(line_no, format!("duplicate source {ip}")));
                }
                sources.push(SourceSpec {
                    ip,
                    weight,
                    country_hint,
                });
            }
            Section::Usernames => {
                let (count, name) = parse_count_value(line, line_no)?
                    .ok_or_else(|| err(line_no, "expected: count name"))?;
                usernames.push((name, count));
            }
            Section::Passwords => match parse_count_value(line, line_no)? {
                Some((count, pw)) => passwords_explicit.push((pw, count)),
                None => {
                    let pw = unescape_bytes(line)
                        .map_err(|e| err(line_no, format!("bad password: {e}")))?;
                    passwords_ranked.push(pw);
                }
            },
            Section::UsernameTail | Section::PasswordTail => {
                let tail = if section == Section::UsernameTail {
                    &mut user_tail
                } else {
                    &mut pass_tail
                };
                let (key, value) =
                    split_kv(line).ok_or_else(|| err(line_no, "expected key = value"))?;
                match key {
                    "events" => tail.events = parse_u64(value, line_no, "events")?,
                    "max-per-name" => {
                        tail.max_per_name = parse_u64(value, line_no, "max-per-name")?
                    }
                    "prefix" => tail.prefix = value.to_string(),
                    other => return Err(err(line_no, format!("unknown tail key {other:?}"))),
                }
            }
            Section::Bursts => {
                let mut it = line.split_ascii_whitespace();
                let fields: Vec<&str> = it.by_ref().collect();
                if fields.len() != 6 {
                    return Err(err(
                        line_no,
                        "expected: ip username start-offset-s window-s attempts distinct",
                    ));
                }
                let ip: IpAddr = fields[0]
                    .parse()
                    .map_err(|_| err(line_no, format!("bad burst ip {:?}", fields[0])))?;
                let username = unescape_bytes(fields[1])
                    .map_err(|e| err(line_no, format!("bad burst username: {e}")))?;
                let start_offset_s = parse_u64(fields[2], line_no, "start-offset")?;
                let window_s = parse_u64(fields[3], line_no, "window")?;
                let attempts = parse_u64(fields[4], line_no, "attempts")?;
                let distinct = parse_u64(fields[5], line_no, "distinct")?;
                if attempts == 0 || distinct == 0 || distinct > attempts {
                    return Err(err(line_no, "need attempts >= distinct >= 1"));
                }
                bursts.push(BurstSpec {
                    ip,
                    username,
                    start_offset_s,
                    window_s,
                    attempts,
                    distinct,
                });
            }
        }
    }

    let total = total.ok_or_else(|| err(0, "missing campaign total"))?;
    let duration_s = duration_s.ok_or_else(|| err(0, "missing campaign duration-seconds"))?;
    if duration_s == 0 {
        return Err(err(0, "duration-seconds must be positive"));
    }

    // usernames: explicit + tail must cover every base event
    let explicit_user_min = usernames.iter().map(|(_, c)| *c).min();
    let user_tail_entries = expand_tail(&user_tail, explicit_user_min, "username")?;
    usernames.extend(user_tail_entries);
    let user_sum: u64 = usernames.iter().map(|(_, c)| *c).sum();
    if user_sum != total {
        return Err(err(
            0,
            format!("username counts sum to {user_sum}, campaign total is {total}"),
        ));
    }

    // passwords: explicit mode or rank-only mode, never both
    let mut password_counts = match (passwords_explicit.is_empty(), passwords_ranked.is_empty()) {
        (false, false) => {
            return Err(err(
                0,
                "mix of explicit and rank-only password lines; use one style",
            ))
        }
        (false, true) => passwords_explicit,
        (true, false) => {
            if pass_tail.events > 0 {
                return Err(err(
                    0,
                    "password-tail cannot be combined with rank-only passwords",
                ));
            }
            auto_assign_counts(&passwords_ranked, total).ok_or_else(|| {
                err(
                    0,
                    format!(
                        "total {total} too small to auto-assign {} ranked passwords",
                        passwords_ranked.len()
                    ),
                )
            })?
        }
        (true, true) if total == 0 => Vec::new(),
        (true, true) => return Err(err(0, "no passwords given")),
    };
    let explicit_pass_min = password_counts.iter().map(|(_, c)| *c).min();
    if pass_tail.events > 0 {
        let tail_entries = expand_tail(&pass_tail, explicit_pass_min, "password")?;
        password_counts.extend(tail_entries);
    }
    let pass_sum: u64 = password_counts.iter().map(|(_, c)| *c).sum();
    if pass_sum != total {
        return Err(err(
            0,
            format!("password counts sum to {pass_sum}, campaign total is {total}"),
        ));
    }

    let source_sum: u64 = sources.iter().map(|s| s.weight).sum();
    if source_sum != total {
        return Err(err(
            0,
            format!("source weights sum to {source_sum}, campaign total is {total}"),
        ));
    }

    for (i, (name, count)) in usernames.iter().enumerate() {
        if *count == 0 {
            return Err(err(0, "zero-count username entry"));
        }
        if usernames[..i].iter().any(|(n, _)| n == name) {
            return Err(err(
                0,
                format!(
                    "duplicate username entry {:?}",
                    String::from_utf8_lossy(name)
                ),
            ));
        }
    }
    for (i, (pw, count)) in password_counts.iter().enumerate() {
        if *count == 0 {
            return Err(err(0, "zero-count password entry"));
        }
        if password_counts[..i].iter().any(|(p, _)| p == pw) {
            return Err(err(
                0,
                format!("duplicate password entry {:?}", String::from_utf8_lossy(pw)),
            ));
        }
    }

    Ok(AttackProfile {
        total,
        duration_ms: duration_s
            .checked_mul(1000)
            .ok_or_else(|| err(0, "duration-seconds overflows"))?,
        start_time_ms,
        seed,
        attempts_per_session,
        sources,
        username_counts: usernames,
        password_counts,
        bursts,
    })
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(idx) => &line[..idx],
        None => line,
    }
}

fn split_kv(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim(), v.trim()))
}

fn parse_u64(value: &str, line: usize, what: &str) -> Result<u64, ProfileError> {
    value
        .parse()
        .map_err(|_| err(line, format!("bad {what} value {value:?}")))
}

/// `count value` pairs; returns None when the line has no leading integer
/// (rank-only password lines).
fn parse_count_value(line: &str, line_no: usize) -> Result<Option<(u64, Vec<u8>)>, ProfileError> {
    let Some((first, rest)) = line.split_once(char::is_whitespace) else {
        return Ok(None);
    };
    let Ok(count) = first.parse::<u64>() else {
        return Ok(None);
    };
    let value = unescape_bytes(rest.trim()).map_err(|e| err(line_no, format!("bad value: {e}")))?;
    Ok(Some((count, value)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const MINI: &str = "\
[campaign]
total = 10
duration-seconds = 100
seed = 7

[sources]
10.0.0.1 6 CN
10.0.0.2 4

[usernames]
7 root
3 admin

[passwords]
6 123456
4 admin
";

    #[test]
    fn minimal_profile_parses() {
        let p = parse_profile(MINI).unwrap();
        assert_eq!(p.total, 10);
        assert_eq!(p.sources.len(), 2);
        assert_eq!(p.sources[0].country_hint.as_deref(), Some("CN"));
        assert_eq!(p.username_counts[0], (b"root".to_vec(), 7));
        assert_eq!(p.password_counts[1], (b"admin".to_vec(), 4));
        assert_eq!(p.attempts_per_session, 6);
    }

    #[test]
    fn sums_must_match_total() {
        let bad = MINI.replace("7 root", "6 root");
        let e = parse_profile(&bad).unwrap_err();
        assert!(e.message.contains("username counts sum"));
    }

    #[test]
    fn rank_only_passwords_auto_assign() {
        let text = "\
[campaign]
total = 100
duration-seconds = 10

[sources]
10.0.0.1 100

[usernames]
100 root

[passwords]
alpha
beta
gamma
";
        let p = parse_profile(text).unwrap();
        let counts: Vec<u64> = p.password_counts.iter().map(|(_, c)| *c).collect();
        assert_eq!(counts.iter().sum::<u64>(), 100);
        assert!(counts.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(p.password_counts[0].0, b"alpha");
    }

    #[test]
    fn auto_assign_small_totals() {
        // 3 ranks need at least 3+2+1 = 6 events
        assert!(auto_assign_counts(&[b"a".to_vec(), b"b".to_vec(), b"c".to_vec()], 5).is_none());
        let c = auto_assign_counts(&[b"a".to_vec(), b"b".to_vec(), b"c".to_vec()], 6).unwrap();
        assert_eq!(c.iter().map(|(_, n)| *n).collect::<Vec<_>>(), vec![3, 2, 1]);
        let c = auto_assign_counts(&[b"a".to_vec(), b"b".to_vec(), b"c".to_vec()], 8).unwrap();
        assert_eq!(c.iter().map(|(_, n)| *n).sum::<u64>(), 8);
        assert!(c.windows(2).all(|w| w[0].1 > w[1].1));
    }

    #[test]
    fn tails_expand_without_touching_ranking() {
        let text = "\
[campaign]
total = 40
duration-seconds = 10

[sources]
10.0.0.1 40

[usernames]
20 root
10 admin

[username-tail]
events = 10
max-per-name = 4
prefix = svc

[passwords]
40 admin
";
        let p = parse_profile(text).unwrap();
        let tail: Vec<_> = p
            .username_counts
            .iter()
            .filter(|(n, _)| n.starts_with(b"svc"))
            .collect();
        assert_eq!(tail.len(), 3); // 4 + 4 + 2
        assert_eq!(tail.iter().map(|(_, c)| *c).sum::<u64>(), 10);
        assert!(tail.iter().all(|(_, c)| *c <= 4));
    }

    #[test]
    fn tail_may_not_reach_explicit_minimum() {
        let text = "\
[campaign]
total = 40
duration-seconds = 10

[sources]
10.0.0.1 40

[usernames]
20 root
10 admin

[username-tail]
events = 10
max-per-name = 10

[passwords]
40 admin
";
        let e = parse_profile(text).unwrap_err();
        assert!(e.message.contains("max-per-name"));
    }

    #[test]
    fn bursts_parse_and_add_to_total_events() {
        let text = alloc::format!("{MINI}\n[bursts]\n203.0.113.9 root 10 30 40 40\n");
        let p = parse_profile(&text).unwrap();
        assert_eq!(p.bursts.len(), 1);
        assert_eq!(p.total_events(), 50);
    }

    #[test]
    fn escaped_values_round_trip() {
        let text = MINI.replace("3 admin", "3 odd\\x20user");
        let p = parse_profile(&text).unwrap();
        assert!(p.username_counts.iter().any(|(n, _)| n == b"odd user"));
    }

    #[test]
    fn unknown_section_is_an_error() {
        let e = parse_profile("[mystery]\n").unwrap_err();
        assert_eq!(e.line, 1);
    }
}
