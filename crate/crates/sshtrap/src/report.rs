//! Report rendering: a plain-text summary for the terminal and a JSON
//! document for machines. Byte-string fields (usernames, passwords,
//! banners) go through the `\xHH` escaping so any captured bytes render
//! losslessly.

use std::fmt::Write;

use sshtrap_core::analyzer::{format_percent, AnalysisReport};
use sshtrap_core::escape::escape_bytes;
use sshtrap_core::event::format_ip;
use sshtrap_core::timefmt::format_utc_ms;

/// Built-in factory-default credential pairs probed by IoT botnets;
/// extendable with `--defaults <csv>`.
pub fn builtin_default_credentials() -> Vec<(Vec<u8>, Vec<u8>)> {
    [
        ("admin", "password"),
        ("admin", "12345"),
        ("guest", "password"),
        ("guest", "12345"),
        ("root", "toor"),
        ("admin", "admin"),
        ("pi", "raspberry"),
    ]
    .into_iter()
    .map(|(u, p)| (u.as_bytes().to_vec(), p.as_bytes().to_vec()))
    .collect()
}

pub fn render_text(report: &AnalysisReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "== sshtrap analysis ==");
    let _ = writeln!(out, "total attempts: {}", report.total_attempts);
    let _ = writeln!(out, "distinct sources: {}", report.distinct_sources);

    let _ = writeln!(out, "\nTop usernames (rank  username  count)");
    for r in &report.top_usernames {
        let _ = writeln!(out, "{}  {}  {}", r.rank, escape_bytes(&r.key), r.count);
    }

    let _ = writeln!(out, "\nTop passwords (rank  password  count)");
    for r in &report.top_passwords {
        let _ = writeln!(out, "{}  {}  {}", r.rank, escape_bytes(&r.key), r.count);
    }

    let _ = writeln!(
        out,
        "\nSources (ip  attempts  distinct-users  distinct-passwords  first-seen  last-seen)"
    );
    for s in &report.sources {
        let _ = writeln!(
            out,
            "{}  {}  {}  {}  {}  {}",
            format_ip(&s.source_ip),
            s.attempt_count,
            s.distinct_usernames,
            s.distinct_credentials,
            format_utc_ms(s.first_seen_ms),
            format_utc_ms(s.last_seen_ms),
        );
    }

    let _ = writeln!(out, "\nCountry dispersion (country  attempts  share)");
    for c in &report.country_shares {
        let name = c
            .country
            .map(|c| c.as_str().to_string())
            .unwrap_or_else(|| "??".into());
        let _ = writeln!(
            out,
            "{}  {}  {}%",
            name,
            c.count,
            format_percent(c.count, report.total_attempts)
        );
    }

    let _ = writeln!(
        out,
        "\nDictionary attacks (source  username  attempts  distinct  window)"
    );
    if report.dictionary_findings.is_empty() {
        let _ = writeln!(out, "none at the current thresholds");
    }
    for f in &report.dictionary_findings {
        let _ = writeln!(
            out,
            "{}  {}  {}  {}  {} .. {}",
            format_ip(&f.source_ip),
            escape_bytes(&f.username),
            f.attempts,
            f.distinct_credentials,
            format_utc_ms(f.window_start_ms),
            format_utc_ms(f.window_end_ms),
        );
    }

    let _ = writeln!(
        out,
        "\nDefault credentials observed (username  password  occurrences)"
    );
    if report.default_hits.is_empty() {
        let _ = writeln!(out, "none");
    }
    for h in &report.default_hits {
        let _ = writeln!(
            out,
            "{}  {}  {}",
            escape_bytes(&h.username),
            escape_bytes(&h.password),
            h.occurrences
        );
    }

    let p = &report.parameters;
    let _ = writeln!(
        out,
        "\ndetector parameters: window={}s min-attempts={} min-distinct={}",
        p.window_seconds, p.min_attempts, p.min_distinct
    );
    out
}

pub fn render_json(report: &AnalysisReport) -> serde_json::Value {
    use serde_json::json;
    let ranked = |list: &[sshtrap_core::analyzer::RankedCount]| -> Vec<serde_json::Value> {
        list.iter()
            .map(|r| {
                json!({
                    "rank": r.rank,
                    "key": escape_bytes(&r.key),
                    "count": r.count,
                })
            })
            .collect()
    };
    json!({
        "total_attempts": report.total_attempts,
        "distinct_sources": report.distinct_sources,
        "top_usernames": ranked(&report.top_usernames),
        "top_passwords": ranked(&report.top_passwords),
        "sources": report.sources.iter().map(|s| json!({
            "source_ip": format_ip(&s.source_ip),
            "attempt_count": s.attempt_count,
            "distinct_usernames": s.distinct_usernames,
            "distinct_credentials": s.distinct_credentials,
            "first_seen": format_utc_ms(s.first_seen_ms),
            "last_seen": format_utc_ms(s.last_seen_ms),
        })).collect::<Vec<_>>(),
        "country_shares": report.country_shares.iter().map(|c| json!({
            "country": c.country.map(|c| c.as_str().to_string()),
            "count": c.count,
            "percent": c.percent,
        })).collect::<Vec<_>>(),
        "dictionary_findings": report.dictionary_findings.iter().map(|f| json!({
            "source_ip": format_ip(&f.source_ip),
            "username": escape_bytes(&f.username),
            "attempts": f.attempts,
            "distinct_credentials": f.distinct_credentials,
            "window_start": format_utc_ms(f.window_start_ms),
            "window_end": format_utc_ms(f.window_end_ms),
        })).collect::<Vec<_>>(),
        "default_hits": report.default_hits.iter().map(|h| json!({
            "username": escape_bytes(&h.username),
            "password": escape_bytes(&h.password),
            "occurrences": h.occurrences,
            "matched_entry": {
                "username": escape_bytes(&h.username),
                "password": escape_bytes(&h.password),
            },
        })).collect::<Vec<_>>(),
        "parameters": {
            "window_seconds": report.parameters.window_seconds,
            "min_attempts": report.parameters.min_attempts,
            "min_distinct": report.parameters.min_distinct,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sshtrap_core::analyzer::{build_report, DetectorParams};
    use sshtrap_core::event::{AuthAttemptEvent, AuthMethod, EventLogSnapshot};
    use sshtrap_core::geo::GeoDatabase;

    fn tiny_report() -> AnalysisReport {
        let events = vec![
            AuthAttemptEvent {
                seq: 1,
                timestamp_ms: 0,
                session_id: 1,
                source_ip: "1.2.3.4".parse().unwrap(),
                source_port: 1,
                client_banner: b"SSH-2.0-x".to_vec(),
                method: AuthMethod::Password,
                username: b"root".to_vec(),
                credential: b"toor".to_vec(),
            };
            3
        ];
        let snap = EventLogSnapshot {
            events,
            sessions: vec![],
        };
        build_report(
            &snap,
            &GeoDatabase::default(),
            &DetectorParams::default(),
            &builtin_default_credentials(),
            20,
        )
    }

    #[test]
    fn text_report_lists_rank_user_count() {
        let text = render_text(&tiny_report());
        assert!(text.contains("total attempts: 3"));
        assert!(text.contains("1  root  3"));
        assert!(text.contains("??  3  100.00%"));
        // root/toor is in the builtin defaults list
        assert!(text.contains("root  toor  3"));
    }

    #[test]
    fn json_report_has_stable_keys() {
        let v = render_json(&tiny_report());
        assert_eq!(v["total_attempts"], 3);
        assert_eq!(v["top_usernames"][0]["key"], "root");
        assert_eq!(v["top_usernames"][0]["rank"], 1);
        assert_eq!(v["country_shares"][0]["country"], serde_json::Value::Null);
        assert_eq!(v["default_hits"][0]["occurrences"], 3);
        assert_eq!(v["parameters"]["window_seconds"], 60);
    }
}
