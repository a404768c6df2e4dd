//! Property tests for the text formats and the geo resolver.

use proptest::prelude::*;
use std::net::IpAddr;

use sshtrap_core::csv;
use sshtrap_core::escape::{escape_bytes, unescape_bytes};
use sshtrap_core::event::{AuthAttemptEvent, AuthMethod, EventLogSnapshot};
use sshtrap_core::geo::load_geo_db;
use sshtrap_core::rng::Prng;
use sshtrap_core::timefmt::{format_utc_ms, parse_utc_ms};

fn byte_string() -> impl Strategy<Value = Vec<u8>> {
    proptest::collection::vec(any::<u8>(), 0..40)
}

proptest! {
    #[test]
    fn escape_round_trips(raw in byte_string()) {
        let text = escape_bytes(&raw);
        prop_assert_eq!(unescape_bytes(&text).unwrap(), raw);
    }

    #[test]
    fn timestamps_round_trip(ts in 0i64..4_102_444_800_000) {
        prop_assert_eq!(parse_utc_ms(&format_utc_ms(ts)), Some(ts));
    }
}

fn arb_event(seq_hint: u64) -> impl Strategy<Value = AuthAttemptEvent> {
    (
        byte_string(),
        byte_string(),
        byte_string(),
        0i64..4_000_000_000_000,
        any::<u16>(),
        any::<[u8; 4]>(),
        0u8..5,
    )
        .prop_map(
            move |(user, cred, banner, ts, port, ip, m)| AuthAttemptEvent {
                seq: seq_hint,
                timestamp_ms: ts,
                session_id: seq_hint / 3,
                source_ip: IpAddr::from(ip),
                source_port: port,
                client_banner: banner,
                method: match m {
                    0 => AuthMethod::Password,
                    1 => AuthMethod::Publickey,
                    2 => AuthMethod::None,
                    3 => AuthMethod::KeyboardInteractive,
                    _ => AuthMethod::Other,
                },
                username: user,
                credential: cred,
            },
        )
}

fn arb_snapshot() -> impl Strategy<Value = EventLogSnapshot> {
    proptest::collection::vec(any::<u64>(), 0..25).prop_flat_map(|seeds| {
        let events: Vec<_> = seeds
            .iter()
            .enumerate()
            .map(|(i, _)| arb_event(i as u64 + 1))
            .collect();
        events.prop_map(|mut events| {
            // seq must ascend for the file to be well-formed
            for (i, e) in events.iter_mut().enumerate() {
                e.seq = i as u64 + 1;
            }
            EventLogSnapshot {
                events,
                sessions: vec![],
            }
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn csv_round_trips_any_snapshot(snap in arb_snapshot()) {
        let (text, rows) = csv::write_events(&snap);
        prop_assert_eq!(rows, snap.events.len());
        let back = csv::parse_events(&text).unwrap();
        prop_assert_eq!(&back.events, &snap.events);
        prop_assert_eq!(back.captured_range(), snap.captured_range());
        // file-level identity the other way around
        let (text2, _) = csv::write_events(&back);
        prop_assert_eq!(text, text2);
    }
}

#[test]
fn geo_resolve_matches_linear_scan_on_10k_lookups() {
    let mut rng = Prng::new(777);
    // build a random disjoint database
    let mut text = String::new();
    let mut ranges: Vec<(u32, u32, &str)> = Vec::new();
    let countries = ["CN", "US", "FR", "RU", "AE", "DE"];
    let mut start: u64 = 0;
    for _ in 0..1000 {
        start += 1 + rng.next_below(1 << 14);
        let end = start + rng.next_below(1 << 12);
        if end > u32::MAX as u64 {
            break;
        }
        let c = countries[rng.next_below(6) as usize];
        ranges.push((start as u32, end as u32, c));
        text.push_str(&format!(
            "{},{},{}\n",
            std::net::Ipv4Addr::from(start as u32),
            std::net::Ipv4Addr::from(end as u32),
            c
        ));
        start = end;
    }
    let db = load_geo_db(&text).unwrap();

    for _ in 0..10_000 {
        let ip_num = rng.next_below(1 << 26) as u32;
        let ip = IpAddr::from(std::net::Ipv4Addr::from(ip_num));
        let got = db.resolve(ip).map(|c| c.as_str().to_string());
        let want = ranges
            .iter()
            .find(|(s, e, _)| ip_num >= *s && ip_num <= *e)
            .map(|(_, _, c)| c.to_string());
        assert_eq!(got, want, "ip {ip}");
    }
}
