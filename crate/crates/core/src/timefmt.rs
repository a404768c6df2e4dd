//! Millisecond UTC timestamps and their RFC 3339 rendering.
//!
//! Timestamps are carried everywhere as `i64` milliseconds since the Unix
//! epoch and rendered as `YYYY-MM-DDTHH:MM:SS.mmmZ`, always with exactly
//! three fractional digits and a literal `Z`. The parser accepts exactly
//! that shape back.

use alloc::string::String;

/// Days since 1970-01-01 for a proleptic Gregorian civil date.
///
/// Classic days-from-civil arithmetic; valid for the full year range this
/// crate cares about (1..=9999).
fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy as i64;
    era * 146097 + doe - 719468
}

fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719468;
    let era = if z >= 0 { z } else { z - 146096 } / 146097;
    let doe = z - era * 146097;
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

/// Renders epoch milliseconds as an RFC 3339 UTC timestamp.
pub fn format_utc_ms(ts_ms: i64) -> String {
    let days = ts_ms.div_euclid(86_400_000);
    let rem = ts_ms.rem_euclid(86_400_000);
    let (y, mo, d) = civil_from_days(days);
    let ms = rem % 1000;
    let secs = rem / 1000;
    let (h, mi, s) = (secs / 3600, (secs / 60) % 60, secs % 60);
    let mut out = String::with_capacity(24);
    use core::fmt::Write;
    let _ = write!(
        out,
        "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z",
        y, mo, d, h, mi, s, ms
    );
    out
}

/// Parses the exact format emitted by [`format_utc_ms`].
pub fn parse_utc_ms(text: &str) -> Option<i64> {
    let b = text.as_bytes();
    if b.len() != 24 || b[23] != b'Z' {
        return None;
    }
    for (i, &c) in b.iter().enumerate() {
        let expect_digit = !matches!(i, 4 | 7 | 10 | 13 | 16 | 19 | 23);
        if expect_digit {
            if !c.is_ascii_digit() {
                return None;
            }
        } else {
            let sep_ok = match i {
                4 | 7 => c == b'-',
                10 => c == b'T',
                13 | 16 => c == b':',
                19 => c == b'.',
                _ => true,
            };
            if !sep_ok {
                return None;
            }
        }
    }
    let num = |r: core::ops::Range<usize>| -> i64 { text[r].parse::<i64>().unwrap_or(0) };
    let (y, mo, d) = (num(0..4), num(5..7) as u32, num(8..10) as u32);
    let (h, mi, s, ms) = (num(11..13), num(14..16), num(17..19), num(20..23));
    if !(1..=12).contains(&mo) || !(1..=31).contains(&d) || h > 23 || mi > 59 || s > 59 {
        return None;
    }
    // Reject dates that don't survive a round trip (e.g. Feb 30).
    let days = days_from_civil(y, mo, d);
    if civil_from_days(days) != (y, mo, d) {
        return None;
    }
    Some(days * 86_400_000 + (h * 3600 + mi * 60 + s) * 1000 + ms)
}
