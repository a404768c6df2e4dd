//! Offline IP-to-country attribution.
//!
//! The database is a sorted list of inclusive address ranges per family,
//! loaded from a `start_ip,end_ip,country` CSV. Lookups are a binary
//! search over range starts; anything outside every range resolves to
//! `None` (reported downstream as `??`/unknown).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::net::IpAddr;

/// Two-letter ISO 3166-1 alpha-2 code, stored uppercase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CountryCode(pub [u8; 2]);

impl CountryCode {
    pub fn as_str(&self) -> &str {
        // invariant: always two ASCII uppercase letters
        core::str::from_utf8(&self.0).unwrap_or("??")
    }

    fn parse(s: &str) -> Option<Self> {
        let b = s.as_bytes();
        if b.len() == 2 && b.iter().all(|c| c.is_ascii_alphabetic()) {
            Some(CountryCode([
                b[0].to_ascii_uppercase(),
                b[1].to_ascii_uppercase(),
            ]))
        } else {
            None
        }
    }
}

impl core::fmt::Display for CountryCode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One inclusive address range attributed to a country.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeoRange {
    pub start: IpAddr,
    pub end: IpAddr,
    pub country: CountryCode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeoError {
    pub line: usize,
    pub message: String,
}

impl core::fmt::Display for GeoError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RangeV4 {
    start: u32,
    end: u32,
    country: CountryCode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RangeV6 {
    start: u128,
    end: u128,
    country: CountryCode,
}

/// Validated, sorted, non-overlapping range database.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GeoDatabase {
    v4: Vec<RangeV4>,
    v6: Vec<RangeV6>,
}

impl GeoDatabase {
    /// Builds a database from parsed ranges, enforcing order and disjointness.
    pub fn from_ranges(ranges: Vec<GeoRange>) -> Result<Self, GeoError> {
        let mut v4 = Vec::new();
        let mut v6 = Vec::new();
        for r in &ranges {
            match (r.start, r.end) {
                (IpAddr::V4(s), IpAddr::V4(e)) => v4.push(RangeV4 {
                    start: u32::from(s),
                    end: u32::from(e),
                    country: r.country,
                }),
                (IpAddr::V6(s), IpAddr::V6(e)) => v6.push(RangeV6 {
                    start: u128::from(s),
                    end: u128::from(e),
                    country: r.country,
                }),
                _ => {
                    return Err(GeoError {
                        line: 0,
                        message: format!("mixed address families in range {}-{}", r.start, r.end),
                    })
                }
            }
        }
        v4.sort_by_key(|r| r.start);
        v6.sort_by_key(|r| r.start);
        for w in v4.windows(2) {
            if w[1].start <= w[0].end {
                return Err(GeoError {
                    line: 0,
                    message: format!(
                        "overlapping ranges {}-{} and {}-{}",
                        core::net::Ipv4Addr::from(w[0].start),
                        core::net::Ipv4Addr::from(w[0].end),
                        core::net::Ipv4Addr::from(w[1].start),
                        core::net::Ipv4Addr::from(w[1].end),
                    ),
                });
            }
        }
        for w in v6.windows(2) {
            if w[1].start <= w[0].end {
                return Err(GeoError {
                    line: 0,
                    message: format!(
                        "overlapping ranges {}-{} and {}-{}",
                        core::net::Ipv6Addr::from(w[0].start),
                        core::net::Ipv6Addr::from(w[0].end),
                        core::net::Ipv6Addr::from(w[1].start),
                        core::net::Ipv6Addr::from(w[1].end),
                    ),
                });
            }
        }
        Ok(GeoDatabase { v4, v6 })
    }

    /// Country containing `ip`, or None when no range covers it.
    pub fn resolve(&self, ip: IpAddr) -> Option<CountryCode> {
        match ip {
            IpAddr::V4(a) => {
                let n = u32::from(a);
                let idx = self.v4.partition_point(|r| r.start <= n);
                let r = self.v4.get(idx.checked_sub(1)?)?;
                (n <= r.end).then_some(r.country)
            }
            IpAddr::V6(a) => {
                let n = u128::from(a);
                let idx = self.v6.partition_point(|r| r.start <= n);
                let r = self.v6.get(idx.checked_sub(1)?)?;
                (n <= r.end).then_some(r.country)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.v4.len() + self.v6.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v4.is_empty() && self.v6.is_empty()
    }
}

/// Loads a `start_ip,end_ip,country` CSV; `#` lines and blanks are skipped.
pub fn load_geo_db(text: &str) -> Result<GeoDatabase, GeoError> {
    let mut ranges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',');
        let (start, end, country) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c), None) => (a.trim(), b.trim(), c.trim()),
            _ => {
                return Err(GeoError {
                    line: line_no,
                    message: "expected start_ip,end_ip,country".into(),
                })
            }
        };
        let start: IpAddr = start.parse().map_err(|_| GeoError {
            line: line_no,
            message: format!("bad start_ip {start:?}"),
        })?;
        let end: IpAddr = end.parse().map_err(|_| GeoError {
            line: line_no,
            message: format!("bad end_ip {end:?}"),
        })?;
        if start.is_ipv4() != end.is_ipv4() {
            return Err(GeoError {
                line: line_no,
                message: "start and end are different address families".into(),
            });
        }
        if ip_key(end) < ip_key(start) {
            return Err(GeoError {
                line: line_no,
                message: format!("range end {end} below start {start}"),
            });
        }
        let country = CountryCode::parse(country).ok_or_else(|| GeoError {
            line: line_no,
            message: format!("bad country code {country:?}, want two ASCII letters"),
        })?;
        ranges.push(GeoRange {
            start,
            end,
            country,
        });
    }
    GeoDatabase::from_ranges(ranges)
}

fn ip_key(ip: IpAddr) -> u128 {
    match ip {
        IpAddr::V4(a) => u32::from(a) as u128,
        IpAddr::V6(a) => u128::from(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_range_resolves_inside_only() {
        let db = load_geo_db("1.0.0.0,1.0.0.255,CN\n").unwrap();
        assert_eq!(db.len(), 1);
        assert_eq!(
            db.resolve("1.0.0.7".parse().unwrap()),
            Some(CountryCode(*b"CN"))
        );
        assert_eq!(db.resolve("2.0.0.1".parse().unwrap()), None);
        assert_eq!(db.resolve("0.255.255.255".parse().unwrap()), None);
    }

    #[test]
    fn boundaries_are_inclusive() {
        let db = load_geo_db("10.0.0.10,10.0.0.20,fr\n").unwrap();
        assert_eq!(
            db.resolve("10.0.0.10".parse().unwrap()),
            Some(CountryCode(*b"FR"))
        );
        assert_eq!(
            db.resolve("10.0.0.20".parse().unwrap()),
            Some(CountryCode(*b"FR"))
        );
        assert_eq!(db.resolve("10.0.0.9".parse().unwrap()), None);
        assert_eq!(db.resolve("10.0.0.21".parse().unwrap()), None);
    }

    #[test]
    fn overlap_is_rejected_naming_both_ranges() {
        let e = load_geo_db("1.0.0.0,1.0.0.200,CN\n1.0.0.128,1.0.1.0,US\n").unwrap_err();
        assert!(e.message.contains("1.0.0.0-1.0.0.200"));
        assert!(e.message.contains("1.0.0.128-1.0.1.0"));
    }

    #[test]
    fn shuffled_rows_sort_ascending() {
        let db =
            load_geo_db("9.0.0.0,9.0.0.9,US\n1.0.0.0,1.0.0.9,CN\n5.0.0.0,5.0.0.9,FR\n").unwrap();
        let starts: Vec<u32> = db.v4.iter().map(|r| r.start).collect();
        let mut sorted = starts.clone();
        sorted.sort_unstable();
        assert_eq!(starts, sorted);
    }

    #[test]
    fn bad_country_code_reports_line() {
        let e = load_geo_db("1.0.0.0,1.0.0.9,CN\n2.0.0.0,2.0.0.9,C1\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let db = load_geo_db("# sample\n\n1.0.0.0,1.0.0.9,CN\n").unwrap();
        assert_eq!(db.len(), 1);
    }

    #[test]
    fn ipv6_ranges_resolve() {
        let db = load_geo_db("2001:db8::,2001:db8::ffff,DE\n").unwrap();
        assert_eq!(
            db.resolve("2001:db8::7".parse().unwrap()),
            Some(CountryCode(*b"DE"))
        );
        assert_eq!(db.resolve("2001:db9::1".parse().unwrap()), None);
        assert_eq!(db.resolve("1.2.3.4".parse().unwrap()), None);
    }

    #[test]
    fn v4_and_v6_do_not_collide() {
        // same numeric values in different families must stay separate
        let db = load_geo_db("1.0.0.0,1.0.0.255,CN\n::,::ff,US\n").unwrap();
        assert_eq!(
            db.resolve("1.0.0.1".parse().unwrap()),
            Some(CountryCode(*b"CN"))
        );
        assert_eq!(
            db.resolve("::1".parse().unwrap()),
            Some(CountryCode(*b"US"))
        );
    }
}
