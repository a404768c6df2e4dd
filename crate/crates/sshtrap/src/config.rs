//! Honeypot runtime configuration: defaults, validation and the
//! line-oriented `key=value` config file. CLI flags override file values.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Everything the listener needs.
#[derive(Debug, Clone)]
pub struct CaptureConfig {
    pub bind: SocketAddr,
    /// Version string presented to clients, no CR/LF.
    pub banner: Vec<u8>,
    pub host_key_path: PathBuf,
    pub max_auth_attempts: u32,
    pub idle_timeout: Duration,
    pub max_sessions: usize,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        CaptureConfig {
            // loopback by default: internet exposure is an operator choice
            bind: "127.0.0.1:2222".parse().unwrap(),
            banner: b"SSH-2.0-OpenSSH_7.9p1 Raspbian-10".to_vec(),
            host_key_path: PathBuf::from("sshtrap_host_key"),
            max_auth_attempts: 6,
            idle_timeout: Duration::from_secs(120),
            max_sessions: 64,
        }
    }
}

impl CaptureConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.banner.starts_with(b"SSH-2.0-") {
            return Err(ConfigError::Invalid(
                "banner must start with SSH-2.0-".into(),
            ));
        }
        if self.banner.iter().any(|&b| b == b'\r' || b == b'\n') {
            return Err(ConfigError::Invalid(
                "banner must not contain CR or LF".into(),
            ));
        }
        if self.banner.len() + 2 > 255 {
            return Err(ConfigError::Invalid("banner longer than 253 bytes".into()));
        }
        if self.max_auth_attempts == 0 {
            return Err(ConfigError::Invalid(
                "max_auth_tries must be at least 1".into(),
            ));
        }
        if self.idle_timeout.is_zero() {
            return Err(ConfigError::Invalid("idle_timeout must be positive".into()));
        }
        if self.max_sessions == 0 {
            return Err(ConfigError::Invalid(
                "max_sessions must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Values read from a config file; `None` means "not set".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    pub bind: Option<SocketAddr>,
    pub banner: Option<Vec<u8>>,
    pub hostkey: Option<PathBuf>,
    pub max_auth_tries: Option<u32>,
    pub idle_timeout: Option<u64>,
    pub max_sessions: Option<usize>,
    pub store_path: Option<PathBuf>,
}

impl FileConfig {
    /// Folds file values into a config; fields already set by flags are
    /// applied by the caller afterwards.
    pub fn apply(&self, base: &mut CaptureConfig) {
        if let Some(v) = self.bind {
            base.bind = v;
        }
        if let Some(v) = &self.banner {
            base.banner = v.clone();
        }
        if let Some(v) = &self.hostkey {
            base.host_key_path = v.clone();
        }
        if let Some(v) = self.max_auth_tries {
            base.max_auth_attempts = v;
        }
        if let Some(v) = self.idle_timeout {
            base.idle_timeout = Duration::from_secs(v);
        }
        if let Some(v) = self.max_sessions {
            base.max_sessions = v;
        }
    }
}

/// Parses the `key=value` config format; `#` comments and blanks skipped.
pub fn parse_config_file(text: &str) -> Result<FileConfig, ConfigError> {
    let mut out = FileConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: line_no,
            message: "expected key=value".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |message: String| ConfigError::Parse {
            line: line_no,
            message,
        };
        match key {
            "bind" => {
                out.bind = Some(
                    value
                        .parse()
                        .map_err(|_| bad(format!("bad bind address {value:?}")))?,
                )
            }
            "banner" => out.banner = Some(value.as_bytes().to_vec()),
            "hostkey" => out.hostkey = Some(PathBuf::from(value)),
            "max_auth_tries" => {
                out.max_auth_tries = Some(
                    value
                        .parse()
                        .map_err(|_| bad(format!("bad max_auth_tries {value:?}")))?,
                )
            }
            "idle_timeout" => {
                out.idle_timeout = Some(
                    value
                        .parse()
                        .map_err(|_| bad(format!("bad idle_timeout {value:?}")))?,
                )
            }
            "max_sessions" => {
                out.max_sessions = Some(
                    value
                        .parse()
                        .map_err(|_| bad(format!("bad max_sessions {value:?}")))?,
                )
            }
            "store_path" => out.store_path = Some(PathBuf::from(value)),
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        CaptureConfig::default().validate().unwrap();
    }

    #[test]
    fn file_values_override_defaults() {
        let fc = parse_config_file(
            "# honeypot\nbind = 0.0.0.0:2222\nmax_auth_tries = 3\nidle_timeout = 30\n",
        )
        .unwrap();
        let mut cfg = CaptureConfig::default();
        fc.apply(&mut cfg);
        assert_eq!(cfg.bind, "0.0.0.0:2222".parse().unwrap());
        assert_eq!(cfg.max_auth_attempts, 3);
        assert_eq!(cfg.idle_timeout, Duration::from_secs(30));
        assert_eq!(cfg.max_sessions, 64);
    }

    #[test]
    fn unknown_key_reports_line() {
        let e = parse_config_file("bind = 1.2.3.4:22\nmystery = 1\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 2, .. }));
    }

    #[test]
    fn invalid_banner_rejected() {
        let mut cfg = CaptureConfig {
            banner: b"HTTP/1.1".to_vec(),
            ..CaptureConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.banner = b"SSH-2.0-x\r\n".to_vec();
        assert!(cfg.validate().is_err());
        cfg.banner = b"SSH-2.0-ok".to_vec();
        assert!(cfg.validate().is_ok());
    }
}
