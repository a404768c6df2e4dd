//! Host key persistence.
//!
//! The honeypot presents a stable ed25519 identity across restarts: on
//! first start a key is generated and saved; later starts load it back.
//! The file holds the 32-byte seed hex-encoded on a single tagged line.

use std::io::Write;
use std::path::{Path, PathBuf};

const TAG: &str = "sshtrap-host-key-v1 ed25519 ";

#[derive(Debug, thiserror::Error)]
pub enum HostKeyError {
    #[error("host key {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("host key {path} is malformed")]
    Malformed { path: PathBuf },
    #[error("no entropy available: {0}")]
    Entropy(String),
}

/// Loads the key at `path`, generating and persisting one when absent.
pub fn load_or_generate(path: impl AsRef<Path>) -> Result<[u8; 32], HostKeyError> {
    let path = path.as_ref();
    match std::fs::read_to_string(path) {
        Ok(text) => parse(&text).ok_or_else(|| HostKeyError::Malformed {
            path: path.to_path_buf(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let mut seed = [0u8; 32];
            getrandom::fill(&mut seed).map_err(|e| HostKeyError::Entropy(e.to_string()))?;
            write_key(path, &seed)?;
            Ok(seed)
        }
        Err(source) => Err(HostKeyError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}

fn parse(text: &str) -> Option<[u8; 32]> {
    let line = text.lines().next()?;
    let hex = line.strip_prefix(TAG)?.trim();
    if hex.len() != 64 {
        return None;
    }
    let mut seed = [0u8; 32];
    for (i, chunk) in hex.as_bytes().chunks(2).enumerate() {
        let hi = (chunk[0] as char).to_digit(16)?;
        let lo = (chunk[1] as char).to_digit(16)?;
        seed[i] = ((hi << 4) | lo) as u8;
    }
    Some(seed)
}

fn write_key(path: &Path, seed: &[u8; 32]) -> Result<(), HostKeyError> {
    let io_err = |source| HostKeyError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut options = std::fs::OpenOptions::new();
    options.write(true).create_new(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    let mut file = options.open(path).map_err(io_err)?;
    let hex: String = seed.iter().map(|b| format!("{b:02x}")).collect();
    writeln!(file, "{TAG}{hex}").map_err(io_err)?;
    file.sync_data().map_err(io_err)?;
    Ok(())
}

/// OpenSSH-style fingerprint of the public key for this seed.
pub fn fingerprint(seed: &[u8; 32]) -> String {
    sshtrap_core::ssh::host_key_fingerprint(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generates_then_reloads_same_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hostkey");
        let a = load_or_generate(&path).unwrap();
        let b = load_or_generate(&path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hostkey");
        std::fs::write(&path, "not a key\n").unwrap();
        assert!(matches!(
            load_or_generate(&path),
            Err(HostKeyError::Malformed { .. })
        ));
    }

    #[test]
    fn fingerprint_is_stable() {
        let f1 = fingerprint(&[7u8; 32]);
        let f2 = fingerprint(&[7u8; 32]);
        assert_eq!(f1, f2);
        assert!(f1.starts_with("SHA256:"));
    }
}
