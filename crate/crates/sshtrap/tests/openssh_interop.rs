//! Interoperability against a real OpenSSH client, when one is on PATH.
//!
//! The self-play tests prove server and client agree with each other;
//! this one proves the server speaks the actual protocol. Skipped (not
//! failed) when no suitable `ssh` binary is available, since CI boxes
//! vary.

use std::io::Write;
use std::process::{Command, Stdio};
use std::time::Duration;

use sshtrap::config::CaptureConfig;
use sshtrap::server::start_listener;
use sshtrap::store::EventStore;
use sshtrap_core::event::AuthMethod;

/// OpenSSH >= 8.4 honors SSH_ASKPASS_REQUIRE=force, which lets the test
/// feed a password without a TTY.
fn usable_ssh_version() -> Option<String> {
    let out = Command::new("ssh").arg("-V").output().ok()?;
    let banner = String::from_utf8_lossy(&out.stderr).into_owned();
    let rest = banner.strip_prefix("OpenSSH_")?;
    let digits: String = rest
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == '.')
        .collect();
    let mut parts = digits.split('.');
    let major: u32 = parts.next()?.parse().ok()?;
    let minor: u32 = parts.next().unwrap_or("0").parse().ok()?;
    (major > 8 || (major == 8 && minor >= 4)).then_some(banner.trim().to_string())
}

#[test]
fn real_openssh_client_attempts_are_captured() {
    let Some(version) = usable_ssh_version() else {
        println!("SKIP: no OpenSSH >= 8.4 client on PATH");
        return;
    };

    let dir = tempfile::tempdir().unwrap();
    let (store, _) = EventStore::open(dir.path().join("events.bin")).unwrap();
    let config = CaptureConfig {
        bind: "127.0.0.1:0".parse().unwrap(),
        host_key_path: dir.path().join("hostkey"),
        idle_timeout: Duration::from_secs(20),
        ..CaptureConfig::default()
    };
    let handle = start_listener(config, store.clone()).unwrap();
    let port = handle.local_addr().port();

    let askpass = dir.path().join("askpass.sh");
    {
        let mut f = std::fs::File::create(&askpass).unwrap();
        writeln!(f, "#!/bin/sh\necho correct-horse").unwrap();
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&askpass, std::fs::Permissions::from_mode(0o755)).unwrap();
    }

    let output = Command::new("setsid")
        .arg("ssh")
        .args([
            "-p",
            &port.to_string(),
            "-F",
            "/dev/null",
            "-o",
            "StrictHostKeyChecking=no",
            "-o",
            "UserKnownHostsFile=/dev/null",
            "-o",
            "PreferredAuthentications=password",
            "-o",
            "PubkeyAuthentication=no",
            "-o",
            "NumberOfPasswordPrompts=2",
            "-o",
            "ConnectTimeout=10",
            "root@127.0.0.1",
        ])
        .env("SSH_ASKPASS", &askpass)
        .env("SSH_ASKPASS_REQUIRE", "force")
        .env("DISPLAY", "none:0")
        .stdin(Stdio::null())
        .output()
        .expect("ssh runs");
    handle.shutdown();

    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("Permission denied"),
        "client {version} should be denied; stderr:\n{stderr}"
    );

    let snapshot = store.snapshot();
    let passwords: Vec<&sshtrap_core::event::AuthAttemptEvent> = snapshot
        .events
        .iter()
        .filter(|e| e.method == AuthMethod::Password)
        .collect();
    assert_eq!(passwords.len(), 2, "both password prompts captured");
    for e in &passwords {
        assert_eq!(e.username, b"root");
        assert_eq!(e.credential, b"correct-horse");
        assert!(e.client_banner.starts_with(b"SSH-2.0-OpenSSH"));
    }
    // OpenSSH probes method=none before prompting
    assert!(snapshot
        .events
        .iter()
        .any(|e| e.method == AuthMethod::None && e.username == b"root"));
    println!(
        "interop against {version}: captured {} events",
        snapshot.events.len()
    );
}
