//! Honeypot-side SSH session state machine.
//!
//! Drives one connection from version exchange through key exchange into
//! the userauth loop, emitting every authentication request for capture
//! and denying all of them. The machine is sans-IO: callers feed raw
//! bytes in and write the returned bytes out.
//!
//! Capture ordering is enforced structurally: when a [`ServerOutput::Attempt`]
//! is produced, parsing stops until [`ServerSession::attempt_recorded`] is
//! called, and only that call emits the failure reply. An attempt the
//! caller never confirmed is never acknowledged on the wire.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use ed25519_dalek::{Signer, SigningKey};
use sha2::{Digest, Sha256};
use x25519_dalek::{PublicKey as X25519Public, StaticSecret};

use super::codec::PacketCodec;
use super::kex::{
    derive_keys, ed25519_host_key_blob, ed25519_signature_blob, exchange_hash, ExchangeHashInput,
};
use super::msg::*;
use super::wire::{list_contains, list_first_is, lossy, Reader, Writer};
use super::{
    SshError, CIPHER_ALGORITHM, COMPRESSION_ALGORITHM, HOST_KEY_ALGORITHM, KEX_ALGORITHM,
    MAC_ALGORITHM, MAX_BANNER_LINE,
};
use crate::escape::base64_nopad;
use crate::event::{AuthMethod, EndReason};

/// Protocol-facing server parameters.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Version string without CR/LF, e.g. `SSH-2.0-OpenSSH_7.9p1`.
    pub banner: Vec<u8>,
    /// Seed of the ed25519 host key.
    pub host_key_seed: [u8; 32],
    /// Userauth requests allowed before the session is cut.
    pub max_auth_attempts: u32,
}

/// Per-session randomness, supplied by the caller so the machine itself
/// stays deterministic and testable.
#[derive(Debug, Clone)]
pub struct SessionEntropy {
    pub kex_cookie: [u8; 16],
    pub ephemeral_secret: [u8; 32],
    pub padding_seed: u64,
}

impl SessionEntropy {
    /// Number of random bytes [`from_bytes`](Self::from_bytes) consumes.
    pub const LEN: usize = 56;

    /// Splits caller-supplied random bytes into session entropy.
    pub fn from_bytes(bytes: &[u8; Self::LEN]) -> Self {
        let mut cookie = [0u8; 16];
        cookie.copy_from_slice(&bytes[..16]);
        let mut secret = [0u8; 32];
        secret.copy_from_slice(&bytes[16..48]);
        SessionEntropy {
            kex_cookie: cookie,
            ephemeral_secret: secret,
            padding_seed: u64::from_le_bytes(bytes[48..56].try_into().unwrap()),
        }
    }
}

/// One authentication request as it came off the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthRequest {
    pub method: AuthMethod,
    pub username: Vec<u8>,
    pub credential: Vec<u8>,
}

/// What the driver must do next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerOutput {
    /// Bytes to write to the peer.
    Send(Vec<u8>),
    /// Durably record this attempt, then call `attempt_recorded`.
    Attempt(AuthRequest),
    /// Session over; close the connection.
    End(EndReason),
}

enum State {
    Banner,
    AwaitKexInit,
    AwaitEcdhInit { discard_guessed: bool },
    AwaitNewKeys,
    AwaitServiceRequest,
    Userauth,
    Done,
}

pub struct ServerSession {
    state: State,
    codec: PacketCodec,
    banner_buf: Vec<u8>,
    client_version: Vec<u8>,
    server_version: Vec<u8>,
    client_kexinit: Vec<u8>,
    server_kexinit: Vec<u8>,
    host_key_seed: [u8; 32],
    entropy: SessionEntropy,
    staged_recv: Option<([u8; 16], [u8; 16], [u8; 32])>,
    attempts: u32,
    max_attempts: u32,
    pending_attempt: bool,
}

impl ServerSession {
    /// Builds the session machine; the returned bytes (identification
    /// line plus our KEXINIT) must be sent to the client first.
    pub fn new(config: &ServerConfig, entropy: SessionEntropy) -> (Self, Vec<u8>) {
        let mut codec = PacketCodec::new(entropy.padding_seed);

        let mut kexinit = Writer::with_msg(SSH_MSG_KEXINIT);
        kexinit.raw(&entropy.kex_cookie);
        kexinit.name_list(&[KEX_ALGORITHM]);
        kexinit.name_list(&[HOST_KEY_ALGORITHM]);
        kexinit.name_list(&[CIPHER_ALGORITHM]);
        kexinit.name_list(&[CIPHER_ALGORITHM]);
        kexinit.name_list(&[MAC_ALGORITHM]);
        kexinit.name_list(&[MAC_ALGORITHM]);
        kexinit.name_list(&[COMPRESSION_ALGORITHM]);
        kexinit.name_list(&[COMPRESSION_ALGORITHM]);
        kexinit.name_list(&[]);
        kexinit.name_list(&[]);
        kexinit.boolean(false);
        kexinit.uint32(0);
        let server_kexinit = kexinit.into_bytes();

        let mut first = config.banner.clone();
        first.extend_from_slice(b"\r\n");
        first.extend_from_slice(&codec.seal(&server_kexinit));

        let session = ServerSession {
            state: State::Banner,
            codec,
            banner_buf: Vec::new(),
            client_version: Vec::new(),
            server_version: config.banner.clone(),
            client_kexinit: Vec::new(),
            server_kexinit,
            host_key_seed: config.host_key_seed,
            entropy,
            staged_recv: None,
            attempts: 0,
            max_attempts: config.max_auth_attempts.max(1),
            pending_attempt: false,
        };
        (session, first)
    }

    /// Client identification line, CR/LF trimmed, once received.
    pub fn client_banner(&self) -> &[u8] {
        &self.client_version
    }

    pub fn attempt_count(&self) -> u32 {
        self.attempts
    }

    pub fn is_done(&self) -> bool {
        matches!(self.state, State::Done)
    }

    /// Feeds bytes from the peer and returns what to do next.
    pub fn input(&mut self, bytes: &[u8]) -> Vec<ServerOutput> {
        if matches!(self.state, State::Done) {
            return Vec::new();
        }
        if matches!(self.state, State::Banner) {
            self.banner_buf.extend_from_slice(bytes);
            match self.try_take_banner() {
                Ok(false) => return Vec::new(),
                Ok(true) => {}
                Err(e) => return self.fail(&e.0),
            }
        } else {
            self.codec.feed(bytes);
        }
        self.pump()
    }

    /// Confirms the pending attempt was persisted; emits the failure
    /// reply and resumes parsing.
    pub fn attempt_recorded(&mut self) -> Vec<ServerOutput> {
        if !self.pending_attempt || matches!(self.state, State::Done) {
            return Vec::new();
        }
        self.pending_attempt = false;

        let mut failure = Writer::with_msg(SSH_MSG_USERAUTH_FAILURE);
        failure.name_list(&["password"]);
        failure.boolean(false); // never a partial success
        let mut out = vec![ServerOutput::Send(self.codec.seal(failure.as_slice()))];

        if self.attempts >= self.max_attempts {
            out.push(ServerOutput::Send(self.disconnect_packet(
                SSH_DISCONNECT_BY_APPLICATION,
                "Too many authentication failures",
            )));
            self.state = State::Done;
            out.push(ServerOutput::End(EndReason::MaxAttempts));
            return out;
        }
        out.extend(self.pump());
        out
    }

    /// Peer closed the connection.
    pub fn eof(&mut self) -> Vec<ServerOutput> {
        if matches!(self.state, State::Done) {
            return Vec::new();
        }
        self.state = State::Done;
        vec![ServerOutput::End(EndReason::ClientDisconnect)]
    }

    /// Driver-side idle timer fired.
    pub fn idle_timeout(&mut self) -> Vec<ServerOutput> {
        if matches!(self.state, State::Done) {
            return Vec::new();
        }
        let pkt = self.disconnect_packet(
            SSH_DISCONNECT_BY_APPLICATION,
            "Timeout, your session not responding",
        );
        self.state = State::Done;
        vec![
            ServerOutput::Send(pkt),
            ServerOutput::End(EndReason::IdleTimeout),
        ]
    }

    /// Driver could not persist the pending attempt; cut the session
    /// rather than acknowledge an unlogged request.
    pub fn abort(&mut self) -> Vec<ServerOutput> {
        if matches!(self.state, State::Done) {
            return Vec::new();
        }
        let pkt = self.disconnect_packet(SSH_DISCONNECT_BY_APPLICATION, "Service not available");
        self.state = State::Done;
        vec![
            ServerOutput::Send(pkt),
            ServerOutput::End(EndReason::ProtocolError),
        ]
    }

    /// True once a banner line has been consumed.
    fn try_take_banner(&mut self) -> Result<bool, SshError> {
        let Some(nl) = self.banner_buf.iter().position(|&b| b == b'\n') else {
            if self.banner_buf.len() > MAX_BANNER_LINE {
                return Err(SshError("identification line too long".into()));
            }
            return Ok(false);
        };
        if nl + 1 > MAX_BANNER_LINE {
            return Err(SshError("identification line too long".into()));
        }
        let mut line = self.banner_buf[..nl].to_vec();
        if line.last() == Some(&b'\r') {
            line.pop();
        }
        if !line.starts_with(b"SSH-") {
            return Err(SshError("invalid identification string".into()));
        }
        if !(line.starts_with(b"SSH-2.0-") || line.starts_with(b"SSH-1.99-")) {
            return Err(SshError("unsupported protocol version".into()));
        }
        let rest = self.banner_buf[nl + 1..].to_vec();
        self.banner_buf.clear();
        self.client_version = line;
        self.codec.feed_front(&rest);
        self.state = State::AwaitKexInit;
        Ok(true)
    }

    /// Parses buffered packets until input runs dry, an attempt needs
    /// recording, or the session ends.
    fn pump(&mut self) -> Vec<ServerOutput> {
        let mut out = Vec::new();
        loop {
            if self.pending_attempt || matches!(self.state, State::Done) {
                return out;
            }
            let payload = match self.codec.next_packet() {
                Ok(Some(p)) => p,
                Ok(None) => return out,
                Err(e) => {
                    out.extend(self.fail(&e.0));
                    return out;
                }
            };
            match self.handle_packet(&payload) {
                Ok(mut produced) => out.append(&mut produced),
                Err(e) => {
                    out.extend(self.fail(&e.0));
                    return out;
                }
            }
        }
    }

    fn handle_packet(&mut self, payload: &[u8]) -> Result<Vec<ServerOutput>, SshError> {
        let msg = payload[0];
        match msg {
            SSH_MSG_DISCONNECT => {
                self.state = State::Done;
                return Ok(vec![ServerOutput::End(EndReason::ClientDisconnect)]);
            }
            SSH_MSG_IGNORE | SSH_MSG_DEBUG | SSH_MSG_UNIMPLEMENTED | SSH_MSG_EXT_INFO => {
                return Ok(Vec::new());
            }
            _ => {}
        }

        match self.state {
            State::Banner | State::Done => unreachable!("pump guards these states"),
            State::AwaitKexInit => {
                if msg != SSH_MSG_KEXINIT {
                    return Err(SshError("expected KEXINIT".into()));
                }
                self.handle_kexinit(payload)?;
                Ok(Vec::new())
            }
            State::AwaitEcdhInit { discard_guessed } => {
                if discard_guessed {
                    // wrong guessed kex packet, dropped per RFC 4253 §7
                    self.state = State::AwaitEcdhInit {
                        discard_guessed: false,
                    };
                    return Ok(Vec::new());
                }
                if msg != SSH_MSG_KEX_ECDH_INIT {
                    return Err(SshError("expected KEX_ECDH_INIT".into()));
                }
                self.handle_ecdh_init(payload)
            }
            State::AwaitNewKeys => {
                if msg != SSH_MSG_NEWKEYS {
                    return Err(SshError("expected NEWKEYS".into()));
                }
                let (key, iv, mac) = self
                    .staged_recv
                    .take()
                    .ok_or_else(|| SshError("NEWKEYS before key exchange".into()))?;
                self.codec.enable_recv(&key, &iv, &mac);
                self.state = State::AwaitServiceRequest;
                Ok(Vec::new())
            }
            State::AwaitServiceRequest => {
                if msg == SSH_MSG_KEXINIT {
                    return Err(SshError("rekeying not supported".into()));
                }
                if msg != SSH_MSG_SERVICE_REQUEST {
                    return self.unimplemented();
                }
                let mut r = Reader::new(&payload[1..]);
                let service = r
                    .string()
                    .ok_or_else(|| SshError("malformed SERVICE_REQUEST".into()))?;
                if service != b"ssh-userauth" {
                    return Err(SshError("unsupported service requested".into()));
                }
                let mut accept = Writer::with_msg(SSH_MSG_SERVICE_ACCEPT);
                accept.string(b"ssh-userauth");
                let pkt = self.codec.seal(accept.as_slice());
                self.state = State::Userauth;
                Ok(vec![ServerOutput::Send(pkt)])
            }
            State::Userauth => {
                if msg == SSH_MSG_KEXINIT {
                    return Err(SshError("rekeying not supported".into()));
                }
                if msg != SSH_MSG_USERAUTH_REQUEST {
                    return self.unimplemented();
                }
                let request = parse_userauth_request(&payload[1..])?;
                self.attempts += 1;
                self.pending_attempt = true;
                Ok(vec![ServerOutput::Attempt(request)])
            }
        }
    }

    fn handle_kexinit(&mut self, payload: &[u8]) -> Result<(), SshError> {
        let mut r = Reader::new(&payload[1..]);
        let need = |what: &str| SshError(alloc::format!("malformed KEXINIT: {what}"));
        r.take(16).ok_or_else(|| need("cookie"))?;
        let kex = r.name_list().ok_or_else(|| need("kex algorithms"))?;
        let host_keys = r.name_list().ok_or_else(|| need("host key algorithms"))?;
        let enc_c2s = r.name_list().ok_or_else(|| need("ciphers c2s"))?;
        let enc_s2c = r.name_list().ok_or_else(|| need("ciphers s2c"))?;
        let mac_c2s = r.name_list().ok_or_else(|| need("macs c2s"))?;
        let mac_s2c = r.name_list().ok_or_else(|| need("macs s2c"))?;
        let comp_c2s = r.name_list().ok_or_else(|| need("compression c2s"))?;
        let comp_s2c = r.name_list().ok_or_else(|| need("compression s2c"))?;
        r.name_list().ok_or_else(|| need("languages c2s"))?;
        r.name_list().ok_or_else(|| need("languages s2c"))?;
        let first_follows = r.boolean().ok_or_else(|| need("guess flag"))?;
        r.uint32().ok_or_else(|| need("reserved field"))?;

        let check = |list: &[&[u8]], ours: &str, slot: &str| -> Result<(), SshError> {
            if list_contains(list, ours) {
                Ok(())
            } else {
                Err(SshError(alloc::format!(
                    "no common {slot} algorithm (client offered: {})",
                    list.iter()
                        .map(|n| lossy(n))
                        .collect::<Vec<String>>()
                        .join(",")
                )))
            }
        };
        check(&kex, KEX_ALGORITHM, "key exchange")?;
        check(&host_keys, HOST_KEY_ALGORITHM, "host key")?;
        check(&enc_c2s, CIPHER_ALGORITHM, "cipher")?;
        check(&enc_s2c, CIPHER_ALGORITHM, "cipher")?;
        check(&mac_c2s, MAC_ALGORITHM, "mac")?;
        check(&mac_s2c, MAC_ALGORITHM, "mac")?;
        check(&comp_c2s, COMPRESSION_ALGORITHM, "compression")?;
        check(&comp_s2c, COMPRESSION_ALGORITHM, "compression")?;

        let discard_guessed = first_follows
            && !(list_first_is(&kex, KEX_ALGORITHM)
                && list_first_is(&host_keys, HOST_KEY_ALGORITHM));

        self.client_kexinit = payload.to_vec();
        self.state = State::AwaitEcdhInit { discard_guessed };
        Ok(())
    }

    fn handle_ecdh_init(&mut self, payload: &[u8]) -> Result<Vec<ServerOutput>, SshError> {
        let mut r = Reader::new(&payload[1..]);
        let client_pub_raw = r
            .string()
            .ok_or_else(|| SshError("malformed KEX_ECDH_INIT".into()))?;
        let client_pub: [u8; 32] = client_pub_raw
            .try_into()
            .map_err(|_| SshError("ephemeral key must be 32 bytes".into()))?;

        let secret = StaticSecret::from(self.entropy.ephemeral_secret);
        let server_pub = X25519Public::from(&secret);
        let shared = secret.diffie_hellman(&X25519Public::from(client_pub));
        if !shared.was_contributory() {
            return Err(SshError("degenerate ephemeral key".into()));
        }

        let host_key = SigningKey::from_bytes(&self.host_key_seed);
        let host_public: [u8; 32] = host_key.verifying_key().to_bytes();
        let host_blob = ed25519_host_key_blob(&host_public);
        let h = exchange_hash(&ExchangeHashInput {
            client_version: &self.client_version,
            server_version: &self.server_version,
            client_kexinit: &self.client_kexinit,
            server_kexinit: &self.server_kexinit,
            host_key_blob: &host_blob,
            client_ephemeral: &client_pub,
            server_ephemeral: server_pub.as_bytes(),
            shared_secret: shared.as_bytes(),
        });
        let signature = host_key.sign(&h);
        let sig_blob = ed25519_signature_blob(&signature.to_bytes());

        let mut reply = Writer::with_msg(SSH_MSG_KEX_ECDH_REPLY);
        reply.string(&host_blob);
        reply.string(server_pub.as_bytes());
        reply.string(&sig_blob);

        let keys = derive_keys(shared.as_bytes(), &h, &h);
        let reply_pkt = self.codec.seal(reply.as_slice());
        let newkeys_pkt = self.codec.seal(&[SSH_MSG_NEWKEYS]);
        // everything after our NEWKEYS goes out encrypted
        self.codec.enable_send(
            &keys.key_server_to_client,
            &keys.iv_server_to_client,
            &keys.mac_server_to_client,
        );
        self.staged_recv = Some((
            keys.key_client_to_server,
            keys.iv_client_to_server,
            keys.mac_client_to_server,
        ));
        self.state = State::AwaitNewKeys;
        Ok(vec![
            ServerOutput::Send(reply_pkt),
            ServerOutput::Send(newkeys_pkt),
        ])
    }

    fn unimplemented(&mut self) -> Result<Vec<ServerOutput>, SshError> {
        let mut w = Writer::with_msg(SSH_MSG_UNIMPLEMENTED);
        w.uint32(self.codec.last_recv_seq());
        Ok(vec![ServerOutput::Send(self.codec.seal(w.as_slice()))])
    }

    fn disconnect_packet(&mut self, reason: u32, text: &str) -> Vec<u8> {
        let mut w = Writer::with_msg(SSH_MSG_DISCONNECT);
        w.uint32(reason);
        w.string(text.as_bytes());
        w.string(b"");
        self.codec.seal(w.as_slice())
    }

    fn fail(&mut self, message: &str) -> Vec<ServerOutput> {
        let pkt = self.disconnect_packet(SSH_DISCONNECT_PROTOCOL_ERROR, message);
        self.state = State::Done;
        vec![
            ServerOutput::Send(pkt),
            ServerOutput::End(EndReason::ProtocolError),
        ]
    }
}

/// Parses the body of a USERAUTH_REQUEST into a capture record.
fn parse_userauth_request(body: &[u8]) -> Result<AuthRequest, SshError> {
    let malformed = || SshError("malformed USERAUTH_REQUEST".into());
    let mut r = Reader::new(body);
    let username = r.string().ok_or_else(malformed)?.to_vec();
    let _service = r.string().ok_or_else(malformed)?;
    let method_name = r.string().ok_or_else(malformed)?;

    let (method, credential) = match method_name {
        b"password" => {
            let _change = r.boolean().ok_or_else(malformed)?;
            let password = r.string().ok_or_else(malformed)?.to_vec();
            // a change request carries the new password too; the offered
            // (old) password is the captured credential
            (AuthMethod::Password, password)
        }
        b"publickey" => {
            let _has_signature = r.boolean().ok_or_else(malformed)?;
            let algorithm = r.string().ok_or_else(malformed)?;
            let blob = r.string().ok_or_else(malformed)?;
            let digest: [u8; 32] = Sha256::digest(blob).into();
            let mut credential = algorithm.to_vec();
            credential.extend_from_slice(b" SHA256:");
            credential.extend_from_slice(base64_nopad(&digest).as_bytes());
            (AuthMethod::Publickey, credential)
        }
        b"none" => (AuthMethod::None, Vec::new()),
        b"keyboard-interactive" => {
            let _language = r.string().ok_or_else(malformed)?;
            let _submethods = r.string().ok_or_else(malformed)?;
            (AuthMethod::KeyboardInteractive, Vec::new())
        }
        _ => (AuthMethod::Other, Vec::new()),
    };
    Ok(AuthRequest {
        method,
        username,
        credential,
    })
}
