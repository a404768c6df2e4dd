//! Replay-side SSH client state machine.
//!
//! Speaks exactly the server's algorithm suite with no fallbacks; it
//! exists to exercise the capture path end to end, not to interoperate
//! with arbitrary servers. Sans-IO like the server: feed bytes in, write
//! the returned bytes out.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use ed25519_dalek::{Signature, VerifyingKey};
use x25519_dalek::{PublicKey as X25519Public, StaticSecret};

use super::codec::PacketCodec;
use super::kex::{derive_keys, exchange_hash, ExchangeHashInput};
use super::msg::*;
use super::wire::{list_contains, lossy, Reader, Writer};
use super::{
    SshError, CIPHER_ALGORITHM, COMPRESSION_ALGORITHM, HOST_KEY_ALGORITHM, KEX_ALGORITHM,
    MAC_ALGORITHM, MAX_BANNER_LINE,
};

/// Client-side parameters.
#[derive(Debug, Clone)]
pub struct ClientConfig {
    /// Version string without CR/LF.
    pub banner: Vec<u8>,
    /// When set, the server must present exactly this ed25519 host key.
    pub expected_host_key: Option<[u8; 32]>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            banner: b"SSH-2.0-sshtrap_replay".to_vec(),
            expected_host_key: None,
        }
    }
}

/// What happened on the connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientEvent {
    /// Bytes to write to the server.
    Send(Vec<u8>),
    /// Handshake finished; password attempts may be sent.
    ReadyForAuth,
    /// The server rejected an attempt.
    AuthFailure {
        methods_that_can_continue: Vec<String>,
        partial_success: bool,
    },
    /// The server accepted an attempt (a honeypot must never emit this).
    AuthSuccess,
    /// Server closed the session.
    Disconnected { message: String },
    /// Protocol failure; connection is unusable.
    Failed(String),
}

enum State {
    Banner,
    AwaitKexInit,
    AwaitEcdhReply,
    AwaitNewKeys,
    AwaitServiceAccept,
    Ready,
    Done,
}

pub struct ClientSession {
    state: State,
    codec: PacketCodec,
    banner_buf: Vec<u8>,
    client_version: Vec<u8>,
    server_version: Vec<u8>,
    client_kexinit: Vec<u8>,
    server_kexinit: Vec<u8>,
    ephemeral_secret: [u8; 32],
    expected_host_key: Option<[u8; 32]>,
    server_host_key: Option<[u8; 32]>,
    staged_recv: Option<([u8; 16], [u8; 16], [u8; 32])>,
}

impl ClientSession {
    /// Builds the machine; the returned bytes open the conversation.
    pub fn new(
        config: &ClientConfig,
        kex_cookie: [u8; 16],
        ephemeral_secret: [u8; 32],
        padding_seed: u64,
    ) -> (Self, Vec<u8>) {
        let mut codec = PacketCodec::new(padding_seed);

        let mut kexinit = Writer::with_msg(SSH_MSG_KEXINIT);
        kexinit.raw(&kex_cookie);
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
        let client_kexinit = kexinit.into_bytes();

        let mut first = config.banner.clone();
        first.extend_from_slice(b"\r\n");
        first.extend_from_slice(&codec.seal(&client_kexinit));

        let session = ClientSession {
            state: State::Banner,
            codec,
            banner_buf: Vec::new(),
            client_version: config.banner.clone(),
            server_version: Vec::new(),
            client_kexinit,
            server_kexinit: Vec::new(),
            ephemeral_secret,
            expected_host_key: config.expected_host_key,
            server_host_key: None,
            staged_recv: None,
        };
        (session, first)
    }

    /// Server's ed25519 host key, once seen.
    pub fn server_host_key(&self) -> Option<[u8; 32]> {
        self.server_host_key
    }

    pub fn is_ready(&self) -> bool {
        matches!(self.state, State::Ready)
    }

    /// Frames a password attempt. Only valid once `ReadyForAuth` fired.
    pub fn send_password(&mut self, username: &[u8], password: &[u8]) -> Result<Vec<u8>, SshError> {
        if !matches!(self.state, State::Ready) {
            return Err(SshError("not ready for authentication".into()));
        }
        let mut w = Writer::with_msg(SSH_MSG_USERAUTH_REQUEST);
        w.string(username);
        w.string(b"ssh-connection");
        w.string(b"password");
        w.boolean(false);
        w.string(password);
        Ok(self.codec.seal(w.as_slice()))
    }

    /// Frames a signatureless public-key probe.
    pub fn send_publickey_probe(
        &mut self,
        username: &[u8],
        algorithm: &[u8],
        key_blob: &[u8],
    ) -> Result<Vec<u8>, SshError> {
        if !matches!(self.state, State::Ready) {
            return Err(SshError("not ready for authentication".into()));
        }
        let mut w = Writer::with_msg(SSH_MSG_USERAUTH_REQUEST);
        w.string(username);
        w.string(b"ssh-connection");
        w.string(b"publickey");
        w.boolean(false);
        w.string(algorithm);
        w.string(key_blob);
        Ok(self.codec.seal(w.as_slice()))
    }

    /// Frames a method=none probe.
    pub fn send_none_probe(&mut self, username: &[u8]) -> Result<Vec<u8>, SshError> {
        if !matches!(self.state, State::Ready) {
            return Err(SshError("not ready for authentication".into()));
        }
        let mut w = Writer::with_msg(SSH_MSG_USERAUTH_REQUEST);
        w.string(username);
        w.string(b"ssh-connection");
        w.string(b"none");
        Ok(self.codec.seal(w.as_slice()))
    }

    /// Frames a keyboard-interactive probe.
    pub fn send_keyboard_interactive_probe(
        &mut self,
        username: &[u8],
        submethods: &[u8],
    ) -> Result<Vec<u8>, SshError> {
        if !matches!(self.state, State::Ready) {
            return Err(SshError("not ready for authentication".into()));
        }
        let mut w = Writer::with_msg(SSH_MSG_USERAUTH_REQUEST);
        w.string(username);
        w.string(b"ssh-connection");
        w.string(b"keyboard-interactive");
        w.string(b""); // deprecated language tag
        w.string(submethods);
        Ok(self.codec.seal(w.as_slice()))
    }

    pub fn input(&mut self, bytes: &[u8]) -> Vec<ClientEvent> {
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

    /// Servers may send banner lines before the version string; skip them.
    fn try_take_banner(&mut self) -> Result<bool, SshError> {
        loop {
            let Some(nl) = self.banner_buf.iter().position(|&b| b == b'\n') else {
                if self.banner_buf.len() > 64 * 1024 {
                    return Err(SshError("no identification string from server".into()));
                }
                return Ok(false);
            };
            let mut line = self.banner_buf[..nl].to_vec();
            self.banner_buf.drain(..=nl);
            if line.last() == Some(&b'\r') {
                line.pop();
            }
            if !line.starts_with(b"SSH-") {
                continue; // pre-banner chatter
            }
            if line.len() + 2 > MAX_BANNER_LINE {
                return Err(SshError("server identification line too long".into()));
            }
            if !(line.starts_with(b"SSH-2.0-") || line.starts_with(b"SSH-1.99-")) {
                return Err(SshError("server does not speak SSH 2.0".into()));
            }
            self.server_version = line;
            let rest = core::mem::take(&mut self.banner_buf);
            self.codec.feed_front(&rest);
            self.state = State::AwaitKexInit;
            return Ok(true);
        }
    }

    fn pump(&mut self) -> Vec<ClientEvent> {
        let mut out = Vec::new();
        loop {
            if matches!(self.state, State::Done) {
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

    fn handle_packet(&mut self, payload: &[u8]) -> Result<Vec<ClientEvent>, SshError> {
        let msg = payload[0];
        match msg {
            SSH_MSG_DISCONNECT => {
                let mut r = Reader::new(&payload[1..]);
                let _reason = r.uint32();
                let message = r.string().map(lossy).unwrap_or_default();
                self.state = State::Done;
                return Ok(vec![ClientEvent::Disconnected { message }]);
            }
            SSH_MSG_IGNORE
            | SSH_MSG_DEBUG
            | SSH_MSG_UNIMPLEMENTED
            | SSH_MSG_EXT_INFO
            | SSH_MSG_USERAUTH_BANNER => return Ok(Vec::new()),
            _ => {}
        }

        match self.state {
            State::Banner | State::Done => unreachable!("pump guards these states"),
            State::AwaitKexInit => {
                if msg != SSH_MSG_KEXINIT {
                    return Err(SshError("expected server KEXINIT".into()));
                }
                self.handle_kexinit(payload)
            }
            State::AwaitEcdhReply => {
                if msg != SSH_MSG_KEX_ECDH_REPLY {
                    return Err(SshError("expected KEX_ECDH_REPLY".into()));
                }
                self.handle_ecdh_reply(payload)
            }
            State::AwaitNewKeys => {
                if msg != SSH_MSG_NEWKEYS {
                    return Err(SshError("expected server NEWKEYS".into()));
                }
                let (key, iv, mac) = self
                    .staged_recv
                    .take()
                    .ok_or_else(|| SshError("NEWKEYS before key exchange".into()))?;
                self.codec.enable_recv(&key, &iv, &mac);
                let mut req = Writer::with_msg(SSH_MSG_SERVICE_REQUEST);
                req.string(b"ssh-userauth");
                let pkt = self.codec.seal(req.as_slice());
                self.state = State::AwaitServiceAccept;
                Ok(vec![ClientEvent::Send(pkt)])
            }
            State::AwaitServiceAccept => {
                if msg != SSH_MSG_SERVICE_ACCEPT {
                    return Err(SshError("expected SERVICE_ACCEPT".into()));
                }
                self.state = State::Ready;
                Ok(vec![ClientEvent::ReadyForAuth])
            }
            State::Ready => match msg {
                SSH_MSG_USERAUTH_FAILURE => {
                    let mut r = Reader::new(&payload[1..]);
                    let methods = r
                        .name_list()
                        .ok_or_else(|| SshError("malformed USERAUTH_FAILURE".into()))?;
                    let partial = r
                        .boolean()
                        .ok_or_else(|| SshError("malformed USERAUTH_FAILURE".into()))?;
                    Ok(vec![ClientEvent::AuthFailure {
                        methods_that_can_continue: methods.iter().map(|m| lossy(m)).collect(),
                        partial_success: partial,
                    }])
                }
                SSH_MSG_USERAUTH_SUCCESS => Ok(vec![ClientEvent::AuthSuccess]),
                _ => Err(SshError("unexpected message during auth".into())),
            },
        }
    }

    fn handle_kexinit(&mut self, payload: &[u8]) -> Result<Vec<ClientEvent>, SshError> {
        let mut r = Reader::new(&payload[1..]);
        let malformed = || SshError("malformed server KEXINIT".into());
        r.take(16).ok_or_else(malformed)?;
        let mut lists = Vec::with_capacity(10);
        for _ in 0..10 {
            lists.push(r.name_list().ok_or_else(malformed)?);
        }
        r.boolean().ok_or_else(malformed)?;
        r.uint32().ok_or_else(malformed)?;
        for (list, ours) in lists.iter().zip([
            KEX_ALGORITHM,
            HOST_KEY_ALGORITHM,
            CIPHER_ALGORITHM,
            CIPHER_ALGORITHM,
            MAC_ALGORITHM,
            MAC_ALGORITHM,
            COMPRESSION_ALGORITHM,
            COMPRESSION_ALGORITHM,
        ]) {
            if !list_contains(list, ours) {
                return Err(SshError(alloc::format!("server does not offer {ours}")));
            }
        }

        let secret = StaticSecret::from(self.ephemeral_secret);
        let public = X25519Public::from(&secret);
        let mut init = Writer::with_msg(SSH_MSG_KEX_ECDH_INIT);
        init.string(public.as_bytes());
        let pkt = self.codec.seal(init.as_slice());

        // server KEXINIT payload is I_S in the exchange hash
        self.server_kexinit = payload.to_vec();
        self.state = State::AwaitEcdhReply;
        Ok(vec![ClientEvent::Send(pkt)])
    }

    fn handle_ecdh_reply(&mut self, payload: &[u8]) -> Result<Vec<ClientEvent>, SshError> {
        let malformed = || SshError("malformed KEX_ECDH_REPLY".into());
        let mut r = Reader::new(&payload[1..]);
        let host_blob = r.string().ok_or_else(malformed)?;
        let server_pub_raw = r.string().ok_or_else(malformed)?;
        let sig_blob = r.string().ok_or_else(malformed)?;

        let mut hb = Reader::new(host_blob);
        let key_type = hb.string().ok_or_else(malformed)?;
        if key_type != b"ssh-ed25519" {
            return Err(SshError("unexpected host key type".into()));
        }
        let host_pub: [u8; 32] = hb
            .string()
            .ok_or_else(malformed)?
            .try_into()
            .map_err(|_| SshError("bad host key length".into()))?;
        if let Some(expected) = self.expected_host_key {
            if expected != host_pub {
                return Err(SshError("host key mismatch".into()));
            }
        }

        let server_pub: [u8; 32] = server_pub_raw
            .try_into()
            .map_err(|_| SshError("ephemeral key must be 32 bytes".into()))?;
        let secret = StaticSecret::from(self.ephemeral_secret);
        let our_pub = X25519Public::from(&secret);
        let shared = secret.diffie_hellman(&X25519Public::from(server_pub));
        if !shared.was_contributory() {
            return Err(SshError("degenerate server ephemeral key".into()));
        }

        let h = exchange_hash(&ExchangeHashInput {
            client_version: &self.client_version,
            server_version: &self.server_version,
            client_kexinit: &self.client_kexinit,
            server_kexinit: &self.server_kexinit,
            host_key_blob: host_blob,
            client_ephemeral: our_pub.as_bytes(),
            server_ephemeral: &server_pub,
            shared_secret: shared.as_bytes(),
        });

        let mut sb = Reader::new(sig_blob);
        let sig_type = sb.string().ok_or_else(malformed)?;
        if sig_type != b"ssh-ed25519" {
            return Err(SshError("unexpected signature type".into()));
        }
        let sig_raw: [u8; 64] = sb
            .string()
            .ok_or_else(malformed)?
            .try_into()
            .map_err(|_| SshError("bad signature length".into()))?;
        let verifying = VerifyingKey::from_bytes(&host_pub)
            .map_err(|_| SshError("invalid host public key".into()))?;
        verifying
            .verify_strict(&h, &Signature::from_bytes(&sig_raw))
            .map_err(|_| SshError("host signature verification failed".into()))?;
        self.server_host_key = Some(host_pub);

        let keys = derive_keys(shared.as_bytes(), &h, &h);
        let newkeys = self.codec.seal(&[SSH_MSG_NEWKEYS]);
        self.codec.enable_send(
            &keys.key_client_to_server,
            &keys.iv_client_to_server,
            &keys.mac_client_to_server,
        );
        self.staged_recv = Some((
            keys.key_server_to_client,
            keys.iv_server_to_client,
            keys.mac_server_to_client,
        ));
        self.state = State::AwaitNewKeys;
        Ok(vec![ClientEvent::Send(newkeys)])
    }

    fn fail(&mut self, message: &str) -> Vec<ClientEvent> {
        self.state = State::Done;
        vec![ClientEvent::Failed(message.into())]
    }
}
