//! Sans-IO SSH-2 transport and userauth, server and client side.
//!
//! Both sides run as byte-in/byte-out state machines over one fixed
//! algorithm suite: curve25519-sha256 key exchange, ssh-ed25519 host
//! keys, aes128-ctr encryption and hmac-sha2-256 integrity. There is no
//! negotiation fallback, no compression, no rekeying: just far enough
//! into the protocol to carry authentication requests.

pub mod client;
mod codec;
mod kex;
mod msg;
pub mod server;
mod wire;

pub use client::{ClientEvent, ClientSession};
pub use server::{ServerConfig, ServerOutput, ServerSession, SessionEntropy};

use alloc::string::String;

/// Algorithm names advertised by both sides.
pub const KEX_ALGORITHM: &str = "curve25519-sha256";
pub const HOST_KEY_ALGORITHM: &str = "ssh-ed25519";
pub const CIPHER_ALGORITHM: &str = "aes128-ctr";
pub const MAC_ALGORITHM: &str = "hmac-sha2-256";
pub const COMPRESSION_ALGORITHM: &str = "none";

/// Longest accepted version-string line, terminator included.
pub const MAX_BANNER_LINE: usize = 255;

/// Largest accepted packet_length value.
pub const MAX_PACKET_LEN: usize = 35_000;

/// Protocol failure; the session that produced it is already over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SshError(pub String);

impl core::fmt::Display for SshError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SshError {}

pub(crate) fn proto_err(message: &str) -> SshError {
    SshError(alloc::string::ToString::to_string(message))
}

/// OpenSSH-style `SHA256:` fingerprint of the host key for a stored seed.
pub fn host_key_fingerprint(seed: &[u8; 32]) -> String {
    use sha2::{Digest, Sha256};
    let public = ed25519_dalek::SigningKey::from_bytes(seed)
        .verifying_key()
        .to_bytes();
    let blob = kex::ed25519_host_key_blob(&public);
    let digest: [u8; 32] = Sha256::digest(&blob).into();
    let mut out = String::from("SHA256:");
    out.push_str(&crate::escape::base64_nopad(&digest));
    out
}
