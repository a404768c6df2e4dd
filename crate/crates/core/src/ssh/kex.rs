//! curve25519-sha256 exchange-hash and key derivation (RFC 4253 §7.2,
//! RFC 5656 §4, RFC 8731).

use alloc::vec::Vec;
use sha2::{Digest, Sha256};

use super::wire::Writer;

/// Inputs to the exchange hash, in protocol order.
pub struct ExchangeHashInput<'a> {
    pub client_version: &'a [u8],
    pub server_version: &'a [u8],
    pub client_kexinit: &'a [u8],
    pub server_kexinit: &'a [u8],
    pub host_key_blob: &'a [u8],
    pub client_ephemeral: &'a [u8],
    pub server_ephemeral: &'a [u8],
    pub shared_secret: &'a [u8],
}

pub fn exchange_hash(input: &ExchangeHashInput<'_>) -> [u8; 32] {
    let mut w = Writer::new();
    w.string(input.client_version);
    w.string(input.server_version);
    w.string(input.client_kexinit);
    w.string(input.server_kexinit);
    w.string(input.host_key_blob);
    w.string(input.client_ephemeral);
    w.string(input.server_ephemeral);
    w.mpint(input.shared_secret);
    Sha256::digest(w.as_slice()).into()
}

/// Key material for both directions of one connection.
pub struct KeyMaterial {
    pub iv_client_to_server: [u8; 16],
    pub iv_server_to_client: [u8; 16],
    pub key_client_to_server: [u8; 16],
    pub key_server_to_client: [u8; 16],
    pub mac_client_to_server: [u8; 32],
    pub mac_server_to_client: [u8; 32],
}

/// HASH(K || H || letter || session_id), extended with
/// HASH(K || H || K1 || ...) until the requested length is covered.
fn derive(
    shared_secret: &[u8],
    h: &[u8; 32],
    letter: u8,
    session_id: &[u8; 32],
    len: usize,
) -> Vec<u8> {
    let mut k_mpint = Writer::new();
    k_mpint.mpint(shared_secret);

    let mut out: Vec<u8> = Vec::with_capacity(len.div_ceil(32) * 32);
    let mut hasher = Sha256::new();
    hasher.update(k_mpint.as_slice());
    hasher.update(h);
    hasher.update([letter]);
    hasher.update(session_id);
    out.extend_from_slice(&hasher.finalize());
    while out.len() < len {
        let mut hasher = Sha256::new();
        hasher.update(k_mpint.as_slice());
        hasher.update(h);
        hasher.update(&out);
        out.extend_from_slice(&hasher.finalize());
    }
    out.truncate(len);
    out
}

pub fn derive_keys(shared_secret: &[u8], h: &[u8; 32], session_id: &[u8; 32]) -> KeyMaterial {
    let take16 = |letter: u8| -> [u8; 16] {
        derive(shared_secret, h, letter, session_id, 16)
            .try_into()
            .unwrap()
    };
    let take32 = |letter: u8| -> [u8; 32] {
        derive(shared_secret, h, letter, session_id, 32)
            .try_into()
            .unwrap()
    };
    KeyMaterial {
        iv_client_to_server: take16(b'A'),
        iv_server_to_client: take16(b'B'),
        key_client_to_server: take16(b'C'),
        key_server_to_client: take16(b'D'),
        mac_client_to_server: take32(b'E'),
        mac_server_to_client: take32(b'F'),
    }
}

/// `ssh-ed25519` public host key blob.
pub fn ed25519_host_key_blob(public: &[u8; 32]) -> Vec<u8> {
    let mut w = Writer::new();
    w.string(b"ssh-ed25519");
    w.string(public);
    w.into_bytes()
}

/// `ssh-ed25519` signature blob around a raw 64-byte signature.
pub fn ed25519_signature_blob(signature: &[u8; 64]) -> Vec<u8> {
    let mut w = Writer::new();
    w.string(b"ssh-ed25519");
    w.string(signature);
    w.into_bytes()
}
