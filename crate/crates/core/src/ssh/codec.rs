//! Binary packet protocol framing with optional aes128-ctr + hmac-sha2-256.
//!
//! One codec instance carries both directions of a connection: sequence
//! numbers start at zero with the first packet and count every packet,
//! encrypted or not. Encryption switches on per direction at the NEWKEYS
//! boundary. The CTR keystream runs continuously across packets; the MAC
//! covers `uint32 seq || plaintext packet` and rides unencrypted after
//! the ciphertext.

use alloc::vec::Vec;

use aes::Aes128;
use ctr::cipher::{KeyIvInit, StreamCipher};
use ctr::Ctr128BE;
use hmac::{Hmac, Mac};
use sha2::Sha256;

use super::{proto_err, SshError, MAX_PACKET_LEN};
use crate::rng::Prng;

type Aes128Ctr = Ctr128BE<Aes128>;
type HmacSha256 = Hmac<Sha256>;

const MAC_LEN: usize = 32;
const BLOCK: usize = 16;

struct DirectionCrypto {
    cipher: Aes128Ctr,
    mac_key: [u8; 32],
}

enum RecvState {
    NeedLength,
    /// Length block already decrypted (or read, in plaintext mode);
    /// waiting for the rest of the packet plus MAC.
    NeedBody {
        packet_len: usize,
        decrypted_prefix: Vec<u8>,
    },
}

pub struct PacketCodec {
    send: Option<DirectionCrypto>,
    recv: Option<DirectionCrypto>,
    send_seq: u32,
    recv_seq: u32,
    in_buf: Vec<u8>,
    consumed: usize,
    state: RecvState,
    padding: Prng,
}

impl PacketCodec {
    pub fn new(pad_seed: u64) -> Self {
        PacketCodec {
            send: None,
            recv: None,
            send_seq: 0,
            recv_seq: 0,
            in_buf: Vec::new(),
            consumed: 0,
            state: RecvState::NeedLength,
            padding: Prng::new(pad_seed),
        }
    }

    pub fn enable_send(&mut self, key: &[u8; 16], iv: &[u8; 16], mac_key: &[u8; 32]) {
        self.send = Some(DirectionCrypto {
            cipher: Aes128Ctr::new(key.into(), iv.into()),
            mac_key: *mac_key,
        });
    }

    pub fn enable_recv(&mut self, key: &[u8; 16], iv: &[u8; 16], mac_key: &[u8; 32]) {
        self.recv = Some(DirectionCrypto {
            cipher: Aes128Ctr::new(key.into(), iv.into()),
            mac_key: *mac_key,
        });
    }

    /// Sequence number of the most recently parsed incoming packet.
    pub fn last_recv_seq(&self) -> u32 {
        self.recv_seq.wrapping_sub(1)
    }

    pub fn feed(&mut self, bytes: &[u8]) {
        if self.consumed > 0 && self.consumed == self.in_buf.len() {
            self.in_buf.clear();
            self.consumed = 0;
        }
        self.in_buf.extend_from_slice(bytes);
    }

    /// Takes bytes still unparsed, for handing leftovers across the
    /// version-exchange boundary.
    pub fn feed_front(&mut self, bytes: &[u8]) {
        debug_assert!(self.in_buf.is_empty());
        self.in_buf.extend_from_slice(bytes);
    }

    fn available(&self) -> &[u8] {
        &self.in_buf[self.consumed..]
    }

    fn advance(&mut self, n: usize) {
        self.consumed += n;
        if self.consumed == self.in_buf.len() {
            self.in_buf.clear();
            self.consumed = 0;
        } else if self.consumed > 4096 {
            self.in_buf.drain(..self.consumed);
            self.consumed = 0;
        }
    }

    /// Parses the next complete packet payload, if one is buffered.
    pub fn next_packet(&mut self) -> Result<Option<Vec<u8>>, SshError> {
        loop {
            match &mut self.state {
                RecvState::NeedLength => {
                    let head_len = if self.recv.is_some() { BLOCK } else { 4 };
                    if self.available().len() < head_len {
                        return Ok(None);
                    }
                    let mut head = self.available()[..head_len].to_vec();
                    if let Some(c) = &mut self.recv {
                        c.cipher.apply_keystream(&mut head);
                    }
                    self.advance(head_len);
                    let packet_len = u32::from_be_bytes(head[..4].try_into().unwrap()) as usize;
                    if !(5..=MAX_PACKET_LEN).contains(&packet_len) {
                        return Err(proto_err("packet length out of range"));
                    }
                    if self.recv.is_some() && !(4 + packet_len).is_multiple_of(BLOCK) {
                        return Err(proto_err("packet length not block aligned"));
                    }
                    self.state = RecvState::NeedBody {
                        packet_len,
                        decrypted_prefix: head,
                    };
                }
                RecvState::NeedBody {
                    packet_len,
                    decrypted_prefix,
                } => {
                    let packet_len = *packet_len;
                    let encrypted = self.recv.is_some();
                    let body_remaining = 4 + packet_len - decrypted_prefix.len();
                    let want = body_remaining + if encrypted { MAC_LEN } else { 0 };
                    if self.in_buf.len() - self.consumed < want {
                        return Ok(None);
                    }
                    let mut packet = core::mem::take(decrypted_prefix);
                    packet.extend_from_slice(&self.available()[..body_remaining]);
                    let mac_rx: Option<[u8; MAC_LEN]> = if encrypted {
                        let m = &self.available()[body_remaining..want];
                        Some(m.try_into().unwrap())
                    } else {
                        None
                    };
                    self.advance(want);
                    self.state = RecvState::NeedLength;

                    if let Some(c) = &mut self.recv {
                        c.cipher
                            .apply_keystream(&mut packet[4 + packet_len - body_remaining..]);
                        let mut mac = <HmacSha256 as Mac>::new_from_slice(&c.mac_key)
                            .expect("hmac accepts 32-byte keys");
                        mac.update(&self.recv_seq.to_be_bytes());
                        mac.update(&packet);
                        if mac.verify_slice(&mac_rx.unwrap()).is_err() {
                            return Err(proto_err("packet MAC verification failed"));
                        }
                    }
                    self.recv_seq = self.recv_seq.wrapping_add(1);

                    let padding_len = packet[4] as usize;
                    let payload_len = packet_len
                        .checked_sub(1)
                        .and_then(|v| v.checked_sub(padding_len))
                        .ok_or_else(|| proto_err("padding length exceeds packet"))?;
                    if padding_len < 4 {
                        return Err(proto_err("padding below protocol minimum"));
                    }
                    if payload_len == 0 {
                        return Err(proto_err("empty packet payload"));
                    }
                    return Ok(Some(packet[5..5 + payload_len].to_vec()));
                }
            }
        }
    }

    /// Frames (and, once keys are on, encrypts and MACs) one payload.
    pub fn seal(&mut self, payload: &[u8]) -> Vec<u8> {
        let block = if self.send.is_some() { BLOCK } else { 8 };
        let mut padding_len = block - ((5 + payload.len()) % block);
        if padding_len < 4 {
            padding_len += block;
        }
        let packet_len = 1 + payload.len() + padding_len;
        let mut packet = Vec::with_capacity(4 + packet_len + MAC_LEN);
        packet.extend_from_slice(&(packet_len as u32).to_be_bytes());
        packet.push(padding_len as u8);
        packet.extend_from_slice(payload);
        let mut pad = [0u8; 2 * BLOCK];
        self.padding.fill_bytes(&mut pad[..padding_len]);
        packet.extend_from_slice(&pad[..padding_len]);

        if let Some(c) = &mut self.send {
            let mut mac =
                <HmacSha256 as Mac>::new_from_slice(&c.mac_key).expect("hmac accepts 32-byte keys");
            mac.update(&self.send_seq.to_be_bytes());
            mac.update(&packet);
            let tag = mac.finalize().into_bytes();
            c.cipher.apply_keystream(&mut packet);
            packet.extend_from_slice(&tag);
        }
        self.send_seq = self.send_seq.wrapping_add(1);
        packet
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys() -> ([u8; 16], [u8; 16], [u8; 32]) {
        ([1; 16], [2; 16], [3; 32])
    }

    #[test]
    fn plaintext_round_trip() {
        let mut a = PacketCodec::new(1);
        let mut b = PacketCodec::new(2);
        let wire = a.seal(b"hello");
        assert_eq!(wire.len() % 8, 0);
        b.feed(&wire);
        assert_eq!(b.next_packet().unwrap().unwrap(), b"hello");
        assert_eq!(b.next_packet().unwrap(), None);
    }

    #[test]
    fn encrypted_round_trip_multiple_packets() {
        let (k, iv, mk) = keys();
        let mut tx = PacketCodec::new(1);
        let mut rx = PacketCodec::new(2);
        tx.enable_send(&k, &iv, &mk);
        rx.enable_recv(&k, &iv, &mk);
        let mut wire = Vec::new();
        for i in 0..5u8 {
            wire.extend_from_slice(&tx.seal(&[i; 33]));
        }
        // feed in awkward chunk sizes
        for chunk in wire.chunks(7) {
            rx.feed(chunk);
            while let Some(p) = rx.next_packet().unwrap() {
                assert_eq!(p.len(), 33);
            }
        }
    }

    #[test]
    fn tampered_ciphertext_fails_mac() {
        let (k, iv, mk) = keys();
        let mut tx = PacketCodec::new(1);
        let mut rx = PacketCodec::new(2);
        tx.enable_send(&k, &iv, &mk);
        rx.enable_recv(&k, &iv, &mk);
        let mut wire = tx.seal(b"payload");
        let mid = wire.len() / 2;
        wire[mid] ^= 0x40;
        rx.feed(&wire);
        assert!(rx.next_packet().is_err());
    }

    #[test]
    fn wrong_sequence_number_fails_mac() {
        let (k, iv, mk) = keys();
        let mut tx = PacketCodec::new(1);
        let mut rx = PacketCodec::new(2);
        tx.enable_send(&k, &iv, &mk);
        rx.enable_recv(&k, &iv, &mk);
        let _skipped = tx.seal(b"first");
        let second = tx.seal(b"second");
        rx.feed(&second);
        assert!(rx.next_packet().is_err());
    }

    #[test]
    fn oversized_length_rejected() {
        let mut rx = PacketCodec::new(0);
        rx.feed(&[0xff, 0xff, 0xff, 0xff]);
        assert!(rx.next_packet().is_err());
    }

    #[test]
    fn runt_length_rejected() {
        let mut rx = PacketCodec::new(0);
        rx.feed(&[0, 0, 0, 1]);
        assert!(rx.next_packet().is_err());
    }

    #[test]
    fn minimum_padding_enforced() {
        // hand-build a plaintext packet with padding_length 3
        let mut rx = PacketCodec::new(0);
        let payload = b"x";
        let packet_len = 1 + payload.len() + 3;
        let mut wire = (packet_len as u32).to_be_bytes().to_vec();
        wire.push(3);
        wire.extend_from_slice(payload);
        wire.extend_from_slice(&[0; 3]);
        rx.feed(&wire);
        assert!(rx.next_packet().is_err());
    }
}
