//! MPTCP handshake options on the wire.
//!
//! Layouts follow the MPTCP option format (kind 30, 4-bit subtype in the
//! high nibble of the third byte, big-endian fields):
//!
//! ```text
//! MP_CAPABLE      (12) kind len sub|ver flags  sender_key[8]
//! MP_CAPABLE ACK  (20) kind len sub|ver flags  sender_key[8] receiver_key[8]
//! MP_JOIN SYN     (12) kind len sub|B   addr   token[4] nonce[4]
//! MP_JOIN SYN/ACK (16) kind len sub|B   addr   hmac64[8] nonce[4]
//! MP_JOIN ACK     (24) kind len sub     rsvd   hmac[20]
//! ```
//!
//! MP_CAPABLE is byte-identical on SYN and SYN/ACK; the segment's TCP flags
//! tell the two apart. Flag bits, address ids and checksums are written as
//! zero and ignored on decode.

mod handshake;

use alloc::vec::Vec;

use hmac::{Hmac, Mac};
use sha1::{Digest, Sha1};

use crate::topology::Address;

pub use handshake::{Endpoint, HandshakeError, Role, SubflowPhase};

pub const MPTCP_OPTION_KIND: u8 = 30;
pub const SUBTYPE_MP_CAPABLE: u8 = 0x0;
pub const SUBTYPE_MP_JOIN: u8 = 0x1;

pub const MP_CAPABLE_LEN: usize = 12;
pub const MP_CAPABLE_ACK_LEN: usize = 20;
pub const MP_JOIN_SYN_LEN: usize = 12;
pub const MP_JOIN_SYNACK_LEN: usize = 16;
pub const MP_JOIN_ACK_LEN: usize = 24;

pub type HmacSha1 = [u8; 20];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MptcpOption {
    /// Initial-subflow key, carried on the SYN and on the SYN/ACK.
    MpCapable { key: u64 },
    /// Third MP_CAPABLE message echoing both keys.
    MpCapableAck { sender_key: u64, receiver_key: u64 },
    MpJoinSyn { token: u32, nonce: u32 },
    MpJoinSynAck { hmac: u64, nonce: u32 },
    MpJoinAck { hmac: HmacSha1 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("option truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("option kind {0} is not MPTCP")]
    WrongKind(u8),
    #[error("bad length {length} for subtype {subtype}")]
    BadLength { subtype: u8, length: u8 },
    #[error("unknown MPTCP subtype {0}")]
    UnknownSubtype(u8),
    #[error("no MPTCP option present")]
    Missing,
}

impl MptcpOption {
    pub fn encoded_len(&self) -> usize {
        match self {
            MptcpOption::MpCapable { .. } => MP_CAPABLE_LEN,
            MptcpOption::MpCapableAck { .. } => MP_CAPABLE_ACK_LEN,
            MptcpOption::MpJoinSyn { .. } => MP_JOIN_SYN_LEN,
            MptcpOption::MpJoinSynAck { .. } => MP_JOIN_SYNACK_LEN,
            MptcpOption::MpJoinAck { .. } => MP_JOIN_ACK_LEN,
        }
    }

    fn subtype(&self) -> u8 {
        match self {
            MptcpOption::MpCapable { .. } | MptcpOption::MpCapableAck { .. } => SUBTYPE_MP_CAPABLE,
            _ => SUBTYPE_MP_JOIN,
        }
    }
}

pub fn encode_option(option: &MptcpOption) -> Vec<u8> {
    let mut out = Vec::with_capacity(option.encoded_len());
    out.push(MPTCP_OPTION_KIND);
    out.push(option.encoded_len() as u8);
    out.push(option.subtype() << 4);
    out.push(0);
    match *option {
        MptcpOption::MpCapable { key } => out.extend_from_slice(&key.to_be_bytes()),
        MptcpOption::MpCapableAck {
            sender_key,
            receiver_key,
        } => {
            out.extend_from_slice(&sender_key.to_be_bytes());
            out.extend_from_slice(&receiver_key.to_be_bytes());
        }
        MptcpOption::MpJoinSyn { token, nonce } => {
            out.extend_from_slice(&token.to_be_bytes());
            out.extend_from_slice(&nonce.to_be_bytes());
        }
        MptcpOption::MpJoinSynAck { hmac, nonce } => {
            out.extend_from_slice(&hmac.to_be_bytes());
            out.extend_from_slice(&nonce.to_be_bytes());
        }
        MptcpOption::MpJoinAck { hmac } => out.extend_from_slice(&hmac),
    }
    debug_assert_eq!(out.len(), option.encoded_len());
    out
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes(b[..4].try_into().expect("4 bytes"))
}

fn be_u64(b: &[u8]) -> u64 {
    u64::from_be_bytes(b[..8].try_into().expect("8 bytes"))
}

/// Decodes the MPTCP option starting at `bytes[0]`. Bytes past the option's
/// declared length are ignored.
pub fn decode_option(bytes: &[u8]) -> Result<MptcpOption, WireError> {
    if bytes.len() < 4 {
        return Err(WireError::Truncated {
            needed: 4,
            have: bytes.len(),
        });
    }
    if bytes[0] != MPTCP_OPTION_KIND {
        return Err(WireError::WrongKind(bytes[0]));
    }
    let length = bytes[1];
    let subtype = bytes[2] >> 4;
    let expected: &[usize] = match subtype {
        SUBTYPE_MP_CAPABLE => &[MP_CAPABLE_LEN, MP_CAPABLE_ACK_LEN],
        SUBTYPE_MP_JOIN => &[MP_JOIN_SYN_LEN, MP_JOIN_SYNACK_LEN, MP_JOIN_ACK_LEN],
        other => return Err(WireError::UnknownSubtype(other)),
    };
    if !expected.contains(&(length as usize)) {
        return Err(WireError::BadLength { subtype, length });
    }
    if bytes.len() < length as usize {
        return Err(WireError::Truncated {
            needed: length as usize,
            have: bytes.len(),
        });
    }
    let body = &bytes[4..length as usize];
    Ok(match (subtype, length as usize) {
        (SUBTYPE_MP_CAPABLE, MP_CAPABLE_LEN) => MptcpOption::MpCapable { key: be_u64(body) },
        (SUBTYPE_MP_CAPABLE, _) => MptcpOption::MpCapableAck {
            sender_key: be_u64(body),
            receiver_key: be_u64(&body[8..]),
        },
        (_, MP_JOIN_SYN_LEN) => MptcpOption::MpJoinSyn {
            token: be_u32(body),
            nonce: be_u32(&body[4..]),
        },
        (_, MP_JOIN_SYNACK_LEN) => MptcpOption::MpJoinSynAck {
            hmac: be_u64(body),
            nonce: be_u32(&body[8..]),
        },
        _ => MptcpOption::MpJoinAck {
            hmac: body[..20].try_into().expect("20 bytes"),
        },
    })
}

/// Walks a TCP option list and decodes the first MPTCP option in it.
pub fn find_mptcp_option(options: &[u8]) -> Result<MptcpOption, WireError> {
    let mut i = 0;
    while i < options.len() {
        match options[i] {
            0 => break,
            1 => i += 1,
            MPTCP_OPTION_KIND => return decode_option(&options[i..]),
            _ => {
                let len = *options.get(i + 1).ok_or(WireError::Truncated {
                    needed: i + 2,
                    have: options.len(),
                })? as usize;
                if len < 2 {
                    return Err(WireError::BadLength {
                        subtype: 0,
                        length: len as u8,
                    });
                }
                i += len;
            }
        }
    }
    Err(WireError::Missing)
}

/// Connection token: the most-significant 32 bits of SHA-1 over the
/// big-endian key.
pub fn compute_token(key: u64) -> u32 {
    let digest = Sha1::digest(key.to_be_bytes());
    be_u32(&digest)
}

/// HMAC-SHA1 keyed with `key_a || key_b` over `nonce_a || nonce_b`.
pub fn compute_hmac(key_a: u64, key_b: u64, nonce_a: u32, nonce_b: u32) -> HmacSha1 {
    let mut key = [0u8; 16];
    key[..8].copy_from_slice(&key_a.to_be_bytes());
    key[8..].copy_from_slice(&key_b.to_be_bytes());
    let mut mac = Hmac::<Sha1>::new_from_slice(&key).expect("HMAC takes any key length");
    mac.update(&nonce_a.to_be_bytes());
    mac.update(&nonce_b.to_be_bytes());
    mac.finalize().into_bytes().into()
}

/// The most-significant 64 bits carried in the MP_JOIN SYN/ACK.
pub fn truncate_hmac(hmac: &HmacSha1) -> u64 {
    be_u64(hmac)
}

/// Subflow identity: addresses and ports, in the packet's direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FourTuple {
    pub src_addr: Address,
    pub dst_addr: Address,
    pub src_port: u16,
    pub dst_port: u16,
}

impl FourTuple {
    pub fn reversed(&self) -> FourTuple {
        FourTuple {
            src_addr: self.dst_addr,
            dst_addr: self.src_addr,
            src_port: self.dst_port,
            dst_port: self.src_port,
        }
    }

    pub fn address_pair(&self) -> (Address, Address) {
        (self.src_addr, self.dst_addr)
    }
}

/// A handshake segment. Options are carried encoded, so the controller has
/// to inspect bytes to learn the MPTCP option.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetupPacket {
    pub tuple: FourTuple,
    pub syn: bool,
    pub ack: bool,
    pub options: Vec<u8>,
}

impl SetupPacket {
    pub fn new(tuple: FourTuple, syn: bool, ack: bool, option: &MptcpOption) -> Self {
        SetupPacket {
            tuple,
            syn,
            ack,
            options: encode_option(option),
        }
    }

    pub fn mptcp_option(&self) -> Result<MptcpOption, WireError> {
        find_mptcp_option(&self.options)
    }

    /// SYN without ACK carrying MP_CAPABLE or MP_JOIN: the packets the
    /// controller acts on.
    pub fn is_subflow_setup(&self) -> bool {
        self.syn
            && !self.ack
            && matches!(
                self.mptcp_option(),
                Ok(MptcpOption::MpCapable { .. } | MptcpOption::MpJoinSyn { .. })
            )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn join_syn_zero_bytes() {
        let b = encode_option(&MptcpOption::MpJoinSyn { token: 0, nonce: 0 });
        let mut expected = alloc::vec![30u8, 12, 0x10, 0x00];
        expected.extend_from_slice(&[0; 8]);
        assert_eq!(b, expected);
    }

    #[test]
    fn lengths() {
        assert_eq!(encode_option(&MptcpOption::MpCapable { key: 1 }).len(), 12);
        assert_eq!(
            encode_option(&MptcpOption::MpJoinAck { hmac: [7; 20] }).len(),
            24
        );
    }

    #[test]
    fn decode_errors() {
        let good = encode_option(&MptcpOption::MpJoinSynAck { hmac: 5, nonce: 9 });
        assert!(matches!(
            decode_option(&good[..10]),
            Err(WireError::Truncated { needed: 16, have: 10 })
        ));
        let mut bad = good.clone();
        bad[0] = 2;
        assert_eq!(decode_option(&bad), Err(WireError::WrongKind(2)));
        let mut bad = good.clone();
        bad[1] = 13;
        assert!(matches!(decode_option(&bad), Err(WireError::BadLength { .. })));
        let mut bad = good;
        bad[2] = 0x70;
        assert_eq!(decode_option(&bad), Err(WireError::UnknownSubtype(7)));
        assert!(matches!(decode_option(&[]), Err(WireError::Truncated { .. })));
    }

    #[test]
    fn option_list_walk() {
        let mut opts = alloc::vec![1u8, 1, 2, 4, 0x05, 0xb4];
        opts.extend(encode_option(&MptcpOption::MpCapable { key: 42 }));
        assert_eq!(
            find_mptcp_option(&opts),
            Ok(MptcpOption::MpCapable { key: 42 })
        );
        assert_eq!(find_mptcp_option(&[1, 1, 0]), Err(WireError::Missing));
    }

    #[test]
    fn token_is_deterministic() {
        assert_eq!(compute_token(0xdead_beef), compute_token(0xdead_beef));
        assert_ne!(compute_token(1), compute_token(2));
    }

    #[test]
    fn hmac_key_order_matters() {
        let a = compute_hmac(1, 2, 3, 4);
        let b = compute_hmac(2, 1, 3, 4);
        assert_ne!(a, b);
    }

    #[test]
    fn setup_packet_classification() {
        let t = FourTuple {
            src_addr: Address(1),
            dst_addr: Address(2),
            src_port: 1000,
            dst_port: 80,
        };
        assert!(SetupPacket::new(t, true, false, &MptcpOption::MpCapable { key: 1 }).is_subflow_setup());
        assert!(!SetupPacket::new(t, true, true, &MptcpOption::MpCapable { key: 1 }).is_subflow_setup());
        assert!(SetupPacket::new(t, true, false, &MptcpOption::MpJoinSyn { token: 1, nonce: 2 })
            .is_subflow_setup());
        let mut garbled = SetupPacket::new(t, true, false, &MptcpOption::MpCapable { key: 1 });
        garbled.options[1] = 3;
        assert!(!garbled.is_subflow_setup());
    }
}
