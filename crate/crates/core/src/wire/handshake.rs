//! Per-subflow MPTCP handshake state machine.
//!
//! Initial subflow: MP_CAPABLE SYN (initiator key), SYN/ACK (responder key),
//! ACK (both keys). Additional subflows: MP_JOIN SYN (token, nonce), SYN/ACK
//! (truncated HMAC, nonce), ACK (full HMAC). The connection token is derived
//! from the initiator's key.

use alloc::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{compute_hmac, compute_token, truncate_hmac, FourTuple, MptcpOption, SetupPacket, WireError};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubflowPhase {
    CapableSynSent,
    CapableSynReceived,
    JoinSynSent { local_nonce: u32 },
    JoinSynReceived { local_nonce: u32, remote_nonce: u32 },
    Established,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum HandshakeError {
    #[error("MP_JOIN token does not match any connection")]
    UnknownToken,
    #[error("HMAC verification failed")]
    HmacMismatch,
    #[error("MP_CAPABLE keys do not match")]
    KeyMismatch,
    #[error("connection keys not yet exchanged")]
    NotConnected,
    #[error("segment does not fit the subflow's handshake state")]
    UnexpectedSegment,
    #[error("malformed option: {0}")]
    Malformed(#[from] WireError),
}

/// One side of an MPTCP connection. Subflows are keyed by their 4-tuple as
/// seen from this endpoint (local address first).
#[derive(Clone, Debug)]
pub struct Endpoint {
    role: Role,
    local_key: u64,
    remote_key: Option<u64>,
    subflows: BTreeMap<FourTuple, SubflowPhase>,
    rng: ChaCha8Rng,
}

impl Endpoint {
    pub fn new(role: Role, local_key: u64, nonce_seed: u64) -> Self {
        Endpoint {
            role,
            local_key,
            remote_key: None,
            subflows: BTreeMap::new(),
            rng: seed::rng(nonce_seed),
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn local_key(&self) -> u64 {
        self.local_key
    }

    pub fn remote_key(&self) -> Option<u64> {
        self.remote_key
    }

    fn initiator_key(&self) -> Option<u64> {
        match self.role {
            Role::Initiator => Some(self.local_key),
            Role::Responder => self.remote_key,
        }
    }

    /// Connection token, once the initiator's key is known.
    pub fn token(&self) -> Option<u32> {
        self.initiator_key().map(compute_token)
    }

    pub fn phase(&self, local_tuple: &FourTuple) -> Option<SubflowPhase> {
        self.subflows.get(local_tuple).copied()
    }

    pub fn is_established(&self, local_tuple: &FourTuple) -> bool {
        self.phase(local_tuple) == Some(SubflowPhase::Established)
    }

    /// MP_CAPABLE SYN for the initial subflow.
    pub fn open_initial(&mut self, tuple: FourTuple) -> SetupPacket {
        self.subflows.insert(tuple, SubflowPhase::CapableSynSent);
        SetupPacket::new(
            tuple,
            true,
            false,
            &MptcpOption::MpCapable {
                key: self.local_key,
            },
        )
    }

    /// MP_JOIN SYN for an additional subflow.
    pub fn open_join(&mut self, tuple: FourTuple) -> Result<SetupPacket, HandshakeError> {
        let token = self.token().ok_or(HandshakeError::NotConnected)?;
        if self.remote_key.is_none() {
            return Err(HandshakeError::NotConnected);
        }
        let nonce = self.rng.random();
        self.subflows
            .insert(tuple, SubflowPhase::JoinSynSent { local_nonce: nonce });
        Ok(SetupPacket::new(
            tuple,
            true,
            false,
            &MptcpOption::MpJoinSyn { token, nonce },
        ))
    }

    /// Consumes one incoming segment and returns the reply, if any. Any
    /// verification failure drops the subflow.
    pub fn step(&mut self, incoming: &SetupPacket) -> Result<Option<SetupPacket>, HandshakeError> {
        let local = incoming.tuple.reversed();
        let result = self.step_inner(local, incoming);
        if result.is_err() {
            self.subflows.remove(&local);
        }
        result
    }

    fn step_inner(
        &mut self,
        local: FourTuple,
        incoming: &SetupPacket,
    ) -> Result<Option<SetupPacket>, HandshakeError> {
        let option = incoming.mptcp_option()?;
        let phase = self.subflows.get(&local).copied();
        let flags = (incoming.syn, incoming.ack);
        match (self.role, phase, flags, option) {
            // Responder, initial subflow.
            (Role::Responder, None, (true, false), MptcpOption::MpCapable { key }) => {
                self.remote_key = Some(key);
                self.subflows.insert(local, SubflowPhase::CapableSynReceived);
                Ok(Some(SetupPacket::new(
                    local,
                    true,
                    true,
                    &MptcpOption::MpCapable {
                        key: self.local_key,
                    },
                )))
            }
            (
                Role::Responder,
                Some(SubflowPhase::CapableSynReceived),
                (false, true),
                MptcpOption::MpCapableAck {
                    sender_key,
                    receiver_key,
                },
            ) => {
                if Some(sender_key) != self.remote_key || receiver_key != self.local_key {
                    return Err(HandshakeError::KeyMismatch);
                }
                self.subflows.insert(local, SubflowPhase::Established);
                Ok(None)
            }
            // Initiator, initial subflow.
            (Role::Initiator, Some(SubflowPhase::CapableSynSent), (true, true), MptcpOption::MpCapable { key }) => {
                self.remote_key = Some(key);
                self.subflows.insert(local, SubflowPhase::Established);
                Ok(Some(SetupPacket::new(
                    local,
                    false,
                    true,
                    &MptcpOption::MpCapableAck {
                        sender_key: self.local_key,
                        receiver_key: key,
                    },
                )))
            }
            // Responder, additional subflow.
            (Role::Responder, None, (true, false), MptcpOption::MpJoinSyn { token, nonce }) => {
                let remote_key = self.remote_key.ok_or(HandshakeError::UnknownToken)?;
                if Some(token) != self.token() {
                    return Err(HandshakeError::UnknownToken);
                }
                let local_nonce = self.rng.random();
                let hmac = compute_hmac(self.local_key, remote_key, local_nonce, nonce);
                self.subflows.insert(
                    local,
                    SubflowPhase::JoinSynReceived {
                        local_nonce,
                        remote_nonce: nonce,
                    },
                );
                Ok(Some(SetupPacket::new(
                    local,
                    true,
                    true,
                    &MptcpOption::MpJoinSynAck {
                        hmac: truncate_hmac(&hmac),
                        nonce: local_nonce,
                    },
                )))
            }
            (
                Role::Responder,
                Some(SubflowPhase::JoinSynReceived {
                    local_nonce,
                    remote_nonce,
                }),
                (false, true),
                MptcpOption::MpJoinAck { hmac },
            ) => {
                let remote_key = self.remote_key.ok_or(HandshakeError::NotConnected)?;
                let expected = compute_hmac(remote_key, self.local_key, remote_nonce, local_nonce);
                if hmac != expected {
                    return Err(HandshakeError::HmacMismatch);
                }
                self.subflows.insert(local, SubflowPhase::Established);
                Ok(None)
            }
            // Initiator, additional subflow.
            (
                Role::Initiator,
                Some(SubflowPhase::JoinSynSent { local_nonce }),
                (true, true),
                MptcpOption::MpJoinSynAck { hmac, nonce },
            ) => {
                let remote_key = self.remote_key.ok_or(HandshakeError::NotConnected)?;
                let expected = compute_hmac(remote_key, self.local_key, nonce, local_nonce);
                if hmac != truncate_hmac(&expected) {
                    return Err(HandshakeError::HmacMismatch);
                }
                self.subflows.insert(local, SubflowPhase::Established);
                Ok(Some(SetupPacket::new(
                    local,
                    false,
                    true,
                    &MptcpOption::MpJoinAck {
                        hmac: compute_hmac(self.local_key, remote_key, local_nonce, nonce),
                    },
                )))
            }
            _ => Err(HandshakeError::UnexpectedSegment),
        }
    }
}
