//! Deterministic flow-level model of MPTCP-aware SDN routing in datacenters.
//!
//! The crate is `no_std` (it only needs `alloc`) and covers the whole
//! simulation pipeline:
//!
//! - [`topology`]: FatTree, Jellyfish and dual-homed Jellyfish builders.
//! - [`pathing`]: bounded DFS path enumeration and the shortest /
//!   k-shortest / k-edge-disjoint path-set filters.
//! - [`wire`]: MP_CAPABLE / MP_JOIN option codec, token and HMAC
//!   computation, and the per-subflow handshake state machine.
//! - [`fabric`]: exact-match switch rule tables, packet-in redirection and
//!   the hop-by-hop handshake replay.
//! - [`controller`]: the reactive forwarding module (path cache, per-token
//!   connection table, primary-address tracking, round-robin or random
//!   subflow assignment).
//! - [`traffic`]: permutation / unconstrained traffic matrices and fullmesh
//!   subflow expansion.
//! - [`flowsim`]: progressive-filling max-min allocation and throughput
//!   reports.
//!
//! File formats, the experiment harness and the CLI live in the `mpsdn`
//! companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod controller;
pub mod fabric;
pub mod flowsim;
pub mod pathing;
pub mod seed;
pub mod topology;
pub mod traffic;
pub mod wire;

pub use controller::{AssignmentMode, Controller, ControllerError, ControllerMetrics, RoutingConfig};
pub use fabric::{Fabric, HandshakeTrace, LogicalClock, Millis, Simulation};
pub use flowsim::{allocate, AllocationResult, SubflowPlacement, ThroughputReport};
pub use pathing::{Path, PathError, PathMode, PathSet, TieOrder, TopologyManager};
pub use topology::{Address, NodeId, NodeKind, Topology, TopologyError, TopologyKind};
pub use traffic::{ConnectionSpec, Pattern, SubflowCount, TrafficMatrix};
pub use wire::{FourTuple, MptcpOption, SetupPacket, WireError};
