//! Hop-by-hop replay of subflow handshakes through the fabric.

use alloc::vec::Vec;

use super::{Fabric, Forward, LogicalClock};
use crate::controller::{Controller, ControllerError};
use crate::flowsim::SubflowPlacement;
use crate::pathing::Path;
use crate::seed;
use crate::topology::{NodeId, Topology};
use crate::traffic::ConnectionSpec;
use crate::wire::{Endpoint, HandshakeError, Role};
use crate::wire::{FourTuple, SetupPacket};

#[derive(Clone, Debug, PartialEq)]
pub enum FailReason {
    Controller(ControllerError),
    Handshake(HandshakeError),
    /// A non-setup packet missed every rule, or forwarding looped.
    Unroutable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubflowRecord {
    pub conn_id: u32,
    pub subflow_id: u32,
    pub tuple: FourTuple,
    /// Path assigned by the controller.
    pub path: Option<Path>,
    pub packet_ins: u32,
    pub rules_installed: u32,
    pub failed: Option<FailReason>,
}

impl SubflowRecord {
    pub fn established(&self) -> bool {
        self.failed.is_none()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HandshakeTrace {
    pub records: Vec<SubflowRecord>,
}

impl HandshakeTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn packet_ins(&self) -> u64 {
        self.records.iter().map(|r| r.packet_ins as u64).sum()
    }

    pub fn rules_installed(&self) -> u64 {
        self.records.iter().map(|r| r.rules_installed as u64).sum()
    }

    pub fn established(&self) -> usize {
        self.records.iter().filter(|r| r.established()).count()
    }

    /// Established subflows with their paths, for the allocator.
    pub fn placements(&self) -> Vec<SubflowPlacement> {
        self.records
            .iter()
            .filter(|r| r.established())
            .filter_map(|r| {
                r.path.as_ref().map(|p| SubflowPlacement {
                    conn_id: r.conn_id,
                    subflow_id: r.subflow_id,
                    path: p.clone(),
                })
            })
            .collect()
    }
}

/// Mutable state of one run: switches, controller and clock.
#[derive(Clone, Debug)]
pub struct Simulation<'t> {
    pub topology: &'t Topology,
    pub fabric: Fabric,
    pub controller: Controller<'t>,
    pub clock: LogicalClock,
    key_seed: u64,
}

struct Delivery {
    packet_ins: u32,
    rules: u32,
    assigned: Option<Path>,
}

impl<'t> Simulation<'t> {
    pub fn new(topology: &'t Topology, controller: Controller<'t>, key_seed: u64) -> Self {
        Simulation {
            topology,
            fabric: Fabric::new(topology),
            controller,
            clock: LogicalClock::new(),
            key_seed,
        }
    }

    /// Walks `packet` from its source host to its destination host. On a
    /// rule miss the switch hands a setup packet to the controller, which
    /// installs rules for the whole path before forwarding resumes.
    fn deliver(&mut self, packet: &SetupPacket) -> Result<Delivery, FailReason> {
        let topo = self.topology;
        let src = topo
            .interface(packet.tuple.src_addr)
            .ok_or(FailReason::Unroutable)?;
        let dst_host = topo
            .interface(packet.tuple.dst_addr)
            .ok_or(FailReason::Unroutable)?
            .host;
        let mut out = Delivery {
            packet_ins: 0,
            rules: 0,
            assigned: None,
        };
        let mut node: NodeId = src.switch;
        self.clock.advance(1);
        let mut hops = 0;
        while node != dst_host {
            hops += 1;
            if hops > topo.n_nodes() || !topo.is_switch(node) {
                return Err(FailReason::Unroutable);
            }
            let now = self.clock.now();
            let sw = self.fabric.switch_mut(node).ok_or(FailReason::Unroutable)?;
            let next = match sw.forward(packet, now) {
                Forward::Forwarded(n) => n,
                Forward::PacketIn => {
                    out.packet_ins += 1;
                    if !packet.is_subflow_setup() {
                        return Err(FailReason::Unroutable);
                    }
                    let now = self.clock.advance(1);
                    let a = self
                        .controller
                        .handle_setup_packet(packet, now)
                        .map_err(FailReason::Controller)?;
                    out.rules += self.fabric.install(&a.rules, now) as u32;
                    out.assigned = Some(a.path);
                    match self.fabric.switch_mut(node).map(|s| s.forward(packet, now)) {
                        Some(Forward::Forwarded(n)) => n,
                        _ => return Err(FailReason::Unroutable),
                    }
                }
            };
            node = next;
            self.clock.advance(1);
        }
        Ok(out)
    }

    fn setup_subflow(
        &mut self,
        client: &mut Endpoint,
        server: &mut Endpoint,
        tuple: FourTuple,
        initial: bool,
        record: &mut SubflowRecord,
    ) -> Result<(), FailReason> {
        let syn = if initial {
            client.open_initial(tuple)
        } else {
            client.open_join(tuple).map_err(FailReason::Handshake)?
        };
        let mut packet = Some(syn);
        let mut towards_server = true;
        while let Some(p) = packet {
            let d = self.deliver(&p);
            let d = match d {
                Ok(d) => d,
                Err(e) => {
                    // Count the redirect even when the controller refuses.
                    if matches!(e, FailReason::Controller(_)) {
                        record.packet_ins += 1;
                    }
                    return Err(e);
                }
            };
            record.packet_ins += d.packet_ins;
            record.rules_installed += d.rules;
            if d.assigned.is_some() {
                record.path = d.assigned;
            }
            let receiver = if towards_server { &mut *server } else { &mut *client };
            packet = receiver.step(&p).map_err(FailReason::Handshake)?;
            towards_server = !towards_server;
        }
        if client.is_established(&tuple) && server.is_established(&tuple.reversed()) {
            Ok(())
        } else {
            Err(FailReason::Handshake(HandshakeError::UnexpectedSegment))
        }
    }

    /// Replays every connection in order, subflows in creation order.
    pub fn run_handshakes(&mut self, specs: &[ConnectionSpec]) -> HandshakeTrace {
        let mut trace = HandshakeTrace::default();
        for spec in specs {
            let base = seed::derive(self.key_seed, spec.id as u64);
            let mut client = Endpoint::new(Role::Initiator, seed::mix64(base), seed::derive(base, 1));
            let mut server = Endpoint::new(Role::Responder, seed::mix64(base ^ 0x5eed), seed::derive(base, 2));
            for (i, sf) in spec.subflows.iter().enumerate() {
                let mut record = SubflowRecord {
                    conn_id: spec.id,
                    subflow_id: i as u32,
                    tuple: sf.tuple,
                    path: None,
                    packet_ins: 0,
                    rules_installed: 0,
                    failed: None,
                };
                if let Err(e) = self.setup_subflow(&mut client, &mut server, sf.tuple, sf.initial, &mut record) {
                    record.failed = Some(e);
                }
                trace.records.push(record);
            }
        }
        trace
    }
}
