//! Simulated OpenFlow-style switches: exact-match rule tables keyed by the
//! subflow 4-tuple, packet-in on miss and idle-timeout expiry.

mod handshakes;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::pathing::Path;
use crate::topology::{NodeId, Topology};
use crate::wire::{FourTuple, SetupPacket};

pub use handshakes::{FailReason, HandshakeTrace, Simulation, SubflowRecord};

/// Logical time in milliseconds.
pub type Millis = u64;

/// Switch rule idle timeout (Floodlight default).
pub const DEFAULT_IDLE_TIMEOUT_MS: Millis = 5_000;

/// Monotone simulation clock.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LogicalClock {
    now: Millis,
}

impl LogicalClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    pub fn advance(&mut self, by: Millis) -> Millis {
        self.now += by;
        self.now
    }

    /// Moves forward to `t`; never moves backwards.
    pub fn advance_to(&mut self, t: Millis) -> Millis {
        self.now = self.now.max(t);
        self.now
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowRule {
    pub switch: NodeId,
    pub matcher: FourTuple,
    pub out_port: NodeId,
    pub installed_at: Millis,
    pub last_hit: Millis,
    pub idle_timeout: Millis,
}

impl FlowRule {
    pub fn is_idle(&self, now: Millis) -> bool {
        now.saturating_sub(self.last_hit) > self.idle_timeout
    }
}

/// A rule to install: match on `matcher` at `switch`, forward to `out_port`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RuleSpec {
    pub switch: NodeId,
    pub matcher: FourTuple,
    pub out_port: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Forward {
    Forwarded(NodeId),
    PacketIn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchState {
    pub id: NodeId,
    rules: BTreeMap<FourTuple, FlowRule>,
    packet_ins: u64,
}

impl SwitchState {
    pub fn new(id: NodeId) -> Self {
        SwitchState {
            id,
            rules: BTreeMap::new(),
            packet_ins: 0,
        }
    }

    /// Exact-match lookup on the packet's 4-tuple.
    pub fn forward(&mut self, packet: &SetupPacket, now: Millis) -> Forward {
        match self.rules.get_mut(&packet.tuple) {
            Some(rule) => {
                rule.last_hit = now;
                Forward::Forwarded(rule.out_port)
            }
            None => {
                self.packet_ins += 1;
                Forward::PacketIn
            }
        }
    }

    /// Removes rules idle for longer than their timeout.
    pub fn expire_rules(&mut self, now: Millis) -> usize {
        let before = self.rules.len();
        self.rules.retain(|_, r| !r.is_idle(now));
        before - self.rules.len()
    }

    pub fn rule(&self, matcher: &FourTuple) -> Option<&FlowRule> {
        self.rules.get(matcher)
    }

    pub fn rules(&self) -> impl Iterator<Item = &FlowRule> {
        self.rules.values()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn packet_ins(&self) -> u64 {
        self.packet_ins
    }
}

/// Rules for both directions of `tuple` on every switch of `path`.
pub fn rule_batch(path: &Path, tuple: FourTuple) -> Vec<RuleSpec> {
    let nodes = path.nodes();
    let reverse = tuple.reversed();
    let mut out = Vec::with_capacity(2 * path.switches().len());
    for i in 1..nodes.len() - 1 {
        out.push(RuleSpec {
            switch: nodes[i],
            matcher: tuple,
            out_port: nodes[i + 1],
        });
        out.push(RuleSpec {
            switch: nodes[i],
            matcher: reverse,
            out_port: nodes[i - 1],
        });
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FabricMetrics {
    pub rules_installed: u64,
    pub conflicts: u64,
    pub evicted: u64,
}

/// All switches of a topology.
#[derive(Clone, Debug)]
pub struct Fabric {
    first_switch: u32,
    switches: Vec<SwitchState>,
    idle_timeout: Millis,
    metrics: FabricMetrics,
}

impl Fabric {
    pub fn new(topology: &Topology) -> Self {
        Self::with_idle_timeout(topology, DEFAULT_IDLE_TIMEOUT_MS)
    }

    pub fn with_idle_timeout(topology: &Topology, idle_timeout: Millis) -> Self {
        Fabric {
            first_switch: topology.n_hosts(),
            switches: topology.switches().map(SwitchState::new).collect(),
            idle_timeout,
            metrics: FabricMetrics::default(),
        }
    }

    pub fn switch(&self, id: NodeId) -> Option<&SwitchState> {
        id.0.checked_sub(self.first_switch)
            .and_then(|i| self.switches.get(i as usize))
    }

    pub fn switch_mut(&mut self, id: NodeId) -> Option<&mut SwitchState> {
        id.0.checked_sub(self.first_switch)
            .and_then(|i| self.switches.get_mut(i as usize))
    }

    pub fn switches(&self) -> &[SwitchState] {
        &self.switches
    }

    pub fn metrics(&self) -> FabricMetrics {
        self.metrics
    }

    pub fn total_rules(&self) -> usize {
        self.switches.iter().map(SwitchState::len).sum()
    }

    /// Installs a rule batch; an existing rule for the same match is
    /// refreshed, or overwritten (and counted as a conflict) when its
    /// output port differs. Returns the batch size.
    pub fn install(&mut self, batch: &[RuleSpec], now: Millis) -> usize {
        let idle_timeout = self.idle_timeout;
        for spec in batch {
            let Some(sw) = self.switch_mut(spec.switch) else {
                continue;
            };
            let fresh = FlowRule {
                switch: spec.switch,
                matcher: spec.matcher,
                out_port: spec.out_port,
                installed_at: now,
                last_hit: now,
                idle_timeout,
            };
            let mut conflict = false;
            sw.rules
                .entry(spec.matcher)
                .and_modify(|r| {
                    if r.out_port != spec.out_port {
                        conflict = true;
                        *r = fresh;
                    } else {
                        r.last_hit = now;
                    }
                })
                .or_insert(fresh);
            if conflict {
                self.metrics.conflicts += 1;
            }
        }
        self.metrics.rules_installed += batch.len() as u64;
        batch.len()
    }

    /// Installs forward and reverse rules for `tuple` along `path`.
    pub fn install_rules(&mut self, path: &Path, tuple: FourTuple, now: Millis) -> usize {
        self.install(&rule_batch(path, tuple), now)
    }

    pub fn expire_rules(&mut self, now: Millis) -> usize {
        let evicted: usize = self.switches.iter_mut().map(|s| s.expire_rules(now)).sum();
        self.metrics.evicted += evicted as u64;
        evicted
    }
}
