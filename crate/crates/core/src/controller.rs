//! Reactive forwarding module: assigns each subflow setup packet a path and
//! returns the rules to install.
//!
//! State kept between packets:
//! - `pathCache`: path sets per (src, dst, mode), valid for 60 minutes.
//! - `flows`: per-token connection entries, valid for 5 seconds from
//!   creation. Each holds one round-robin [`IpEntry`] per address pair.
//! - `primaryIPs`: the path of the initial subflow, per address pair.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::fabric::{rule_batch, Millis, RuleSpec};
use crate::pathing::{Path, PathError, PathMode, PathSet, TieOrder, TopologyManager, DEFAULT_HOP_SLACK};
use crate::seed;
use crate::topology::{Address, Topology};
use crate::wire::{MptcpOption, SetupPacket, WireError};

pub const PATH_CACHE_TTL_MS: Millis = 60 * 60 * 1000;
pub const CONNECTION_TTL_MS: Millis = 5_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AssignmentMode {
    /// Round-robin over the path set (M).
    Deterministic,
    /// Uniform choice from the path set (R).
    Random,
}

impl AssignmentMode {
    pub fn letter(self) -> char {
        match self {
            AssignmentMode::Deterministic => 'M',
            AssignmentMode::Random => 'R',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoutingConfig {
    pub assignment: AssignmentMode,
    pub paths: PathMode,
    /// Seed for random-mode choices.
    pub seed: u64,
    pub hop_slack: u32,
    pub tie_order: TieOrder,
}

impl RoutingConfig {
    pub fn new(assignment: AssignmentMode, paths: PathMode) -> Self {
        RoutingConfig {
            assignment,
            paths,
            seed: 0,
            hop_slack: DEFAULT_HOP_SLACK,
            tie_order: TieOrder::Lexicographic,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tie_order(mut self, tie_order: TieOrder) -> Self {
        self.tie_order = tie_order;
        self
    }

    pub fn with_hop_slack(mut self, hop_slack: u32) -> Self {
        self.hop_slack = hop_slack;
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error("not a subflow setup packet")]
    NotSetupPacket,
    #[error("malformed MPTCP option: {0}")]
    Malformed(#[from] WireError),
    #[error(transparent)]
    NoPath(#[from] PathError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ControllerMetrics {
    pub packet_ins: u64,
    pub tm_queries: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub rules_issued: u64,
    pub connections_created: u64,
    pub connections_expired: u64,
    /// MP_CAPABLE packets whose address pair was already in primaryIPs.
    pub primary_collisions: u64,
    pub no_path: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetupKind {
    Capable,
    Join,
}

/// Controller decision for one setup packet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub kind: SetupKind,
    pub path: Path,
    pub rules: Vec<RuleSpec>,
}

#[derive(Clone, Debug)]
struct CacheEntry {
    set: PathSet,
    inserted_at: Millis,
}

/// Round-robin state for one address pair of a connection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IpEntry {
    paths: Vec<Path>,
    next: usize,
    counts: Vec<u32>,
}

impl IpEntry {
    /// Builds the round-robin order; `primary`, when present in `paths`, is
    /// moved to the end.
    pub fn new(mut paths: Vec<Path>, primary: Option<&Path>) -> Self {
        if let Some(p) = primary {
            if let Some(i) = paths.iter().position(|q| q == p) {
                let moved = paths.remove(i);
                paths.push(moved);
            }
        }
        let counts = alloc::vec![0; paths.len()];
        IpEntry {
            paths,
            next: 0,
            counts,
        }
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn next_index(&self) -> usize {
        self.next
    }

    /// Next path in round-robin order.
    pub fn assign_next(&mut self) -> &Path {
        let i = self.next;
        self.next = (self.next + 1) % self.paths.len();
        self.counts[i] += 1;
        &self.paths[i]
    }

    pub fn assign_at(&mut self, i: usize) -> &Path {
        self.counts[i] += 1;
        &self.paths[i]
    }
}

#[derive(Clone, Debug)]
struct ConnectionEntry {
    created_at: Millis,
    pairs: BTreeMap<(Address, Address), IpEntry>,
}

impl ConnectionEntry {
    fn expired(&self, now: Millis) -> bool {
        now.saturating_sub(self.created_at) > CONNECTION_TTL_MS
    }
}

/// The forwarding module. One instance per simulation run.
#[derive(Clone, Debug)]
pub struct Controller<'t> {
    tm: TopologyManager<'t>,
    config: RoutingConfig,
    rng: ChaCha8Rng,
    path_cache: BTreeMap<(Address, Address, PathMode), CacheEntry>,
    flows: BTreeMap<u32, ConnectionEntry>,
    primary_ips: BTreeMap<(Address, Address), Path>,
    metrics: ControllerMetrics,
}

impl<'t> Controller<'t> {
    pub fn new(topology: &'t Topology, config: RoutingConfig) -> Self {
        Controller {
            tm: TopologyManager::new(topology, config.hop_slack, config.tie_order),
            config,
            rng: seed::rng(config.seed),
            path_cache: BTreeMap::new(),
            flows: BTreeMap::new(),
            primary_ips: BTreeMap::new(),
            metrics: ControllerMetrics::default(),
        }
    }

    pub fn config(&self) -> &RoutingConfig {
        &self.config
    }

    pub fn topology(&self) -> &'t Topology {
        self.tm.topology()
    }

    pub fn metrics(&self) -> ControllerMetrics {
        self.metrics
    }

    pub fn connection_count(&self) -> usize {
        self.flows.len()
    }

    pub fn ip_entry(&self, token: u32, pair: (Address, Address)) -> Option<&IpEntry> {
        self.flows.get(&token)?.pairs.get(&pair)
    }

    pub fn primary_path(&self, pair: (Address, Address)) -> Option<&Path> {
        self.primary_ips.get(&pair)
    }

    /// Path set for a pair, from the cache when fresh, otherwise from the
    /// topology manager.
    pub fn query_paths(
        &mut self,
        src: Address,
        dst: Address,
        mode: PathMode,
        now: Millis,
    ) -> Result<PathSet, PathError> {
        let key = (src, dst, mode);
        if let Some(e) = self.path_cache.get(&key) {
            if now.saturating_sub(e.inserted_at) <= PATH_CACHE_TTL_MS {
                self.metrics.cache_hits += 1;
                return Ok(e.set.clone());
            }
        }
        self.metrics.cache_misses += 1;
        self.metrics.tm_queries += 1;
        let set = self.tm.compute(src, dst, mode)?;
        self.path_cache.insert(
            key,
            CacheEntry {
                set: set.clone(),
                inserted_at: now,
            },
        );
        Ok(set)
    }

    /// Drops connection entries older than the flows TTL.
    pub fn expire_connections(&mut self, now: Millis) -> usize {
        let before = self.flows.len();
        self.flows.retain(|_, c| !c.expired(now));
        let evicted = before - self.flows.len();
        self.metrics.connections_expired += evicted as u64;
        evicted
    }

    /// Round-robin order for a new IpEntry of `pair`.
    pub fn primary_path_exclusion(&self, pair: (Address, Address), set: &PathSet) -> Vec<Path> {
        IpEntry::new(set.paths.clone(), self.primary_ips.get(&pair)).paths
    }

    /// Handles a packet redirected by a switch.
    pub fn handle_setup_packet(
        &mut self,
        packet: &SetupPacket,
        now: Millis,
    ) -> Result<Assignment, ControllerError> {
        if !(packet.syn && !packet.ack) {
            return Err(ControllerError::NotSetupPacket);
        }
        let option = packet.mptcp_option()?;
        self.metrics.packet_ins += 1;
        let pair = packet.tuple.address_pair();
        let result = match option {
            MptcpOption::MpCapable { .. } => self.on_capable(pair, now),
            MptcpOption::MpJoinSyn { token, .. } => self.on_join(token, pair, now),
            _ => {
                self.metrics.packet_ins -= 1;
                return Err(ControllerError::NotSetupPacket);
            }
        };
        match result {
            Ok((kind, path)) => {
                let rules = rule_batch(&path, packet.tuple);
                self.metrics.rules_issued += rules.len() as u64;
                Ok(Assignment { kind, path, rules })
            }
            Err(e) => {
                self.metrics.no_path += 1;
                Err(e.into())
            }
        }
    }

    fn on_capable(&mut self, pair: (Address, Address), now: Millis) -> Result<(SetupKind, Path), PathError> {
        let set = self.query_paths(pair.0, pair.1, PathMode::Shortest, now)?;
        let path = match self.config.assignment {
            AssignmentMode::Deterministic => set.paths[0].clone(),
            AssignmentMode::Random => set.paths[self.rng.random_range(0..set.len())].clone(),
        };
        if self.primary_ips.insert(pair, path.clone()).is_some() {
            self.metrics.primary_collisions += 1;
        }
        Ok((SetupKind::Capable, path))
    }

    fn on_join(&mut self, token: u32, pair: (Address, Address), now: Millis) -> Result<(SetupKind, Path), PathError> {
        if self.flows.get(&token).is_some_and(|c| c.expired(now)) {
            self.flows.remove(&token);
            self.metrics.connections_expired += 1;
        }
        let needs_entry = self
            .flows
            .get(&token)
            .is_none_or(|c| !c.pairs.contains_key(&pair));
        if needs_entry {
            let set = self.query_paths(pair.0, pair.1, self.config.paths, now)?;
            let entry = IpEntry::new(set.paths, self.primary_ips.get(&pair));
            if !self.flows.contains_key(&token) {
                self.metrics.connections_created += 1;
            }
            self.flows
                .entry(token)
                .or_insert_with(|| ConnectionEntry {
                    created_at: now,
                    pairs: BTreeMap::new(),
                })
                .pairs
                .insert(pair, entry);
        }
        let random = self.config.assignment == AssignmentMode::Random;
        let entry = self
            .flows
            .get_mut(&token)
            .and_then(|c| c.pairs.get_mut(&pair))
            .expect("entry created above");
        let path = if random {
            let i = self.rng.random_range(0..entry.paths.len());
            entry.assign_at(i).clone()
        } else {
            entry.assign_next().clone()
        };
        Ok((SetupKind::Join, path))
    }

    /// Text rendering of the flows and pathCache tables.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "flows {}", self.flows.len());
        for (token, c) in &self.flows {
            let _ = writeln!(s, "  token {token:08x} created_at {}", c.created_at);
            for ((a, b), e) in &c.pairs {
                let _ = writeln!(
                    s,
                    "    {a} -> {b} next {} counts {:?}",
                    e.next, e.counts
                );
            }
        }
        let _ = writeln!(s, "pathCache {}", self.path_cache.len());
        for ((a, b, mode), e) in &self.path_cache {
            let _ = writeln!(
                s,
                "  {a} -> {b} {mode} paths {} inserted_at {}",
                e.set.len(),
                e.inserted_at
            );
        }
        s
    }
}
