//! Datacenter topologies as capacity-annotated graphs.
//!
//! Node ids are laid out hosts-first: hosts occupy `0..n_hosts` and switches
//! `n_hosts..n_hosts + n_switches`. Links are stored in canonical
//! `(min, max)` order and sorted, so two topologies built from the same
//! parameters compare equal regardless of construction order.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::seed;

/// First address handed out by the builders (10.0.0.1).
pub const ADDRESS_BASE: u32 = 0x0A00_0001;

/// Normalized link capacity used by the builders.
pub const DEFAULT_CAPACITY: f64 = 1.0;

/// Maximum number of reseeded attempts at building a connected random core.
pub const MAX_CONNECTIVITY_ATTEMPTS: u32 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Host,
    Switch,
}

/// Opaque 32-bit interface address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub u32);

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0.to_be_bytes();
        write!(f, "{a}.{b}.{c}.{d}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub u32);

impl LinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A host network interface and the switch it is cabled to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interface {
    pub host: NodeId,
    pub address: Address,
    pub switch: NodeId,
}

/// Undirected link, endpoints stored with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub capacity: f64,
}

impl Link {
    pub fn other(&self, end: NodeId) -> NodeId {
        if end == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopologyKind {
    FatTree { k: u32 },
    Jellyfish { ports: u32 },
    DhJellyfish { ports: u32 },
    /// Hand-assembled graph; only the generic invariants are validated.
    Custom,
}

impl TopologyKind {
    pub fn name(&self) -> &'static str {
        match self {
            TopologyKind::FatTree { .. } => "fattree",
            TopologyKind::Jellyfish { .. } => "jellyfish",
            TopologyKind::DhJellyfish { .. } => "dhjellyfish",
            TopologyKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("port budget infeasible: {switches} switches x {ports} ports cannot hold {attachments} host attachments plus a connected core")]
    InfeasiblePorts {
        switches: u32,
        ports: u32,
        attachments: u32,
    },
    #[error("random core still disconnected after {attempts} attempts")]
    Disconnected { attempts: u32 },
    #[error("could not place second interfaces under the per-switch bound")]
    Unplaceable,
    #[error("node {0} out of range")]
    UnknownNode(NodeId),
    #[error("node {0} has the wrong kind for its position")]
    WrongKind(NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate link {0}-{1}")]
    DuplicateLink(NodeId, NodeId),
    #[error("duplicate address {0}")]
    DuplicateAddress(Address),
    #[error("link capacity must be positive and finite")]
    BadCapacity,
    #[error("no link between {0} and {1}")]
    NoSuchLink(NodeId, NodeId),
}

/// A kind-specific or generic invariant that a topology fails.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    HostCount { expected: u32, actual: u32 },
    SwitchCount { expected: u32, actual: u32 },
    SwitchDegree { switch: NodeId, expected: u32, actual: u32 },
    EdgeHosts { switch: NodeId, expected: u32, actual: u32 },
    InterfaceCount { host: NodeId, expected: u32, actual: u32 },
    SharedSwitch { host: NodeId, switch: NodeId },
    AttachmentBound { switch: NodeId, round: u32, bound: u32, actual: u32 },
    PortOverflow { switch: NodeId, ports: u32, used: u32 },
    /// Two non-adjacent switches both have free ports, so the core is not saturated.
    UnusedPorts { a: NodeId, b: NodeId },
    Disconnected,
    NonUniformCapacity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    kind: TopologyKind,
    seed: u64,
    n_hosts: u32,
    n_switches: u32,
    capacity: f64,
    links: Vec<Link>,
    interfaces: Vec<Interface>,
    adjacency: Vec<Vec<(NodeId, LinkId)>>,
    host_interfaces: Vec<Vec<usize>>,
    link_index: BTreeMap<(NodeId, NodeId), LinkId>,
    by_address: BTreeMap<Address, usize>,
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Topology {
    /// Assembles a topology from host attachments and switch-switch links,
    /// handing out addresses sequentially from [`ADDRESS_BASE`] in
    /// attachment order.
    pub fn assemble(
        kind: TopologyKind,
        seed: u64,
        n_hosts: u32,
        n_switches: u32,
        attachments: &[(NodeId, NodeId)],
        core: &[(NodeId, NodeId)],
        capacity: f64,
    ) -> Result<Topology, TopologyError> {
        let interfaces = attachments
            .iter()
            .enumerate()
            .map(|(i, &(host, switch))| Interface {
                host,
                switch,
                address: Address(ADDRESS_BASE.wrapping_add(i as u32)),
            })
            .collect::<Vec<_>>();
        Self::from_parts(kind, seed, n_hosts, n_switches, interfaces, core, capacity)
    }

    /// Builds a topology from explicit interfaces. Rejects structurally
    /// unrepresentable input; kind-specific invariants are left to
    /// [`Topology::validate`].
    pub fn from_parts(
        kind: TopologyKind,
        seed: u64,
        n_hosts: u32,
        n_switches: u32,
        mut interfaces: Vec<Interface>,
        core: &[(NodeId, NodeId)],
        capacity: f64,
    ) -> Result<Topology, TopologyError> {
        if !(capacity.is_finite() && capacity > 0.0) {
            return Err(TopologyError::BadCapacity);
        }
        let n_nodes = n_hosts + n_switches;
        let kind_of = |n: NodeId| -> Result<NodeKind, TopologyError> {
            if n.0 >= n_nodes {
                Err(TopologyError::UnknownNode(n))
            } else if n.0 < n_hosts {
                Ok(NodeKind::Host)
            } else {
                Ok(NodeKind::Switch)
            }
        };

        interfaces.sort_by_key(|i| i.address);
        let mut pairs = BTreeSet::new();
        let mut by_address = BTreeMap::new();
        for (idx, iface) in interfaces.iter().enumerate() {
            if kind_of(iface.host)? != NodeKind::Host {
                return Err(TopologyError::WrongKind(iface.host));
            }
            if kind_of(iface.switch)? != NodeKind::Switch {
                return Err(TopologyError::WrongKind(iface.switch));
            }
            if by_address.insert(iface.address, idx).is_some() {
                return Err(TopologyError::DuplicateAddress(iface.address));
            }
            if !pairs.insert(ordered(iface.host, iface.switch)) {
                return Err(TopologyError::DuplicateLink(iface.host, iface.switch));
            }
        }
        for &(a, b) in core {
            if kind_of(a)? != NodeKind::Switch {
                return Err(TopologyError::WrongKind(a));
            }
            if kind_of(b)? != NodeKind::Switch {
                return Err(TopologyError::WrongKind(b));
            }
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            if !pairs.insert(ordered(a, b)) {
                return Err(TopologyError::DuplicateLink(a, b));
            }
        }

        let links: Vec<Link> = pairs
            .iter()
            .map(|&(a, b)| Link { a, b, capacity })
            .collect();
        let mut adjacency = vec![Vec::new(); n_nodes as usize];
        let mut link_index = BTreeMap::new();
        for (i, link) in links.iter().enumerate() {
            let id = LinkId(i as u32);
            adjacency[link.a.index()].push((link.b, id));
            adjacency[link.b.index()].push((link.a, id));
            link_index.insert((link.a, link.b), id);
        }
        for list in &mut adjacency {
            list.sort();
        }
        let mut host_interfaces = vec![Vec::new(); n_hosts as usize];
        for (idx, iface) in interfaces.iter().enumerate() {
            host_interfaces[iface.host.index()].push(idx);
        }

        Ok(Topology {
            kind,
            seed,
            n_hosts,
            n_switches,
            capacity,
            links,
            interfaces,
            adjacency,
            host_interfaces,
            link_index,
            by_address,
        })
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_hosts(&self) -> u32 {
        self.n_hosts
    }

    pub fn n_switches(&self) -> u32 {
        self.n_switches
    }

    pub fn n_nodes(&self) -> u32 {
        self.n_hosts + self.n_switches
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn node_kind(&self, node: NodeId) -> Option<NodeKind> {
        if node.0 < self.n_hosts {
            Some(NodeKind::Host)
        } else if node.0 < self.n_nodes() {
            Some(NodeKind::Switch)
        } else {
            None
        }
    }

    pub fn is_host(&self, node: NodeId) -> bool {
        node.0 < self.n_hosts
    }

    pub fn is_switch(&self, node: NodeId) -> bool {
        node.0 >= self.n_hosts && node.0 < self.n_nodes()
    }

    pub fn hosts(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n_hosts).map(NodeId)
    }

    pub fn switches(&self) -> impl Iterator<Item = NodeId> + '_ {
        (self.n_hosts..self.n_nodes()).map(NodeId)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.index()]
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        self.link_index.get(&ordered(a, b)).copied()
    }

    /// Switch-switch links in canonical order.
    pub fn core_links(&self) -> impl Iterator<Item = &Link> + '_ {
        self.links
            .iter()
            .filter(move |l| self.is_switch(l.a) && self.is_switch(l.b))
    }

    /// Neighbors of `node`, sorted by node id.
    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, LinkId)] {
        &self.adjacency[node.index()]
    }

    pub fn degree(&self, node: NodeId) -> u32 {
        self.adjacency[node.index()].len() as u32
    }

    /// All interfaces, sorted by address.
    pub fn interfaces(&self) -> &[Interface] {
        &self.interfaces
    }

    pub fn interface(&self, address: Address) -> Option<&Interface> {
        self.by_address.get(&address).map(|&i| &self.interfaces[i])
    }

    /// Interfaces of `host`, sorted by address.
    pub fn interfaces_of(&self, host: NodeId) -> impl Iterator<Item = &Interface> + '_ {
        self.host_interfaces
            .get(host.index())
            .map(|v| v.as_slice())
            .unwrap_or(&[])
            .iter()
            .map(move |&i| &self.interfaces[i])
    }

    /// Number of hosts cabled to `switch`.
    pub fn hosts_on(&self, switch: NodeId) -> u32 {
        self.neighbors(switch)
            .iter()
            .filter(|(n, _)| self.is_host(*n))
            .count() as u32
    }

    /// Best-case throughput of one connection: every interface of a host at
    /// full rate.
    pub fn access_capacity(&self) -> f64 {
        let per_host = self
            .host_interfaces
            .iter()
            .map(|v| v.len())
            .max()
            .unwrap_or(0);
        per_host as f64 * self.capacity
    }

    /// FatTree pod of a host, if this is a FatTree.
    pub fn fattree_pod(&self, host: NodeId) -> Option<u32> {
        match self.kind {
            TopologyKind::FatTree { k } if self.is_host(host) => Some(host.0 / (k * k / 4)),
            _ => None,
        }
    }

    /// Returns a copy without the link between `a` and `b`.
    pub fn without_link(&self, a: NodeId, b: NodeId) -> Result<Topology, TopologyError> {
        let key = ordered(a, b);
        if !self.link_index.contains_key(&key) {
            return Err(TopologyError::NoSuchLink(a, b));
        }
        let interfaces = self
            .interfaces
            .iter()
            .filter(|i| ordered(i.host, i.switch) != key)
            .copied()
            .collect();
        let core = self
            .core_links()
            .map(|l| (l.a, l.b))
            .filter(|&p| p != key)
            .collect::<Vec<_>>();
        Topology::from_parts(
            self.kind,
            self.seed,
            self.n_hosts,
            self.n_switches,
            interfaces,
            &core,
            self.capacity,
        )
    }

    /// Returns a copy where the link between `a` and `b` has `capacity`.
    pub fn with_link_capacity(&self, a: NodeId, b: NodeId, capacity: f64) -> Result<Topology, TopologyError> {
        if !(capacity.is_finite() && capacity > 0.0) {
            return Err(TopologyError::BadCapacity);
        }
        let id = self
            .link_between(a, b)
            .ok_or(TopologyError::NoSuchLink(a, b))?;
        let mut out = self.clone();
        out.links[id.index()].capacity = capacity;
        Ok(out)
    }

    /// True when every switch can reach every other switch over switch-switch links.
    pub fn core_connected(&self) -> bool {
        let switches: Vec<NodeId> = self.switches().collect();
        let Some(&start) = switches.first() else {
            return true;
        };
        let mut seen = vec![false; self.n_nodes() as usize];
        let mut queue = VecDeque::from([start]);
        seen[start.index()] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in self.neighbors(u) {
                if self.is_switch(v) && !seen[v.index()] {
                    seen[v.index()] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == switches.len()
    }

    /// Lists every invariant violation; empty iff the topology is valid for its kind.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.links.iter().any(|l| l.capacity != self.capacity) {
            out.push(Violation::NonUniformCapacity);
        }
        match self.kind {
            TopologyKind::FatTree { k } => self.validate_fattree(k, &mut out),
            TopologyKind::Jellyfish { ports } => self.validate_jellyfish(ports, 1, &mut out),
            TopologyKind::DhJellyfish { ports } => self.validate_jellyfish(ports, 2, &mut out),
            TopologyKind::Custom => {
                for host in self.hosts() {
                    if self.host_interfaces[host.index()].is_empty() {
                        out.push(Violation::InterfaceCount {
                            host,
                            expected: 1,
                            actual: 0,
                        });
                    }
                }
            }
        }
        if !self.core_connected() {
            out.push(Violation::Disconnected);
        }
        out
    }

    fn validate_fattree(&self, k: u32, out: &mut Vec<Violation>) {
        let hosts = k * k * k / 4;
        let switches = 5 * k * k / 4;
        if self.n_hosts != hosts {
            out.push(Violation::HostCount {
                expected: hosts,
                actual: self.n_hosts,
            });
        }
        if self.n_switches != switches {
            out.push(Violation::SwitchCount {
                expected: switches,
                actual: self.n_switches,
            });
            return;
        }
        for host in self.hosts() {
            let n = self.host_interfaces[host.index()].len() as u32;
            if n != 1 {
                out.push(Violation::InterfaceCount {
                    host,
                    expected: 1,
                    actual: n,
                });
            }
        }
        let layout = FatTreeLayout::new(k, self.n_hosts);
        for switch in self.switches() {
            let degree = self.degree(switch);
            if degree != k {
                out.push(Violation::SwitchDegree {
                    switch,
                    expected: k,
                    actual: degree,
                });
            }
            let expected = if layout.is_edge(switch) { k / 2 } else { 0 };
            let actual = self.hosts_on(switch);
            if actual != expected {
                out.push(Violation::EdgeHosts {
                    switch,
                    expected,
                    actual,
                });
            }
        }
    }

    fn validate_jellyfish(&self, ports: u32, per_host: u32, out: &mut Vec<Violation>) {
        let bound = attachment_bound(self.n_hosts, self.n_switches);
        // Per-round attachment counts: a host's lower address is its first round.
        let mut rounds = vec![[0u32; 2]; self.n_nodes() as usize];
        for host in self.hosts() {
            let ifaces: Vec<&Interface> = self.interfaces_of(host).collect();
            if ifaces.len() as u32 != per_host {
                out.push(Violation::InterfaceCount {
                    host,
                    expected: per_host,
                    actual: ifaces.len() as u32,
                });
            }
            if ifaces.len() == 2 && ifaces[0].switch == ifaces[1].switch {
                out.push(Violation::SharedSwitch {
                    host,
                    switch: ifaces[0].switch,
                });
            }
            for (round, iface) in ifaces.iter().take(2).enumerate() {
                rounds[iface.switch.index()][round] += 1;
            }
        }
        let mut free = Vec::new();
        for switch in self.switches() {
            for (round, &actual) in rounds[switch.index()].iter().enumerate() {
                if actual > bound {
                    out.push(Violation::AttachmentBound {
                        switch,
                        round: round as u32 + 1,
                        bound,
                        actual,
                    });
                }
            }
            let used = self.degree(switch);
            if used > ports {
                out.push(Violation::PortOverflow {
                    switch,
                    ports,
                    used,
                });
            } else if used < ports {
                free.push(switch);
            }
        }
        'outer: for (i, &a) in free.iter().enumerate() {
            for &b in &free[i + 1..] {
                if self.link_between(a, b).is_none() {
                    out.push(Violation::UnusedPorts { a, b });
                    break 'outer;
                }
            }
        }
    }
}

/// `ceil(hosts / switches)`.
pub fn attachment_bound(n_hosts: u32, n_switches: u32) -> u32 {
    if n_switches == 0 {
        0
    } else {
        n_hosts.div_ceil(n_switches)
    }
}

/// Switch numbering of a k-ary FatTree: core switches first, then for each
/// pod its k/2 aggregation switches followed by its k/2 edge switches.
struct FatTreeLayout {
    half: u32,
    first_switch: u32,
}

impl FatTreeLayout {
    fn new(k: u32, n_hosts: u32) -> Self {
        FatTreeLayout {
            half: k / 2,
            first_switch: n_hosts,
        }
    }

    fn core(&self, i: u32) -> NodeId {
        NodeId(self.first_switch + i)
    }

    fn agg(&self, pod: u32, i: u32) -> NodeId {
        let h = self.half;
        NodeId(self.first_switch + h * h + pod * 2 * h + i)
    }

    fn edge(&self, pod: u32, i: u32) -> NodeId {
        let h = self.half;
        NodeId(self.first_switch + h * h + pod * 2 * h + h + i)
    }

    fn is_edge(&self, switch: NodeId) -> bool {
        let h = self.half;
        let Some(rel) = switch.0.checked_sub(self.first_switch + h * h) else {
            return false;
        };
        rel % (2 * h) >= h
    }
}

/// Builds a k-ary FatTree: k pods of k/2 edge and k/2 aggregation switches,
/// (k/2)^2 core switches and k^3/4 hosts.
pub fn build_fattree(k: u32) -> Result<Topology, TopologyError> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(TopologyError::InvalidParameter("fattree k must be even and >= 2"));
    }
    let half = k / 2;
    let n_hosts = k * k * k / 4;
    let n_switches = 5 * k * k / 4;
    let layout = FatTreeLayout::new(k, n_hosts);

    let mut attachments = Vec::with_capacity(n_hosts as usize);
    let mut core = Vec::new();
    for pod in 0..k {
        for e in 0..half {
            let edge = layout.edge(pod, e);
            for i in 0..half {
                let host = NodeId(pod * half * half + e * half + i);
                attachments.push((host, edge));
            }
            for a in 0..half {
                core.push((layout.agg(pod, a), edge));
            }
        }
        for a in 0..half {
            for c in 0..half {
                core.push((layout.core(a * half + c), layout.agg(pod, a)));
            }
        }
    }
    Topology::assemble(
        TopologyKind::FatTree { k },
        0,
        n_hosts,
        n_switches,
        &attachments,
        &core,
        DEFAULT_CAPACITY,
    )
}

fn check_random_params(
    n_hosts: u32,
    n_switches: u32,
    ports: u32,
    interfaces_per_host: u32,
) -> Result<(), TopologyError> {
    if n_switches < 1 {
        return Err(TopologyError::InvalidParameter("need at least one switch"));
    }
    if n_hosts < 1 {
        return Err(TopologyError::InvalidParameter("need at least one host"));
    }
    if interfaces_per_host == 2 && n_switches < 2 {
        return Err(TopologyError::InvalidParameter(
            "dual-homed hosts need at least two switches",
        ));
    }
    let bound = attachment_bound(n_hosts, n_switches);
    let attachments = n_hosts * interfaces_per_host;
    let min_core_ports = 2 * (n_switches - 1);
    let budget = n_switches as u64 * ports as u64;
    if bound * interfaces_per_host > ports
        || budget < attachments as u64 + min_core_ports as u64
    {
        return Err(TopologyError::InfeasiblePorts {
            switches: n_switches,
            ports,
            attachments,
        });
    }
    Ok(())
}

/// Builds a Jellyfish: hosts spread round-robin over switches (at most
/// `ceil(N/S)` each), remaining ports paired at random into the core.
pub fn build_jellyfish(
    n_hosts: u32,
    n_switches: u32,
    ports_per_switch: u32,
    seed: u64,
) -> Result<Topology, TopologyError> {
    check_random_params(n_hosts, n_switches, ports_per_switch, 1)?;
    let attachments: Vec<(NodeId, NodeId)> = (0..n_hosts)
        .map(|h| (NodeId(h), NodeId(n_hosts + h % n_switches)))
        .collect();
    build_random_core(
        TopologyKind::Jellyfish {
            ports: ports_per_switch,
        },
        n_hosts,
        n_switches,
        ports_per_switch,
        seed,
        |_| Ok(attachments.clone()),
    )
}

/// Builds a dual-homed Jellyfish: the Jellyfish first-interface layout plus
/// a second interface per host on a random other switch, at most
/// `ceil(N/S)` second interfaces per switch.
pub fn build_dh_jellyfish(
    n_hosts: u32,
    n_switches: u32,
    ports_per_switch: u32,
    seed: u64,
) -> Result<Topology, TopologyError> {
    check_random_params(n_hosts, n_switches, ports_per_switch, 2)?;
    build_random_core(
        TopologyKind::DhJellyfish {
            ports: ports_per_switch,
        },
        n_hosts,
        n_switches,
        ports_per_switch,
        seed,
        |rng| dual_home(n_hosts, n_switches, rng),
    )
}

fn dual_home(
    n_hosts: u32,
    n_switches: u32,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<(NodeId, NodeId)>, TopologyError> {
    let bound = attachment_bound(n_hosts, n_switches);
    let first: Vec<u32> = (0..n_hosts).map(|h| h % n_switches).collect();
    let mut second = vec![u32::MAX; n_hosts as usize];
    let mut load = vec![0u32; n_switches as usize];

    for h in 0..n_hosts as usize {
        let eligible: Vec<u32> = (0..n_switches)
            .filter(|&s| s != first[h] && load[s as usize] < bound)
            .collect();
        if let Some(&s) = eligible.choose(rng) {
            second[h] = s;
            load[s as usize] += 1;
            continue;
        }
        // Only the host's own first switch has room left: swap with an
        // earlier host whose placement can absorb it.
        let Some(spare) = (0..n_switches).find(|&s| load[s as usize] < bound) else {
            return Err(TopologyError::Unplaceable);
        };
        let donors: Vec<usize> = (0..h)
            .filter(|&j| second[j] != first[h] && first[j] != spare)
            .collect();
        let Some(&j) = donors.choose(rng) else {
            return Err(TopologyError::Unplaceable);
        };
        second[h] = second[j];
        second[j] = spare;
        load[spare as usize] += 1;
    }

    let mut attachments: Vec<(NodeId, NodeId)> = (0..n_hosts)
        .map(|h| (NodeId(h), NodeId(n_hosts + first[h as usize])))
        .collect();
    attachments.extend((0..n_hosts).map(|h| (NodeId(h), NodeId(n_hosts + second[h as usize]))));
    Ok(attachments)
}

fn build_random_core<F>(
    kind: TopologyKind,
    n_hosts: u32,
    n_switches: u32,
    ports: u32,
    seed: u64,
    mut attach: F,
) -> Result<Topology, TopologyError>
where
    F: FnMut(&mut rand_chacha::ChaCha8Rng) -> Result<Vec<(NodeId, NodeId)>, TopologyError>,
{
    let mut last_err = TopologyError::Disconnected {
        attempts: MAX_CONNECTIVITY_ATTEMPTS,
    };
    for attempt in 0..MAX_CONNECTIVITY_ATTEMPTS {
        let sub = if attempt == 0 {
            seed
        } else {
            seed::derive(seed, attempt as u64)
        };
        let mut rng = seed::rng(sub);
        let attachments = match attach(&mut rng) {
            Ok(a) => a,
            Err(e) => {
                last_err = e;
                continue;
            }
        };
        let mut free = vec![ports; n_switches as usize];
        for &(_, s) in &attachments {
            free[(s.0 - n_hosts) as usize] -= 1;
        }
        let pairs = random_pairing(&mut free, &mut rng);
        let core: Vec<(NodeId, NodeId)> = pairs
            .into_iter()
            .map(|(a, b)| (NodeId(n_hosts + a as u32), NodeId(n_hosts + b as u32)))
            .collect();
        let topo = Topology::assemble(
            kind,
            seed,
            n_hosts,
            n_switches,
            &attachments,
            &core,
            DEFAULT_CAPACITY,
        )?;
        if topo.core_connected() {
            return Ok(topo);
        }
        last_err = TopologyError::Disconnected {
            attempts: MAX_CONNECTIVITY_ATTEMPTS,
        };
    }
    Err(last_err)
}

const REJECTION_TRIES: u32 = 32;

/// Pairs free switch ports uniformly at random, skipping self-pairs and
/// parallel links. When no pair can be added but some switch still has two
/// or more free ports, an existing link (x, y) is split into (s, x), (s, y).
fn random_pairing(free: &mut [u32], rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let n = free.len();
    let mut adjacent = vec![false; n * n];
    let mut links: Vec<(usize, usize)> = Vec::new();
    let link = |a: usize, b: usize, adjacent: &mut Vec<bool>, links: &mut Vec<(usize, usize)>| {
        adjacent[a * n + b] = true;
        adjacent[b * n + a] = true;
        links.push((a.min(b), a.max(b)));
    };

    let mut rewires = 0usize;
    let rewire_limit: usize = free.iter().map(|&f| f as usize).sum();
    loop {
        // Pairing phase.
        loop {
            let total: u32 = free.iter().sum();
            if total < 2 {
                break;
            }
            let port_owner = |mut p: u32, free: &[u32]| -> usize {
                for (s, &f) in free.iter().enumerate() {
                    if p < f {
                        return s;
                    }
                    p -= f;
                }
                unreachable!("port index within total")
            };
            let mut placed = None;
            for _ in 0..REJECTION_TRIES {
                let a = port_owner(rng.random_range(0..total), free);
                let b = port_owner(rng.random_range(0..total), free);
                if a != b && !adjacent[a * n + b] {
                    placed = Some((a, b));
                    break;
                }
            }
            if placed.is_none() {
                let open: Vec<usize> = (0..n).filter(|&s| free[s] > 0).collect();
                let mut feasible = Vec::new();
                for (i, &a) in open.iter().enumerate() {
                    for &b in &open[i + 1..] {
                        if !adjacent[a * n + b] {
                            feasible.push((a, b));
                        }
                    }
                }
                placed = feasible.choose(rng).copied();
            }
            let Some((a, b)) = placed else { break };
            link(a, b, &mut adjacent, &mut links);
            free[a] -= 1;
            free[b] -= 1;
        }

        // Rewiring phase.
        if rewires >= rewire_limit {
            break;
        }
        let Some(s) = (0..n).find(|&s| free[s] >= 2) else {
            break;
        };
        let candidates: Vec<usize> = links
            .iter()
            .enumerate()
            .filter(|(_, &(x, y))| x != s && y != s && !adjacent[s * n + x] && !adjacent[s * n + y])
            .map(|(i, _)| i)
            .collect();
        let Some(&victim) = candidates.choose(rng) else {
            break;
        };
        let (x, y) = links.swap_remove(victim);
        adjacent[x * n + y] = false;
        adjacent[y * n + x] = false;
        link(s, x, &mut adjacent, &mut links);
        link(s, y, &mut adjacent, &mut links);
        free[s] -= 2;
        rewires += 1;
    }
    links
}
