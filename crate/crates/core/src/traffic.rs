//! Traffic matrices and their expansion into per-subflow 4-tuples.

use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::seed;
use crate::topology::{Address, NodeId, Topology};
use crate::wire::FourTuple;

pub const SERVICE_PORT: u16 = 5001;
pub const DEFAULT_PORT_BASE: u16 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pattern {
    /// Permutation: every host sends once and receives once.
    Permutation,
    /// Unconstrained: independent uniform pairs.
    Unconstrained,
}

impl Pattern {
    pub fn short_name(self) -> &'static str {
        match self {
            Pattern::Permutation => "PT",
            Pattern::Unconstrained => "UT",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrafficError {
    #[error("at least two hosts are required, got {0}")]
    TooFewHosts(u32),
    #[error("subflow count must be at least 1")]
    InvalidSubflowCount,
    #[error("host {0:?} does not exist")]
    UnknownHost(NodeId),
    #[error("source ports exhausted")]
    PortsExhausted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrafficMatrix {
    pub pattern: Pattern,
    pub seed: u64,
    pub pairs: Vec<(NodeId, NodeId)>,
}

impl TrafficMatrix {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn hosts(topology: &Topology) -> Result<u32, TrafficError> {
    match topology.n_hosts() {
        n if n < 2 => Err(TrafficError::TooFewHosts(n)),
        n => Ok(n),
    }
}

/// Random derangement of the hosts: pairs `(i, pi(i))` with `pi(i) != i`.
pub fn gen_permutation(topology: &Topology, seed: u64) -> Result<TrafficMatrix, TrafficError> {
    let n = hosts(topology)?;
    let mut rng = seed::rng(seed);
    let mut perm: Vec<u32> = (0..n).collect();
    loop {
        perm.shuffle(&mut rng);
        if perm.iter().enumerate().all(|(i, &p)| i as u32 != p) {
            break;
        }
    }
    Ok(TrafficMatrix {
        pattern: Pattern::Permutation,
        seed,
        pairs: perm
            .iter()
            .enumerate()
            .map(|(i, &p)| (NodeId(i as u32), NodeId(p)))
            .collect(),
    })
}

/// One uniform pair per host, with `src != dst`.
pub fn gen_unconstrained(topology: &Topology, seed: u64) -> Result<TrafficMatrix, TrafficError> {
    let n = hosts(topology)?;
    let mut rng = seed::rng(seed);
    let pairs = (0..n)
        .map(|_| {
            let s = rng.random_range(0..n);
            let mut d = rng.random_range(0..n - 1);
            if d >= s {
                d += 1;
            }
            (NodeId(s), NodeId(d))
        })
        .collect();
    Ok(TrafficMatrix {
        pattern: Pattern::Unconstrained,
        seed,
        pairs,
    })
}

pub fn generate(pattern: Pattern, topology: &Topology, seed: u64) -> Result<TrafficMatrix, TrafficError> {
    match pattern {
        Pattern::Permutation => gen_permutation(topology, seed),
        Pattern::Unconstrained => gen_unconstrained(topology, seed),
    }
}

/// How many subflows a connection opens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubflowCount {
    /// `s` subflows in total, spread round-robin over the address pairs.
    Total(u32),
    /// `n` subflows on every address pair.
    PerPair(u32),
}

impl SubflowCount {
    pub fn value(self) -> u32 {
        match self {
            SubflowCount::Total(n) | SubflowCount::PerPair(n) => n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubflowSpec {
    pub tuple: FourTuple,
    /// The MP_CAPABLE subflow; all others are MP_JOINs.
    pub initial: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConnectionSpec {
    pub id: u32,
    pub src_host: NodeId,
    pub dst_host: NodeId,
    pub subflows: Vec<SubflowSpec>,
    pub subflows_per_ip_pair: u32,
}

/// Address pairs of two hosts (fullmesh), sorted.
pub fn address_pairs(topology: &Topology, src: NodeId, dst: NodeId) -> Vec<(Address, Address)> {
    let mut out = Vec::new();
    for a in topology.interfaces_of(src) {
        for b in topology.interfaces_of(dst) {
            out.push((a.address, b.address));
        }
    }
    out.sort();
    out
}

/// Turns each matrix pair into a connection. Subflow `i` uses address pair
/// `i mod pairs`; the first one is the initial subflow. Source ports are
/// handed out sequentially from `port_base`, so every 4-tuple of the run is
/// distinct.
pub fn expand_connections(
    matrix: &TrafficMatrix,
    topology: &Topology,
    count: SubflowCount,
    port_base: u16,
) -> Result<Vec<ConnectionSpec>, TrafficError> {
    if count.value() == 0 {
        return Err(TrafficError::InvalidSubflowCount);
    }
    let mut port = port_base;
    let mut out = Vec::with_capacity(matrix.pairs.len());
    for (id, &(src, dst)) in matrix.pairs.iter().enumerate() {
        for h in [src, dst] {
            if !topology.is_host(h) {
                return Err(TrafficError::UnknownHost(h));
            }
        }
        let pairs = address_pairs(topology, src, dst);
        let (total, per_pair) = match count {
            SubflowCount::Total(s) => (s as usize, s.div_ceil(pairs.len() as u32)),
            SubflowCount::PerPair(n) => (n as usize * pairs.len(), n),
        };
        let mut subflows = Vec::with_capacity(total);
        for i in 0..total {
            let (a, b) = pairs[i % pairs.len()];
            subflows.push(SubflowSpec {
                tuple: FourTuple {
                    src_addr: a,
                    dst_addr: b,
                    src_port: port,
                    dst_port: SERVICE_PORT,
                },
                initial: i == 0,
            });
            port = port.checked_add(1).ok_or(TrafficError::PortsExhausted)?;
        }
        out.push(ConnectionSpec {
            id: id as u32,
            src_host: src,
            dst_host: dst,
            subflows,
            subflows_per_ip_pair: per_pair,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_dh_jellyfish, build_fattree, build_jellyfish};
    use alloc::collections::BTreeSet;

    #[test]
    fn permutation_is_derangement() {
        let t = build_jellyfish(120, 60, 12, 1).unwrap();
        let m = gen_permutation(&t, 9).unwrap();
        assert_eq!(m.len(), 120);
        let srcs: BTreeSet<_> = m.pairs.iter().map(|p| p.0).collect();
        let dsts: BTreeSet<_> = m.pairs.iter().map(|p| p.1).collect();
        assert_eq!(srcs.len(), 120);
        assert_eq!(dsts.len(), 120);
        assert!(m.pairs.iter().all(|(a, b)| a != b));
        assert_eq!(m, gen_permutation(&t, 9).unwrap());
    }

    #[test]
    fn two_hosts() {
        let t = build_fattree(2).unwrap();
        assert_eq!(t.n_hosts(), 2);
        let m = gen_permutation(&t, 0).unwrap();
        assert_eq!(m.pairs, [(NodeId(0), NodeId(1)), (NodeId(1), NodeId(0))]);
        for seed in 0..20 {
            let u = gen_unconstrained(&t, seed).unwrap();
            assert!(u.pairs.iter().all(|&p| p == (NodeId(0), NodeId(1)) || p == (NodeId(1), NodeId(0))));
        }
    }

    #[test]
    fn unconstrained_repeats() {
        let t = build_jellyfish(120, 60, 12, 1).unwrap();
        for seed in 0..10 {
            let m = gen_unconstrained(&t, seed).unwrap();
            assert_eq!(m.len(), 120);
            assert!(m.pairs.iter().all(|(a, b)| a != b));
            let srcs: BTreeSet<_> = m.pairs.iter().map(|p| p.0).collect();
            assert!(srcs.len() < 120);
            assert_eq!(m, gen_unconstrained(&t, seed).unwrap());
        }
    }

    #[test]
    fn single_homed_total() {
        let t = build_fattree(4).unwrap();
        let m = gen_permutation(&t, 2).unwrap();
        let c = expand_connections(&m, &t, SubflowCount::Total(4), 100).unwrap();
        assert_eq!(c[0].subflows.len(), 4);
        let pairs: BTreeSet<_> = c[0].subflows.iter().map(|s| s.tuple.address_pair()).collect();
        assert_eq!(pairs.len(), 1);
        assert!(c[0].subflows[0].initial);
        assert!(c[0].subflows[1..].iter().all(|s| !s.initial));
        let tuples: BTreeSet<_> = c.iter().flat_map(|c| c.subflows.iter().map(|s| s.tuple)).collect();
        assert_eq!(tuples.len(), 16 * 4);
    }

    #[test]
    fn dual_homed_per_pair() {
        let t = build_dh_jellyfish(120, 60, 12, 4).unwrap();
        let m = gen_unconstrained(&t, 1).unwrap();
        for (n, total) in [(1, 4), (2, 8)] {
            let c = expand_connections(&m, &t, SubflowCount::PerPair(n), 100).unwrap();
            for conn in &c {
                assert_eq!(conn.subflows.len(), total);
                let pairs = address_pairs(&t, conn.src_host, conn.dst_host);
                assert_eq!(conn.subflows[0].tuple.address_pair(), pairs[0]);
                for p in &pairs {
                    let k = conn.subflows.iter().filter(|s| s.tuple.address_pair() == *p).count();
                    assert_eq!(k, n as usize);
                }
            }
        }
    }

    #[test]
    fn zero_subflows_rejected() {
        let t = build_fattree(4).unwrap();
        let m = gen_permutation(&t, 2).unwrap();
        assert_eq!(
            expand_connections(&m, &t, SubflowCount::Total(0), 1),
            Err(TrafficError::InvalidSubflowCount)
        );
        assert_eq!(
            expand_connections(&m, &t, SubflowCount::PerPair(0), 1),
            Err(TrafficError::InvalidSubflowCount)
        );
        assert_eq!(
            expand_connections(&m, &t, SubflowCount::Total(5000), u16::MAX - 10),
            Err(TrafficError::PortsExhausted)
        );
    }
}
