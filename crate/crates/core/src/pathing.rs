//! Topology manager: bounded DFS path enumeration between two interfaces
//! and the shortest / k-shortest / k-edge-disjoint path-set filters.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;

use crate::seed;
use crate::topology::{Address, LinkId, NodeId, Topology};

/// Extra links allowed above the shortest path when enumerating candidates.
pub const DEFAULT_HOP_SLACK: u32 = 2;

/// A simple path from a source host through switches to a destination host.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Path {
    nodes: Vec<NodeId>,
    links: Vec<LinkId>,
}

impl Path {
    /// Builds a path from a node sequence, checking every hop is a link and
    /// no node repeats.
    pub fn from_nodes(topology: &Topology, nodes: Vec<NodeId>) -> Option<Path> {
        if nodes.len() < 2 {
            return None;
        }
        let mut seen = BTreeSet::new();
        if !nodes.iter().all(|n| seen.insert(*n)) {
            return None;
        }
        let links = nodes
            .windows(2)
            .map(|w| topology.link_between(w[0], w[1]))
            .collect::<Option<Vec<_>>>()?;
        Some(Path { nodes, links })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkId] {
        &self.links
    }

    pub fn hop_count(&self) -> u32 {
        self.links.len() as u32
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn destination(&self) -> NodeId {
        self.nodes[self.nodes.len() - 1]
    }

    /// Interior nodes (the switches for a host-to-host path).
    pub fn switches(&self) -> &[NodeId] {
        &self.nodes[1..self.nodes.len() - 1]
    }

    /// Links that do not touch an endpoint host. Disjointness is judged on
    /// these: a single-homed host's access link is shared by every path.
    pub fn core_links(&self) -> &[LinkId] {
        let n = self.links.len();
        if n <= 2 {
            &[]
        } else {
            &self.links[1..n - 1]
        }
    }

    pub fn shares_core_link(&self, other: &Path) -> bool {
        self.core_links()
            .iter()
            .any(|l| other.core_links().contains(l))
    }
}

impl PartialOrd for Path {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Path {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.nodes.cmp(&other.nodes)
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PathMode {
    Shortest,
    KShortest(u32),
    EdgeDisjoint(u32),
}

impl fmt::Display for PathMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathMode::Shortest => f.write_str("shortest"),
            PathMode::KShortest(k) => write!(f, "kshortest:k={k}"),
            PathMode::EdgeDisjoint(k) => write!(f, "disjoint:k={k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("unknown address {0}")]
    UnknownAddress(Address),
    #[error("no path between {src} and {dst}")]
    NoPath { src: Address, dst: Address },
    #[error("no candidate paths")]
    Empty,
    #[error("both addresses belong to the same host")]
    SameHost,
    #[error("k must be at least 1")]
    InvalidK,
}

/// Ordered paths for one address pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathSet {
    pub src: Address,
    pub dst: Address,
    pub mode: PathMode,
    pub paths: Vec<Path>,
}

impl PathSet {
    /// Applies `mode` to candidates already in (hop count, tie) order.
    pub fn select(
        src: Address,
        dst: Address,
        mode: PathMode,
        candidates: &[Path],
    ) -> Result<PathSet, PathError> {
        let paths = match mode {
            PathMode::Shortest => filter_shortest(candidates)?,
            PathMode::KShortest(k) => filter_k_shortest(candidates, k)?,
            PathMode::EdgeDisjoint(k) => filter_k_edge_disjoint(candidates, k)?,
        };
        Ok(PathSet {
            src,
            dst,
            mode,
            paths,
        })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// One line per path: `addr_src addr_dst hop_count node,node,...`.
impl fmt::Display for PathSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.paths {
            writeln!(f, "{} {} {} {}", self.src.0, self.dst.0, p.hop_count(), p)?;
        }
        Ok(())
    }
}

fn endpoints(
    topology: &Topology,
    src: Address,
    dst: Address,
) -> Result<(NodeId, NodeId, NodeId, NodeId), PathError> {
    let s = topology
        .interface(src)
        .ok_or(PathError::UnknownAddress(src))?;
    let d = topology
        .interface(dst)
        .ok_or(PathError::UnknownAddress(dst))?;
    if s.host == d.host {
        return Err(PathError::SameHost);
    }
    Ok((s.host, s.switch, d.switch, d.host))
}

/// BFS hop distance from every switch to `target` over switch-switch links.
fn switch_distances(topology: &Topology, target: NodeId) -> Vec<u32> {
    let mut dist = vec![u32::MAX; topology.n_nodes() as usize];
    dist[target.index()] = 0;
    let mut queue = VecDeque::from([target]);
    while let Some(u) = queue.pop_front() {
        for &(v, _) in topology.neighbors(u) {
            if topology.is_switch(v) && dist[v.index()] == u32::MAX {
                dist[v.index()] = dist[u.index()] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Hop count of the shortest path between two interfaces.
pub fn shortest_hops(topology: &Topology, src: Address, dst: Address) -> Result<u32, PathError> {
    let (_, first, last, _) = endpoints(topology, src, dst)?;
    let d = switch_distances(topology, last)[first.index()];
    if d == u32::MAX {
        Err(PathError::NoPath { src, dst })
    } else {
        Ok(d + 2)
    }
}

/// Every simple host-to-host path of at most `max_hops` links between two
/// interfaces, sorted by (hop count, node sequence).
pub fn all_paths_bounded(
    topology: &Topology,
    src: Address,
    dst: Address,
    max_hops: u32,
) -> Result<Vec<Path>, PathError> {
    let (src_host, first, last, dst_host) = endpoints(topology, src, dst)?;
    let mut out = Vec::new();
    if max_hops >= 2 {
        let budget = max_hops - 2;
        let dist = switch_distances(topology, last);
        if dist[first.index()] <= budget {
            let mut dfs = Dfs {
                topology,
                dist: &dist,
                last,
                budget,
                visited: vec![false; topology.n_nodes() as usize],
                stack: vec![src_host, first],
                out: &mut out,
                dst_host,
            };
            dfs.visited[src_host.index()] = true;
            dfs.visited[first.index()] = true;
            dfs.visited[dst_host.index()] = true;
            dfs.run(first, 0);
        }
    }
    if out.is_empty() {
        return Err(PathError::NoPath { src, dst });
    }
    out.sort_by(|a, b| {
        a.hop_count()
            .cmp(&b.hop_count())
            .then_with(|| a.nodes.cmp(&b.nodes))
    });
    Ok(out)
}

struct Dfs<'a> {
    topology: &'a Topology,
    dist: &'a [u32],
    last: NodeId,
    budget: u32,
    visited: Vec<bool>,
    stack: Vec<NodeId>,
    out: &'a mut Vec<Path>,
    dst_host: NodeId,
}

impl Dfs<'_> {
    fn run(&mut self, at: NodeId, depth: u32) {
        if at == self.last {
            let mut nodes = self.stack.clone();
            nodes.push(self.dst_host);
            let links = nodes
                .windows(2)
                .map(|w| {
                    self.topology
                        .link_between(w[0], w[1])
                        .expect("DFS follows links")
                })
                .collect();
            self.out.push(Path { nodes, links });
            return;
        }
        for &(next, _) in self.topology.neighbors(at) {
            if !self.topology.is_switch(next) || self.visited[next.index()] {
                continue;
            }
            let remaining = self.dist[next.index()];
            if remaining == u32::MAX || depth + 1 + remaining > self.budget {
                continue;
            }
            self.visited[next.index()] = true;
            self.stack.push(next);
            self.run(next, depth + 1);
            self.stack.pop();
            self.visited[next.index()] = false;
        }
    }
}

/// All paths whose hop count equals the minimum.
pub fn filter_shortest(paths: &[Path]) -> Result<Vec<Path>, PathError> {
    let min = paths
        .iter()
        .map(Path::hop_count)
        .min()
        .ok_or(PathError::Empty)?;
    Ok(paths
        .iter()
        .filter(|p| p.hop_count() == min)
        .cloned()
        .collect())
}

/// The first `k` paths in order.
pub fn filter_k_shortest(paths: &[Path], k: u32) -> Result<Vec<Path>, PathError> {
    if k == 0 {
        return Err(PathError::InvalidK);
    }
    if paths.is_empty() {
        return Err(PathError::Empty);
    }
    Ok(paths.iter().take(k as usize).cloned().collect())
}

/// Greedy scan admitting a path iff it shares no core link with an admitted
/// one, stopping after `k`.
pub fn filter_k_edge_disjoint(paths: &[Path], k: u32) -> Result<Vec<Path>, PathError> {
    if k == 0 {
        return Err(PathError::InvalidK);
    }
    if paths.is_empty() {
        return Err(PathError::Empty);
    }
    let mut used = BTreeSet::new();
    let mut admitted = Vec::new();
    for p in paths {
        if admitted.len() == k as usize {
            break;
        }
        if p.core_links().iter().any(|l| used.contains(l)) {
            continue;
        }
        used.extend(p.core_links().iter().copied());
        admitted.push(p.clone());
    }
    Ok(admitted)
}

/// Order among paths with equal hop count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TieOrder {
    /// Lexicographic by node-id sequence, as produced by [`all_paths_bounded`].
    #[default]
    Lexicographic,
    /// A per-address-pair pseudo-random permutation of each equal-hop group,
    /// keyed by the salt. Deterministic for a given salt.
    Salted(u64),
}

impl TieOrder {
    /// Reorders equal-hop runs of `paths` (which must be sorted by hop count).
    pub fn apply(&self, src: Address, dst: Address, paths: &mut [Path]) {
        let TieOrder::Salted(salt) = *self else {
            return;
        };
        let key = seed::derive(salt, ((src.0 as u64) << 32) | dst.0 as u64);
        let mut rng = seed::rng(key);
        let mut start = 0;
        while start < paths.len() {
            let hops = paths[start].hop_count();
            let mut end = start;
            while end < paths.len() && paths[end].hop_count() == hops {
                end += 1;
            }
            paths[start..end].shuffle(&mut rng);
            start = end;
        }
    }
}

/// Computes path sets on demand: DFS up to shortest + `hop_slack` links,
/// tie ordering, then the mode filter.
#[derive(Clone, Copy, Debug)]
pub struct TopologyManager<'t> {
    topology: &'t Topology,
    hop_slack: u32,
    tie_order: TieOrder,
}

impl<'t> TopologyManager<'t> {
    pub fn new(topology: &'t Topology, hop_slack: u32, tie_order: TieOrder) -> Self {
        TopologyManager {
            topology,
            hop_slack,
            tie_order,
        }
    }

    pub fn topology(&self) -> &'t Topology {
        self.topology
    }

    /// Candidate paths for a pair, in the manager's tie order.
    pub fn candidates(&self, src: Address, dst: Address) -> Result<Vec<Path>, PathError> {
        let shortest = shortest_hops(self.topology, src, dst)?;
        let mut paths = all_paths_bounded(self.topology, src, dst, shortest + self.hop_slack)?;
        self.tie_order.apply(src, dst, &mut paths);
        Ok(paths)
    }

    pub fn compute(&self, src: Address, dst: Address, mode: PathMode) -> Result<PathSet, PathError> {
        let paths = self.candidates(src, dst)?;
        PathSet::select(src, dst, mode, &paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_fattree, TopologyKind};

    fn addr_of(t: &Topology, host: u32) -> Address {
        t.interfaces_of(NodeId(host)).next().unwrap().address
    }

    /// Two hosts joined through `width` parallel two-hop switch paths.
    fn diamond(width: u32) -> Topology {
        // hosts 0,1; switches: 2 = left, 3 = right, 4.. = middles
        let attachments = [(NodeId(0), NodeId(2)), (NodeId(1), NodeId(3))];
        let mut core = Vec::new();
        for m in 0..width {
            core.push((NodeId(2), NodeId(4 + m)));
            core.push((NodeId(4 + m), NodeId(3)));
        }
        Topology::assemble(TopologyKind::Custom, 0, 2, 2 + width, &attachments, &core, 1.0).unwrap()
    }

    fn fake(hops: u32, tag: u32) -> Path {
        // Distinct node ids per tag so paths differ.
        let nodes: Vec<NodeId> = (0..=hops).map(|i| NodeId(tag * 100 + i)).collect();
        let links = (0..hops).map(|i| LinkId(tag * 100 + i)).collect();
        Path { nodes, links }
    }

    #[test]
    fn fattree_k4_inter_pod() {
        let t = build_fattree(4).unwrap();
        let (a, b) = (addr_of(&t, 0), addr_of(&t, 15));
        let paths = all_paths_bounded(&t, a, b, 6).unwrap();
        assert_eq!(paths.len(), 4);
        assert!(paths.iter().all(|p| p.hop_count() == 6));
        assert_eq!(filter_k_edge_disjoint(&paths, 8).unwrap().len(), 2);
    }

    #[test]
    fn fattree_k8_inter_pod() {
        let t = build_fattree(8).unwrap();
        let (a, b) = (addr_of(&t, 3), addr_of(&t, 100));
        let all = all_paths_bounded(&t, a, b, 8).unwrap();
        assert_eq!(filter_shortest(&all).unwrap().len(), 16);
        assert_eq!(filter_k_edge_disjoint(&all, 4).unwrap().len(), 4);
        assert_eq!(all_paths_bounded(&t, a, b, 6).unwrap().len(), 16);
    }

    #[test]
    fn same_edge_switch() {
        let t = build_fattree(4).unwrap();
        let paths = all_paths_bounded(&t, addr_of(&t, 0), addr_of(&t, 1), 2).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].hop_count(), 2);
    }

    #[test]
    fn threshold_too_small() {
        let t = build_fattree(4).unwrap();
        let r = all_paths_bounded(&t, addr_of(&t, 0), addr_of(&t, 15), 5);
        assert!(matches!(r, Err(PathError::NoPath { .. })));
        let r = all_paths_bounded(&t, Address(1), addr_of(&t, 15), 6);
        assert_eq!(r.unwrap_err(), PathError::UnknownAddress(Address(1)));
    }

    #[test]
    fn shortest_filter() {
        let paths = [fake(4, 1), fake(4, 2), fake(6, 3), fake(6, 4)];
        let s = filter_shortest(&paths).unwrap();
        assert_eq!(s, paths[..2].to_vec());
        assert_eq!(filter_shortest(&paths[..1]).unwrap().len(), 1);
        assert_eq!(filter_shortest(&[]).unwrap_err(), PathError::Empty);
    }

    #[test]
    fn k_shortest_filter() {
        let paths: Vec<Path> = (0..10).map(|i| fake(4 + 2 * (i / 4), i)).collect();
        assert_eq!(filter_k_shortest(&paths, 8).unwrap(), paths[..8].to_vec());
        assert_eq!(filter_k_shortest(&paths, 1).unwrap(), paths[..1].to_vec());
        assert_eq!(filter_k_shortest(&paths, 50).unwrap().len(), 10);
        assert_eq!(filter_k_shortest(&paths, 0).unwrap_err(), PathError::InvalidK);
    }

    #[test]
    fn diamond_disjoint() {
        let t = diamond(2);
        let paths = all_paths_bounded(&t, addr_of(&t, 0), addr_of(&t, 1), 10).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(filter_k_edge_disjoint(&paths, 8).unwrap().len(), 2);
    }

    #[test]
    fn salted_order_keeps_hop_groups() {
        let t = build_fattree(8).unwrap();
        let (a, b) = (addr_of(&t, 3), addr_of(&t, 100));
        let mut paths = all_paths_bounded(&t, a, b, 8).unwrap();
        let before: BTreeSet<_> = paths.iter().cloned().collect();
        TieOrder::Salted(11).apply(a, b, &mut paths);
        assert!(paths.windows(2).all(|w| w[0].hop_count() <= w[1].hop_count()));
        let after: BTreeSet<_> = paths.iter().cloned().collect();
        assert_eq!(before, after);
        let mut again = all_paths_bounded(&t, a, b, 8).unwrap();
        TieOrder::Salted(11).apply(a, b, &mut again);
        assert_eq!(paths, again);
    }

    #[test]
    fn pathset_dump_format() {
        let t = diamond(1);
        let set = TopologyManager::new(&t, 2, TieOrder::Lexicographic)
            .compute(addr_of(&t, 0), addr_of(&t, 1), PathMode::Shortest)
            .unwrap();
        let text = alloc::format!("{set}");
        assert_eq!(text, "167772161 167772162 4 0,2,4,3,1\n");
    }
}
