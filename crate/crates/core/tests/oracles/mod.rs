//! Reference implementations used only by tests. They share no code with
//! the library beyond the topology accessors; `checks` runs them against it.

#![allow(dead_code)]

pub mod checks;

use std::collections::BTreeSet;

use mpsdn_core::topology::{Address, NodeId, Topology, TopologyKind};
use num_rational::Ratio;
use rand::Rng;

pub type Q = Ratio<i128>;

/// Random small graph: 2..=3 single-homed hosts (sometimes one dual-homed),
/// up to `max_nodes` nodes in total, switch links drawn with probability
/// `density`. May be disconnected.
pub fn random_graph<R: Rng>(rng: &mut R, max_nodes: u32, density: f64) -> Topology {
    let n_hosts = rng.random_range(2..=3u32);
    let n_switches = rng.random_range(2..=max_nodes - n_hosts);
    let sw = |i: u32| NodeId(n_hosts + i);
    let mut attachments = Vec::new();
    for h in 0..n_hosts {
        attachments.push((NodeId(h), sw(rng.random_range(0..n_switches))));
    }
    if rng.random_bool(0.3) {
        let first = attachments[0].1;
        let other = sw(rng.random_range(0..n_switches));
        if other != first {
            attachments.push((NodeId(0), other));
        }
    }
    let mut core = Vec::new();
    for a in 0..n_switches {
        for b in a + 1..n_switches {
            if rng.random_bool(density) {
                core.push((sw(a), sw(b)));
            }
        }
    }
    Topology::assemble(TopologyKind::Custom, 0, n_hosts, n_switches, &attachments, &core, 1.0)
        .expect("generated graph is well formed")
}

/// Every simple path from the interface `src` to the interface `dst` whose
/// interior nodes are switches, with at most `max_hops` links. Plain
/// exhaustive recursion over an adjacency matrix rebuilt from the link list.
pub fn brute_force_paths(t: &Topology, src: Address, dst: Address, max_hops: u32) -> Vec<Vec<NodeId>> {
    let n = t.n_nodes() as usize;
    let mut adj = vec![vec![false; n]; n];
    for l in t.links() {
        adj[l.a.index()][l.b.index()] = true;
        adj[l.b.index()][l.a.index()] = true;
    }
    let s = t.interface(src).expect("src exists");
    let d = t.interface(dst).expect("dst exists");
    let mut out = Vec::new();
    if s.host == d.host {
        return out;
    }
    fn walk(
        t: &Topology,
        adj: &[Vec<bool>],
        path: &mut Vec<NodeId>,
        last: NodeId,
        dst_host: NodeId,
        max_hops: u32,
        out: &mut Vec<Vec<NodeId>>,
    ) {
        let here = *path.last().unwrap();
        if here == last {
            if path.len() as u32 <= max_hops {
                let mut p = path.clone();
                p.push(dst_host);
                out.push(p);
            }
            return;
        }
        if path.len() as u32 >= max_hops {
            return;
        }
        for next in 0..adj.len() {
            let nid = NodeId(next as u32);
            if adj[here.index()][next] && t.is_switch(nid) && !path.contains(&nid) {
                path.push(nid);
                walk(t, adj, path, last, dst_host, max_hops, out);
                path.pop();
            }
        }
    }
    let mut path = vec![s.host, s.switch];
    walk(t, &adj, &mut path, d.switch, d.host, max_hops, &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

/// Switch-to-switch edges of a node sequence, as unordered pairs.
pub fn core_edges(nodes: &[NodeId]) -> Vec<(NodeId, NodeId)> {
    nodes[1..nodes.len() - 1]
        .windows(2)
        .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
        .collect()
}

pub fn greedy_disjoint(paths: &[Vec<NodeId>], k: usize) -> Vec<Vec<NodeId>> {
    let mut used = BTreeSet::new();
    let mut out = Vec::new();
    for p in paths {
        if out.len() == k {
            break;
        }
        let edges = core_edges(p);
        if edges.iter().all(|e| !used.contains(e)) {
            used.extend(edges);
            out.push(p.clone());
        }
    }
    out
}

/// Exact max-min rates by repeated bottleneck removal: find the resource
/// with the smallest equal share among unfixed flows, fix those flows at
/// that share, subtract, repeat.
pub fn waterfill_exact(capacity: &[Q], routes: &[Vec<usize>]) -> Vec<Q> {
    let mut rate: Vec<Option<Q>> = vec![None; routes.len()];
    let mut residual = capacity.to_vec();
    loop {
        let mut best: Option<(Q, usize)> = None;
        for (r, cap) in residual.iter().enumerate() {
            let users = routes
                .iter()
                .enumerate()
                .filter(|(i, route)| rate[*i].is_none() && route.contains(&r))
                .count();
            if users == 0 {
                continue;
            }
            let share = *cap / Q::from_integer(users as i128);
            if best.is_none_or(|(b, _)| share < b) {
                best = Some((share, r));
            }
        }
        let Some((share, r)) = best else { break };
        for i in 0..routes.len() {
            if rate[i].is_none() && routes[i].contains(&r) {
                rate[i] = Some(share);
                for &x in &routes[i] {
                    residual[x] -= share;
                }
            }
        }
    }
    rate.into_iter().map(|r| r.unwrap_or_default()).collect()
}

/// Checks feasibility and the bottleneck property: every flow crosses a
/// saturated resource on which no other flow has a larger rate.
pub fn is_max_min(capacity: &[f64], routes: &[Vec<usize>], rates: &[f64], tol: f64) -> bool {
    let mut load = vec![0.0; capacity.len()];
    for (route, r) in routes.iter().zip(rates) {
        for &x in route {
            load[x] += r;
        }
    }
    if load.iter().zip(capacity).any(|(l, c)| *l > c * (1.0 + tol)) {
        return false;
    }
    routes.iter().enumerate().all(|(i, route)| {
        route.is_empty()
            || route.iter().any(|&x| {
                let saturated = load[x] >= capacity[x] * (1.0 - tol);
                let largest = routes
                    .iter()
                    .zip(rates)
                    .filter(|(other, _)| other.contains(&x))
                    .all(|(_, r)| *r <= rates[i] * (1.0 + tol) + tol);
                saturated && largest
            })
    })
}

/// One line of the SHA-1 / HMAC-SHA1 fixture.
pub struct CryptoCase {
    pub key_a: u64,
    pub key_b: u64,
    pub nonce_a: u32,
    pub nonce_b: u32,
    pub token: u32,
    pub hmac: [u8; 20],
}

pub fn crypto_cases(text: &str) -> Vec<CryptoCase> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            let mut hmac = [0u8; 20];
            for (i, b) in hmac.iter_mut().enumerate() {
                *b = u8::from_str_radix(&f[5][2 * i..2 * i + 2], 16).unwrap();
            }
            CryptoCase {
                key_a: u64::from_str_radix(f[0], 16).unwrap(),
                key_b: u64::from_str_radix(f[1], 16).unwrap(),
                nonce_a: u32::from_str_radix(f[2], 16).unwrap(),
                nonce_b: u32::from_str_radix(f[3], 16).unwrap(),
                token: u32::from_str_radix(f[4], 16).unwrap(),
                hmac,
            }
        })
        .collect()
}

pub const CRYPTO_FIXTURE: &str = include_str!("../data/sha1_hmac.txt");
