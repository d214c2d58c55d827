//! Comparison runners: library output against the reference
//! implementations in the parent module, reported as counts.

use mpsdn_core::flowsim::{allocate, SubflowPlacement};
use mpsdn_core::pathing::{all_paths_bounded, filter_k_edge_disjoint, filter_k_shortest, filter_shortest};
use mpsdn_core::wire::{compute_hmac, compute_token, decode_option, encode_option};
use mpsdn_core::{seed, MptcpOption, NodeId, Path, PathError, Topology};
use rand::seq::IndexedRandom;
use rand::Rng;

use super::{brute_force_paths, crypto_cases, greedy_disjoint, is_max_min, random_graph, waterfill_exact, Q};

fn nodes(paths: &[Path]) -> Vec<Vec<NodeId>> {
    paths.iter().map(|p| p.nodes().to_vec()).collect()
}

#[derive(Debug, Default)]
pub struct PathingOutcome {
    pub graphs: usize,
    pub compared: usize,
    pub mismatches: Vec<String>,
}

/// Enumeration and the three filters against brute force on `graphs`
/// random graphs of at most 12 nodes, every host pair.
pub fn pathing_suite(rng_seed: u64, graphs: usize) -> PathingOutcome {
    let mut rng = seed::rng(rng_seed);
    let mut out = PathingOutcome { graphs, ..Default::default() };
    for instance in 0..graphs {
        let density = rng.random_range(0.2..0.7);
        let t = random_graph(&mut rng, 12, density);
        let ifaces = t.interfaces().to_vec();
        for s in &ifaces {
            for d in &ifaces {
                if s.host == d.host {
                    continue;
                }
                let max_hops = rng.random_range(2..=9);
                let k = rng.random_range(1..=6usize);
                let expected = brute_force_paths(&t, s.address, d.address, max_hops);
                let ok = match all_paths_bounded(&t, s.address, d.address, max_hops) {
                    Ok(paths) => {
                        out.compared += 1;
                        let min = expected.first().map_or(0, Vec::len);
                        let shortest: Vec<_> = expected.iter().filter(|p| p.len() == min).cloned().collect();
                        let first_k: Vec<_> = expected.iter().take(k).cloned().collect();
                        nodes(&paths) == expected
                            && filter_shortest(&paths).map(|p| nodes(&p)).ok() == Some(shortest)
                            && filter_k_shortest(&paths, k as u32).map(|p| nodes(&p)).ok() == Some(first_k)
                            && filter_k_edge_disjoint(&paths, k as u32).map(|p| nodes(&p)).ok()
                                == Some(greedy_disjoint(&expected, k))
                    }
                    Err(PathError::NoPath { .. }) => expected.is_empty(),
                    Err(_) => false,
                };
                if !ok {
                    out.mismatches.push(format!("graph {instance}: {} -> {}", s.address, d.address));
                }
            }
        }
    }
    out
}

/// Independent directed-resource mapping: `2 * link + (0 if leaving the
/// lower-numbered end)`.
pub fn resources(t: &Topology, nodes: &[NodeId]) -> Vec<usize> {
    nodes
        .windows(2)
        .map(|w| {
            let i = t
                .links()
                .iter()
                .position(|l| (l.a == w[0] && l.b == w[1]) || (l.a == w[1] && l.b == w[0]))
                .unwrap();
            2 * i + usize::from(w[0] > w[1])
        })
        .collect()
}

pub struct Instance {
    pub topology: Topology,
    pub placements: Vec<SubflowPlacement>,
    pub caps: Vec<i128>,
}

/// Random graph with at most 8 links, integer capacities 1..=4 and up to
/// ten subflows on random bounded paths.
pub fn flow_instance<R: Rng>(rng: &mut R) -> Instance {
    loop {
        let mut t = random_graph(rng, 7, 0.5);
        if t.links().len() > 8 {
            continue;
        }
        let mut caps = Vec::new();
        for l in t.links().to_vec() {
            let c = rng.random_range(1..=4);
            t = t.with_link_capacity(l.a, l.b, c as f64).unwrap();
            caps.push(c);
        }
        let ifaces = t.interfaces().to_vec();
        let mut placements = Vec::new();
        for i in 0..rng.random_range(1..=10) {
            let s = ifaces.choose(rng).unwrap();
            let d = ifaces.choose(rng).unwrap();
            if s.host == d.host {
                continue;
            }
            if let Ok(paths) = all_paths_bounded(&t, s.address, d.address, 8) {
                placements.push(SubflowPlacement {
                    conn_id: i % 3,
                    subflow_id: i,
                    path: paths.choose(rng).unwrap().clone(),
                });
            }
        }
        if !placements.is_empty() {
            return Instance { topology: t, placements, caps };
        }
    }
}

#[derive(Debug, Default)]
pub struct FlowsimOutcome {
    pub instances: usize,
    pub max_rel_error: f64,
    pub certificate_failures: usize,
}

pub fn flowsim_suite(rng_seed: u64, instances: usize) -> FlowsimOutcome {
    let mut rng = seed::rng(rng_seed);
    let mut out = FlowsimOutcome { instances, ..Default::default() };
    for _ in 0..instances {
        let inst = flow_instance(&mut rng);
        let routes: Vec<Vec<usize>> = inst
            .placements
            .iter()
            .map(|p| resources(&inst.topology, p.path.nodes()))
            .collect();
        let caps_q: Vec<Q> = inst.caps.iter().flat_map(|&c| [Q::from_integer(c); 2]).collect();
        let caps_f: Vec<f64> = inst.caps.iter().flat_map(|&c| [c as f64; 2]).collect();
        let exact = waterfill_exact(&caps_q, &routes);
        let got = allocate(&inst.topology, &inst.placements);
        for (g, e) in got.rates.iter().zip(&exact) {
            let e = *e.numer() as f64 / *e.denom() as f64;
            out.max_rel_error = out.max_rel_error.max((g - e).abs() / e.abs().max(f64::MIN_POSITIVE));
        }
        if !is_max_min(&caps_f, &routes, &got.rates, 1e-9) {
            out.certificate_failures += 1;
        }
    }
    out
}

pub fn random_option<R: Rng>(rng: &mut R) -> MptcpOption {
    match rng.random_range(0..5) {
        0 => MptcpOption::MpCapable { key: rng.random() },
        1 => MptcpOption::MpCapableAck { sender_key: rng.random(), receiver_key: rng.random() },
        2 => MptcpOption::MpJoinSyn { token: rng.random(), nonce: rng.random() },
        3 => MptcpOption::MpJoinSynAck { hmac: rng.random(), nonce: rng.random() },
        _ => MptcpOption::MpJoinAck { hmac: rng.random() },
    }
}

/// Encode/decode round trips that fail, out of `n` random options.
pub fn codec_failures(rng_seed: u64, n: usize) -> usize {
    let mut rng = seed::rng(rng_seed);
    (0..n)
        .filter(|_| {
            let opt = random_option(&mut rng);
            decode_option(&encode_option(&opt)) != Ok(opt)
        })
        .count()
}

/// Fixture lines whose token or HMAC disagrees with the library.
pub fn crypto_mismatches() -> (usize, usize) {
    let cases = crypto_cases(super::CRYPTO_FIXTURE);
    let bad = cases
        .iter()
        .filter(|c| {
            compute_token(c.key_a) != c.token || compute_hmac(c.key_a, c.key_b, c.nonce_a, c.nonce_b) != c.hmac
        })
        .count();
    (cases.len(), bad)
}
