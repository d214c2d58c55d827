//! Fluid max-min allocation by progressive filling.
//!
//! Each subflow is an independent fluid flow. Links are full duplex: every
//! link contributes one resource per direction, each with the link's
//! capacity.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::pathing::Path;
use crate::topology::Topology;

/// Relative slack for deciding that a resource is saturated.
pub const SATURATION_EPSILON: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubflowPlacement {
    pub conn_id: u32,
    pub subflow_id: u32,
    pub path: Path,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationResult {
    /// Rate per placement, in input order.
    pub rates: Vec<f64>,
    /// Sum of subflow rates per connection id.
    pub connection_throughput: BTreeMap<u32, f64>,
    /// Load per directed resource: index `2 * link + dir`, where `dir` is 0
    /// when traversed from the link's `a` end.
    pub resource_load: Vec<f64>,
}

impl AllocationResult {
    /// Larger of the two directional loads of each link.
    pub fn link_utilization(&self) -> Vec<f64> {
        self.resource_load
            .chunks(2)
            .map(|c| c[0].max(c[1]))
            .collect()
    }
}

/// Directed resources crossed by a path.
pub fn path_resources(topology: &Topology, path: &Path) -> Vec<usize> {
    path.links()
        .iter()
        .zip(path.nodes())
        .map(|(&l, &from)| {
            let dir = usize::from(topology.link(l).a != from);
            2 * l.index() + dir
        })
        .collect()
}

/// Max-min fair rates for `placements`.
pub fn allocate(topology: &Topology, placements: &[SubflowPlacement]) -> AllocationResult {
    let n_res = 2 * topology.links().len();
    let capacity: Vec<f64> = topology
        .links()
        .iter()
        .flat_map(|l| [l.capacity, l.capacity])
        .collect();
    let routes: Vec<Vec<usize>> = placements
        .iter()
        .map(|p| path_resources(topology, &p.path))
        .collect();

    let mut active = vec![0usize; n_res];
    for r in &routes {
        for &x in r {
            active[x] += 1;
        }
    }
    let mut frozen_load = vec![0.0f64; n_res];
    let mut rates = vec![0.0f64; placements.len()];
    let mut frozen = vec![false; placements.len()];
    let mut remaining = placements.len();
    let mut level = 0.0f64;

    // Subflows with an empty route cannot be bottlenecked; give them 0.
    for (i, r) in routes.iter().enumerate() {
        if r.is_empty() {
            frozen[i] = true;
            remaining -= 1;
        }
    }

    while remaining > 0 {
        let fair = |x: usize| (capacity[x] - frozen_load[x]) / active[x] as f64;
        level = (0..n_res)
            .filter(|&x| active[x] > 0)
            .map(fair)
            .fold(f64::INFINITY, f64::min)
            .max(level);
        let saturated: Vec<bool> = (0..n_res)
            .map(|x| active[x] > 0 && fair(x) <= level + SATURATION_EPSILON * capacity[x])
            .collect();
        for (i, r) in routes.iter().enumerate() {
            if frozen[i] || !r.iter().any(|&x| saturated[x]) {
                continue;
            }
            frozen[i] = true;
            remaining -= 1;
            rates[i] = level;
            for &x in r {
                active[x] -= 1;
                frozen_load[x] += level;
            }
        }
    }

    let mut connection_throughput = BTreeMap::new();
    for (p, &r) in placements.iter().zip(&rates) {
        *connection_throughput.entry(p.conn_id).or_insert(0.0) += r;
    }
    AllocationResult {
        rates,
        connection_throughput,
        resource_load: frozen_load,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThroughputReport {
    /// Reference throughput: all interfaces of a host at full rate.
    pub optimal: f64,
    /// Mean connection throughput in percent of `optimal`; `None` when
    /// there are no connections.
    pub average_pct: Option<f64>,
    /// Per-connection percentages, ascending.
    pub ranks_pct: Vec<f64>,
}

impl ThroughputReport {
    pub fn worst_pct(&self) -> Option<f64> {
        self.ranks_pct.first().copied()
    }

    pub fn median_pct(&self) -> Option<f64> {
        median(&self.ranks_pct)
    }

    pub fn len(&self) -> usize {
        self.ranks_pct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks_pct.is_empty()
    }
}

/// Builds a report over connections `0..n_connections`. Connections absent
/// from `result` (every subflow failed) count as zero.
pub fn report(result: &AllocationResult, topology: &Topology, n_connections: usize) -> ThroughputReport {
    report_with_optimal(result, topology.access_capacity(), n_connections)
}

pub fn report_with_optimal(result: &AllocationResult, optimal: f64, n_connections: usize) -> ThroughputReport {
    let mut ranks: Vec<f64> = (0..n_connections as u32)
        .map(|c| {
            let t = result.connection_throughput.get(&c).copied().unwrap_or(0.0);
            100.0 * t / optimal
        })
        .collect();
    ranks.sort_by(f64::total_cmp);
    let average_pct = (!ranks.is_empty()).then(|| ranks.iter().sum::<f64>() / ranks.len() as f64);
    ThroughputReport {
        optimal,
        average_pct,
        ranks_pct: ranks,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AggregateError {
    #[error("no reports to aggregate")]
    Empty,
    #[error("report shapes differ: {expected} vs {found} connections")]
    Shape { expected: usize, found: usize },
}

/// Element-wise mean of averages and rank vectors.
pub fn aggregate_runs(reports: &[ThroughputReport]) -> Result<ThroughputReport, AggregateError> {
    let first = reports.first().ok_or(AggregateError::Empty)?;
    let n = first.ranks_pct.len();
    let mut ranks = vec![0.0; n];
    let mut avg = 0.0;
    for r in reports {
        if r.ranks_pct.len() != n {
            return Err(AggregateError::Shape {
                expected: n,
                found: r.ranks_pct.len(),
            });
        }
        for (acc, v) in ranks.iter_mut().zip(&r.ranks_pct) {
            *acc += v;
        }
        avg += r.average_pct.unwrap_or(0.0);
    }
    let k = reports.len() as f64;
    ranks.iter_mut().for_each(|v| *v /= k);
    Ok(ThroughputReport {
        optimal: first.optimal,
        average_pct: first.average_pct.map(|_| avg / k),
        ranks_pct: ranks,
    })
}

/// Median of a sample; the mean of the middle two for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{NodeId, TopologyKind};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    /// h0 - s2 - s3 - h1
    fn line() -> Topology {
        Topology::assemble(
            TopologyKind::Custom,
            0,
            2,
            2,
            &[(NodeId(0), NodeId(2)), (NodeId(1), NodeId(3))],
            &[(NodeId(2), NodeId(3))],
            1.0,
        )
        .unwrap()
    }

    fn place(t: &Topology, conn: u32, nodes: &[u32]) -> SubflowPlacement {
        SubflowPlacement {
            conn_id: conn,
            subflow_id: 0,
            path: Path::from_nodes(t, nodes.iter().map(|&n| NodeId(n)).collect()).unwrap(),
        }
    }

    #[test]
    fn equal_split() {
        let t = line();
        let p = [place(&t, 0, &[0, 2, 3, 1]), place(&t, 1, &[0, 2, 3, 1])];
        let r = allocate(&t, &p);
        assert!(close(r.rates[0], 0.5) && close(r.rates[1], 0.5));
    }

    #[test]
    fn opposite_directions_do_not_share() {
        let t = line();
        let p = [place(&t, 0, &[0, 2, 3, 1]), place(&t, 1, &[1, 3, 2, 0])];
        let r = allocate(&t, &p);
        assert!(close(r.rates[0], 1.0) && close(r.rates[1], 1.0));
    }

    #[test]
    fn access_link_caps_connection() {
        // h0 - s2 = {s3, s4} = s5 - h1
        let t = Topology::assemble(
            TopologyKind::Custom,
            0,
            2,
            4,
            &[(NodeId(0), NodeId(2)), (NodeId(1), NodeId(5))],
            &[(NodeId(2), NodeId(3)), (NodeId(2), NodeId(4)), (NodeId(3), NodeId(5)), (NodeId(4), NodeId(5))],
            1.0,
        )
        .unwrap();
        let p = [place(&t, 0, &[0, 2, 3, 5, 1]), place(&t, 0, &[0, 2, 4, 5, 1])];
        let r = allocate(&t, &p);
        assert!(close(r.rates[0], 0.5) && close(r.rates[1], 0.5));
        assert!(close(r.connection_throughput[&0], 1.0));
        let rep = report(&r, &t, 1);
        assert_eq!(rep.average_pct, Some(100.0));
        assert_eq!(rep.worst_pct(), Some(100.0));
    }

    #[test]
    fn three_flow_instance() {
        // h0 - s3 -L1- s4 -L2- s5 - h1, with h2 on s4. L1 = 1, L2 = 2.
        // A: h0 -> h2 over L1, B: h0 -> h1 over L1 and L2, C: h2 -> h1 over L2.
        let mut t = Topology::assemble(
            TopologyKind::Custom,
            0,
            3,
            3,
            &[(NodeId(0), NodeId(3)), (NodeId(1), NodeId(5)), (NodeId(2), NodeId(4))],
            &[(NodeId(3), NodeId(4)), (NodeId(4), NodeId(5))],
            100.0,
        )
        .unwrap();
        t = t.with_link_capacity(NodeId(3), NodeId(4), 1.0).unwrap();
        t = t.with_link_capacity(NodeId(4), NodeId(5), 2.0).unwrap();
        let p = [
            place(&t, 0, &[0, 3, 4, 2]),
            place(&t, 1, &[0, 3, 4, 5, 1]),
            place(&t, 2, &[2, 4, 5, 1]),
        ];
        let r = allocate(&t, &p);
        assert!(close(r.rates[0], 0.5));
        assert!(close(r.rates[1], 0.5));
        assert!(close(r.rates[2], 1.5));
    }

    #[test]
    fn empty() {
        let t = line();
        let r = allocate(&t, &[]);
        assert!(r.rates.is_empty());
        let rep = report(&r, &t, 0);
        assert_eq!(rep.average_pct, None);
        assert_eq!(rep.worst_pct(), None);
    }

    #[test]
    fn dh_normalization() {
        let mut r = AllocationResult {
            rates: vec![],
            connection_throughput: BTreeMap::new(),
            resource_load: vec![],
        };
        r.connection_throughput.insert(0, 1.3);
        let rep = report_with_optimal(&r, 2.0, 2);
        assert!(close(rep.ranks_pct[1], 65.0));
        assert_eq!(rep.ranks_pct[0], 0.0);
    }

    #[test]
    fn aggregation() {
        let a = ThroughputReport {
            optimal: 1.0,
            average_pct: Some(80.0),
            ranks_pct: vec![70.0, 90.0],
        };
        let b = ThroughputReport {
            optimal: 1.0,
            average_pct: Some(100.0),
            ranks_pct: vec![100.0, 100.0],
        };
        let m = aggregate_runs(&[a.clone(), b]).unwrap();
        assert_eq!(m.average_pct, Some(90.0));
        assert_eq!(m.ranks_pct, vec![85.0, 95.0]);
        let same = aggregate_runs(&vec![a.clone(); 10]).unwrap();
        assert_eq!(same, a);
        let short = ThroughputReport {
            ranks_pct: vec![1.0],
            ..a.clone()
        };
        assert_eq!(
            aggregate_runs(&[a, short]),
            Err(AggregateError::Shape { expected: 2, found: 1 })
        );
        assert_eq!(aggregate_runs(&[]), Err(AggregateError::Empty));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
