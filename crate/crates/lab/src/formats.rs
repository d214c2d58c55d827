//! Text and CSV formats.
//!
//! Topology files are line based:
//!
//! ```text
//! fattree 16 20 0
//! 0 20 167772161
//! ...
//! 20 36
//! ```
//!
//! The header is `kind n_hosts n_switches seed`, then one `host switch
//! address` line per interface, then one `a b` line per switch-switch link.

use std::fmt::Write;

use mpsdn_core::flowsim::{AllocationResult, ThroughputReport};
use mpsdn_core::topology::{Interface, TopologyKind};
use mpsdn_core::traffic::{Pattern, TrafficMatrix};
use mpsdn_core::{Address, HandshakeTrace, NodeId, Topology, TopologyError};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn write_topology(t: &Topology) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {} {} {}", t.kind().name(), t.n_hosts(), t.n_switches(), t.seed());
    for i in t.interfaces() {
        let _ = writeln!(s, "{} {} {}", i.host, i.switch, i.address.0);
    }
    for l in t.core_links() {
        let _ = writeln!(s, "{} {}", l.a, l.b);
    }
    s
}

fn numbers<const N: usize>(line: usize, text: &str) -> Result<[u64; N], FormatError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != N {
        return Err(parse_err(line, format!("expected {N} fields, got {}", fields.len())));
    }
    let mut out = [0u64; N];
    for (o, f) in out.iter_mut().zip(fields) {
        *o = f
            .parse()
            .map_err(|_| parse_err(line, format!("bad number {f:?}")))?;
    }
    Ok(out)
}

fn to_u32(line: usize, v: u64) -> Result<u32, FormatError> {
    u32::try_from(v).map_err(|_| parse_err(line, format!("{v} out of range")))
}

/// Parses the format written by [`write_topology`]. FatTree `k` is
/// recovered from the host count; Jellyfish port counts are taken as the
/// largest switch degree.
pub fn parse_topology(text: &str) -> Result<Topology, FormatError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (n, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let mut head = header.split_whitespace();
    let kind_word = head.next().unwrap_or_default().to_string();
    let [n_hosts, n_switches, seed] = numbers::<3>(n, &head.collect::<Vec<_>>().join(" "))?;
    let (n_hosts, n_switches) = (to_u32(n, n_hosts)?, to_u32(n, n_switches)?);

    let mut interfaces = Vec::new();
    let mut core = Vec::new();
    for (n, l) in lines {
        match l.split_whitespace().count() {
            3 => {
                let [h, s, a] = numbers::<3>(n, l)?;
                interfaces.push(Interface {
                    host: NodeId(to_u32(n, h)?),
                    switch: NodeId(to_u32(n, s)?),
                    address: Address(to_u32(n, a)?),
                });
            }
            2 => {
                let [a, b] = numbers::<2>(n, l)?;
                core.push((NodeId(to_u32(n, a)?), NodeId(to_u32(n, b)?)));
            }
            _ => return Err(parse_err(n, "expected an interface or a link line")),
        }
    }
    let provisional = Topology::from_parts(
        TopologyKind::Custom,
        seed,
        n_hosts,
        n_switches,
        interfaces.clone(),
        &core,
        1.0,
    )?;
    let max_degree = provisional
        .switches()
        .map(|s| provisional.degree(s))
        .max()
        .unwrap_or(0);
    let kind = match kind_word.as_str() {
        "fattree" => {
            let k = (1..=256u32)
                .step_by(2)
                .map(|k| k + 1)
                .find(|k| k * k * k / 4 == n_hosts)
                .ok_or_else(|| parse_err(1, format!("{n_hosts} hosts is not a FatTree size")))?;
            TopologyKind::FatTree { k }
        }
        "jellyfish" => TopologyKind::Jellyfish { ports: max_degree },
        "dhjellyfish" => TopologyKind::DhJellyfish { ports: max_degree },
        "custom" => TopologyKind::Custom,
        other => return Err(parse_err(1, format!("unknown topology kind {other:?}"))),
    };
    Ok(Topology::from_parts(kind, seed, n_hosts, n_switches, interfaces, &core, 1.0)?)
}

pub const TRACE_HEADER: &str =
    "conn_id,subflow_id,src_addr,dst_addr,src_port,dst_port,path_nodes,packetins,rules_installed,failed";

/// One row per subflow; path nodes are space separated.
pub fn trace_csv(trace: &HandshakeTrace) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{TRACE_HEADER}");
    for r in &trace.records {
        let path = r
            .path
            .as_ref()
            .map(|p| {
                p.nodes()
                    .iter()
                    .map(|n| n.0.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.conn_id,
            r.subflow_id,
            r.tuple.src_addr,
            r.tuple.dst_addr,
            r.tuple.src_port,
            r.tuple.dst_port,
            path,
            r.packet_ins,
            r.rules_installed,
            u8::from(!r.established())
        );
    }
    s
}

/// `conn_id,throughput,percent_of_optimal` for connections `0..n`.
pub fn allocation_csv(result: &AllocationResult, optimal: f64, n_connections: usize) -> String {
    let mut s = String::from("conn_id,throughput,percent_of_optimal\n");
    for c in 0..n_connections as u32 {
        let t = result.connection_throughput.get(&c).copied().unwrap_or(0.0);
        let _ = writeln!(s, "{c},{t:.6},{:.4}", 100.0 * t / optimal);
    }
    s
}

/// `rank,percent_of_optimal`, worst connection first.
pub fn ranks_csv(report: &ThroughputReport) -> String {
    let mut s = String::from("rank,percent_of_optimal\n");
    for (i, v) in report.ranks_pct.iter().enumerate() {
        let _ = writeln!(s, "{i},{v:.4}");
    }
    s
}

pub fn traffic_csv(matrix: &TrafficMatrix) -> String {
    let mut s = String::from("src_host,dst_host\n");
    for (a, b) in &matrix.pairs {
        let _ = writeln!(s, "{a},{b}");
    }
    s
}

/// Reads `src_host,dst_host` lines; a header line is optional.
pub fn parse_traffic_csv(text: &str, pattern: Pattern, seed: u64) -> Result<TrafficMatrix, FormatError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("src_host") {
            continue;
        }
        let [a, b] = numbers::<2>(i + 1, &line.replace(',', " "))?;
        pairs.push((NodeId(to_u32(i + 1, a)?), NodeId(to_u32(i + 1, b)?)));
    }
    Ok(TrafficMatrix {
        pattern,
        seed,
        pairs,
    })
}
