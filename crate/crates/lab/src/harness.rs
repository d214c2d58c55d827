//! Seeded experiment sweeps: topology x traffic x routing x subflow count.

use std::fmt::{self, Write as _};
use std::path::Path as FsPath;
use std::str::FromStr;

use rayon::prelude::*;

use mpsdn_core::controller::{AssignmentMode, Controller, RoutingConfig};
use mpsdn_core::flowsim::{self, aggregate_runs, AllocationResult, ThroughputReport};
use mpsdn_core::pathing::{PathMode, TieOrder, DEFAULT_HOP_SLACK};
use mpsdn_core::topology::{build_dh_jellyfish, build_fattree, build_jellyfish};
use mpsdn_core::traffic::{self, Pattern, SubflowCount, DEFAULT_PORT_BASE};
use mpsdn_core::{seed, HandshakeTrace, Simulation, Topology, TopologyError};

use crate::formats;

/// Default Jellyfish switch port count.
pub const DEFAULT_JELLYFISH_PORTS: u32 = 12;
pub const DEFAULT_SEEDS: u32 = 10;
pub const DEFAULT_TCAM_RULES: u64 = 64_000;

const TAG_TRAFFIC: u64 = 1;
const TAG_CONTROLLER: u64 = 2;
const TAG_TIES: u64 = 3;
const TAG_KEYS: u64 = 4;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Traffic(#[from] traffic::TrafficError),
    #[error("sweeps differ in shape: {0}")]
    Shape(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::InvalidParameter(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopologySpec {
    FatTree { k: u32 },
    Jellyfish { hosts: u32, switches: u32, ports: u32 },
    DhJellyfish { hosts: u32, switches: u32, ports: u32 },
}

impl TopologySpec {
    /// Builds the topology for a run seed. FatTrees ignore the seed.
    pub fn build(&self, seed: u64) -> Result<Topology, TopologyError> {
        match *self {
            TopologySpec::FatTree { k } => build_fattree(k),
            TopologySpec::Jellyfish { hosts, switches, ports } => build_jellyfish(hosts, switches, ports, seed),
            TopologySpec::DhJellyfish { hosts, switches, ports } => {
                build_dh_jellyfish(hosts, switches, ports, seed)
            }
        }
    }

    pub fn is_dual_homed(&self) -> bool {
        matches!(self, TopologySpec::DhJellyfish { .. })
    }
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologySpec::FatTree { k } => write!(f, "fattree:k={k}"),
            TopologySpec::Jellyfish { hosts, switches, ports } => {
                write!(f, "jellyfish:hosts={hosts},switches={switches},ports={ports}")
            }
            TopologySpec::DhJellyfish { hosts, switches, ports } => {
                write!(f, "dhjellyfish:hosts={hosts},switches={switches},ports={ports}")
            }
        }
    }
}

fn params(text: &str) -> Result<Vec<(&str, u32)>, HarnessError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| invalid(format!("expected key=value, got {kv:?}")))?;
            let v = v
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad value in {kv:?}")))?;
            Ok((k.trim(), v))
        })
        .collect()
}

fn take(params: &[(&str, u32)], key: &str, default: Option<u32>) -> Result<u32, HarnessError> {
    params
        .iter()
        .find(|(k, _)| *k == key)
        .map(|&(_, v)| v)
        .or(default)
        .ok_or_else(|| invalid(format!("missing {key}")))
}

fn check_keys(params: &[(&str, u32)], allowed: &[&str]) -> Result<(), HarnessError> {
    match params.iter().find(|(k, _)| !allowed.contains(k)) {
        Some((k, _)) => Err(invalid(format!("unknown parameter {k:?}"))),
        None => Ok(()),
    }
}

impl FromStr for TopologySpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let p = params(rest)?;
        match kind {
            "fattree" => {
                check_keys(&p, &["k"])?;
                Ok(TopologySpec::FatTree {
                    k: take(&p, "k", Some(8))?,
                })
            }
            "jellyfish" | "dhjellyfish" => {
                check_keys(&p, &["hosts", "switches", "ports"])?;
                let hosts = take(&p, "hosts", Some(120))?;
                let switches = take(&p, "switches", Some(60))?;
                let ports = take(&p, "ports", Some(DEFAULT_JELLYFISH_PORTS))?;
                Ok(if kind == "jellyfish" {
                    TopologySpec::Jellyfish { hosts, switches, ports }
                } else {
                    TopologySpec::DhJellyfish { hosts, switches, ports }
                })
            }
            other => Err(invalid(format!("unknown topology {other:?}"))),
        }
    }
}

/// Parses `shortest`, `kshortest:k=N` or `disjoint:k=N`.
pub fn parse_path_mode(s: &str) -> Result<PathMode, HarnessError> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let p = params(rest)?;
    check_keys(&p, &["k"])?;
    let mode = match kind {
        "shortest" if p.is_empty() => PathMode::Shortest,
        "kshortest" => PathMode::KShortest(take(&p, "k", None)?),
        "disjoint" => PathMode::EdgeDisjoint(take(&p, "k", None)?),
        _ => return Err(invalid(format!("unknown path mode {s:?}"))),
    };
    match mode {
        PathMode::KShortest(0) | PathMode::EdgeDisjoint(0) => Err(invalid("k must be at least 1")),
        m => Ok(m),
    }
}

pub fn parse_pattern(s: &str) -> Result<Pattern, HarnessError> {
    match s.to_ascii_lowercase().as_str() {
        "pt" => Ok(Pattern::Permutation),
        "ut" => Ok(Pattern::Unconstrained),
        _ => Err(invalid(format!("unknown traffic pattern {s:?}"))),
    }
}

pub fn parse_assignment(s: &str) -> Result<AssignmentMode, HarnessError> {
    match s.to_ascii_lowercase().as_str() {
        "m" => Ok(AssignmentMode::Deterministic),
        "r" => Ok(AssignmentMode::Random),
        _ => Err(invalid(format!("unknown assignment mode {s:?}"))),
    }
}

/// Parses `1..6` (inclusive) or `1,2,4`.
pub fn parse_counts(s: &str) -> Result<Vec<u32>, HarnessError> {
    let bad = || invalid(format!("bad count list {s:?}"));
    let out: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|x| x.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if out.is_empty() || out.contains(&0) {
        return Err(bad());
    }
    Ok(out)
}

/// One routing configuration, e.g. `M-Disjoint(4)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Routing {
    pub assignment: AssignmentMode,
    pub paths: PathMode,
}

impl Routing {
    pub fn new(assignment: AssignmentMode, paths: PathMode) -> Self {
        Routing { assignment, paths }
    }

    pub fn label(&self) -> String {
        let paths = match self.paths {
            PathMode::Shortest => "Shortest(all)".to_string(),
            PathMode::KShortest(k) => format!("Shortest({k})"),
            PathMode::EdgeDisjoint(k) => format!("Disjoint({k})"),
        };
        format!("{}-{paths}", self.assignment.letter())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Ties {
    /// Per-pair salted order of equal-length paths, salted by the run seed.
    #[default]
    Salted,
    Lexicographic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub topology: TopologySpec,
    pub patterns: Vec<Pattern>,
    pub routings: Vec<Routing>,
    pub subflows: Vec<SubflowCount>,
    pub seeds: u32,
    pub first_seed: u64,
    pub hop_slack: u32,
    pub ties: Ties,
    pub port_base: u16,
}

impl ExperimentConfig {
    pub fn new(topology: TopologySpec, pattern: Pattern, routing: Routing, subflows: Vec<SubflowCount>) -> Self {
        ExperimentConfig {
            topology,
            patterns: vec![pattern],
            routings: vec![routing],
            subflows,
            seeds: DEFAULT_SEEDS,
            first_seed: 0,
            hop_slack: DEFAULT_HOP_SLACK,
            ties: Ties::Salted,
            port_base: DEFAULT_PORT_BASE,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds == 0 {
            return Err(invalid("at least one seed is required"));
        }
        if self.patterns.is_empty() || self.routings.is_empty() || self.subflows.is_empty() {
            return Err(invalid("empty sweep"));
        }
        if self.subflows.iter().any(|c| c.value() == 0) {
            return Err(invalid("subflow counts must be at least 1"));
        }
        Ok(())
    }

    pub fn run_seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.seeds as u64).map(|i| self.first_seed + i)
    }
}

/// Everything measured in a single seeded run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub seed: u64,
    pub report: ThroughputReport,
    pub allocation: AllocationResult,
    pub trace: HandshakeTrace,
    pub packet_ins: u64,
    pub rules: u64,
    pub tm_queries: u64,
}

impl RunOutcome {
    /// Mean connection throughput in units of one interface capacity.
    pub fn mean_throughput(&self, topology: &Topology) -> f64 {
        self.report.average_pct.unwrap_or(0.0) * self.report.optimal / topology.capacity() / 100.0
    }
}

/// Runs one (pattern, routing, subflow count) cell on one seed.
#[allow(clippy::too_many_arguments)]
pub fn run_once(
    topology: &Topology,
    pattern: Pattern,
    routing: Routing,
    count: SubflowCount,
    run_seed: u64,
    hop_slack: u32,
    ties: Ties,
    port_base: u16,
) -> Result<RunOutcome, HarnessError> {
    let matrix = traffic::generate(pattern, topology, seed::derive(run_seed, TAG_TRAFFIC))?;
    let specs = traffic::expand_connections(&matrix, topology, count, port_base)?;
    let tie_order = match ties {
        Ties::Salted => TieOrder::Salted(seed::derive(run_seed, TAG_TIES)),
        Ties::Lexicographic => TieOrder::Lexicographic,
    };
    let config = RoutingConfig::new(routing.assignment, routing.paths)
        .with_seed(seed::derive(run_seed, TAG_CONTROLLER))
        .with_hop_slack(hop_slack)
        .with_tie_order(tie_order);
    let controller = Controller::new(topology, config);
    let mut sim = Simulation::new(topology, controller, seed::derive(run_seed, TAG_KEYS));
    let trace = sim.run_handshakes(&specs);
    let allocation = flowsim::allocate(topology, &trace.placements());
    let report = flowsim::report(&allocation, topology, specs.len());
    let m = sim.controller.metrics();
    Ok(RunOutcome {
        seed: run_seed,
        report,
        allocation,
        packet_ins: m.packet_ins,
        rules: sim.fabric.metrics().rules_installed,
        tm_queries: m.tm_queries,
        trace,
    })
}

/// Per-seed figures kept in a result row.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub avg_pct: f64,
    pub worst_pct: f64,
    pub median_pct: f64,
    /// Mean connection throughput in units of one interface capacity.
    pub mean_throughput: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub label: String,
    pub pattern: Pattern,
    pub subflows: SubflowCount,
    pub avg_pct: f64,
    pub worst_pct: f64,
    /// Seed-averaged rank vector, ascending.
    pub ranks_pct: Vec<f64>,
    /// Means per run.
    pub rules: f64,
    pub packet_ins: f64,
    pub tm_queries: f64,
    pub established: f64,
    pub per_seed: Vec<SeedSummary>,
    pub error: Option<String>,
}

impl ResultRow {
    fn failed(label: String, pattern: Pattern, subflows: SubflowCount, error: String) -> Self {
        ResultRow {
            label,
            pattern,
            subflows,
            avg_pct: f64::NAN,
            worst_pct: f64::NAN,
            ranks_pct: Vec::new(),
            rules: 0.0,
            packet_ins: 0.0,
            tm_queries: 0.0,
            established: 0.0,
            per_seed: Vec::new(),
            error: Some(error),
        }
    }

    pub fn subflows_text(&self) -> String {
        subflows_text(self.subflows)
    }
}

pub fn subflows_text(c: SubflowCount) -> String {
    match c {
        SubflowCount::Total(s) => s.to_string(),
        SubflowCount::PerPair(n) => format!("{n}/pair"),
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn summarize(
    label: String,
    pattern: Pattern,
    count: SubflowCount,
    runs: Result<Vec<(RunOutcome, f64)>, HarnessError>,
) -> ResultRow {
    let runs = match runs {
        Ok(r) => r,
        Err(e) => return ResultRow::failed(label, pattern, count, e.to_string()),
    };
    let reports: Vec<ThroughputReport> = runs.iter().map(|(r, _)| r.report.clone()).collect();
    let agg = match aggregate_runs(&reports) {
        Ok(a) => a,
        Err(e) => return ResultRow::failed(label, pattern, count, e.to_string()),
    };
    let per_seed: Vec<SeedSummary> = runs
        .iter()
        .map(|(r, mt)| SeedSummary {
            seed: r.seed,
            avg_pct: r.report.average_pct.unwrap_or(0.0),
            worst_pct: r.report.worst_pct().unwrap_or(0.0),
            median_pct: r.report.median_pct().unwrap_or(0.0),
            mean_throughput: *mt,
        })
        .collect();
    ResultRow {
        label,
        pattern,
        subflows: count,
        avg_pct: agg.average_pct.unwrap_or(0.0),
        worst_pct: mean(per_seed.iter().map(|s| s.worst_pct)),
        ranks_pct: agg.ranks_pct,
        rules: mean(runs.iter().map(|(r, _)| r.rules as f64)),
        packet_ins: mean(runs.iter().map(|(r, _)| r.packet_ins as f64)),
        tm_queries: mean(runs.iter().map(|(r, _)| r.tm_queries as f64)),
        established: mean(runs.iter().map(|(r, _)| r.trace.established() as f64)),
        per_seed,
        error: None,
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    pub fn rows_for(&self, label: &str, pattern: Pattern) -> Vec<&ResultRow> {
        self.rows
            .iter()
            .filter(|r| r.label == label && r.pattern == pattern)
            .collect()
    }

    pub fn row(&self, label: &str, pattern: Pattern, subflows: SubflowCount) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.label == label && r.pattern == pattern && r.subflows == subflows)
    }
}

/// Runs the whole sweep. Seeds and cells run in parallel; row order is
/// pattern, routing, subflow count as listed in the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    run_experiment_with(config, |_, _, _, _| {})
}

/// Like [`run_experiment`], calling `visit(label, pattern, count, run)` for
/// every completed run (in unspecified order).
pub fn run_experiment_with<F>(config: &ExperimentConfig, visit: F) -> Result<ExperimentResult, HarnessError>
where
    F: Fn(&str, Pattern, SubflowCount, &RunOutcome) + Sync,
{
    config.validate()?;
    let seeds: Vec<u64> = config.run_seeds().collect();
    let topologies: Vec<Result<Topology, TopologyError>> =
        seeds.par_iter().map(|&s| config.topology.build(s)).collect();

    let mut cells = Vec::new();
    for &pattern in &config.patterns {
        for &routing in &config.routings {
            for &count in &config.subflows {
                cells.push((pattern, routing, count));
            }
        }
    }
    let rows = cells
        .par_iter()
        .map(|&(pattern, routing, count)| {
            let label = routing.label();
            let runs: Result<Vec<(RunOutcome, f64)>, HarnessError> = seeds
                .par_iter()
                .zip(&topologies)
                .map(|(&s, topo)| {
                    let topo = topo.as_ref().map_err(|e| HarnessError::Topology(e.clone()))?;
                    let run = run_once(
                        topo,
                        pattern,
                        routing,
                        count,
                        s,
                        config.hop_slack,
                        config.ties,
                        config.port_base,
                    )?;
                    visit(&label, pattern, count, &run);
                    let mt = run.mean_throughput(topo);
                    Ok((run, mt))
                })
                .collect();
            summarize(label, pattern, count, runs)
        })
        .collect();
    Ok(ExperimentResult {
        config: config.clone(),
        rows,
    })
}

pub const SUMMARY_HEADER: &str = "label,pattern,subflows,avg_pct,worst_pct,rules,packetins,tm_queries";

pub fn summary_csv(rows: &[ResultRow]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.2},{:.2},{:.1},{:.1},{:.1}",
            r.label,
            r.pattern,
            r.subflows_text(),
            r.avg_pct,
            r.worst_pct,
            r.rules,
            r.packet_ins,
            r.tm_queries
        );
    }
    s
}

/// File-name-safe form of a label: `M-Disjoint(4)` becomes `M-Disjoint_4`.
pub fn sanitize(label: &str) -> String {
    label
        .chars()
        .filter(|&c| c != ')')
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

pub fn ranks_file_name(row: &ResultRow) -> String {
    let s = match row.subflows {
        SubflowCount::Total(s) => s.to_string(),
        SubflowCount::PerPair(n) => format!("{n}pp"),
    };
    format!("ranks_{}_{}_{s}.csv", sanitize(&row.label), row.pattern)
}

/// Writes `summary.csv` and one ranks file per successful row.
pub fn write_outputs(dir: &FsPath, rows: &[ResultRow]) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("summary.csv"), summary_csv(rows))?;
    for r in rows.iter().filter(|r| r.error.is_none()) {
        let report = ThroughputReport {
            optimal: 1.0,
            average_pct: Some(r.avg_pct),
            ranks_pct: r.ranks_pct.clone(),
        };
        std::fs::write(dir.join(ranks_file_name(r)), formats::ranks_csv(&report))?;
    }
    Ok(())
}

/// Table with one line per subflow count and one `avg / worst` column per
/// label, grouped by traffic pattern.
pub fn render_table(result: &ExperimentResult) -> String {
    let mut s = String::new();
    let labels: Vec<String> = result.config.routings.iter().map(Routing::label).collect();
    let width = labels.iter().map(String::len).max().unwrap_or(0).max(15);
    for &pattern in &result.config.patterns {
        let _ = writeln!(s, "{pattern}  {}  (avg % / worst % of optimal)", result.config.topology);
        let _ = write!(s, "{:<9}", "subflows");
        for l in &labels {
            let _ = write!(s, " {l:>width$}");
        }
        s.push('\n');
        for &count in &result.config.subflows {
            let _ = write!(s, "{:<9}", subflows_text(count));
            for l in &labels {
                let cell = match result.row(l, pattern, count) {
                    Some(r) if r.error.is_none() => format!("{:.1} / {:.1}", r.avg_pct, r.worst_pct),
                    Some(_) => "error".to_string(),
                    None => "-".to_string(),
                };
                let _ = write!(s, " {cell:>width$}");
            }
            s.push('\n');
        }
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub subflows: SubflowCount,
    pub delta_avg: f64,
    pub delta_worst: f64,
    /// `(a - b) / b` in percent; `None` when `b` is zero.
    pub improvement_avg_pct: Option<f64>,
    pub improvement_worst_pct: Option<f64>,
}

pub fn relative_improvement(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| 100.0 * (a - b) / b)
}

/// Row-by-row comparison of two sweeps over the same subflow counts.
pub fn compare(a: &[&ResultRow], b: &[&ResultRow]) -> Result<Vec<Comparison>, HarnessError> {
    if a.len() != b.len() {
        return Err(HarnessError::Shape(format!("{} vs {} rows", a.len(), b.len())));
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if x.subflows != y.subflows {
                return Err(HarnessError::Shape(format!(
                    "subflow counts {} vs {}",
                    x.subflows_text(),
                    y.subflows_text()
                )));
            }
            Ok(Comparison {
                subflows: x.subflows,
                delta_avg: x.avg_pct - y.avg_pct,
                delta_worst: x.worst_pct - y.worst_pct,
                improvement_avg_pct: relative_improvement(x.avg_pct, y.avg_pct),
                improvement_worst_pct: relative_improvement(x.worst_pct, y.worst_pct),
            })
        })
        .collect()
}

/// Subflow totals of an all-pairs workload at two per-connection subflow
/// counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RuleBudget {
    pub hosts: u64,
    pub high_subflows: u64,
    pub low_subflows: u64,
    pub high_total: u64,
    pub low_total: u64,
    pub difference: u64,
    pub tcam_rules: u64,
    /// Worst case for a switch that carries one rule per subflow.
    pub high_exceeds_tcam: bool,
    pub low_exceeds_tcam: bool,
}

pub fn rule_budget_report(hosts: u64, high: u64, low: u64, tcam_rules: u64) -> RuleBudget {
    let pairs = hosts * hosts.saturating_sub(1);
    let high_total = pairs * high;
    let low_total = pairs * low;
    RuleBudget {
        hosts,
        high_subflows: high,
        low_subflows: low,
        high_total,
        low_total,
        difference: high_total.abs_diff(low_total),
        tcam_rules,
        high_exceeds_tcam: high_total > tcam_rules,
        low_exceeds_tcam: low_total > tcam_rules,
    }
}

impl fmt::Display for RuleBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = |x: bool| if x { "exceeds" } else { "within" };
        writeln!(f, "hosts {}", self.hosts)?;
        writeln!(
            f,
            "{} subflows per pair: {} subflows ({} TCAM budget of {})",
            self.high_subflows,
            self.high_total,
            flag(self.high_exceeds_tcam),
            self.tcam_rules
        )?;
        writeln!(
            f,
            "{} subflows per pair: {} subflows ({} TCAM budget of {})",
            self.low_subflows,
            self.low_total,
            flag(self.low_exceeds_tcam),
            self.tcam_rules
        )?;
        writeln!(f, "difference: {}", self.difference)
    }
}
