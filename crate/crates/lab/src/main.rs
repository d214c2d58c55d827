use std::path::PathBuf;
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mpsdn_lab::formats;
use mpsdn_lab::harness::{
    self, parse_assignment, parse_counts, parse_path_mode, parse_pattern, rule_budget_report, run_experiment_with,
    sanitize, subflows_text, ExperimentConfig, Routing, Ties, TopologySpec, DEFAULT_SEEDS, DEFAULT_TCAM_RULES,
};
use mpsdn_core::pathing::{TopologyManager, DEFAULT_HOP_SLACK};
use mpsdn_core::topology::Address;
use mpsdn_core::traffic::{self, SubflowCount, DEFAULT_PORT_BASE};

#[derive(Parser)]
#[command(name = "mpsdn", version, about = "Flow-level simulator for MPTCP-aware SDN routing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded sweep and write summary.csv plus rank files.
    Run(RunArgs),
    /// Write a topology file.
    Topo(TopoArgs),
    /// Print the path set between two addresses.
    Paths(PathsArgs),
    /// Write a traffic matrix as CSV.
    Traffic(TrafficArgs),
    /// Subflow totals for an all-pairs workload.
    Budget(BudgetArgs),
}

#[derive(Args)]
struct RunArgs {
    /// fattree:k=8 | jellyfish:hosts=120,switches=60,ports=12 | dhjellyfish:...
    #[arg(long)]
    topology: String,
    /// Comma-separated traffic patterns: pt, ut.
    #[arg(long, default_value = "pt")]
    traffic: String,
    /// Comma-separated assignment modes: m, r.
    #[arg(long, default_value = "m,r")]
    mode: String,
    /// Path mode, repeatable: shortest | kshortest:k=N | disjoint:k=N.
    #[arg(long = "paths", required = true)]
    paths: Vec<String>,
    /// Total subflows per connection, e.g. 1..6 or 2,4.
    #[arg(long, conflicts_with = "per_pair")]
    subflows: Option<String>,
    /// Subflows per address pair, e.g. 1..4.
    #[arg(long)]
    per_pair: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SEEDS)]
    seeds: u32,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Extra links allowed over the shortest path during enumeration.
    #[arg(long, default_value_t = DEFAULT_HOP_SLACK)]
    hop_slack: u32,
    /// Order equal-length paths lexicographically instead of per-pair salted.
    #[arg(long)]
    lexicographic: bool,
    /// Also write per-run handshake traces and allocations.
    #[arg(long)]
    traces: bool,
    #[arg(long, env = "MPSDN_OUT", default_value = "mpsdn-out")]
    out: PathBuf,
}

#[derive(Args)]
struct TopoArgs {
    #[arg(long)]
    topology: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PathsArgs {
    /// Topology spec, or a topology file written by `topo`.
    #[arg(long)]
    topology: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Source address, dotted or decimal.
    #[arg(long)]
    src: String,
    #[arg(long)]
    dst: String,
    #[arg(long, default_value = "shortest")]
    paths: String,
    #[arg(long, default_value_t = DEFAULT_HOP_SLACK)]
    hop_slack: u32,
}

#[derive(Args)]
struct TrafficArgs {
    #[arg(long)]
    topology: String,
    #[arg(long, default_value = "pt")]
    traffic: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long, default_value_t = 100)]
    hosts: u64,
    #[arg(long, default_value_t = 6)]
    high: u64,
    #[arg(long, default_value_t = 4)]
    low: u64,
    #[arg(long, default_value_t = DEFAULT_TCAM_RULES)]
    tcam: u64,
}

fn split(list: &str) -> impl Iterator<Item = &str> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_address(s: &str) -> Result<Address> {
    if let Ok(v) = s.parse::<u32>() {
        return Ok(Address(v));
    }
    let ip: std::net::Ipv4Addr = s.parse().with_context(|| format!("bad address {s:?}"))?;
    Ok(Address(u32::from(ip)))
}

fn load_topology(spec: &str, seed: u64) -> Result<mpsdn_core::Topology> {
    if let Ok(s) = spec.parse::<TopologySpec>() {
        return Ok(s.build(seed)?);
    }
    let text = std::fs::read_to_string(spec).with_context(|| format!("{spec:?} is neither a spec nor a file"))?;
    Ok(formats::parse_topology(&text)?)
}

fn run(args: RunArgs) -> Result<()> {
    let topology: TopologySpec = args.topology.parse()?;
    let patterns = split(&args.traffic).map(parse_pattern).collect::<Result<Vec<_>, _>>()?;
    let modes = split(&args.mode).map(parse_assignment).collect::<Result<Vec<_>, _>>()?;
    let paths = args.paths.iter().map(|p| parse_path_mode(p)).collect::<Result<Vec<_>, _>>()?;
    let subflows: Vec<SubflowCount> = match (&args.subflows, &args.per_pair) {
        (Some(s), None) => parse_counts(s)?.into_iter().map(SubflowCount::Total).collect(),
        (None, Some(n)) => parse_counts(n)?.into_iter().map(SubflowCount::PerPair).collect(),
        (None, None) if topology.is_dual_homed() => vec![SubflowCount::PerPair(1)],
        (None, None) => (1..=6).map(SubflowCount::Total).collect(),
        (Some(_), Some(_)) => bail!("--subflows and --per-pair are exclusive"),
    };
    let mut routings = Vec::new();
    for &p in &paths {
        for &m in &modes {
            routings.push(Routing::new(m, p));
        }
    }
    let config = ExperimentConfig {
        topology,
        patterns,
        routings,
        subflows,
        seeds: args.seeds,
        first_seed: args.first_seed,
        hop_slack: args.hop_slack,
        ties: if args.lexicographic { Ties::Lexicographic } else { Ties::Salted },
        port_base: DEFAULT_PORT_BASE,
    };

    let out = args.out;
    std::fs::create_dir_all(&out)?;
    let write_error = Mutex::new(None);
    let result = run_experiment_with(&config, |label, pattern, count, run| {
        if !args.traces {
            return;
        }
        let stem = format!(
            "{}_{}_{}_seed{}",
            sanitize(label),
            pattern,
            sanitize(&subflows_text(count)),
            run.seed
        );
        let n = run.report.ranks_pct.len();
        let writes = [
            (format!("trace_{stem}.csv"), formats::trace_csv(&run.trace)),
            (
                format!("alloc_{stem}.csv"),
                formats::allocation_csv(&run.allocation, run.report.optimal, n),
            ),
        ];
        for (name, body) in writes {
            if let Err(e) = std::fs::write(out.join(name), body) {
                *write_error.lock().unwrap() = Some(e);
            }
        }
    })?;
    if let Some(e) = write_error.into_inner().unwrap() {
        return Err(e.into());
    }
    harness::write_outputs(&out, &result.rows)?;
    print!("{}", harness::render_table(&result));
    for r in result.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "{} {} {}: {}",
            r.label,
            r.pattern,
            r.subflows_text(),
            r.error.as_deref().unwrap_or_default()
        );
    }
    println!("wrote {}", out.join("summary.csv").display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Topo(args) => {
            let t = load_topology(&args.topology, args.seed)?;
            let text = formats::write_topology(&t);
            match args.out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Paths(args) => {
            let t = load_topology(&args.topology, args.seed)?;
            let mode = parse_path_mode(&args.paths)?;
            let tm = TopologyManager::new(&t, args.hop_slack, Default::default());
            let set = tm.compute(parse_address(&args.src)?, parse_address(&args.dst)?, mode)?;
            print!("{set}");
            Ok(())
        }
        Command::Traffic(args) => {
            let t = load_topology(&args.topology, args.seed)?;
            let m = traffic::generate(parse_pattern(&args.traffic)?, &t, args.seed)?;
            print!("{}", formats::traffic_csv(&m));
            Ok(())
        }
        Command::Budget(args) => {
            print!("{}", rule_budget_report(args.hosts, args.high, args.low, args.tcam));
            Ok(())
        }
    }
}
