//! Command-line interface.
//!
//! Exit codes: 0 success, 1 user or configuration error, 2 internal
//! invariant violation.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::event_model::{Guid, NetworkAddress, Timestamp, WireEvent};
use crate::packetizer::{decode_packet, encode_packet};
use crate::routing::{check_consistency, load_tables, DestRoutingTable};
use crate::simnet::kernel::{SimError, Simulation};
use crate::simnet::scenario::Scenario;
use crate::simnet::traffic::format_trace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "spikenet", version, about = "Spike-event network tools and simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation scenario and print its statistics.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario cycle count.
        #[arg(long)]
        until: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Write statistics here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that every source route has a destination entry.
    ValidateTables {
        #[arg(long)]
        src: PathBuf,
        /// Destination tables as ADDR=PATH, ADDR in hex (0x...) or decimal.
        #[arg(long, value_name = "ADDR=PATH")]
        dst: Vec<String>,
    },
    /// Encode events (GUID:TIMESTAMP) into a packet, printed as hex.
    PacketEncode {
        #[arg(long)]
        dest: String,
        #[arg(long)]
        source: String,
        #[arg(required = true, value_name = "GUID:TS")]
        events: Vec<String>,
    },
    /// Decode a hex packet.
    PacketDecode { hex: String },
    /// Print the topology of a scenario.
    ShowTopology {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => EXIT_USER,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::User(m) => write!(f, "error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

fn user<E: std::fmt::Display>(e: E) -> CliError {
    CliError::User(e.to_string())
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::User(format!("write failed: {e}"))
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        if e.is_invariant() {
            CliError::Internal(e.to_string())
        } else {
            CliError::User(e.to_string())
        }
    }
}

/// Parses `0x`-prefixed hex or decimal.
pub fn parse_number(s: &str) -> Result<u64, String> {
    let t = s.trim();
    let r = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16),
        None => t.parse(),
    };
    r.map_err(|_| format!("invalid number `{s}`"))
}

fn parse_address(s: &str) -> Result<NetworkAddress, CliError> {
    let v = parse_number(s).map_err(CliError::User)?;
    u16::try_from(v).map(NetworkAddress).map_err(|_| CliError::User(format!("address {s} does not fit in 16 bits")))
}

fn parse_event(s: &str) -> Result<WireEvent, CliError> {
    let (g, t) = s.split_once(':').ok_or_else(|| CliError::User(format!("event `{s}` is not GUID:TIMESTAMP")))?;
    let guid = Guid::try_from(parse_number(g).map_err(CliError::User)?).map_err(user)?;
    let timestamp = Timestamp::try_from(parse_number(t).map_err(CliError::User)?).map_err(user)?;
    Ok(WireEvent { guid, timestamp })
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USER } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Run { scenario, seed, until, format, out: out_path } => {
            let mut sc = Scenario::load(&scenario).map_err(user)?;
            if let Some(s) = seed {
                sc.traffic.seed = s;
            }
            let until = until.unwrap_or(sc.until);
            let net = sc.build_network().map_err(user)?;
            for v in net.routing_violations() {
                log::warn!("dangling route: {v}");
            }
            let mut sim = Simulation::new(&net, &sc.traffic, sc.config.clone())?;
            sim.run_until(until)?;
            let stats = sim.finish()?;
            let text = match format {
                Format::Json => stats.to_json(),
                Format::Csv => stats.to_csv(),
            };
            match out_path {
                Some(p) => fs::write(&p, text).map_err(|e| CliError::User(format!("{}: {e}", p.display())))?,
                None => out.write_all(text.as_bytes()).map_err(io_err)?,
            }
            if let Some(p) = &sc.delivery_log {
                fs::write(p, format_trace(sim.deliveries()))
                    .map_err(|e| CliError::User(format!("{}: {e}", p.display())))?;
            }
            writeln!(err, "{}", stats.summary_line()).map_err(io_err)?;
            Ok(EXIT_OK)
        }
        Command::ValidateTables { src, dst } => {
            let read = |p: &PathBuf| fs::read_to_string(p).map_err(|e| CliError::User(format!("{}: {e}", p.display())));
            let (src_table, _) =
                load_tables(&read(&src)?).map_err(|e| CliError::User(format!("{}: {e}", src.display())))?;
            let mut dests: Vec<(NetworkAddress, DestRoutingTable)> = Vec::new();
            for spec in &dst {
                let (addr, path) =
                    spec.split_once('=').ok_or_else(|| CliError::User(format!("--dst `{spec}` is not ADDR=PATH")))?;
                let path = PathBuf::from(path);
                let (_, table) =
                    load_tables(&read(&path)?).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
                dests.push((parse_address(addr)?, table));
            }
            let dangling = check_consistency(&src_table, |a| dests.iter().find(|(addr, _)| *addr == a).map(|(_, t)| t));
            for d in &dangling {
                writeln!(out, "dangling: {d}").map_err(io_err)?;
            }
            writeln!(out, "{} source entries, {} dangling", src_table.len(), dangling.len()).map_err(io_err)?;
            Ok(if dangling.is_empty() { EXIT_OK } else { EXIT_USER })
        }
        Command::PacketEncode { dest, source, events } => {
            let events = events.iter().map(|s| parse_event(s)).collect::<Result<Vec<_>, _>>()?;
            let bytes = encode_packet(parse_address(&dest)?, parse_address(&source)?, &events).map_err(user)?;
            writeln!(out, "{}", hex::encode(bytes)).map_err(io_err)?;
            Ok(EXIT_OK)
        }
        Command::PacketDecode { hex: text } => {
            let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
            let bytes = hex::decode(&cleaned).map_err(|e| CliError::User(format!("invalid hex: {e}")))?;
            let (h, events) = decode_packet(&bytes).map_err(user)?;
            writeln!(out, "dest {} source {} type {} events {}", h.dest, h.source, h.msg_type, h.event_count)
                .map_err(io_err)?;
            for (i, e) in events.iter().enumerate() {
                writeln!(out, "{i:3} guid {:#07x} ts {}", e.guid.get(), e.timestamp.get()).map_err(io_err)?;
            }
            Ok(EXIT_OK)
        }
        Command::ShowTopology { scenario } => {
            let sc = Scenario::load(&scenario).map_err(user)?;
            let net = sc.build_network().map_err(user)?;
            let spec = net.spec();
            let d = net.dims();
            writeln!(
                out,
                "torus {}x{}x{}, {} nodes, {} FPGAs, {} concentrators, {:.3} words/cycle per torus link",
                d[0],
                d[1],
                d[2],
                net.nodes().len(),
                net.fpgas().len(),
                spec.concentrator_count(),
                spec.torus_words_per_cycle()
            )
            .map_err(io_err)?;
            for (i, n) in net.nodes().iter().enumerate() {
                let conc = n.concentrator.map_or("-".to_string(), |c| c.to_string());
                writeln!(
                    out,
                    "node {i} {} addr {} concentrator {conc} degree {} fpgas {:?}",
                    n.coord,
                    n.address,
                    net.node_degree(i),
                    n.fpgas
                )
                .map_err(io_err)?;
            }
            for v in net.routing_violations() {
                writeln!(out, "dangling: {v}").map_err(io_err)?;
            }
            Ok(EXIT_OK)
        }
    }
}
