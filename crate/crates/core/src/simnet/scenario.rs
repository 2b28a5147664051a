//! TOML scenario files.
//!
//! ```toml
//! seed = 7
//! until = 100000
//!
//! [topology]
//! torus_dims = [2, 2, 2]
//! wafers = 1
//!
//! [traffic]
//! kind = "poisson"        # or "trace"
//! rate = 0.25
//! sources = "table"       # "table", "all" or "weighted"
//! deadline_slack = 1000
//!
//! [aggregation]
//! buckets = 8
//!
//! [[tables]]
//! path = "tables/default.tbl"   # no `fpga` key: used by every FPGA
//!
//! [output]
//! delivery_log = "deliveries.txt"
//! ```
//!
//! Every key is optional. Relative paths resolve against the scenario file's
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::kernel::{HostConfig, SimConfig};
use super::topology::{Network, TableAssignment, TopologyError, TopologySpec, TorusCoord};
use super::traffic::{parse_trace, SourceSelection, TrafficKind, TrafficSpec};
use crate::event_model::{HicannLink, PulseAddress};
use crate::hostcomm::RingConfig;
use crate::routing::load_tables;

pub const DEFAULT_UNTIL: u64 = 100_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{}: {msg}", path.display())]
    Invalid { path: PathBuf, msg: String },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    seed: Option<u64>,
    until: Option<u64>,
    #[serde(default)]
    topology: RawTopology,
    #[serde(default)]
    traffic: RawTraffic,
    #[serde(default)]
    aggregation: RawAggregation,
    #[serde(default)]
    host: RawHost,
    #[serde(default)]
    tables: Vec<RawTables>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    torus_dims: Option<[usize; 3]>,
    wafers: Option<usize>,
    fpgas_per_wafer: Option<usize>,
    concentrators_per_wafer: Option<usize>,
    fpgas_per_concentrator: Option<usize>,
    hicanns_per_fpga: Option<usize>,
    link_bandwidth: Option<f64>,
    hicann_link_bandwidth: Option<f64>,
    nic_links: Option<usize>,
    clock_hz: Option<f64>,
    hop_latency: Option<u64>,
    fpga_link_words_per_cycle: Option<f64>,
    concentrator_placement: Option<Vec<[usize; 3]>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeight {
    link: u64,
    pulse: u64,
    weight: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraffic {
    kind: Option<String>,
    rate: Option<f64>,
    sources: Option<String>,
    #[serde(default)]
    weights: Vec<RawWeight>,
    deadline_slack: Option<u64>,
    deadline_jitter: Option<u64>,
    trace: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAggregation {
    buckets: Option<usize>,
    capacity: Option<usize>,
    drain_rate: Option<usize>,
    deadline_lead: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHost {
    enabled: Option<bool>,
    ring_size: Option<usize>,
    notification_latency: Option<u64>,
    notification_batch: Option<usize>,
    consume_bytes_per_cycle: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTables {
    fpga: Option<usize>,
    path: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    delivery_log: Option<PathBuf>,
}

/// A fully resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub path: PathBuf,
    pub until: u64,
    pub topology: TopologySpec,
    pub traffic: TrafficSpec,
    pub config: SimConfig,
    pub tables: TableAssignment,
    pub delivery_log: Option<PathBuf>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path)
    }

    /// Parses scenario text as if read from `path`.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            msg: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let invalid = |msg: String| ScenarioError::Invalid { path: path.to_path_buf(), msg };

        let mut topology = TopologySpec::default();
        let t = raw.topology;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(topology.torus_dims, t.torus_dims);
        set!(topology.wafers, t.wafers);
        set!(topology.fpgas_per_wafer, t.fpgas_per_wafer);
        set!(topology.concentrators_per_wafer, t.concentrators_per_wafer);
        set!(topology.fpgas_per_concentrator, t.fpgas_per_concentrator);
        set!(topology.hicanns_per_fpga, t.hicanns_per_fpga);
        set!(topology.link_bandwidth, t.link_bandwidth);
        set!(topology.hicann_link_bandwidth, t.hicann_link_bandwidth);
        set!(topology.nic_links, t.nic_links);
        set!(topology.clock_hz, t.clock_hz);
        set!(topology.hop_latency, t.hop_latency);
        set!(topology.fpga_link_words_per_cycle, t.fpga_link_words_per_cycle);
        topology.concentrator_placement =
            t.concentrator_placement.map(|v| v.into_iter().map(|[x, y, z]| TorusCoord::new(x, y, z)).collect());

        let tr = raw.traffic;
        let kind = match tr.kind.as_deref().unwrap_or("poisson") {
            "poisson" => {
                let sources = match tr.sources.as_deref().unwrap_or("table") {
                    "table" => SourceSelection::TableUniform,
                    "all" => SourceSelection::AllKeys,
                    "weighted" => {
                        let mut w = Vec::with_capacity(tr.weights.len());
                        for x in &tr.weights {
                            let link =
                                HicannLink::try_from(x.link).map_err(|e| invalid(format!("traffic.weights: {e}")))?;
                            let pulse = PulseAddress::try_from(x.pulse)
                                .map_err(|e| invalid(format!("traffic.weights: {e}")))?;
                            w.push((link, pulse, x.weight));
                        }
                        SourceSelection::Weighted(w)
                    }
                    other => return Err(invalid(format!("unknown traffic.sources `{other}`"))),
                };
                TrafficKind::PoissonRate { rate: tr.rate.unwrap_or(0.0), sources }
            }
            "trace" => {
                let rel = tr.trace.ok_or_else(|| invalid("trace traffic needs traffic.trace".into()))?;
                let trace_path = resolve(&rel);
                let text = fs::read_to_string(&trace_path)
                    .map_err(|source| ScenarioError::Io { path: trace_path.clone(), source })?;
                let records = parse_trace(&text).map_err(|e| ScenarioError::Parse {
                    path: trace_path.clone(),
                    line: e.line,
                    msg: e.msg,
                })?;
                TrafficKind::Trace(records)
            }
            other => return Err(invalid(format!("unknown traffic.kind `{other}`"))),
        };
        let defaults = TrafficSpec::default();
        let traffic = TrafficSpec {
            kind,
            deadline_slack: tr.deadline_slack.unwrap_or(defaults.deadline_slack),
            deadline_jitter: tr.deadline_jitter.unwrap_or(defaults.deadline_jitter),
            seed: raw.seed.unwrap_or(0),
        };

        let mut config = SimConfig::default();
        let a = raw.aggregation;
        set!(config.aggregation.buckets, a.buckets);
        set!(config.aggregation.capacity, a.capacity);
        set!(config.aggregation.drain_rate, a.drain_rate);
        set!(config.aggregation.deadline_lead, a.deadline_lead);
        let h = raw.host;
        let mut host = HostConfig { ring: RingConfig::default(), ..HostConfig::default() };
        set!(host.enabled, h.enabled);
        set!(host.ring.size, h.ring_size);
        set!(host.ring.notification_latency, h.notification_latency);
        set!(host.ring.notification_batch, h.notification_batch);
        set!(host.consume_bytes_per_cycle, h.consume_bytes_per_cycle);
        config.host = host;

        let mut tables = TableAssignment::default();
        for entry in &raw.tables {
            let table_path = resolve(&entry.path);
            let text = fs::read_to_string(&table_path)
                .map_err(|source| ScenarioError::Io { path: table_path.clone(), source })?;
            let (src, dst) = load_tables(&text)
                .map_err(|e| ScenarioError::Invalid { path: table_path.clone(), msg: e.to_string() })?;
            match entry.fpga {
                Some(f) => tables.assign(f, src, dst),
                None => {
                    if tables.default.is_some() {
                        return Err(invalid("more than one [[tables]] entry without `fpga`".into()));
                    }
                    tables.default = Some(super::topology::FpgaTables { src: src.into(), dst: dst.into() });
                }
            }
        }

        let delivery_log = raw.output.delivery_log.map(|p| resolve(&p));
        config.record_deliveries = delivery_log.is_some();

        Ok(Self {
            path: path.to_path_buf(),
            until: raw.until.unwrap_or(DEFAULT_UNTIL),
            topology,
            traffic,
            config,
            tables,
            delivery_log,
        })
    }

    pub fn build_network(&self) -> Result<Network, TopologyError> {
        Network::build(&self.topology, &self.tables)
    }
}
