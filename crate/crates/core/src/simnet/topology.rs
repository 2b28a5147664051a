//! Torus topology, concentrator placement and dimension-order routing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::event_model::{NetworkAddress, DEFAULT_CLOCK_HZ};
use crate::routing::{check_consistency, DanglingRoute, DestRoutingTable, SourceRoutingTable};

/// Bits per network word.
pub const WORD_BITS: f64 = 128.0;
/// Torus links used by every node.
pub const TORUS_LINKS: usize = 6;
const ADDRESS_SPACE: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TorusCoord {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl TorusCoord {
    pub const fn new(x: usize, y: usize, z: usize) -> Self {
        Self { x, y, z }
    }

    pub fn get(&self, axis: usize) -> usize {
        [self.x, self.y, self.z][axis]
    }

    fn with(mut self, axis: usize, value: usize) -> Self {
        match axis {
            0 => self.x = value,
            1 => self.y = value,
            _ => self.z = value,
        }
        self
    }

    pub fn in_bounds(&self, dims: [usize; 3]) -> bool {
        self.x < dims[0] && self.y < dims[1] && self.z < dims[2]
    }

    /// Linear index with `x` varying fastest.
    pub fn linear(&self, dims: [usize; 3]) -> usize {
        self.x + dims[0] * (self.y + dims[1] * self.z)
    }

    pub fn from_linear(index: usize, dims: [usize; 3]) -> Self {
        Self { x: index % dims[0], y: (index / dims[0]) % dims[1], z: index / (dims[0] * dims[1]) }
    }

    /// Neighbour one step along `dir`, wrapping around.
    pub fn step(&self, dir: Direction, dims: [usize; 3]) -> Self {
        let n = dims[dir.axis];
        let v = self.get(dir.axis);
        let next = if dir.positive { (v + 1) % n } else { (v + n - 1) % n };
        self.with(dir.axis, next)
    }
}

impl fmt::Display for TorusCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Direction {
    pub axis: usize,
    pub positive: bool,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction { axis: 0, positive: true },
        Direction { axis: 0, positive: false },
        Direction { axis: 1, positive: true },
        Direction { axis: 1, positive: false },
        Direction { axis: 2, positive: true },
        Direction { axis: 2, positive: false },
    ];

    pub fn index(self) -> usize {
        self.axis * 2 + usize::from(!self.positive)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", if self.positive { '+' } else { '-' }, ['x', 'y', 'z'][self.axis])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hop {
    pub dir: Direction,
    pub to: TorusCoord,
}

/// Direction of the first hop from `here` toward `dst`, or `None` when
/// already there. Axes are corrected in X, Y, Z order, each along the shorter
/// way round; an exact tie goes toward increasing index.
pub fn next_hop(here: TorusCoord, dst: TorusCoord, dims: [usize; 3]) -> Option<Direction> {
    (0..3).find_map(|axis| {
        let (a, b, n) = (here.get(axis), dst.get(axis), dims[axis]);
        if a == b {
            return None;
        }
        let forward = (b + n - a) % n;
        Some(Direction { axis, positive: forward <= n - forward })
    })
}

/// Dimension-order minimal path from `src` to `dst`.
pub fn torus_route(src: TorusCoord, dst: TorusCoord, dims: [usize; 3]) -> Vec<Hop> {
    let mut path = Vec::new();
    let mut here = src;
    while let Some(dir) = next_hop(here, dst, dims) {
        here = here.step(dir, dims);
        path.push(Hop { dir, to: here });
    }
    path
}

/// Minimal hop count on the torus.
pub fn torus_distance(src: TorusCoord, dst: TorusCoord, dims: [usize; 3]) -> usize {
    (0..3)
        .map(|axis| {
            let d = src.get(axis).abs_diff(dst.get(axis));
            d.min(dims[axis] - d)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologySpec {
    pub torus_dims: [usize; 3],
    pub wafers: usize,
    pub fpgas_per_wafer: usize,
    pub concentrators_per_wafer: usize,
    pub fpgas_per_concentrator: usize,
    pub hicanns_per_fpga: usize,
    /// Bits/s per torus link.
    pub link_bandwidth: f64,
    /// Bits/s per HICANN link.
    pub hicann_link_bandwidth: f64,
    pub nic_links: usize,
    pub clock_hz: f64,
    /// Cycles from the end of serialization to arrival, per link.
    pub hop_latency: u64,
    /// Words per cycle on the FPGA to concentrator links, both directions.
    pub fpga_link_words_per_cycle: f64,
    /// Torus node of each concentrator, wafer-major. Defaults to consecutive
    /// linear indices (x fastest).
    pub concentrator_placement: Option<Vec<TorusCoord>>,
}

impl Default for TopologySpec {
    fn default() -> Self {
        Self {
            torus_dims: [2, 2, 2],
            wafers: 1,
            fpgas_per_wafer: 48,
            concentrators_per_wafer: 8,
            fpgas_per_concentrator: 6,
            hicanns_per_fpga: 8,
            link_bandwidth: 12.0 * 8.4e9,
            hicann_link_bandwidth: 1e9,
            nic_links: 7,
            clock_hz: DEFAULT_CLOCK_HZ,
            hop_latency: 20,
            fpga_link_words_per_cycle: 1.0,
            concentrator_placement: None,
        }
    }
}

impl TopologySpec {
    /// Torus link throughput in network words per FPGA cycle.
    pub fn torus_words_per_cycle(&self) -> f64 {
        self.link_bandwidth / (WORD_BITS * self.clock_hz)
    }

    pub fn node_count(&self) -> usize {
        self.torus_dims.iter().product()
    }

    pub fn fpga_count(&self) -> usize {
        self.wafers * self.fpgas_per_wafer
    }

    pub fn concentrator_count(&self) -> usize {
        self.wafers * self.concentrators_per_wafer
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("torus dimensions must be positive, got {0:?}")]
    ZeroDimension([usize; 3]),
    #[error("{fpgas_per_concentrator} FPGAs x {concentrators} concentrators != {fpgas_per_wafer} FPGAs per wafer")]
    Composition { fpgas_per_concentrator: usize, concentrators: usize, fpgas_per_wafer: usize },
    #[error("{count} {what} exceed the 16-bit address space")]
    AddressExhaustion { what: &'static str, count: usize },
    #[error("node {node} uses {used} links but the NIC has {available}")]
    DegreeViolation { node: TorusCoord, used: usize, available: usize },
    #[error("{needed} concentrators do not fit on {nodes} torus nodes")]
    TooManyConcentrators { needed: usize, nodes: usize },
    #[error("concentrator placement: {0}")]
    Placement(String),
    #[error("{0} HICANNs per FPGA exceed the 8-bit multicast mask")]
    TooManyHicanns(usize),
    #[error("{what} must be positive and finite, got {value}")]
    BadRate { what: &'static str, value: f64 },
    #[error("tables assigned to FPGA {fpga}, but the topology has {count} FPGAs")]
    UnknownFpga { fpga: usize, count: usize },
}

#[derive(Debug, Clone)]
pub struct TorusNode {
    pub coord: TorusCoord,
    pub address: NetworkAddress,
    /// Global concentrator index hosted here, if any.
    pub concentrator: Option<usize>,
    /// Global FPGA indices attached through the concentrator, by port.
    pub fpgas: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FpgaInfo {
    pub index: usize,
    pub address: NetworkAddress,
    pub wafer: usize,
    pub concentrator: usize,
    pub node: usize,
    pub port: usize,
}

#[derive(Debug, Clone, Default)]
pub struct FpgaTables {
    pub src: Arc<SourceRoutingTable>,
    pub dst: Arc<DestRoutingTable>,
}

/// Which tables each FPGA gets; FPGAs not listed use `default`.
#[derive(Debug, Clone, Default)]
pub struct TableAssignment {
    pub default: Option<FpgaTables>,
    pub per_fpga: BTreeMap<usize, FpgaTables>,
}

impl TableAssignment {
    pub fn assign(&mut self, fpga: usize, src: SourceRoutingTable, dst: DestRoutingTable) {
        self.per_fpga.insert(fpga, FpgaTables { src: Arc::new(src), dst: Arc::new(dst) });
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingViolation {
    pub fpga: usize,
    pub route: DanglingRoute,
}

impl fmt::Display for RoutingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fpga {}: {}", self.fpga, self.route)
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    spec: TopologySpec,
    nodes: Vec<TorusNode>,
    fpgas: Vec<FpgaInfo>,
    tables: Vec<FpgaTables>,
    violations: Vec<RoutingViolation>,
}

fn check_rate(what: &'static str, value: f64) -> Result<(), TopologyError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(TopologyError::BadRate { what, value })
    }
}

/// Builds the topology without routing tables.
pub fn build_topology(spec: &TopologySpec) -> Result<Network, TopologyError> {
    Network::build(spec, &TableAssignment::default())
}

impl Network {
    /// Lays out torus nodes, concentrators and FPGAs, installs the tables and
    /// records every source entry that has no matching destination entry.
    pub fn build(spec: &TopologySpec, tables: &TableAssignment) -> Result<Self, TopologyError> {
        let dims = spec.torus_dims;
        if dims.contains(&0) {
            return Err(TopologyError::ZeroDimension(dims));
        }
        if spec.fpgas_per_concentrator * spec.concentrators_per_wafer != spec.fpgas_per_wafer {
            return Err(TopologyError::Composition {
                fpgas_per_concentrator: spec.fpgas_per_concentrator,
                concentrators: spec.concentrators_per_wafer,
                fpgas_per_wafer: spec.fpgas_per_wafer,
            });
        }
        if spec.hicanns_per_fpga > 8 {
            return Err(TopologyError::TooManyHicanns(spec.hicanns_per_fpga));
        }
        check_rate("link bandwidth", spec.link_bandwidth)?;
        check_rate("HICANN link bandwidth", spec.hicann_link_bandwidth)?;
        check_rate("clock frequency", spec.clock_hz)?;
        check_rate("FPGA link rate", spec.fpga_link_words_per_cycle)?;

        let node_count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).unwrap_or(usize::MAX);
        if node_count > ADDRESS_SPACE {
            return Err(TopologyError::AddressExhaustion { what: "torus nodes", count: node_count });
        }
        let fpga_count = spec.wafers.saturating_mul(spec.fpgas_per_wafer);
        if fpga_count > ADDRESS_SPACE {
            return Err(TopologyError::AddressExhaustion { what: "FPGAs", count: fpga_count });
        }
        let conc_count = spec.concentrator_count();
        if conc_count > node_count {
            return Err(TopologyError::TooManyConcentrators { needed: conc_count, nodes: node_count });
        }
        if let Some(&fpga) = tables.per_fpga.keys().find(|&&f| f >= fpga_count) {
            return Err(TopologyError::UnknownFpga { fpga, count: fpga_count });
        }

        let placement: Vec<usize> = match &spec.concentrator_placement {
            None => (0..conc_count).collect(),
            Some(coords) => {
                if coords.len() != conc_count {
                    return Err(TopologyError::Placement(format!(
                        "{} coordinates given for {} concentrators",
                        coords.len(),
                        conc_count
                    )));
                }
                let mut used = BTreeSet::new();
                let mut out = Vec::with_capacity(coords.len());
                for c in coords {
                    if !c.in_bounds(dims) {
                        return Err(TopologyError::Placement(format!("{c} lies outside the {dims:?} torus")));
                    }
                    if !used.insert(*c) {
                        return Err(TopologyError::Placement(format!("{c} hosts two concentrators")));
                    }
                    out.push(c.linear(dims));
                }
                out
            }
        };

        let mut nodes: Vec<TorusNode> = (0..node_count)
            .map(|i| TorusNode {
                coord: TorusCoord::from_linear(i, dims),
                address: NetworkAddress(i as u16),
                concentrator: None,
                fpgas: Vec::new(),
            })
            .collect();
        for (conc, &node) in placement.iter().enumerate() {
            nodes[node].concentrator = Some(conc);
        }

        let mut fpgas = Vec::with_capacity(fpga_count);
        for index in 0..fpga_count {
            let wafer = index / spec.fpgas_per_wafer;
            let local = index % spec.fpgas_per_wafer;
            let concentrator = wafer * spec.concentrators_per_wafer + local / spec.fpgas_per_concentrator;
            let node = placement[concentrator];
            let port = nodes[node].fpgas.len();
            nodes[node].fpgas.push(index);
            fpgas.push(FpgaInfo { index, address: NetworkAddress(index as u16), wafer, concentrator, node, port });
        }

        for node in &nodes {
            let used = TORUS_LINKS + usize::from(node.concentrator.is_some());
            if used > spec.nic_links {
                return Err(TopologyError::DegreeViolation { node: node.coord, used, available: spec.nic_links });
            }
        }

        let tables: Vec<FpgaTables> = (0..fpga_count)
            .map(|i| tables.per_fpga.get(&i).or(tables.default.as_ref()).cloned().unwrap_or_default())
            .collect();

        let mut net = Self { spec: spec.clone(), nodes, fpgas, tables, violations: Vec::new() };
        net.violations = net.verify_routing();
        for v in &net.violations {
            log::warn!("routing table inconsistency: {v}");
        }
        Ok(net)
    }

    fn verify_routing(&self) -> Vec<RoutingViolation> {
        self.tables
            .iter()
            .enumerate()
            .flat_map(|(fpga, t)| {
                check_consistency(&t.src, |addr| self.fpga_by_address(addr).map(|f| &*self.tables[f].dst))
                    .into_iter()
                    .map(move |route| RoutingViolation { fpga, route })
            })
            .collect()
    }

    pub fn spec(&self) -> &TopologySpec {
        &self.spec
    }

    pub fn nodes(&self) -> &[TorusNode] {
        &self.nodes
    }

    pub fn fpgas(&self) -> &[FpgaInfo] {
        &self.fpgas
    }

    pub fn tables(&self, fpga: usize) -> &FpgaTables {
        &self.tables[fpga]
    }

    pub fn routing_violations(&self) -> &[RoutingViolation] {
        &self.violations
    }

    pub fn fpga_by_address(&self, addr: NetworkAddress) -> Option<usize> {
        let i = addr.get() as usize;
        (i < self.fpgas.len()).then_some(i)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.spec.torus_dims
    }

    /// Links in use at a node: six torus links plus one aggregated
    /// concentrator link when FPGAs are attached.
    pub fn node_degree(&self, node: usize) -> usize {
        TORUS_LINKS + usize::from(self.nodes[node].concentrator.is_some())
    }
}
