//! Cycle-based simulation kernel.
//!
//! Every cycle runs four phases in a fixed order:
//!
//! 1. packets whose link latency has elapsed arrive and are switched onto
//!    their next link, or delivered if they reached their FPGA;
//! 2. every FPGA ticks its bucket manager, injects new events, and turns
//!    flushes into packets on its uplink;
//! 3. every link serializes from its input queues, round-robin over inputs;
//! 4. host channels move monitoring records FPGA to host.
//!
//! Links, FPGAs and queues are visited in index order, which makes a run a
//! pure function of its inputs.

use std::collections::{HashMap, VecDeque};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::stats::{latency_bin, HostStats, LinkUtilization, SimStats, SCHEMA_VERSION};
use super::topology::{next_hop, Direction, FpgaTables, Network, TopologyError};
use super::traffic::{SourceSelection, TraceRecord, TrafficError, TrafficKind, TrafficSpec};
use crate::aggregation::{AggregationConfig, AggregationError, BucketManager, FlushRecord, FlushTrigger};
use crate::event_model::{
    absolute_deadline, timestamp_of_clock, Guid, HicannLink, NetworkAddress, PulseAddress, SpikeEvent, Timestamp,
    WireEvent,
};
use crate::hostcomm::{HostCommError, PutOutcome, RingChannel, RingConfig};
use crate::packetizer::{decode_packet, Packet};
use crate::routing::{route_dest, route_source, MissCounter, SourceKey};

/// Fixed-point scale for link rates.
const UNIT: u64 = 1 << 16;
/// Bytes per host monitoring record: delivery cycle and GUID, both u32 LE.
pub const MONITOR_RECORD_BYTES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct HostConfig {
    pub enabled: bool,
    pub ring: RingConfig,
    /// Bytes the host reads (and credits back) per cycle.
    pub consume_bytes_per_cycle: usize,
}

impl Default for HostConfig {
    fn default() -> Self {
        Self { enabled: true, ring: RingConfig::default(), consume_bytes_per_cycle: 64 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimConfig {
    pub aggregation: AggregationConfig,
    pub host: HostConfig,
    pub record_deliveries: bool,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    HostComm(#[from] HostCommError),
    #[error("host ring must hold at least one {MONITOR_RECORD_BYTES}-byte record")]
    RingTooSmall,
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl SimError {
    pub fn is_invariant(&self) -> bool {
        matches!(self, SimError::Invariant(_))
    }
}

macro_rules! invariant {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(SimError::Invariant(format!($($arg)*)));
        }
    };
}

#[derive(Debug, Clone, Copy)]
struct EventTag {
    id: u64,
    inject_cycle: u64,
    deadline_cycle: u64,
    wire: WireEvent,
}

#[derive(Debug)]
struct SimPacket {
    bytes: Vec<u8>,
    words: u64,
    tags: Vec<EventTag>,
    dst_fpga: usize,
    latency_sum: u64,
    serialization_bound: u64,
}

#[derive(Debug, Clone, Copy)]
enum Target {
    Node { node: usize, slot: usize },
    Fpga(usize),
}

#[derive(Debug)]
struct Link {
    name: String,
    units_per_cycle: u64,
    latency: u64,
    target: Target,
    inputs: Vec<VecDeque<SimPacket>>,
    rr: usize,
    current: Option<(SimPacket, u64)>,
    in_flight: VecDeque<(u64, SimPacket)>,
    units_used: u64,
    events_sent: u64,
}

impl Link {
    fn new(name: String, words_per_cycle: f64, latency: u64, target: Target, inputs: usize) -> Self {
        Self {
            name,
            units_per_cycle: ((words_per_cycle * UNIT as f64).round() as u64).max(1),
            latency,
            target,
            inputs: (0..inputs).map(|_| VecDeque::new()).collect(),
            rr: 0,
            current: None,
            in_flight: VecDeque::new(),
            units_used: 0,
            events_sent: 0,
        }
    }

    /// Minimum whole cycles to serialize `words`.
    fn serialization_cycles(&self, words: u64) -> u64 {
        (words * UNIT).div_ceil(self.units_per_cycle)
    }

    fn next_packet(&mut self) -> Option<SimPacket> {
        let n = self.inputs.len();
        for k in 0..n {
            let i = (self.rr + k) % n;
            if let Some(p) = self.inputs[i].pop_front() {
                self.rr = (i + 1) % n;
                return Some(p);
            }
        }
        None
    }

    fn step(&mut self, now: u64) {
        let mut budget = self.units_per_cycle;
        while budget > 0 {
            if self.current.is_none() {
                match self.next_packet() {
                    Some(p) => {
                        let need = p.words * UNIT;
                        self.current = Some((p, need));
                    }
                    None => break,
                }
            }
            let (_, remaining) = self.current.as_mut().expect("just set");
            let used = budget.min(*remaining);
            *remaining -= used;
            budget -= used;
            self.units_used += used;
            if *remaining == 0 {
                let (mut p, _) = self.current.take().expect("present");
                p.latency_sum += self.latency;
                self.events_sent += p.tags.len() as u64;
                self.in_flight.push_back((now + 1 + self.latency, p));
            }
        }
    }

    fn take_arrivals(&mut self, now: u64, out: &mut Vec<SimPacket>) {
        while self.in_flight.front().is_some_and(|(t, _)| *t <= now) {
            out.push(self.in_flight.pop_front().expect("checked").1);
        }
    }

    fn events_held(&self) -> usize {
        self.inputs.iter().flatten().map(|p| p.tags.len()).sum::<usize>()
            + self.current.as_ref().map_or(0, |(p, _)| p.tags.len())
            + self.in_flight.iter().map(|(_, p)| p.tags.len()).sum::<usize>()
    }
}

enum Injector {
    Keys(Vec<SourceKey>),
    Weighted(Vec<SourceKey>, WeightedIndex<f64>),
    AllKeys(u8),
    Trace { records: Vec<TraceRecord>, cursor: usize },
    Idle,
}

struct FpgaState {
    address: NetworkAddress,
    tables: FpgaTables,
    manager: BucketManager,
    pending: HashMap<NetworkAddress, VecDeque<EventTag>>,
    source_misses: MissCounter<SourceKey>,
    dest_misses: MissCounter<Guid>,
    rng: ChaCha8Rng,
    injector: Injector,
    ring: Option<RingChannel>,
    monitor_queue: VecDeque<Vec<u8>>,
    stall_cycles: u64,
    bytes_to_host: u64,
}

#[derive(Default)]
struct Counters {
    injected: u64,
    delivered: u64,
    arrived: u64,
    unroutable: u64,
    deadline_misses: u64,
    packets: u64,
    occupancy: std::collections::BTreeMap<u64, u64>,
    latency_sum: u128,
    latency_min: u64,
    latency_max: u64,
    latency_hist: std::collections::BTreeMap<u64, u64>,
}

pub struct Simulation<'a> {
    net: &'a Network,
    traffic: &'a TrafficSpec,
    config: SimConfig,
    links: Vec<Link>,
    uplink: Vec<usize>,
    downlink: Vec<usize>,
    torus_out: Vec<[usize; 6]>,
    fpgas: Vec<FpgaState>,
    now: u64,
    // one flag per injected event id
    arrived: Vec<bool>,
    counters: Counters,
    deliveries: Vec<TraceRecord>,
}

/// Runs a fresh simulation for `until` cycles.
pub fn run(network: &Network, traffic: &TrafficSpec, config: &SimConfig, until: u64) -> Result<SimStats, SimError> {
    let mut sim = Simulation::new(network, traffic, config.clone())?;
    sim.run_until(until)?;
    sim.finish()
}

impl<'a> Simulation<'a> {
    pub fn new(net: &'a Network, traffic: &'a TrafficSpec, config: SimConfig) -> Result<Self, SimError> {
        let spec = net.spec();
        traffic.validate(net.fpgas().len())?;
        config.aggregation.validate()?;
        if config.host.enabled {
            RingChannel::new(config.host.ring)?;
            if config.host.ring.size < MONITOR_RECORD_BYTES {
                return Err(SimError::RingTooSmall);
            }
        }

        let dims = net.dims();
        let torus_rate = spec.torus_words_per_cycle();
        let fpga_rate = spec.fpga_link_words_per_cycle;
        let mut links = Vec::new();
        let mut torus_out = Vec::with_capacity(net.nodes().len());
        for (n, node) in net.nodes().iter().enumerate() {
            let slots = Direction::ALL.len() + node.fpgas.len();
            let mut outs = [0usize; 6];
            for dir in Direction::ALL {
                let neighbour = node.coord.step(dir, dims).linear(dims);
                outs[dir.index()] = links.len();
                links.push(Link::new(
                    format!("node{}.{}.{}/{}", node.coord.x, node.coord.y, node.coord.z, dir),
                    torus_rate,
                    spec.hop_latency,
                    Target::Node { node: neighbour, slot: dir.index() },
                    slots,
                ));
            }
            torus_out.push(outs);
            debug_assert_eq!(n, torus_out.len() - 1);
        }
        let mut uplink = Vec::with_capacity(net.fpgas().len());
        let mut downlink = Vec::with_capacity(net.fpgas().len());
        for f in net.fpgas() {
            let node = &net.nodes()[f.node];
            uplink.push(links.len());
            links.push(Link::new(
                format!("fpga{}/up", f.index),
                fpga_rate,
                spec.hop_latency,
                Target::Node { node: f.node, slot: Direction::ALL.len() + f.port },
                1,
            ));
            downlink.push(links.len());
            links.push(Link::new(
                format!("fpga{}/down", f.index),
                fpga_rate,
                spec.hop_latency,
                Target::Fpga(f.index),
                Direction::ALL.len() + node.fpgas.len(),
            ));
        }

        let mut per_fpga_trace: Vec<Vec<TraceRecord>> = vec![Vec::new(); net.fpgas().len()];
        if let TrafficKind::Trace(records) = &traffic.kind {
            for r in records {
                per_fpga_trace[r.fpga].push(*r);
            }
        }

        let mut fpgas = Vec::with_capacity(net.fpgas().len());
        for f in net.fpgas() {
            let tables = net.tables(f.index).clone();
            let injector = match &traffic.kind {
                TrafficKind::PoissonRate { rate, .. } if *rate <= 0.0 => Injector::Idle,
                TrafficKind::PoissonRate { sources: SourceSelection::TableUniform, .. } => {
                    let keys: Vec<SourceKey> = tables.src.keys().copied().collect();
                    if keys.is_empty() {
                        Injector::Idle
                    } else {
                        Injector::Keys(keys)
                    }
                }
                TrafficKind::PoissonRate { sources: SourceSelection::AllKeys, .. } => {
                    Injector::AllKeys(spec.hicanns_per_fpga as u8)
                }
                TrafficKind::PoissonRate { sources: SourceSelection::Weighted(w), .. } => {
                    let keys = w.iter().map(|(l, p, _)| SourceKey { hicann_link: *l, pulse_address: *p }).collect();
                    let dist = WeightedIndex::new(w.iter().map(|x| x.2)).map_err(|_| TrafficError::Weights)?;
                    Injector::Weighted(keys, dist)
                }
                TrafficKind::Trace(_) => {
                    Injector::Trace { records: std::mem::take(&mut per_fpga_trace[f.index]), cursor: 0 }
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(traffic.seed);
            rng.set_stream(f.index as u64);
            fpgas.push(FpgaState {
                address: f.address,
                tables,
                manager: BucketManager::new(config.aggregation)?,
                pending: HashMap::new(),
                source_misses: MissCounter::default(),
                dest_misses: MissCounter::default(),
                rng,
                injector,
                ring: if config.host.enabled { Some(RingChannel::new(config.host.ring)?) } else { None },
                monitor_queue: VecDeque::new(),
                stall_cycles: 0,
                bytes_to_host: 0,
            });
        }

        Ok(Self {
            net,
            traffic,
            config,
            links,
            uplink,
            downlink,
            torus_out,
            fpgas,
            now: 0,
            arrived: Vec::new(),
            counters: Counters { latency_min: u64::MAX, ..Default::default() },
            deliveries: Vec::new(),
        })
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Delivery log records, one per HICANN copy, when recording is enabled.
    pub fn deliveries(&self) -> &[TraceRecord] {
        &self.deliveries
    }

    pub fn run_until(&mut self, until: u64) -> Result<(), SimError> {
        let mut arrivals = Vec::new();
        while self.now < until {
            let now = self.now;
            for l in 0..self.links.len() {
                self.links[l].take_arrivals(now, &mut arrivals);
                let target = self.links[l].target;
                for p in arrivals.drain(..) {
                    match target {
                        Target::Node { node, slot } => self.forward(node, slot, p),
                        Target::Fpga(f) => self.deliver(f, p, now)?,
                    }
                }
            }
            for f in 0..self.fpgas.len() {
                self.fpga_cycle(f, now)?;
            }
            for link in &mut self.links {
                link.step(now);
            }
            if self.config.host.enabled {
                for f in 0..self.fpgas.len() {
                    self.host_cycle(f, now)?;
                }
            }
            self.now += 1;
        }
        Ok(())
    }

    fn forward(&mut self, node: usize, slot: usize, p: SimPacket) {
        let dst_node = self.net.fpgas()[p.dst_fpga].node;
        let out = if dst_node == node {
            self.downlink[p.dst_fpga]
        } else {
            let nodes = self.net.nodes();
            let dir = next_hop(nodes[node].coord, nodes[dst_node].coord, self.net.dims()).expect("distinct nodes");
            self.torus_out[node][dir.index()]
        };
        self.links[out].inputs[slot].push_back(p);
    }

    fn fpga_cycle(&mut self, f: usize, now: u64) -> Result<(), SimError> {
        let records = self.fpgas[f].manager.tick(now);
        self.emit(f, records, now)?;

        let slack = self.traffic.deadline_slack;
        let jitter = self.traffic.deadline_jitter;
        let mut injected: Vec<(SourceKey, Timestamp, u64)> = Vec::new();
        let st = &mut self.fpgas[f];
        match (&mut st.injector, &self.traffic.kind) {
            (Injector::Idle, _) => {}
            (Injector::Trace { records, cursor }, _) => {
                while *cursor < records.len() && records[*cursor].cycle <= now {
                    let r = records[*cursor];
                    *cursor += 1;
                    let key = SourceKey { hicann_link: r.hicann_link, pulse_address: r.pulse_address };
                    injected.push((key, r.timestamp, absolute_deadline(r.timestamp, now)));
                }
            }
            (inj, TrafficKind::PoissonRate { rate, .. }) => {
                if st.rng.gen_bool(*rate) {
                    let key = match inj {
                        Injector::Keys(keys) => keys[st.rng.gen_range(0..keys.len())],
                        Injector::Weighted(keys, dist) => keys[dist.sample(&mut st.rng)],
                        Injector::AllKeys(links) => SourceKey {
                            hicann_link: HicannLink::truncate(st.rng.gen_range(0..*links) as u64),
                            pulse_address: PulseAddress::truncate(st.rng.gen_range(0..4096u64)),
                        },
                        _ => unreachable!("handled above"),
                    };
                    let extra = if jitter > 0 { st.rng.gen_range(0..=jitter) } else { 0 };
                    let deadline = now + slack + extra;
                    injected.push((key, timestamp_of_clock(deadline), deadline));
                }
            }
            (_, TrafficKind::Trace(_)) => unreachable!("trace traffic always uses a trace injector"),
        }

        for (key, ts, deadline_cycle) in injected {
            self.inject(f, key, ts, deadline_cycle, now)?;
        }
        Ok(())
    }

    fn inject(
        &mut self,
        f: usize,
        key: SourceKey,
        ts: Timestamp,
        deadline_cycle: u64,
        now: u64,
    ) -> Result<(), SimError> {
        let id = self.arrived.len() as u64;
        self.arrived.push(false);
        self.counters.injected += 1;
        let st = &mut self.fpgas[f];
        let event = SpikeEvent { pulse_address: key.pulse_address, timestamp: ts };
        let Some(routed) = route_source(&st.tables.src, key, event, &mut st.source_misses) else {
            return Ok(());
        };
        if self.net.fpga_by_address(routed.dest).is_none() {
            self.counters.unroutable += 1;
            return Ok(());
        }
        let tag = EventTag { id, inject_cycle: now, deadline_cycle, wire: routed.into() };
        st.pending.entry(routed.dest).or_default().push_back(tag);
        let records = st.manager.submit(routed, now);
        self.emit(f, records, now)
    }

    fn emit(&mut self, f: usize, records: Vec<FlushRecord>, _now: u64) -> Result<(), SimError> {
        for rec in records {
            let st = &mut self.fpgas[f];
            let queue = st.pending.get_mut(&rec.dest);
            let queue = match queue {
                Some(q) if q.len() >= rec.events.len() => q,
                _ => {
                    return Err(SimError::Invariant(format!("fpga {f}: flush for {} without pending events", rec.dest)))
                }
            };
            let tags: Vec<EventTag> = queue.drain(..rec.events.len()).collect();
            for (t, e) in tags.iter().zip(&rec.events) {
                invariant!(t.wire == *e, "fpga {f}: flushed event {e:?} out of order, expected {:?}", t.wire);
            }
            let packet = Packet::new(rec.dest, st.address, &rec.events)
                .map_err(|e| SimError::Invariant(format!("fpga {f}: cannot packetize flush: {e}")))?;
            let words = packet.words() as u64;
            let dst_fpga = self.net.fpga_by_address(rec.dest).expect("checked at injection");
            let up = self.uplink[f];
            let serialization_bound = self.links[up].serialization_cycles(words)
                + self.links[self.downlink[dst_fpga]].serialization_cycles(words);
            *self.counters.occupancy.entry(rec.events.len() as u64).or_default() += 1;
            self.counters.packets += 1;
            self.links[up].inputs[0].push_back(SimPacket {
                bytes: packet.to_bytes(),
                words,
                tags,
                dst_fpga,
                latency_sum: 0,
                serialization_bound,
            });
        }
        Ok(())
    }

    fn deliver(&mut self, f: usize, p: SimPacket, now: u64) -> Result<(), SimError> {
        let (header, events) =
            decode_packet(&p.bytes).map_err(|e| SimError::Invariant(format!("fpga {f}: undecodable packet: {e}")))?;
        let st = &mut self.fpgas[f];
        invariant!(header.dest == st.address, "fpga {f} received a packet for {}", header.dest);
        invariant!(
            events.len() == p.tags.len(),
            "fpga {f}: decoded {} events, expected {}",
            events.len(),
            p.tags.len()
        );
        let bound = p.latency_sum + p.serialization_bound;
        let mut monitor = Vec::with_capacity(events.len() * MONITOR_RECORD_BYTES);
        for (ev, tag) in events.iter().zip(&p.tags) {
            invariant!(*ev == tag.wire, "fpga {f}: payload event {ev:?} does not match {:?}", tag.wire);
            let seen = &mut self.arrived[tag.id as usize];
            invariant!(!*seen, "event {} delivered twice", tag.id);
            *seen = true;
            let latency = now - tag.inject_cycle;
            invariant!(latency >= bound, "event {} latency {latency} below path bound {bound}", tag.id);
            let c = &mut self.counters;
            c.arrived += 1;
            c.latency_sum += latency as u128;
            c.latency_min = c.latency_min.min(latency);
            c.latency_max = c.latency_max.max(latency);
            *c.latency_hist.entry(latency_bin(latency)).or_default() += 1;
            if now > tag.deadline_cycle {
                c.deadline_misses += 1;
            }
            if let Some(mask) = route_dest(&st.tables.dst, ev.guid, &mut st.dest_misses) {
                c.delivered += mask.fan_out() as u64;
                if self.config.record_deliveries {
                    for link in mask.links() {
                        self.deliveries.push(TraceRecord {
                            cycle: now,
                            fpga: f,
                            hicann_link: link,
                            pulse_address: PulseAddress::truncate(ev.guid.get() as u64),
                            timestamp: ev.timestamp,
                        });
                    }
                }
            }
            if st.ring.is_some() {
                monitor.extend_from_slice(&(now as u32).to_le_bytes());
                monitor.extend_from_slice(&ev.guid.get().to_le_bytes());
            }
        }
        if let Some(ring) = &st.ring {
            let chunk = ring.size() / MONITOR_RECORD_BYTES * MONITOR_RECORD_BYTES;
            for part in monitor.chunks(chunk) {
                st.monitor_queue.push_back(part.to_vec());
            }
        }
        Ok(())
    }

    fn host_cycle(&mut self, f: usize, now: u64) -> Result<(), SimError> {
        let rate = self.config.host.consume_bytes_per_cycle;
        let st = &mut self.fpgas[f];
        let Some(ring) = st.ring.as_mut() else { return Ok(()) };
        let mut stalled = false;
        while let Some(front) = st.monitor_queue.front() {
            match ring.producer_put(front, now)? {
                PutOutcome::Accepted => {
                    st.monitor_queue.pop_front();
                }
                PutOutcome::Stalled => {
                    stalled = true;
                    break;
                }
            }
        }
        if stalled {
            st.stall_cycles += 1;
        }
        // batching coalesces the puts of one cycle; holding notices longer
        // can starve a consumer that is waiting to free space
        ring.flush_notifications(now);
        let got = ring.consumer_poll_max(now, rate);
        st.bytes_to_host += got.len() as u64;
        ring.consumer_credit(got.len(), now)?;
        Ok(())
    }

    /// Checks conservation and assembles the statistics.
    pub fn finish(&self) -> Result<SimStats, SimError> {
        let cycles = self.now;
        let c = &self.counters;
        let mut in_flight = 0u64;
        let mut source_misses = 0u64;
        let mut dest_misses = 0u64;
        let mut flushes: std::collections::BTreeMap<String, u64> =
            FlushTrigger::ALL.iter().map(|t| (t.name().to_string(), 0)).collect();
        let mut forced_drains = 0;
        let mut host = HostStats::default();
        for (f, st) in self.fpgas.iter().enumerate() {
            let pending: usize = st.pending.values().map(VecDeque::len).sum();
            invariant!(
                pending == st.manager.pending_events(),
                "fpga {f}: {pending} tagged events pending but the bucket manager holds {}",
                st.manager.pending_events()
            );
            st.manager.check_invariants().map_err(|e| SimError::Invariant(format!("fpga {f}: {e}")))?;
            in_flight += pending as u64;
            source_misses += st.source_misses.count();
            dest_misses += st.dest_misses.count();
            for t in FlushTrigger::ALL {
                *flushes.get_mut(t.name()).expect("all triggers present") += st.manager.stats().flushes_by(t);
            }
            forced_drains += st.manager.stats().forced_drains;
            host.bytes_to_host += st.bytes_to_host;
            host.stall_cycles += st.stall_cycles;
            if let Some(ring) = &st.ring {
                host.occupancy_high_water = host.occupancy_high_water.max(ring.stats().occupancy_high_water as u64);
            }
        }
        in_flight += self.links.iter().map(|l| l.events_held() as u64).sum::<u64>();
        invariant!(
            c.injected == c.arrived + source_misses + c.unroutable + in_flight,
            "conservation: injected {} != arrived {} + source misses {} + unroutable {} + in flight {}",
            c.injected,
            c.arrived,
            source_misses,
            c.unroutable,
            in_flight
        );

        let per_cycle = |x: u64| if cycles == 0 { 0.0 } else { x as f64 / cycles as f64 };
        let link_utilization: Vec<LinkUtilization> = self
            .links
            .iter()
            .map(|l| LinkUtilization {
                link: l.name.clone(),
                utilization: if cycles == 0 {
                    0.0
                } else {
                    l.units_used as f64 / (l.units_per_cycle as f64 * cycles as f64)
                },
            })
            .collect();
        let max_link_utilization = link_utilization.iter().map(|u| u.utilization).fold(0.0, f64::max);
        if let Some(l) = self.links.iter().find(|l| l.units_used > l.units_per_cycle * cycles) {
            return Err(SimError::Invariant(format!("link {} carried more than its capacity", l.name)));
        }
        let egress_events: u64 = self.uplink.iter().map(|&l| self.links[l].events_sent).sum();
        let occupied: u64 = c.occupancy.iter().map(|(k, v)| k * v).sum();

        Ok(SimStats {
            schema_version: SCHEMA_VERSION,
            seed: self.traffic.seed,
            cycles,
            events_injected: c.injected,
            events_delivered: c.delivered,
            events_arrived: c.arrived,
            events_dropped: source_misses + c.unroutable + dest_misses,
            dropped_source_miss: source_misses,
            dropped_unroutable: c.unroutable,
            dropped_dest_miss: dest_misses,
            events_in_flight: in_flight,
            deadline_misses: c.deadline_misses,
            deadline_miss_rate: if c.arrived == 0 { 0.0 } else { c.deadline_misses as f64 / c.arrived as f64 },
            throughput_events_per_cycle: per_cycle(c.arrived),
            egress_events,
            egress_events_per_cycle: per_cycle(egress_events),
            packets_sent: c.packets,
            mean_packet_occupancy: if c.packets == 0 { 0.0 } else { occupied as f64 / c.packets as f64 },
            packet_occupancy: c.occupancy.clone(),
            latency: super::stats::LatencyStats {
                samples: c.arrived,
                min: if c.arrived == 0 { 0 } else { c.latency_min },
                max: c.latency_max,
                mean: if c.arrived == 0 { 0.0 } else { (c.latency_sum as f64) / c.arrived as f64 },
                histogram: c.latency_hist.clone(),
            },
            flushes,
            forced_drains,
            max_link_utilization,
            link_utilization,
            host,
            routing_violations: self.net.routing_violations().len() as u64,
        })
    }
}
