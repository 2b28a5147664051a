mod common;

use proptest::prelude::*;

use common::fixtures::{one_way_tables, random_tables, small_torus_spec, two_node_spec};
use spikenet::aggregation::AggregationConfig;
use spikenet::event_model::{Guid, NetworkAddress};
use spikenet::hostcomm::RingConfig;
use spikenet::routing::{DestRoutingTable, MulticastMask, SourceKey, SourceRoutingTable};
use spikenet::simnet::topology::TopologyError;
use spikenet::simnet::traffic::{format_trace, parse_trace};
use spikenet::simnet::{
    build_topology, run, HostConfig, Network, SimConfig, SimStats, Simulation, SourceSelection, TableAssignment,
    TopologySpec, TrafficKind, TrafficSpec,
};

fn balanced(s: &SimStats) {
    assert_eq!(
        s.events_injected,
        s.events_arrived + s.dropped_source_miss + s.dropped_unroutable + s.events_in_flight,
        "{s:#?}"
    );
    assert_eq!(s.events_dropped, s.dropped_source_miss + s.dropped_unroutable + s.dropped_dest_miss);
    assert!(s.max_link_utilization <= 1.0);
    assert!(s.link_utilization.iter().all(|l| (0.0..=1.0).contains(&l.utilization)));
}

fn cfg(capacity: usize) -> SimConfig {
    SimConfig { aggregation: AggregationConfig { capacity, ..AggregationConfig::default() }, ..SimConfig::default() }
}

#[test]
fn zero_rate_is_silent() {
    let net = Network::build(&small_torus_spec(), &random_tables(8, 16, 0.0, 1)).unwrap();
    let s = run(&net, &TrafficSpec::poisson(0.0, 1), &SimConfig::default(), 1000).unwrap();
    assert_eq!(s.cycles, 1000);
    assert_eq!((s.events_injected, s.events_delivered, s.packets_sent), (0, 0, 0));
    assert_eq!(s.max_link_utilization, 0.0);
}

#[test]
fn conservation_with_misses_and_dangling_routes() {
    let tables = random_tables(8, 32, 0.2, 7);
    let net = Network::build(&small_torus_spec(), &tables).unwrap();
    assert!(!net.routing_violations().is_empty());
    let traffic = TrafficSpec {
        kind: TrafficKind::PoissonRate { rate: 0.4, sources: SourceSelection::AllKeys },
        deadline_slack: 300,
        deadline_jitter: 50,
        seed: 11,
    };
    let s = run(&net, &traffic, &cfg(16), 5000).unwrap();
    balanced(&s);
    assert!(s.dropped_source_miss > 0 && s.dropped_dest_miss > 0 && s.events_arrived > 0);
    assert_eq!(s.routing_violations, net.routing_violations().len() as u64);
}

#[test]
fn delivery_fan_out_is_popcount() {
    // every mask has three links set
    let mut src = SourceRoutingTable::new();
    let mut dst = DestRoutingTable::new();
    for k in 0..8u16 {
        let guid = Guid::new(k as u32).unwrap();
        src.insert(SourceKey::new(0, k).unwrap(), NetworkAddress(1), guid);
        dst.insert(guid, MulticastMask::new(0b1000_0101).unwrap());
    }
    let mut t = TableAssignment::default();
    t.assign(0, src, DestRoutingTable::new());
    t.assign(1, SourceRoutingTable::new(), dst);
    let net = Network::build(&two_node_spec(), &t).unwrap();
    let config = SimConfig { record_deliveries: true, ..cfg(8) };
    let traffic = TrafficSpec::poisson(0.5, 3);
    let mut sim = Simulation::new(&net, &traffic, config).unwrap();
    sim.run_until(4000).unwrap();
    let s = sim.finish().unwrap();
    balanced(&s);
    assert!(s.events_arrived > 1000);
    assert_eq!(s.events_delivered, 3 * s.events_arrived);
    assert_eq!(sim.deliveries().len() as u64, s.events_delivered);
    let links: std::collections::BTreeSet<u8> = sim.deliveries().iter().map(|d| d.hicann_link.get()).collect();
    assert_eq!(links.into_iter().collect::<Vec<_>>(), vec![0, 2, 7]);
    // the delivery log reads back as a trace
    let text = format_trace(sim.deliveries());
    assert_eq!(parse_trace(&text).unwrap(), sim.deliveries());
}

#[test]
fn identical_inputs_identical_stats() {
    let net = Network::build(&small_torus_spec(), &random_tables(8, 32, 0.0, 5)).unwrap();
    let traffic = TrafficSpec { deadline_jitter: 100, ..TrafficSpec::poisson(0.3, 42) };
    let a = run(&net, &traffic, &SimConfig::default(), 4000).unwrap();
    let b = run(&net, &traffic, &SimConfig::default(), 4000).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let c = run(&net, &TrafficSpec { seed: 43, ..traffic }, &SimConfig::default(), 4000).unwrap();
    assert_ne!(a.to_json(), c.to_json());
}

#[test]
fn latency_respects_path_bound() {
    let net = Network::build(&two_node_spec(), &one_way_tables(4)).unwrap();
    let s = run(&net, &TrafficSpec::poisson(0.01, 9), &cfg(1), 20_000).unwrap();
    // uplink + one torus hop + downlink at 20 cycles each, plus two 2-word
    // serializations at one word per cycle
    let bound = 3 * 20 + 2 + 2;
    assert!(s.latency.samples > 50);
    assert!(s.latency.min >= bound, "min latency {} below {bound}", s.latency.min);
    assert!(s.latency.min <= bound + 2, "idle path should be close to the bound: {}", s.latency.min);
}

#[test]
fn saturated_uplink_stays_at_full_utilization() {
    let net = Network::build(&two_node_spec(), &one_way_tables(4)).unwrap();
    let s = run(&net, &TrafficSpec::poisson(1.0, 1), &cfg(1), 10_000).unwrap();
    balanced(&s);
    let up = s.link_utilization.iter().find(|l| l.link == "fpga0/up").unwrap();
    assert!(up.utilization > 0.999 && up.utilization <= 1.0);
}

#[test]
fn trace_traffic_is_replayed() {
    let net = Network::build(&two_node_spec(), &one_way_tables(4)).unwrap();
    // cycle fpga link pulse timestamp
    let trace = parse_trace("0 0 0 1 500\n0 0 0 2 500\n3 0 0 3 40\n10 0 1 0 900\n12 1 0 0 0\n").unwrap();
    let traffic = TrafficSpec { kind: TrafficKind::Trace(trace), ..TrafficSpec::default() };
    let config = SimConfig { record_deliveries: true, ..cfg(124) };
    let mut sim = Simulation::new(&net, &traffic, config).unwrap();
    sim.run_until(2000).unwrap();
    let s = sim.finish().unwrap();
    balanced(&s);
    assert_eq!(s.events_injected, 5);
    // link 1 and FPGA 1 have no source entries
    assert_eq!(s.dropped_source_miss, 2);
    assert_eq!(s.events_arrived, 3);
    // the event due at 40 flushes its bucket early, before 500 is reached
    assert_eq!(s.flushes["deadline_exceeded"], 1);
    assert_eq!(s.deadline_misses, 1);
    let guids: Vec<u16> = sim.deliveries().iter().map(|d| d.pulse_address.get()).collect();
    assert_eq!(guids, vec![1, 2, 3]);
}

#[test]
fn small_host_ring_stalls_but_conserves() {
    let net = Network::build(&two_node_spec(), &one_way_tables(16)).unwrap();
    let config = SimConfig {
        host: HostConfig {
            enabled: true,
            ring: RingConfig { size: 64, notification_latency: 40, notification_batch: 2 },
            consume_bytes_per_cycle: 8,
        },
        ..cfg(32)
    };
    let s = run(&net, &TrafficSpec::poisson(0.8, 2), &config, 5000).unwrap();
    balanced(&s);
    assert!(s.host.stall_cycles > 0);
    assert!(
        s.host.bytes_to_host > 0 && s.host.bytes_to_host <= 8 * s.events_arrived,
        "{:?} arrived {}",
        s.host,
        s.events_arrived
    );
    assert!(s.host.occupancy_high_water <= 64);
}

#[test]
fn single_node_torus_routes_locally() {
    let spec = TopologySpec {
        torus_dims: [1, 1, 1],
        wafers: 1,
        fpgas_per_wafer: 6,
        concentrators_per_wafer: 1,
        fpgas_per_concentrator: 6,
        ..TopologySpec::default()
    };
    let net = Network::build(&spec, &random_tables(6, 16, 0.0, 3)).unwrap();
    let s = run(&net, &TrafficSpec::poisson(0.5, 3), &cfg(8), 3000).unwrap();
    balanced(&s);
    assert!(s.events_arrived > 0);
    for l in s.link_utilization.iter().filter(|l| l.link.starts_with("node")) {
        assert_eq!(l.utilization, 0.0, "{}", l.link);
    }
}

#[test]
fn topology_examples() {
    let net = build_topology(&TopologySpec::default()).unwrap();
    assert_eq!((net.nodes().len(), net.fpgas().len()), (8, 48));
    for n in 0..net.nodes().len() {
        assert!(net.node_degree(n) <= 7);
    }
    let huge = TopologySpec { torus_dims: [256, 256, 2], ..TopologySpec::default() };
    assert!(matches!(build_topology(&huge), Err(TopologyError::AddressExhaustion { .. })));
    let tight = TopologySpec { nic_links: 6, ..TopologySpec::default() };
    assert!(matches!(build_topology(&tight), Err(TopologyError::DegreeViolation { .. })));
}

#[test]
fn bad_configuration_is_rejected() {
    let net = Network::build(&two_node_spec(), &one_way_tables(1)).unwrap();
    assert!(run(&net, &TrafficSpec::poisson(2.0, 0), &SimConfig::default(), 10).is_err());
    let bad = SimConfig {
        aggregation: AggregationConfig { buckets: 0, ..AggregationConfig::default() },
        ..SimConfig::default()
    };
    assert!(run(&net, &TrafficSpec::poisson(0.1, 0), &bad, 10).is_err());
    let mut tiny = SimConfig::default();
    tiny.host.ring.size = 4;
    assert!(run(&net, &TrafficSpec::poisson(0.1, 0), &tiny, 10).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn more_slack_never_adds_misses(seed in any::<u64>(), slack in 20u64..400, extra in 1u64..400) {
        let net = Network::build(&small_torus_spec(), &random_tables(8, 24, 0.0, seed)).unwrap();
        let config = SimConfig {
            aggregation: AggregationConfig { buckets: 4, capacity: 40, ..AggregationConfig::default() },
            ..SimConfig::default()
        };
        let tight = TrafficSpec { deadline_slack: slack, ..TrafficSpec::poisson(0.5, seed) };
        let loose = TrafficSpec { deadline_slack: slack + extra, ..tight.clone() };
        let a = run(&net, &tight, &config, 3000).unwrap();
        let b = run(&net, &loose, &config, 3000).unwrap();
        prop_assert_eq!(a.events_injected, b.events_injected);
        prop_assert!(b.deadline_misses <= a.deadline_misses, "slack {} -> {} misses, {} -> {}", slack, a.deadline_misses, slack + extra, b.deadline_misses);
    }

    #[test]
    fn random_scenarios_conserve(seed in any::<u64>(), rate in 0.0f64..1.0, capacity in 1usize..=124, buckets in 1usize..=8) {
        let net = Network::build(&small_torus_spec(), &random_tables(8, 20, 0.1, seed)).unwrap();
        let config = SimConfig {
            aggregation: AggregationConfig { buckets, capacity, drain_rate: 4, deadline_lead: seed % 5 },
            ..SimConfig::default()
        };
        let traffic = TrafficSpec { deadline_slack: 200, deadline_jitter: 100, ..TrafficSpec::poisson(rate, seed) };
        let s = run(&net, &traffic, &config, 2000).unwrap();
        balanced(&s);
    }
}
