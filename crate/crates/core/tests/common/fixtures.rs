//! Topologies and routing tables shared by the simulator tests.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use spikenet::event_model::{Guid, NetworkAddress};
use spikenet::routing::{DestRoutingTable, MulticastMask, SourceKey, SourceRoutingTable};
use spikenet::simnet::{TableAssignment, TopologySpec};

/// Two FPGAs on two wafers, one per torus node.
pub fn two_node_spec() -> TopologySpec {
    TopologySpec {
        torus_dims: [1, 1, 2],
        wafers: 2,
        fpgas_per_wafer: 1,
        concentrators_per_wafer: 1,
        fpgas_per_concentrator: 1,
        ..TopologySpec::default()
    }
}

/// A small multi-hop system: 2x2x2 torus, one wafer, 4 concentrators with 2
/// FPGAs each.
pub fn small_torus_spec() -> TopologySpec {
    TopologySpec {
        torus_dims: [2, 2, 2],
        wafers: 1,
        fpgas_per_wafer: 8,
        concentrators_per_wafer: 4,
        fpgas_per_concentrator: 2,
        ..TopologySpec::default()
    }
}

/// FPGA 0 sends `keys` source keys on link 0 to FPGA 1, which delivers each
/// to HICANN link 0.
pub fn one_way_tables(keys: u16) -> TableAssignment {
    let mut src = SourceRoutingTable::new();
    let mut dst = DestRoutingTable::new();
    for k in 0..keys {
        let guid = Guid::truncate(k as u64);
        src.insert(SourceKey::new(0, k).unwrap(), NetworkAddress(1), guid);
        dst.insert(guid, MulticastMask::new(1).unwrap());
    }
    let mut t = TableAssignment::default();
    t.assign(0, src, DestRoutingTable::new());
    t.assign(1, SourceRoutingTable::new(), dst);
    t
}

/// Every FPGA sends `keys` keys to random other FPGAs with random non-empty
/// masks. A `dangling` fraction of GUIDs is left out of the destination
/// tables.
pub fn random_tables(fpgas: usize, keys: u16, dangling: f64, seed: u64) -> TableAssignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut srcs: Vec<SourceRoutingTable> = (0..fpgas).map(|_| SourceRoutingTable::new()).collect();
    let mut dsts: Vec<DestRoutingTable> = (0..fpgas).map(|_| DestRoutingTable::new()).collect();
    for (f, src) in srcs.iter_mut().enumerate() {
        for k in 0..keys {
            let guid = Guid::truncate((f * keys as usize + k as usize) as u64);
            let mut to = rng.gen_range(0..fpgas);
            if fpgas > 1 {
                while to == f {
                    to = rng.gen_range(0..fpgas);
                }
            }
            src.insert(SourceKey::new(rng.gen_range(0..8), k).unwrap(), NetworkAddress(to as u16), guid);
            if !rng.gen_bool(dangling) {
                dsts[to].insert(guid, MulticastMask::new(rng.gen_range(1..=255)).unwrap());
            }
        }
    }
    let mut t = TableAssignment::default();
    for (f, (s, d)) in srcs.into_iter().zip(dsts).enumerate() {
        t.assign(f, s, d);
    }
    t
}
