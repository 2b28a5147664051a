//! Simulation statistics and their JSON / CSV forms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples: u64,
    pub min: u64,
    pub max: u64,
    pub mean: f64,
    /// Power-of-two bins keyed by their lower bound: `0`, `1`, `2..4`, `4..8`, ...
    pub histogram: BTreeMap<u64, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkUtilization {
    pub link: String,
    pub utilization: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HostStats {
    pub bytes_to_host: u64,
    pub stall_cycles: u64,
    pub occupancy_high_water: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub schema_version: u32,
    pub seed: u64,
    pub cycles: u64,
    pub events_injected: u64,
    /// HICANN deliveries; an event with a k-bit mask counts k times.
    pub events_delivered: u64,
    /// Distinct events that reached their destination FPGA.
    pub events_arrived: u64,
    pub events_dropped: u64,
    pub dropped_source_miss: u64,
    pub dropped_unroutable: u64,
    pub dropped_dest_miss: u64,
    pub events_in_flight: u64,
    pub deadline_misses: u64,
    pub deadline_miss_rate: f64,
    pub throughput_events_per_cycle: f64,
    pub egress_events: u64,
    pub egress_events_per_cycle: f64,
    pub packets_sent: u64,
    pub mean_packet_occupancy: f64,
    /// Events per packet -> packet count.
    pub packet_occupancy: BTreeMap<u64, u64>,
    pub latency: LatencyStats,
    pub flushes: BTreeMap<String, u64>,
    pub forced_drains: u64,
    pub max_link_utilization: f64,
    pub link_utilization: Vec<LinkUtilization>,
    pub host: HostStats,
    pub routing_violations: u64,
}

impl SimStats {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("stats serialize");
        s.push('\n');
        s
    }

    /// Flat `metric,value` rows with dotted names for nested fields.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(String, String)> = Vec::new();
        let value = serde_json::to_value(self).expect("stats serialize");
        flatten("", &value, &mut rows);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "value"]).expect("in-memory write");
        for (k, v) in rows {
            w.write_record([k, v]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn summary_line(&self) -> String {
        format!(
            "delivered {} events ({} arrived, {} dropped, {} in flight), deadline-miss rate {:.4}, mean packet occupancy {:.2}",
            self.events_delivered,
            self.events_arrived,
            self.events_dropped,
            self.events_in_flight,
            self.deadline_miss_rate,
            self.mean_packet_occupancy
        )
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        serde_json::Value::Object(map) => {
            for (k, child) in map {
                flatten(&join(k), child, out);
            }
        }
        serde_json::Value::Array(items) => {
            for item in items {
                // link utilization rows: name the row after the link
                match (item.get("link"), item.get("utilization")) {
                    (Some(serde_json::Value::String(name)), Some(u)) => out.push((join(name), u.to_string())),
                    _ => out.push((prefix.to_string(), item.to_string())),
                }
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Lower bound of the power-of-two bin holding `v`.
pub fn latency_bin(v: u64) -> u64 {
    if v == 0 {
        0
    } else {
        1 << (63 - v.leading_zeros())
    }
}
