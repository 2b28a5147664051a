//! Traffic injection and the trace / delivery log line format.
//!
//! Trace and delivery logs share one format, one record per line:
//!
//! ```text
//! cycle fpga_id hicann_link pulse_address timestamp
//! ```
//!
//! `pulse_address` and `timestamp` are decimal, `#` starts a comment. In a
//! delivery log `fpga_id` and `hicann_link` name the receiving HICANN and
//! `pulse_address` holds the low 12 bits of the event's GUID.

use std::fmt;

use thiserror::Error;

use crate::event_model::{HicannLink, PulseAddress, Timestamp, TIMESTAMP_BITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TraceRecord {
    pub cycle: u64,
    pub fpga: usize,
    pub hicann_link: HicannLink,
    pub pulse_address: PulseAddress,
    pub timestamp: Timestamp,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.cycle,
            self.fpga,
            self.hicann_link.get(),
            self.pulse_address.get(),
            self.timestamp.get()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct TraceError {
    pub line: usize,
    pub msg: String,
}

/// Parses a trace. Records are returned sorted by cycle, stable for equal
/// cycles.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(TraceError { line, msg: format!("expected 5 fields, got {}", fields.len()) });
        }
        let num = |i: usize, what: &str| -> Result<u64, TraceError> {
            fields[i].parse::<u64>().map_err(|_| TraceError { line, msg: format!("invalid {what} `{}`", fields[i]) })
        };
        let range = |e: crate::event_model::RangeError| TraceError { line, msg: e.to_string() };
        out.push(TraceRecord {
            cycle: num(0, "cycle")?,
            fpga: num(1, "fpga id")? as usize,
            hicann_link: HicannLink::try_from(num(2, "hicann link")?).map_err(range)?,
            pulse_address: PulseAddress::try_from(num(3, "pulse address")?).map_err(range)?,
            timestamp: Timestamp::try_from(num(4, "timestamp")?).map_err(range)?,
        });
    }
    out.sort_by_key(|r| r.cycle);
    Ok(out)
}

pub fn format_trace(records: &[TraceRecord]) -> String {
    let mut s = String::with_capacity(records.len() * 24);
    for r in records {
        s.push_str(&r.to_string());
        s.push('\n');
    }
    s
}

/// Which source keys an FPGA draws its events from.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSelection {
    /// Uniform over the keys present in the FPGA's source table.
    TableUniform,
    /// Uniform over every (link, pulse address) pair; unmapped keys miss.
    AllKeys,
    /// Fixed weights over explicit keys, identical for every FPGA.
    Weighted(Vec<(HicannLink, PulseAddress, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrafficKind {
    /// Each injecting FPGA emits one event per cycle with probability `rate`.
    PoissonRate {
        rate: f64,
        sources: SourceSelection,
    },
    Trace(Vec<TraceRecord>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpec {
    pub kind: TrafficKind,
    /// Deadline = injection cycle + slack (+ uniform jitter in `0..=jitter`).
    pub deadline_slack: u64,
    pub deadline_jitter: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrafficError {
    #[error("injection rate {0} outside [0, 1]")]
    Rate(f64),
    #[error("deadline slack {0} must stay below half the timestamp period ({half})", half = 1u64 << (TIMESTAMP_BITS - 1))]
    Slack(u64),
    #[error("weighted source list is empty or has no positive weight")]
    Weights,
    #[error("trace references FPGA {fpga} but the topology has {count}")]
    UnknownFpga { fpga: usize, count: usize },
}

impl Default for TrafficSpec {
    fn default() -> Self {
        Self {
            kind: TrafficKind::PoissonRate { rate: 0.0, sources: SourceSelection::TableUniform },
            deadline_slack: 1000,
            deadline_jitter: 0,
            seed: 0,
        }
    }
}

impl TrafficSpec {
    pub fn poisson(rate: f64, seed: u64) -> Self {
        Self {
            kind: TrafficKind::PoissonRate { rate, sources: SourceSelection::TableUniform },
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self, fpga_count: usize) -> Result<(), TrafficError> {
        if self.deadline_slack.saturating_add(self.deadline_jitter) >= 1 << (TIMESTAMP_BITS - 1) {
            return Err(TrafficError::Slack(self.deadline_slack.saturating_add(self.deadline_jitter)));
        }
        match &self.kind {
            TrafficKind::PoissonRate { rate, sources } => {
                if !(0.0..=1.0).contains(rate) {
                    return Err(TrafficError::Rate(*rate));
                }
                if let SourceSelection::Weighted(w) = sources {
                    if w.iter().any(|x| !(x.2 >= 0.0 && x.2.is_finite())) || !w.iter().any(|x| x.2 > 0.0) {
                        return Err(TrafficError::Weights);
                    }
                }
            }
            TrafficKind::Trace(records) => {
                if let Some(r) = records.iter().find(|r| r.fpga >= fpga_count) {
                    return Err(TrafficError::UnknownFpga { fpga: r.fpga, count: fpga_count });
                }
            }
        }
        Ok(())
    }
}
