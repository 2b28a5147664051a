//! Spike-event transport for wafer-scale neuromorphic systems: event formats,
//! routing tables, deadline-driven aggregation, packet framing, the host
//! ring channel and a cycle-based torus simulator.

pub mod aggregation;
pub mod cli;
pub mod event_model;
pub mod hostcomm;
pub mod packetizer;
pub mod routing;
pub mod simnet;
