//! Protocol machinery shared by SIDLE and the baseline cluster-head
//! protocols: the `Protocol` trait stepped by the event loop, the aggregate
//! record arithmetic, and packet size accounting.

pub mod fca;
pub mod fuzzy;
pub mod leach;
pub mod sidle;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::metrics::MetricsSample;
use crate::sim::event::{EventKind, TimerKind};
use crate::sim::network::Network;
use crate::sim::radio::Message;
use crate::topology::{CellId, NodeId};

/// Fixed packet framing costs, bytes.
pub const PACKET_HEADER_BYTES: u32 = 8;
/// Compression + encryption are modeled as a flat byte overhead.
pub const CRYPTO_OVERHEAD_BYTES: u32 = 16;
/// Wire bytes per aggregated sensor channel: mean, min, max (f32) + count (u16).
pub const PER_CHANNEL_BYTES: u32 = 14;
/// Wire bytes per extra origin cell folded into a merged record.
pub const PER_FOLDED_CELL_BYTES: u32 = 2;
/// Hard cap on any aggregate record, bytes.
pub const MAX_RECORD_BYTES: u32 = 250;
/// Tiny control frame (announce, claim, ack, notice, command).
pub const CONTROL_BYTES: u32 = 8;

/// Sensor fit of every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub channels: u32,
    pub bytes_per_reading: u32,
    /// Sampling periods per hour (one reading per channel per period).
    pub samples_per_hour: u32,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            channels: 10,
            bytes_per_reading: 4,
            samples_per_hour: 60,
        }
    }
}

impl SensorConfig {
    /// Raw bytes a node accumulates per hour: samples x channels x width.
    pub fn raw_bytes_per_hour(&self) -> u32 {
        self.samples_per_hour * self.channels * self.bytes_per_reading
    }

    /// Raw bytes accrued per sampling period.
    pub fn raw_bytes_per_period(&self) -> u32 {
        self.channels * self.bytes_per_reading
    }

    /// Wire size of a sensor report carrying `samples` sampling periods.
    pub fn packet_bytes(&self, samples: u32) -> u32 {
        PACKET_HEADER_BYTES + self.raw_bytes_per_period() * samples + CRYPTO_OVERHEAD_BYTES
    }
}

/// Exact running statistics for one sensor channel. Partial stats merge
/// associatively, so follower reports and cell records combine without
/// revisiting raw readings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStat {
    pub sum: f64,
    pub min: f32,
    pub max: f32,
    pub count: u32,
}

impl ChannelStat {
    pub fn empty() -> Self {
        Self {
            sum: 0.0,
            min: f32::INFINITY,
            max: f32::NEG_INFINITY,
            count: 0,
        }
    }

    pub fn observe(&mut self, v: f32) {
        self.sum += v as f64;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        self.count += 1;
    }

    pub fn merge(&mut self, other: &ChannelStat) {
        self.sum += other.sum;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        self.count += other.count;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

/// The preprocessed record a leader (or cluster head) produces each data
/// round: per-channel summary statistics plus provenance. Size stays under
/// `MAX_RECORD_BYTES` by construction - the scenario validator caps the
/// channel count and a merged record folds at most the thirteen cells of two
/// adjacent clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub origin_cell: CellId,
    pub round: u32,
    pub stats: Vec<ChannelStat>,
    /// Nodes that contributed reports.
    pub source_count: u32,
    /// Origin cells folded into this record (self plus any merged cells).
    pub cells: Vec<CellId>,
}

impl AggregateRecord {
    pub fn new(origin_cell: CellId, round: u32, channels: u32) -> Self {
        Self {
            origin_cell,
            round,
            stats: vec![ChannelStat::empty(); channels as usize],
            source_count: 0,
            cells: vec![origin_cell],
        }
    }

    /// Wire size in bytes.
    pub fn size_bytes(&self) -> u32 {
        PACKET_HEADER_BYTES
            + PER_CHANNEL_BYTES * self.stats.len() as u32
            + PER_FOLDED_CELL_BYTES * (self.cells.len() as u32 - 1)
            + CRYPTO_OVERHEAD_BYTES
    }

    /// Folds another record into this one (head-cluster merge).
    pub fn merge(&mut self, other: &AggregateRecord) {
        debug_assert_eq!(self.stats.len(), other.stats.len());
        for (a, b) in self.stats.iter_mut().zip(other.stats.iter()) {
            a.merge(b);
        }
        self.source_count += other.source_count;
        for c in &other.cells {
            if !self.cells.contains(c) {
                self.cells.push(*c);
            }
        }
    }
}

/// A cluster-head protocol stepped by the discrete-event loop. All state
/// transitions happen inside these handlers; the network core owns batteries,
/// the clock, and the queue.
pub trait Protocol {
    fn name(&self) -> &'static str;
    fn on_round_start(&mut self, net: &mut Network, round: u32);
    fn on_message(&mut self, net: &mut Network, at_ms: u64, to: NodeId, msg: Message);
    fn on_timer(&mut self, net: &mut Network, at_ms: u64, timer: TimerKind);
    fn on_round_end(&mut self, net: &mut Network, round: u32);
    /// Structural safety checked at every round boundary.
    fn safety_check(&self, net: &Network) -> Result<(), String>;
}

/// Scripted node failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureInjection {
    pub at_ms: u64,
    pub node: NodeId,
}

/// Drives `protocol` for `rounds` rounds and returns one metrics sample per
/// round. Deterministic for a fixed (network, protocol, failures) input.
pub fn run_rounds<P: Protocol>(
    net: &mut Network,
    protocol: &mut P,
    rounds: u32,
    failures: &[FailureInjection],
    daylight_fraction: impl Fn(u32) -> f64,
) -> Result<Vec<MetricsSample>, SimError> {
    run_round_range(net, protocol, 0, rounds, failures, daylight_fraction)
}

/// Drives rounds `start..end`, scheduling the given failures first. Lets
/// tests intervene between segments of one simulation.
pub fn run_round_range<P: Protocol>(
    net: &mut Network,
    protocol: &mut P,
    start: u32,
    end: u32,
    failures: &[FailureInjection],
    daylight_fraction: impl Fn(u32) -> f64,
) -> Result<Vec<MetricsSample>, SimError> {
    for f in failures {
        net.queue
            .schedule(f.at_ms, EventKind::NodeFailure { node: f.node })?;
    }
    let mut samples = Vec::with_capacity((end - start) as usize);
    let total_nodes = net.node_count() as u32;
    for round in start..end {
        let t0 = round as u64 * net.round_ms;
        let t1 = t0 + net.round_ms;
        // anything due up to and including the boundary (scripted kills) fires
        // before the round opens
        while let Some(e) = net.queue.pop_before(t0 + 1) {
            dispatch(net, protocol, e)?;
        }
        net.queue.advance_to(t0);
        net.queue.schedule(t0, EventKind::RoundBoundary { round })?;
        protocol.on_round_start(net, round);
        while let Some(e) = net.queue.pop_before(t1) {
            dispatch(net, protocol, e)?;
        }
        protocol.on_round_end(net, round);
        net.finish_round(daylight_fraction(round));
        let counters = net.take_round_counters();
        samples.push(MetricsSample {
            round,
            total_residual_j: net.total_residual(),
            mean_residual_j: net.total_residual() / total_nodes as f64,
            alive_count: net.alive_count(),
            records_delivered: counters.records_delivered,
            elections_held: counters.elections_held,
            bytes_on_air: counters.bytes_on_air,
        });
        if let Err(what) = protocol.safety_check(net) {
            return Err(SimError::InvariantViolation {
                round,
                what,
                trace_tail: net.trace_tail(40),
            });
        }
        net.queue.advance_to(t1);
    }
    Ok(samples)
}

fn dispatch<P: Protocol>(
    net: &mut Network,
    protocol: &mut P,
    event: crate::sim::event::Event,
) -> Result<(), SimError> {
    match event.kind {
        EventKind::RoundBoundary { round } => {
            net.trace_event("round_boundary", -1, -1, 0, round.to_string());
        }
        EventKind::NodeFailure { node } => net.kill(node),
        EventKind::MessageArrival { to, msg } => {
            if !net.receive(to, &msg) {
                return Ok(()); // receiver died in flight
            }
            if msg.route.is_empty() {
                protocol.on_message(net, event.fire_time_ms, to, msg);
            } else {
                net.relay_forward(to, msg);
            }
        }
        EventKind::Timer(timer) => protocol.on_timer(net, event.fire_time_ms, timer),
    }
    Ok(())
}
