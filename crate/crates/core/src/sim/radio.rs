//! Radio propagation and message framing: log-distance path loss, RSSI
//! normalization for the premiership score, and link feasibility for the two
//! hardware classes.

use serde::{Deserialize, Serialize};

use crate::topology::{HardwareClass, NodeId, Position};

/// Log-distance path-loss parameters plus the receiver sensitivity floor and
/// per-class link limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathLossParams {
    /// Received power at 1 m from a primitive transmitter, dBm.
    pub p0_dbm: f64,
    /// Path-loss exponent.
    pub exponent: f64,
    /// Receiver sensitivity floor, dBm.
    pub sensitivity_dbm: f64,
    /// Extra transmit power of the sophisticated (long-range) radio, dB.
    pub high_power_boost_db: f64,
    /// Line-of-sight cap of the primitive radio, meters.
    pub low_range_m: f64,
    /// Line-of-sight cap of the sophisticated radio, meters.
    pub high_range_m: f64,
    /// Constant per-hop delivery latency, milliseconds.
    pub latency_ms: u64,
    /// Probability that a delivered-in-range message is lost anyway.
    pub loss_probability: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            p0_dbm: -40.0,
            exponent: 2.7,
            sensitivity_dbm: -100.0,
            high_power_boost_db: 20.0,
            low_range_m: 200.0,
            high_range_m: 1000.0,
            latency_ms: 2,
            loss_probability: 0.0,
        }
    }
}

impl PathLossParams {
    /// Received signal strength at distance `d(src, dst)` for a primitive
    /// transmitter: p0 - 10 * exponent * log10(d / 1m). Co-located nodes
    /// clamp to p0.
    pub fn rssi(&self, src: &Position, dst: &Position) -> f64 {
        self.rssi_for_class(src, dst, HardwareClass::Primitive)
    }

    pub fn rssi_for_class(&self, src: &Position, dst: &Position, class: HardwareClass) -> f64 {
        let p0 = self.p0_for(class);
        let d = src.distance(dst);
        if d <= 0.0 {
            return p0;
        }
        p0 - 10.0 * self.exponent * d.log10()
    }

    pub fn p0_for(&self, class: HardwareClass) -> f64 {
        match class {
            HardwareClass::Primitive => self.p0_dbm,
            HardwareClass::Sophisticated => self.p0_dbm + self.high_power_boost_db,
        }
    }

    pub fn range_for(&self, class: HardwareClass) -> f64 {
        match class {
            HardwareClass::Primitive => self.low_range_m,
            HardwareClass::Sophisticated => self.high_range_m,
        }
    }

    /// Maps RSSI linearly from [sensitivity floor, p0] onto the integer scale
    /// 0..10 used as the Ss premiership input, floored and clamped.
    pub fn normalized_ss(&self, rssi_dbm: f64) -> i64 {
        let span = self.p0_dbm - self.sensitivity_dbm;
        let scaled = (10.0 * (rssi_dbm - self.sensitivity_dbm) / span).floor();
        (scaled as i64).clamp(0, 10)
    }

    /// Whether a transmission of `class` spanning `d` meters can be decoded:
    /// inside the class line-of-sight cap and above the sensitivity floor.
    pub fn link_feasible(&self, src: &Position, dst: &Position, class: HardwareClass) -> bool {
        let d = src.distance(dst);
        if d > self.range_for(class) {
            return false;
        }
        self.rssi_for_class(src, dst, class) >= self.sensitivity_dbm
    }

    pub fn validate(&self) -> Result<(), crate::error::ScenarioError> {
        if !self.loss_probability.is_finite()
            || self.loss_probability < 0.0
            || self.loss_probability > 1.0
        {
            return Err(crate::error::ScenarioError::Config {
                key: "radio.loss_probability".into(),
                reason: "must lie in [0, 1]".into(),
            });
        }
        if self.sensitivity_dbm >= self.p0_dbm {
            return Err(crate::error::ScenarioError::Config {
                key: "radio.sensitivity_dbm".into(),
                reason: "must lie below p0_dbm".into(),
            });
        }
        if self.low_range_m <= 0.0 || self.high_range_m <= 0.0 {
            return Err(crate::error::ScenarioError::Config {
                key: "radio.low_range_m".into(),
                reason: "ranges must be > 0".into(),
            });
        }
        Ok(())
    }
}

/// Delivery destination: a single node or every listener on a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Unicast(NodeId),
    Broadcast,
}

/// Protocol message tags.
#[derive(Debug, Clone, PartialEq)]
pub enum MessageKind {
    IdAnnounce,
    LeadershipClaim {
        score: i64,
    },
    /// A follower's sensor report: partial per-channel statistics covering
    /// `samples` sampling periods (retained periods ride along after a lost
    /// round).
    DataPacket {
        origin: NodeId,
        round: u32,
        samples: u32,
        stats: Vec<crate::protocol::ChannelStat>,
    },
    Ack {
        of_round: u32,
    },
    /// Replication broadcast of the round's aggregate inside a cell.
    RecordReplica(crate::protocol::AggregateRecord),
    /// Unicast record transfer toward a head, communicator, or master.
    /// `cluster_level` marks a head's merged record bound for the master.
    RecordForward {
        record: crate::protocol::AggregateRecord,
        from: NodeId,
        cluster_level: bool,
    },
    HeadDeathNotice {
        cluster: u32,
    },
    NoticeResponse {
        cluster: u32,
        responder_cell: u32,
    },
    Command {
        activate: bool,
    },
}

impl MessageKind {
    pub fn label(&self) -> &'static str {
        match self {
            MessageKind::IdAnnounce => "id_announce",
            MessageKind::LeadershipClaim { .. } => "leadership_claim",
            MessageKind::DataPacket { .. } => "data_packet",
            MessageKind::Ack { .. } => "ack",
            MessageKind::RecordReplica(_) => "record_replica",
            MessageKind::RecordForward { .. } => "record_forward",
            MessageKind::HeadDeathNotice { .. } => "head_death_notice",
            MessageKind::NoticeResponse { .. } => "notice_response",
            MessageKind::Command { .. } => "command",
        }
    }
}

/// One radio frame. A receiver only decodes frames on a channel it listens
/// to and, for unicast, addressed to it (channel + CDMA code select the
/// node; the engine resolves that pair to the node id). `route` holds the
/// remaining relay hops of a routed unicast, ending at the destination.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub src: NodeId,
    pub dst: Destination,
    pub channel: u16,
    pub code: u16,
    pub payload_bytes: u32,
    pub kind: MessageKind,
    pub route: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryOutcome {
    Delivered,
    OutOfRange,
    BelowSensitivity,
    Lost,
    DeadReceiver,
}

impl DeliveryOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            DeliveryOutcome::Delivered => "delivered",
            DeliveryOutcome::OutOfRange => "out_of_range",
            DeliveryOutcome::BelowSensitivity => "below_sensitivity",
            DeliveryOutcome::Lost => "lost",
            DeliveryOutcome::DeadReceiver => "dead_receiver",
        }
    }
}
