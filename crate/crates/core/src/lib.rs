//! Discrete-event simulator for heterogeneous wireless sensor/actuator
//! networks arranged as hexagonal 7-cell clusters. Implements the SIDLE
//! leader-election protocol (randomized-delay bootstrap elections, the
//! premiership score for rotations, record replication, head-cluster
//! failover with refugee routing) next to LEACH and fuzzy-clustering (FCA)
//! baselines, all over one shared radio and energy model, with per-round
//! metrics, CSV export, and deterministic SVG plots.

pub mod energy;
pub mod error;
pub mod metrics;
pub mod plot;
pub mod protocol;
pub mod scenario;
pub mod sim;
pub mod topology;

pub use energy::{Battery, DrainOutcome, DutyCostModel, EnergyAudit, RadioCostModel};
pub use error::{EnergyError, ProtocolError, ScenarioError, SimError, TopologyError};
pub use metrics::MetricsSample;
pub use protocol::{AggregateRecord, ChannelStat, Protocol, SensorConfig};
pub use scenario::{CompareReport, ScenarioConfig};
pub use sim::event::{Event, EventKind, EventQueue, TimerKind};
pub use sim::network::{Network, RelayPool, TraceRecord};
pub use sim::radio::{DeliveryOutcome, Destination, Message, MessageKind, PathLossParams};
pub use sim::rng::RngStream;
pub use topology::{
    assign_channels, generate_hex_mesh, Cell, CellId, ChannelPlan, Cluster, ClusterId,
    HardwareClass, NodeId, Position, Topology, TopologyConfig,
};
