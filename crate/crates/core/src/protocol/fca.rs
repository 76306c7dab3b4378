//! FCA baseline: each node computes a fuzzy cluster-head chance from its
//! residual-energy ratio, node degree, and centrality; a node becomes CH
//! exactly when its chance strictly exceeds every neighbor inside the
//! cluster range (ties fall to the lowest id). Members join the strongest
//! CH signal; aggregation and base transmission mirror LEACH.

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::protocol::fuzzy::FuzzyRuleBase;
use crate::protocol::{AggregateRecord, ChannelStat, Protocol, SensorConfig, CONTROL_BYTES};
use crate::sim::event::{EventKind, TimerKind};
use crate::sim::network::{Network, TxPower};
use crate::sim::radio::{Destination, Message, MessageKind};
use crate::sim::rng::sensor_reading;
use crate::topology::{CellId, NodeId, Position};

const FLAT_CHANNEL: u16 = 0;
/// Chance exchange plus advert listening, charged every round.
const CHANCE_LISTEN_MS: u64 = 100;
const DATA_START_MS: u64 = 700;
const SLOT_MS: u64 = 10;
const COLLECT_MARGIN_MS: u64 = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FcaConfig {
    /// Neighborhood radius for the local-maximum CH rule, meters. Zero means
    /// "derive from the topology" (twice the cell radius).
    pub cluster_range_m: f64,
}

impl Default for FcaConfig {
    fn default() -> Self {
        Self {
            cluster_range_m: 0.0,
        }
    }
}

impl FcaConfig {
    pub fn effective_range(&self, cell_radius_m: f64) -> f64 {
        if self.cluster_range_m > 0.0 {
            self.cluster_range_m
        } else {
            2.0 * cell_radius_m
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.cluster_range_m < 0.0 {
            return Err(ScenarioError::Config {
                key: "fca.cluster_range_m".into(),
                reason: "must be >= 0".into(),
            });
        }
        Ok(())
    }
}

/// The fuzzy inputs of one node this round.
pub fn fca_node_inputs(net: &Network, node: NodeId, cluster_range_m: f64) -> (f64, f64, f64) {
    let battery = net.battery(node);
    let energy_ratio = battery.residual_j / battery.capacity_j;
    let pos = net.position(node);
    let degree = net
        .live_nodes()
        .into_iter()
        .filter(|&m| m != node && net.position(m).distance(&pos) <= cluster_range_m)
        .count() as f64;
    let center = Position::new(
        (net.topology.bbox_min.x + net.topology.bbox_max.x) / 2.0,
        (net.topology.bbox_min.y + net.topology.bbox_max.y) / 2.0,
    );
    let radius = net.topology.bbox_min.distance(&net.topology.bbox_max) / 2.0;
    let centrality = if radius > 0.0 {
        (1.0 - pos.distance(&center) / radius).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (energy_ratio, degree, centrality)
}

#[derive(Debug, Clone)]
struct FcaNode {
    chance: f64,
    is_ch: bool,
    joined: Option<NodeId>,
    best_advert_rssi: f64,
    pending_stats: Vec<ChannelStat>,
    pending_periods: u32,
    collect: Vec<(NodeId, u32, Vec<ChannelStat>)>,
}

pub struct FcaProtocol {
    cfg: FcaConfig,
    rules: FuzzyRuleBase,
    output_table: Vec<[f64; 5]>,
    sensors: SensorConfig,
    reading_seed: u64,
    nodes: Vec<FcaNode>,
    round: u32,
    heads: Vec<NodeId>,
}

impl FcaProtocol {
    pub fn new(net: &Network, cfg: FcaConfig, rules: FuzzyRuleBase, sensors: SensorConfig) -> Self {
        let nodes = net
            .topology
            .nodes
            .iter()
            .map(|_| FcaNode {
                chance: 0.0,
                is_ch: false,
                joined: None,
                best_advert_rssi: f64::NEG_INFINITY,
                pending_stats: vec![ChannelStat::empty(); sensors.channels as usize],
                pending_periods: 0,
                collect: Vec::new(),
            })
            .collect();
        Self {
            cfg,
            output_table: rules.output_table(),
            rules,
            sensors,
            reading_seed: net.topology.config.seed,
            nodes,
            round: 0,
            heads: Vec::new(),
        }
    }

    pub fn current_heads(&self) -> &[NodeId] {
        &self.heads
    }

    pub fn chance_of(&self, node: NodeId) -> f64 {
        self.nodes[node.0 as usize].chance
    }

    fn transmit_record_to_base(&mut self, net: &mut Network, ch: NodeId) {
        let entry = &mut self.nodes[ch.0 as usize];
        let mut record = AggregateRecord::new(
            net.topology.node(ch).map(|s| s.cell).unwrap_or(CellId(0)),
            self.round,
            self.sensors.channels,
        );
        if entry.pending_periods > 0 {
            for (slot, stat) in entry.pending_stats.iter().enumerate() {
                record.stats[slot].merge(stat);
            }
            record.source_count += 1;
            entry.pending_stats = vec![ChannelStat::empty(); self.sensors.channels as usize];
            entry.pending_periods = 0;
        }
        let collected = std::mem::take(&mut entry.collect);
        for (_, _, stats) in collected {
            for (slot, stat) in stats.iter().enumerate() {
                record.stats[slot].merge(stat);
            }
            record.source_count += 1;
        }
        net.charge_cpu_records(ch, record.source_count.max(1));
        if net.transmit_to_base(ch, record.size_bytes(), "base_delivery") {
            net.counters.records_delivered += 1;
        }
    }
}

impl Protocol for FcaProtocol {
    fn name(&self) -> &'static str {
        "fca"
    }

    fn on_round_start(&mut self, net: &mut Network, round: u32) {
        self.round = round;
        let t0 = round as u64 * net.round_ms;
        let range = self.cfg.effective_range(net.topology.config.cell_radius_m);

        // sense, compute the fuzzy chance, broadcast it locally
        let live = net.live_nodes();
        for &node in &live {
            let i = node.0 as usize;
            self.nodes[i].is_ch = false;
            self.nodes[i].joined = None;
            self.nodes[i].best_advert_rssi = f64::NEG_INFINITY;
            self.nodes[i].collect.clear();
            if net.is_active(node) {
                for ch in 0..self.sensors.channels {
                    let v = sensor_reading(self.reading_seed, node.0, ch, round);
                    self.nodes[i].pending_stats[ch as usize].observe(v);
                }
                self.nodes[i].pending_periods += 1;
            }
            let (energy, degree, centrality) = fca_node_inputs(net, node, range);
            self.nodes[i].chance =
                self.rules
                    .chance_with_table(&self.output_table, energy, degree, centrality);
            net.charge_cpu_records(node, 1); // the inference itself
            net.add_active_ms(node, CHANCE_LISTEN_MS);
            let msg = Message {
                src: node,
                dst: Destination::Broadcast,
                channel: FLAT_CHANNEL,
                code: 0,
                payload_bytes: CONTROL_BYTES,
                kind: MessageKind::LeadershipClaim {
                    score: (self.nodes[i].chance * 1000.0) as i64,
                },
                route: Vec::new(),
            };
            net.transmit(msg, TxPower::Fixed(range));
        }

        // local-maximum rule over the geometric neighborhood
        self.heads.clear();
        for &node in &live {
            if !net.is_alive(node) {
                continue; // chance broadcasts may have drained it
            }
            let my_chance = self.nodes[node.0 as usize].chance;
            let pos = net.position(node);
            let mut is_max = true;
            for &other in &live {
                if other == node || !net.is_alive(other) {
                    continue;
                }
                if net.position(other).distance(&pos) > range {
                    continue;
                }
                let their = self.nodes[other.0 as usize].chance;
                if their > my_chance || (their == my_chance && other < node) {
                    is_max = false;
                    break;
                }
            }
            if is_max {
                self.nodes[node.0 as usize].is_ch = true;
                self.heads.push(node);
                net.counters.elections_held += 1;
            }
        }

        // CH advertisements for membership by signal strength
        for &ch in &self.heads.clone() {
            let msg = Message {
                src: ch,
                dst: Destination::Broadcast,
                channel: FLAT_CHANNEL,
                code: 0,
                payload_bytes: CONTROL_BYTES,
                kind: MessageKind::IdAnnounce,
                route: Vec::new(),
            };
            net.transmit(msg, TxPower::Fixed(net.params.low_range_m));
        }

        // member data slots and CH collection deadlines
        let mut slot = 0u64;
        for i in 0..self.nodes.len() {
            let node = NodeId(i as u32);
            if !net.is_alive(node) || self.nodes[i].is_ch || !net.is_active(node) {
                continue;
            }
            net.queue
                .schedule(
                    t0 + DATA_START_MS + slot * SLOT_MS,
                    EventKind::Timer(TimerKind::AckTimeout { node, attempt: 0 }),
                )
                .ok();
            slot += 1;
        }
        let collect_at =
            t0 + DATA_START_MS + (net.node_count() as u64 + 1) * SLOT_MS + COLLECT_MARGIN_MS;
        for &ch in &self.heads.clone() {
            net.queue
                .schedule(
                    collect_at,
                    EventKind::Timer(TimerKind::ChCollectDeadline { ch }),
                )
                .ok();
        }
    }

    fn on_message(&mut self, net: &mut Network, _at_ms: u64, to: NodeId, msg: Message) {
        match msg.kind {
            MessageKind::IdAnnounce => {
                if self.nodes[to.0 as usize].is_ch {
                    return;
                }
                let rssi = net.params.rssi_for_class(
                    &net.position(msg.src),
                    &net.position(to),
                    net.class(msg.src),
                );
                let st = &mut self.nodes[to.0 as usize];
                if rssi > st.best_advert_rssi {
                    st.best_advert_rssi = rssi;
                    st.joined = Some(msg.src);
                }
            }
            MessageKind::DataPacket {
                origin,
                samples,
                stats,
                ..
            } if self.nodes[to.0 as usize].is_ch => {
                self.nodes[to.0 as usize]
                    .collect
                    .push((origin, samples, stats));
            }
            _ => {}
        }
    }

    fn on_timer(&mut self, net: &mut Network, _at_ms: u64, timer: TimerKind) {
        match timer {
            TimerKind::AckTimeout { node, attempt: 0 } => {
                if !net.is_alive(node) || self.nodes[node.0 as usize].is_ch {
                    return;
                }
                if self.nodes[node.0 as usize].pending_periods == 0 {
                    return;
                }
                let Some(ch) = self.nodes[node.0 as usize].joined else {
                    return; // isolated member: holds its readings
                };
                let samples = self.nodes[node.0 as usize].pending_periods;
                let stats = self.nodes[node.0 as usize].pending_stats.clone();
                let msg = Message {
                    src: node,
                    dst: Destination::Unicast(ch),
                    channel: FLAT_CHANNEL,
                    code: 0,
                    payload_bytes: self.sensors.packet_bytes(samples),
                    kind: MessageKind::DataPacket {
                        origin: node,
                        round: self.round,
                        samples,
                        stats,
                    },
                    route: Vec::new(),
                };
                net.charge_cpu_records(node, 1);
                net.transmit(msg, TxPower::Auto);
                let st = &mut self.nodes[node.0 as usize];
                st.pending_stats = vec![ChannelStat::empty(); self.sensors.channels as usize];
                st.pending_periods = 0;
            }
            TimerKind::ChCollectDeadline { ch } => {
                if !net.is_alive(ch) || !self.nodes[ch.0 as usize].is_ch {
                    return;
                }
                self.transmit_record_to_base(net, ch);
            }
            _ => {}
        }
    }

    fn on_round_end(&mut self, _net: &mut Network, _round: u32) {}

    /// No two CHs may dominate one another inside the cluster range.
    fn safety_check(&self, net: &Network) -> Result<(), String> {
        let range = self.cfg.effective_range(net.topology.config.cell_radius_m);
        for (i, a) in self.heads.iter().enumerate() {
            for b in self.heads.iter().skip(i + 1) {
                if !net.is_alive(*a) || !net.is_alive(*b) {
                    continue;
                }
                if net.position(*a).distance(&net.position(*b)) <= range {
                    return Err(format!(
                        "CHs {} and {} sit inside one cluster range",
                        a.0, b.0
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Every node joins the flat channel before an FCA run.
pub fn configure_listening(net: &mut Network) {
    for i in 0..net.node_count() {
        net.set_listening(NodeId(i as u32), vec![FLAT_CHANNEL]);
    }
}
