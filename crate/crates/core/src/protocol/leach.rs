//! LEACH baseline: randomized cluster-head rotation via the threshold
//! T(n) = P / (1 - P * (r mod 1/P)) for nodes still in the eligible set G,
//! signal-strength cluster joining, TDMA member slots, and single-hop
//! CH-to-base transmission. Runs over the identical radio and energy models
//! as SIDLE; cells and clusters are ignored, only node positions matter.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::protocol::{AggregateRecord, ChannelStat, Protocol, SensorConfig, CONTROL_BYTES};
use crate::sim::event::{EventKind, TimerKind};
use crate::sim::network::{Network, TxPower};
use crate::sim::radio::{Destination, Message, MessageKind};
use crate::sim::rng::{sensor_reading, RngStream};
use crate::topology::{CellId, NodeId};

/// Every node listens on one flat channel; LEACH does not use the FDMA plan.
const FLAT_CHANNEL: u16 = 0;

/// Window every node spends listening for CH advertisements each round;
/// re-clustering every round is what makes this a recurring cost.
const ADVERT_LISTEN_MS: u64 = 100;
const DATA_START_MS: u64 = 700;
const SLOT_MS: u64 = 10;
const COLLECT_MARGIN_MS: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeachConfig {
    /// Desired cluster-head fraction P.
    pub p: f64,
}

impl Default for LeachConfig {
    fn default() -> Self {
        Self { p: 0.05 }
    }
}

impl LeachConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !self.p.is_finite() || self.p <= 0.0 || self.p > 1.0 {
            return Err(ScenarioError::Config {
                key: "leach.p".into(),
                reason: "must lie in (0, 1]".into(),
            });
        }
        Ok(())
    }

    /// Rounds per rotation epoch: ceil(1/P).
    pub fn epoch_rounds(&self) -> u32 {
        (1.0 / self.p).ceil() as u32
    }
}

/// The election threshold T(n): 0 for nodes outside G, else
/// P / (1 - P * (r mod 1/P)), clamped to 1.
pub fn leach_threshold(p: f64, round: u32, eligible: bool) -> f64 {
    if !eligible {
        return 0.0;
    }
    let epoch = (1.0 / p).ceil() as u32;
    let r_mod = (round % epoch) as f64;
    (p / (1.0 - p * r_mod)).min(1.0)
}

#[derive(Debug, Clone)]
struct LeachNode {
    eligible: bool,
    is_ch: bool,
    /// The CH this member joined, by strongest advertisement.
    joined: Option<NodeId>,
    best_advert_rssi: f64,
    assigned_slot: Option<u16>,
    pending_stats: Vec<ChannelStat>,
    pending_periods: u32,
    /// Reports collected while acting as CH.
    collect: Vec<(NodeId, u32, Vec<ChannelStat>)>,
}

/// LEACH protocol state.
pub struct LeachProtocol {
    cfg: LeachConfig,
    sensors: SensorConfig,
    reading_seed: u64,
    threshold_rng: ChaCha8Rng,
    nodes: Vec<LeachNode>,
    round: u32,
    /// CHs elected this round, ascending.
    heads: Vec<NodeId>,
    /// Lifetime CH elections per node (epoch-coverage bookkeeping).
    ch_service_count: Vec<u32>,
}

impl LeachProtocol {
    pub fn new(net: &Network, cfg: LeachConfig, sensors: SensorConfig, run_seed: u64) -> Self {
        let nodes = net
            .topology
            .nodes
            .iter()
            .map(|_| LeachNode {
                eligible: true,
                is_ch: false,
                joined: None,
                best_advert_rssi: f64::NEG_INFINITY,
                assigned_slot: None,
                pending_stats: vec![ChannelStat::empty(); sensors.channels as usize],
                pending_periods: 0,
                collect: Vec::new(),
            })
            .collect();
        Self {
            cfg,
            sensors,
            reading_seed: net.topology.config.seed,
            threshold_rng: RngStream::new(run_seed, "leach-threshold").rng(),
            ch_service_count: vec![0; net.topology.nodes.len()],
            nodes,
            round: 0,
            heads: Vec::new(),
        }
    }

    pub fn current_heads(&self) -> &[NodeId] {
        &self.heads
    }

    /// How often a node has self-elected as CH so far.
    pub fn ch_service_count(&self, node: NodeId) -> u32 {
        self.ch_service_count[node.0 as usize]
    }

    /// The TDMA slot granted to a member this round.
    pub fn assigned_slot(&self, node: NodeId) -> Option<u16> {
        self.nodes[node.0 as usize].assigned_slot
    }

    pub fn served_as_ch_this_epoch(&self, node: NodeId) -> bool {
        !self.nodes[node.0 as usize].eligible
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

impl Protocol for LeachProtocol {
    fn name(&self) -> &'static str {
        "leach"
    }

    fn on_round_start(&mut self, net: &mut Network, round: u32) {
        self.round = round;
        let t0 = round as u64 * net.round_ms;
        let epoch = self.cfg.epoch_rounds();

        // epoch boundary resets the eligible set G
        if round.is_multiple_of(epoch) {
            for n in self.nodes.iter_mut() {
                n.eligible = true;
            }
        }

        self.heads.clear();
        let threshold_now = |eligible: bool| leach_threshold(self.cfg.p, round, eligible);
        for i in 0..self.nodes.len() {
            let node = NodeId(i as u32);
            {
                let st = &mut self.nodes[i];
                st.is_ch = false;
                st.joined = None;
                st.best_advert_rssi = f64::NEG_INFINITY;
                st.assigned_slot = None;
                st.collect.clear();
            }
            if !net.is_alive(node) {
                continue;
            }
            if net.is_active(node) {
                for ch in 0..self.sensors.channels {
                    let v = sensor_reading(self.reading_seed, node.0, ch, round);
                    self.nodes[i].pending_stats[ch as usize].observe(v);
                }
                self.nodes[i].pending_periods += 1;
            }
            // re-clustering forces everyone awake for the advert window
            net.add_active_ms(node, ADVERT_LISTEN_MS);
            // each node draws against T(n)
            let draw: f64 = self.threshold_rng.gen();
            let t = threshold_now(self.nodes[i].eligible);
            if draw < t {
                self.nodes[i].is_ch = true;
                self.nodes[i].eligible = false;
                self.heads.push(node);
                self.ch_service_count[i] += 1;
                net.counters.elections_held += 1;
            }
        }

        // CH advertisements at maximum power
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

        // member data slots fire after the join/schedule exchange; slots are
        // granted in ascending node id, which every member can derive
        let mut slot = 0u16;
        for i in 0..self.nodes.len() {
            let node = NodeId(i as u32);
            if !net.is_alive(node) || self.nodes[i].is_ch || !net.is_active(node) {
                continue;
            }
            self.nodes[i].assigned_slot = Some(slot);
            net.queue
                .schedule(
                    t0 + DATA_START_MS + slot as u64 * SLOT_MS,
                    EventKind::Timer(TimerKind::AckTimeout { node, attempt: 0 }),
                )
                .ok();
            slot += 1;
        }
        // CH collection closes after the last possible slot
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
        // with zero CHs this round, every node sends straight to the base
        if self.heads.is_empty() {
            net.queue
                .schedule(
                    collect_at,
                    EventKind::Timer(TimerKind::ChCollectDeadline {
                        ch: NodeId(u32::MAX),
                    }),
                )
                .ok();
        }
    }

    fn on_message(&mut self, net: &mut Network, _at_ms: u64, to: NodeId, msg: Message) {
        match msg.kind {
            MessageKind::IdAnnounce => {
                // a CH advertisement: members join the strongest signal
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
                // member data slot
                if !net.is_alive(node) || self.nodes[node.0 as usize].is_ch {
                    return;
                }
                if self.nodes[node.0 as usize].pending_periods == 0 {
                    return;
                }
                let samples = self.nodes[node.0 as usize].pending_periods;
                let stats = self.nodes[node.0 as usize].pending_stats.clone();
                let payload = self.sensors.packet_bytes(samples);
                match self.nodes[node.0 as usize].joined {
                    Some(ch) => {
                        // the member does not know whether its CH is still
                        // alive; the transmission is spent either way
                        let msg = Message {
                            src: node,
                            dst: Destination::Unicast(ch),
                            channel: FLAT_CHANNEL,
                            code: 0,
                            payload_bytes: payload,
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
                        st.pending_stats =
                            vec![ChannelStat::empty(); self.sensors.channels as usize];
                        st.pending_periods = 0;
                    }
                    None => {
                        // no advertisement heard: fall back to a direct
                        // base-station transmission
                        net.charge_cpu_records(node, 1);
                        let mut record = AggregateRecord::new(
                            net.topology.node(node).map(|s| s.cell).unwrap_or(CellId(0)),
                            self.round,
                            self.sensors.channels,
                        );
                        for (slot, stat) in
                            self.nodes[node.0 as usize].pending_stats.iter().enumerate()
                        {
                            record.stats[slot].merge(stat);
                        }
                        record.source_count = 1;
                        if net.transmit_to_base(node, record.size_bytes(), "base_delivery") {
                            net.counters.records_delivered += 1;
                        }
                        let st = &mut self.nodes[node.0 as usize];
                        st.pending_stats =
                            vec![ChannelStat::empty(); self.sensors.channels as usize];
                        st.pending_periods = 0;
                    }
                }
            }
            TimerKind::ChCollectDeadline { ch } => {
                if ch.0 == u32::MAX {
                    return; // zero-CH marker round; members sent directly
                }
                if !net.is_alive(ch) || !self.nodes[ch.0 as usize].is_ch {
                    return;
                }
                self.transmit_record_to_base(net, ch);
            }
            _ => {}
        }
    }

    fn on_round_end(&mut self, _net: &mut Network, _round: u32) {}

    fn safety_check(&self, _net: &Network) -> Result<(), String> {
        Ok(())
    }
}

/// Every node joins the flat channel before a LEACH run.
pub fn configure_listening(net: &mut Network) {
    for i in 0..net.node_count() {
        net.set_listening(NodeId(i as u32), vec![FLAT_CHANNEL]);
    }
}
