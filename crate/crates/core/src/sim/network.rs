//! The simulation core shared by every protocol: node runtime state, the
//! event queue, radio delivery with loss, energy billing through the audit
//! ledger, minimum-energy relay routing, and the event trace.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::energy::{
    Battery, DrainOutcome, DutyCostModel, EnergyAudit, EnergyCause, RadioCostModel,
};
use crate::sim::event::{EventKind, EventQueue};
use crate::sim::radio::{DeliveryOutcome, Destination, Message, PathLossParams};
use crate::sim::rng::RngStream;
use crate::topology::{HardwareClass, NodeId, Position, Topology};

/// One line of the exported event trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time_ms: u64,
    pub kind: &'static str,
    pub src: i64,
    pub dst: i64,
    pub bytes: u32,
    pub outcome: String,
}

impl TraceRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.time_ms, self.kind, self.src, self.dst, self.bytes, self.outcome
        )
    }
}

pub fn trace_to_csv(records: &[TraceRecord]) -> String {
    let mut out = String::from("time_ms,kind,src,dst,bytes,outcome\n");
    for r in records {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Trace destination marker for the base-station sink.
pub const BASE_SINK: i64 = -2;

#[derive(Debug)]
struct NodeRuntime {
    position: Position,
    class: HardwareClass,
    battery: Battery,
    alive: bool,
    /// Cleared by a base-station deactivate command; an inactive node stays
    /// alive but contributes no readings.
    active: bool,
    listening: Vec<u16>,
    active_ms: u64,
}

/// Per-round counters folded into the metrics sample.
#[derive(Debug, Default, Clone, Copy)]
pub struct RoundCounters {
    pub records_delivered: u32,
    pub elections_held: u32,
    pub bytes_on_air: u64,
}

/// Relay pools for minimum-energy routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelayPool {
    /// Any live node may repeat frames (leader daisy-chaining and the like).
    LiveNodes,
    /// Only the long-range head devices participate.
    Heads,
}

/// How transmit power is sized for a frame.
#[derive(Debug, Clone, Copy)]
pub enum TxPower {
    /// Sized for the hop distance, capped at the class range.
    Auto,
    /// Fixed broadcast radius in meters (capped at the class range).
    Fixed(f64),
}

pub struct Network {
    pub topology: Topology,
    pub params: PathLossParams,
    pub radio: RadioCostModel,
    pub duty: DutyCostModel,
    pub round_ms: u64,
    pub base_station: Position,
    pub queue: EventQueue,
    pub audit: EnergyAudit,
    pub counters: RoundCounters,
    nodes: Vec<NodeRuntime>,
    head_roster: Vec<NodeId>,
    loss_rng: ChaCha8Rng,
    trace: Option<Vec<TraceRecord>>,
    alive_version: u64,
    route_cache: HashMap<(u32, u32, u8), Option<Vec<NodeId>>>,
}

impl Network {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        topology: Topology,
        params: PathLossParams,
        radio: RadioCostModel,
        duty: DutyCostModel,
        battery: &Battery,
        round_ms: u64,
        base_station: Position,
        run_seed: u64,
        collect_trace: bool,
    ) -> Self {
        let nodes = topology
            .nodes
            .iter()
            .map(|site| NodeRuntime {
                position: site.position,
                class: site.class,
                battery: battery.clone(),
                alive: battery.is_alive(),
                active: true,
                listening: vec![topology.cell(site.cell).channel],
                active_ms: 0,
            })
            .collect();
        let head_roster = topology.clusters.iter().map(|c| c.head_node).collect();
        Self {
            topology,
            params,
            radio,
            duty,
            round_ms,
            base_station,
            queue: EventQueue::new(),
            audit: EnergyAudit::default(),
            counters: RoundCounters::default(),
            nodes,
            head_roster,
            loss_rng: RngStream::new(run_seed, "loss").rng(),
            trace: collect_trace.then(Vec::new),
            alive_version: 0,
            route_cache: HashMap::new(),
        }
    }

    pub fn now_ms(&self) -> u64 {
        self.queue.now_ms()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_alive(&self, node: NodeId) -> bool {
        self.nodes[node.0 as usize].alive
    }

    pub fn is_active(&self, node: NodeId) -> bool {
        let n = &self.nodes[node.0 as usize];
        n.alive && n.active
    }

    pub fn set_active(&mut self, node: NodeId, active: bool) {
        self.nodes[node.0 as usize].active = active;
    }

    pub fn position(&self, node: NodeId) -> Position {
        self.nodes[node.0 as usize].position
    }

    pub fn class(&self, node: NodeId) -> HardwareClass {
        self.nodes[node.0 as usize].class
    }

    pub fn battery(&self, node: NodeId) -> &Battery {
        &self.nodes[node.0 as usize].battery
    }

    pub fn head_roster(&self) -> Vec<NodeId> {
        self.head_roster.clone()
    }

    pub fn alive_version(&self) -> u64 {
        self.alive_version
    }

    pub fn live_nodes(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.alive)
            .map(|(i, _)| NodeId(i as u32))
            .collect()
    }

    pub fn alive_count(&self) -> u32 {
        self.nodes.iter().filter(|n| n.alive).count() as u32
    }

    pub fn total_residual(&self) -> f64 {
        self.nodes.iter().map(|n| n.battery.residual_j).sum()
    }

    /// Replaces the channels a node decodes. Every node hears its own cell
    /// channel; leaders and heads add the inter-cluster channel.
    pub fn set_listening(&mut self, node: NodeId, channels: Vec<u16>) {
        self.nodes[node.0 as usize].listening = channels;
    }

    pub fn add_active_ms(&mut self, node: NodeId, ms: u64) {
        self.nodes[node.0 as usize].active_ms += ms;
    }

    pub fn trace_event(
        &mut self,
        kind: &'static str,
        src: i64,
        dst: i64,
        bytes: u32,
        outcome: String,
    ) {
        let time_ms = self.queue.now_ms();
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRecord {
                time_ms,
                kind,
                src,
                dst,
                bytes,
                outcome,
            });
        }
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.take().unwrap_or_default()
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.trace.as_deref()
    }

    pub fn trace_tail(&self, lines: usize) -> String {
        match &self.trace {
            Some(t) => {
                let skip = t.len().saturating_sub(lines);
                t[skip..]
                    .iter()
                    .map(|r| r.csv_line())
                    .collect::<Vec<_>>()
                    .join("\n")
            }
            None => String::from("(trace collection disabled)"),
        }
    }

    fn charge(&mut self, node: NodeId, amount: f64, cause: EnergyCause) {
        if amount <= 0.0 {
            return;
        }
        let time = self.queue.now_ms();
        let rt = &mut self.nodes[node.0 as usize];
        if !rt.alive {
            return;
        }
        let mut removed = 0.0;
        let outcome = rt
            .battery
            .drain(amount, &mut removed)
            .expect("non-negative");
        self.audit.record(node.0, time, -removed, cause);
        if outcome == DrainOutcome::Dead {
            rt.alive = false;
            self.alive_version += 1;
            self.route_cache.clear();
            self.trace_event("death", node.0 as i64, -1, 0, "battery_exhausted".into());
        }
    }

    pub fn charge_cpu_records(&mut self, node: NodeId, records: u32) {
        self.charge(
            node,
            self.duty.cpu_cost_per_record_j * records as f64,
            EnergyCause::Cpu,
        );
    }

    /// Kills a node outright (scripted failure): drains the battery to zero.
    pub fn kill(&mut self, node: NodeId) {
        let time = self.queue.now_ms();
        let rt = &mut self.nodes[node.0 as usize];
        if !rt.alive {
            return;
        }
        let mut removed = 0.0;
        rt.battery
            .drain(rt.battery.residual_j, &mut removed)
            .unwrap();
        self.audit.record(node.0, time, -removed, EnergyCause::Kill);
        rt.alive = false;
        self.alive_version += 1;
        self.route_cache.clear();
        self.trace_event("death", node.0 as i64, -1, 0, "killed".into());
    }

    /// Transmits a frame. The sender pays for the billed hop distance; each
    /// feasible, listening, live receiver gets an arrival event after the
    /// per-hop latency and pays reception on arrival. Dead senders emit
    /// nothing. For unicast frames with a non-empty `route`, the first route
    /// element is the next hop; intermediate hops are repeated by
    /// `relay_forward` until the route is exhausted.
    pub fn transmit(&mut self, msg: Message, power: TxPower) {
        let src = msg.src;
        if !self.nodes[src.0 as usize].alive {
            return;
        }
        let now = self.queue.now_ms();
        let latency = self.params.latency_ms;
        let src_pos = self.nodes[src.0 as usize].position;
        let class = self.nodes[src.0 as usize].class;
        let range = self.params.range_for(class);

        let hop_target: Option<NodeId> = match (&msg.dst, msg.route.first()) {
            (_, Some(next)) => Some(*next),
            (Destination::Unicast(d), None) => Some(*d),
            (Destination::Broadcast, None) => None,
        };

        let billed_distance = match power {
            TxPower::Fixed(d) => d.min(range),
            TxPower::Auto => match hop_target {
                Some(d) => self.nodes[d.0 as usize]
                    .position
                    .distance(&src_pos)
                    .min(range),
                None => range,
            },
        };
        self.charge(
            src,
            self.radio.tx_cost(msg.payload_bytes, billed_distance),
            EnergyCause::Tx,
        );
        self.nodes[src.0 as usize].active_ms += latency;
        self.counters.bytes_on_air += msg.payload_bytes as u64;

        match hop_target {
            Some(next) => {
                let outcome = self.evaluate_delivery(src, next);
                self.trace_event(
                    msg.kind.label(),
                    src.0 as i64,
                    next.0 as i64,
                    msg.payload_bytes,
                    outcome.as_str().to_string(),
                );
                if outcome == DeliveryOutcome::Delivered {
                    let mut delivered = msg;
                    if !delivered.route.is_empty() {
                        delivered.route.remove(0);
                    }
                    self.queue
                        .schedule(
                            now + latency,
                            EventKind::MessageArrival {
                                to: next,
                                msg: delivered,
                            },
                        )
                        .expect("arrival is in the future");
                }
            }
            None => {
                for i in 0..self.nodes.len() {
                    let node = NodeId(i as u32);
                    if node == src || !self.nodes[i].listening.contains(&msg.channel) {
                        continue;
                    }
                    let outcome = self.evaluate_delivery(src, node);
                    if outcome == DeliveryOutcome::Delivered {
                        self.queue
                            .schedule(
                                now + latency,
                                EventKind::MessageArrival {
                                    to: node,
                                    msg: msg.clone(),
                                },
                            )
                            .expect("arrival is in the future");
                    }
                }
                self.trace_event(
                    msg.kind.label(),
                    src.0 as i64,
                    -1,
                    msg.payload_bytes,
                    "broadcast".into(),
                );
            }
        }
    }

    /// A relay hop: the intermediate node repeats a routed unicast frame
    /// toward its next hop.
    pub fn relay_forward(&mut self, relay: NodeId, mut msg: Message) {
        debug_assert!(matches!(msg.dst, Destination::Unicast(_)));
        let src = msg.src;
        msg.src = relay;
        let mut relayed = msg;
        // restore the logical source after billing the relay as transmitter
        self.transmit(relayed.clone(), TxPower::Auto);
        relayed.src = src;
    }

    fn evaluate_delivery(&mut self, src: NodeId, dst: NodeId) -> DeliveryOutcome {
        let s = &self.nodes[src.0 as usize];
        let d = &self.nodes[dst.0 as usize];
        let dist = s.position.distance(&d.position);
        if dist > self.params.range_for(s.class) {
            return DeliveryOutcome::OutOfRange;
        }
        if self
            .params
            .rssi_for_class(&s.position, &d.position, s.class)
            < self.params.sensitivity_dbm
        {
            return DeliveryOutcome::BelowSensitivity;
        }
        if self.params.loss_probability > 0.0 {
            let draw: f64 = self.loss_rng.gen();
            if draw < self.params.loss_probability {
                return DeliveryOutcome::Lost;
            }
        }
        if !d.alive {
            return DeliveryOutcome::DeadReceiver;
        }
        DeliveryOutcome::Delivered
    }

    /// Charges reception energy at arrival time; returns false when the
    /// receiver died between scheduling and arrival.
    pub fn receive(&mut self, node: NodeId, msg: &Message) -> bool {
        if !self.nodes[node.0 as usize].alive {
            return false;
        }
        self.charge(node, self.radio.rx_cost(msg.payload_bytes), EnergyCause::Rx);
        self.nodes[node.0 as usize].active_ms += self.params.latency_ms;
        self.nodes[node.0 as usize].alive
    }

    /// End-of-round duty billing and harvest; resets per-node active time.
    pub fn finish_round(&mut self, daylight_fraction: f64) {
        let round_s = self.round_ms as f64 / 1000.0;
        for i in 0..self.nodes.len() {
            let node = NodeId(i as u32);
            if !self.nodes[i].alive {
                continue;
            }
            let active_s = self.nodes[i].active_ms as f64 / 1000.0;
            let cost = self.duty.round_cost(round_s, active_s);
            self.charge(node, cost, EnergyCause::Duty);
            self.nodes[i].active_ms = 0;
            let rt = &mut self.nodes[i];
            if rt.alive && rt.battery.harvest_rate_w > 0.0 {
                let time = self.queue.now_ms();
                let added = rt.battery.harvest(round_s, daylight_fraction);
                if added > 0.0 {
                    self.audit.record(node.0, time, added, EnergyCause::Harvest);
                }
            }
        }
    }

    pub fn take_round_counters(&mut self) -> RoundCounters {
        std::mem::take(&mut self.counters)
    }

    /// Minimum-energy relay route from `src` to `dst` over the given pool.
    /// Edge weight is the per-bit radio cost of the hop (tx electronics +
    /// amplifier at the hop distance, plus reception), so the returned path
    /// minimizes total energy for any payload size. Ties fall to fewer hops,
    /// then lower node ids. Returns hops excluding `src`, ending at `dst`;
    /// `None` when unreachable.
    pub fn min_energy_path(
        &mut self,
        src: NodeId,
        dst: NodeId,
        pool: RelayPool,
    ) -> Option<Vec<NodeId>> {
        let key = (src.0, dst.0, pool as u8);
        if let Some(cached) = self.route_cache.get(&key) {
            return cached.clone();
        }
        let result = self.dijkstra(src, dst, pool);
        self.route_cache.insert(key, result.clone());
        result
    }

    fn dijkstra(&self, src: NodeId, dst: NodeId, pool: RelayPool) -> Option<Vec<NodeId>> {
        if !self.nodes[src.0 as usize].alive || !self.nodes[dst.0 as usize].alive {
            return None;
        }
        let mut verts: Vec<NodeId> = match pool {
            RelayPool::LiveNodes => self.live_nodes(),
            RelayPool::Heads => self
                .head_roster
                .iter()
                .copied()
                .filter(|h| self.nodes[h.0 as usize].alive)
                .collect(),
        };
        if !verts.contains(&src) {
            verts.push(src);
        }
        if !verts.contains(&dst) {
            verts.push(dst);
        }
        verts.sort();
        let n = verts.len();
        let index_of = |id: NodeId| verts.binary_search(&id).expect("vertex present");
        let s = index_of(src);
        let t = index_of(dst);

        let mut dist = vec![f64::INFINITY; n];
        let mut hops = vec![u32::MAX; n];
        let mut prev = vec![usize::MAX; n];
        let mut done = vec![false; n];
        dist[s] = 0.0;
        hops[s] = 0;
        loop {
            let mut u = usize::MAX;
            for i in 0..n {
                if done[i] || dist[i].is_infinite() {
                    continue;
                }
                if u == usize::MAX
                    || dist[i]
                        .total_cmp(&dist[u])
                        .then(hops[i].cmp(&hops[u]))
                        .then(verts[i].cmp(&verts[u]))
                        .is_lt()
                {
                    u = i;
                }
            }
            if u == usize::MAX || u == t {
                break;
            }
            done[u] = true;
            let u_pos = self.nodes[verts[u].0 as usize].position;
            let u_class = self.nodes[verts[u].0 as usize].class;
            for v in 0..n {
                if done[v] || v == u {
                    continue;
                }
                let v_pos = self.nodes[verts[v].0 as usize].position;
                if !self.params.link_feasible(&u_pos, &v_pos, u_class) {
                    continue;
                }
                let d = u_pos.distance(&v_pos);
                let w = self.radio.electronics_j_per_bit
                    + self.radio.amplifier_j_per_bit_m2 * d * d
                    + self.radio.rx_j_per_bit;
                let cand = dist[u] + w;
                let cand_hops = hops[u].saturating_add(1);
                if cand
                    .total_cmp(&dist[v])
                    .then(cand_hops.cmp(&hops[v]))
                    .is_lt()
                {
                    dist[v] = cand;
                    hops[v] = cand_hops;
                    prev[v] = u;
                }
            }
        }
        if dist[t].is_infinite() {
            return None;
        }
        let mut path = Vec::new();
        let mut cur = t;
        while cur != s {
            path.push(verts[cur]);
            cur = prev[cur];
            if cur == usize::MAX {
                return None;
            }
        }
        path.reverse();
        Some(path)
    }

    /// Total per-bit radio cost along a relay path starting at `src`.
    pub fn path_cost_per_bit(&self, src: NodeId, path: &[NodeId]) -> f64 {
        let mut cost = 0.0;
        let mut from = self.nodes[src.0 as usize].position;
        for hop in path {
            let to = self.nodes[hop.0 as usize].position;
            let d = from.distance(&to);
            cost += self.radio.electronics_j_per_bit
                + self.radio.amplifier_j_per_bit_m2 * d * d
                + self.radio.rx_j_per_bit;
            from = to;
        }
        cost
    }

    /// Sends a record toward the base-station sink. The base is an abstract
    /// collector, not a node: delivery succeeds when the sender's radio
    /// closes the link.
    pub fn transmit_to_base(
        &mut self,
        src: NodeId,
        payload_bytes: u32,
        kind_label: &'static str,
    ) -> bool {
        if !self.nodes[src.0 as usize].alive {
            return false;
        }
        let rt = &self.nodes[src.0 as usize];
        let dist = rt.position.distance(&self.base_station);
        let range = self.params.range_for(rt.class);
        let feasible = dist <= range
            && self
                .params
                .rssi_for_class(&rt.position, &self.base_station, rt.class)
                >= self.params.sensitivity_dbm;
        self.charge(
            src,
            self.radio.tx_cost(payload_bytes, dist.min(range)),
            EnergyCause::Tx,
        );
        self.nodes[src.0 as usize].active_ms += self.params.latency_ms;
        self.counters.bytes_on_air += payload_bytes as u64;
        self.trace_event(
            kind_label,
            src.0 as i64,
            BASE_SINK,
            payload_bytes,
            if feasible {
                "delivered".into()
            } else {
                "out_of_range".into()
            },
        );
        feasible
    }

    /// Straight-line feasibility of one hop from `src` to `dst`.
    pub fn hop_feasible(&self, src: NodeId, dst: NodeId) -> bool {
        let s = &self.nodes[src.0 as usize];
        let d = &self.nodes[dst.0 as usize];
        self.params.link_feasible(&s.position, &d.position, s.class)
    }

    /// Forces a battery level (scenario tooling and tests). The change is
    /// audited so ledger closure still holds.
    pub fn adjust_residual(&mut self, node: NodeId, target_j: f64) {
        let time = self.queue.now_ms();
        let rt = &mut self.nodes[node.0 as usize];
        let target = target_j.clamp(0.0, rt.battery.capacity_j);
        let delta = target - rt.battery.residual_j;
        rt.battery.residual_j = target;
        self.audit.record(node.0, time, delta, EnergyCause::Adjust);
        if target == 0.0 && rt.alive {
            rt.alive = false;
            self.alive_version += 1;
            self.route_cache.clear();
            self.trace_event("death", node.0 as i64, -1, 0, "battery_exhausted".into());
        }
    }
}
