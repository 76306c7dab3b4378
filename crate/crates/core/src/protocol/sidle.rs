//! The SIDLE protocol: randomized-delay bootstrap elections per cell,
//! premiership-scored rotations and master elections, TDMA data rounds with
//! acknowledged reports, in-cell record replication, minimum-energy record
//! forwarding, and head-cluster failover with refugee routing through a
//! neighboring cluster's communicator.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ProtocolError;
use crate::protocol::{AggregateRecord, ChannelStat, Protocol, SensorConfig, CONTROL_BYTES};
use crate::sim::event::{EventKind, TimerKind};
use crate::sim::network::{Network, RelayPool, TxPower};
use crate::sim::radio::{Destination, Message, MessageKind};
use crate::sim::rng::{sensor_reading, RngStream};
use crate::topology::{CellId, ClusterId, HardwareClass, NodeId};

// Intra-round schedule, milliseconds past the round boundary.
const ELECTION_DECIDE_MS: u64 = 200;
const MASTER_DECIDE_MS: u64 = 250;
const NOTICE_DEADLINE_MS: u64 = 800;
const DATA_START_MS: u64 = 1500;
const SLOT_MS: u64 = 10;
const AGG_MARGIN_MS: u64 = 30;
const HEAD_MERGE_MS: u64 = 4000;
const MASTER_RELAY_MS: u64 = 5000;
const FORWARD_TIMEOUT_MS: u64 = 100;
/// Nodes refresh their identity announcement this often (rounds).
const ANNOUNCE_INTERVAL_ROUNDS: u32 = 10;
/// Awake window charged for a rotation or master election.
const ROTATION_LISTEN_MS: u64 = 50;

/// The (Re, Ng, Pl, Ss) tuple feeding the premiership score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PremiershipInputs {
    /// Normalized residual energy, 0..=10.
    pub re: i64,
    /// Neighbor grade: count of reachable relevant peers.
    pub ng: i64,
    /// Path-length proximity score toward the base station (higher = closer).
    pub pl: i64,
    /// Normalized signal strength, 0..=10.
    pub ss: i64,
}

/// Premiership polynomial coefficients and powers. The defaults give the
/// cubic-energy form Re^3 + 2*Ss^2 + 3*Pl + Ng.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PremiershipWeights {
    pub re_coeff: i64,
    pub re_pow: u32,
    pub ss_coeff: i64,
    pub ss_pow: u32,
    pub pl_coeff: i64,
    pub ng_coeff: i64,
}

impl Default for PremiershipWeights {
    fn default() -> Self {
        Self {
            re_coeff: 1,
            re_pow: 3,
            ss_coeff: 2,
            ss_pow: 2,
            pl_coeff: 3,
            ng_coeff: 1,
        }
    }
}

/// The premiership score: Re^3 + 2*Ss^2 + 3*Pl + Ng.
pub fn premiership(inputs: &PremiershipInputs) -> i64 {
    premiership_weighted(&PremiershipWeights::default(), inputs)
}

/// Premiership under configurable coefficients.
pub fn premiership_weighted(w: &PremiershipWeights, inputs: &PremiershipInputs) -> i64 {
    w.re_coeff * inputs.re.pow(w.re_pow)
        + w.ss_coeff * inputs.ss.pow(w.ss_pow)
        + w.pl_coeff * inputs.pl
        + w.ng_coeff * inputs.ng
}

/// Picks the candidate with the highest premiership score; ties break to the
/// lowest node id.
pub fn select_premier_leader(
    candidates: &[(NodeId, PremiershipInputs)],
) -> Result<NodeId, ProtocolError> {
    select_premier_leader_weighted(&PremiershipWeights::default(), candidates)
}

pub fn select_premier_leader_weighted(
    weights: &PremiershipWeights,
    candidates: &[(NodeId, PremiershipInputs)],
) -> Result<NodeId, ProtocolError> {
    candidates
        .iter()
        .map(|(id, inputs)| (*id, premiership_weighted(weights, inputs)))
        .fold(
            None,
            |best: Option<(NodeId, i64)>, (id, score)| match best {
                None => Some((id, score)),
                Some((bid, bscore)) => {
                    if score > bscore || (score == bscore && id < bid) {
                        Some((id, score))
                    } else {
                        Some((bid, bscore))
                    }
                }
            },
        )
        .map(|(id, _)| id)
        .ok_or(ProtocolError::NoCandidates)
}

/// One uniform draw in [0, delay_max] from the election-delay stream.
pub fn propose_election_delay(rng: &mut ChaCha8Rng, delay_max_ms: u32) -> u32 {
    if delay_max_ms == 0 {
        return 0;
    }
    rng.gen_range(0..=delay_max_ms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElectionOutcome {
    pub winner: NodeId,
    pub restarts: u32,
    pub final_delay_ms: u32,
}

/// Randomized-delay bootstrap election: every candidate proposes a delay;
/// the unique minimum wins and announces at its proposed time. On a tie,
/// exactly the tied candidates redraw. When the configured range is
/// degenerate (delay_max = 0) a full tie cannot shrink, so redraws restore
/// `default_delay_max` and the election still terminates.
pub fn run_cell_election(
    candidates: &[NodeId],
    delay_max_ms: u32,
    default_delay_max_ms: u32,
    mut draw: impl FnMut(NodeId, u32) -> u32,
) -> Result<ElectionOutcome, ProtocolError> {
    if candidates.is_empty() {
        return Err(ProtocolError::NoCandidates);
    }
    let mut pool: Vec<NodeId> = candidates.to_vec();
    let mut range = delay_max_ms;
    let mut restarts = 0u32;
    loop {
        let delays: Vec<(NodeId, u32)> = pool.iter().map(|&n| (n, draw(n, range))).collect();
        let min = delays.iter().map(|(_, d)| *d).min().unwrap();
        let tied: Vec<NodeId> = delays
            .iter()
            .filter(|(_, d)| *d == min)
            .map(|(n, _)| *n)
            .collect();
        if tied.len() == 1 {
            return Ok(ElectionOutcome {
                winner: tied[0],
                restarts,
                final_delay_ms: min,
            });
        }
        restarts += 1;
        pool = tied;
        if range == 0 {
            range = default_delay_max_ms.max(1);
        }
    }
}

/// Protocol role of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Follower,
    Leader,
    HeadCluster,
    Master,
    /// A cell leader whose head cluster died, routing through a communicator.
    Refugee,
}

/// SIDLE tunables, all scenario-config keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SidleConfig {
    pub delay_max_ms: u32,
    pub term_rounds: u32,
    /// Leadership hand-off once normalized residual drops below this 0..10 level.
    pub energy_floor_norm: i64,
    /// Consecutive missed heartbeats (one per round) declaring a collector dead.
    pub heartbeat_miss_limit: u8,
    /// Hop budget anchoring the path-length proximity score.
    pub path_max_hops: i64,
    pub premiership: PremiershipWeights,
    /// Hardware-demo override: force the Ng input of every candidate.
    pub fixed_ng: Option<i64>,
    /// Hardware-demo override: force the Pl input of every candidate.
    pub fixed_pl: Option<i64>,
}

impl Default for SidleConfig {
    fn default() -> Self {
        Self {
            delay_max_ms: 1023,
            term_rounds: 20,
            energy_floor_norm: 2,
            heartbeat_miss_limit: 2,
            path_max_hops: 16,
            premiership: PremiershipWeights::default(),
            fixed_ng: None,
            fixed_pl: None,
        }
    }
}

#[derive(Debug, Clone)]
struct NeighborEntry {
    rssi_dbm: f64,
    last_seen_round: u32,
}

#[derive(Debug, Clone)]
struct NodeState {
    role: Role,
    cell: CellId,
    cluster: ClusterId,
    neighbor_table: BTreeMap<NodeId, NeighborEntry>,
    proposed_delay: Option<u32>,
    leadership_expiry: u32,
    replica_store: BTreeMap<CellId, AggregateRecord>,
    /// Undeliverable records accumulated while the cluster is isolated.
    backlog: Vec<AggregateRecord>,
    /// Partial stats of sampling periods not yet safely aggregated upstream.
    pending_stats: Vec<ChannelStat>,
    pending_periods: u32,
    raw_accumulated_bytes: u64,
    awaiting_ack_round: Option<u32>,
    /// Round whose report was acknowledged; pending readings clear only once
    /// the round's replica broadcast confirms they were aggregated.
    acked_round: Option<u32>,
    /// Record in flight toward the upstream collector, with attempt count.
    pending_forward: Option<(AggregateRecord, u8)>,
    upstream_acked: bool,
    upstream_miss: u8,
    leader_miss: u8,
    heard_replica_this_round: bool,
    /// Watchdog reset: the node sits out rounds before this index.
    reset_until_round: u32,
}

#[derive(Debug, Clone)]
struct CellState {
    cluster: ClusterId,
    leader: Option<NodeId>,
    /// Reports received by the leader this round: origin -> (samples, stats).
    collect: BTreeMap<NodeId, (u32, Vec<ChannelStat>)>,
    needs_election: bool,
    extinct: bool,
    /// A bootstrap election has completed; later elections use premiership.
    bootstrapped: bool,
}

#[derive(Debug, Clone)]
struct ClusterState {
    head_node: NodeId,
    head_cell: CellId,
    /// Leaders confirmed the head dead (by missed forward acks).
    orphaned: bool,
    isolated: bool,
    communicator: Option<NodeId>,
    communicator_cell: Option<CellId>,
    responders: BTreeSet<(NodeId, CellId)>,
    /// Cell records ingested by the head this round.
    head_records: Vec<AggregateRecord>,
    /// Refugee records awaiting the communicator's flush.
    refugee_inbox: Vec<AggregateRecord>,
    flush_scheduled: bool,
}

/// The SIDLE protocol state machine set, stepped by event dispatch.
pub struct SidleProtocol {
    pub cfg: SidleConfig,
    sensors: SensorConfig,
    reading_seed: u64,
    election_rng: ChaCha8Rng,
    nodes: Vec<NodeState>,
    cells: Vec<CellState>,
    clusters: Vec<ClusterState>,
    master: Option<NodeId>,
    master_expiry: u32,
    master_needs_election: bool,
    master_records: Vec<AggregateRecord>,
    pending_commands: Vec<(NodeId, bool)>,
    slots_per_cell: u64,
    round: u32,
}

impl SidleProtocol {
    pub fn new(net: &Network, cfg: SidleConfig, sensors: SensorConfig, run_seed: u64) -> Self {
        let topo = &net.topology;
        let nodes = topo
            .nodes
            .iter()
            .map(|site| NodeState {
                role: Role::Follower,
                cell: site.cell,
                cluster: topo.cell(site.cell).cluster,
                neighbor_table: BTreeMap::new(),
                proposed_delay: None,
                leadership_expiry: 0,
                replica_store: BTreeMap::new(),
                backlog: Vec::new(),
                pending_stats: vec![ChannelStat::empty(); sensors.channels as usize],
                pending_periods: 0,
                raw_accumulated_bytes: 0,
                awaiting_ack_round: None,
                acked_round: None,
                pending_forward: None,
                upstream_acked: false,
                upstream_miss: 0,
                leader_miss: 0,
                heard_replica_this_round: false,
                reset_until_round: 0,
            })
            .collect();
        let cells = topo
            .cells
            .iter()
            .map(|c| CellState {
                cluster: c.cluster,
                leader: None,
                collect: BTreeMap::new(),
                needs_election: true,
                extinct: false,
                bootstrapped: false,
            })
            .collect();
        let clusters = topo
            .clusters
            .iter()
            .map(|c| ClusterState {
                head_node: c.head_node,
                head_cell: c.head_cell,
                orphaned: false,
                isolated: false,
                communicator: None,
                communicator_cell: None,
                responders: BTreeSet::new(),
                head_records: Vec::new(),
                refugee_inbox: Vec::new(),
                flush_scheduled: false,
            })
            .collect();
        let slots_per_cell = topo.config.nodes_per_cell as u64 + 2;
        Self {
            cfg,
            sensors,
            reading_seed: topo.config.seed,
            election_rng: RngStream::new(run_seed, "election-delay").rng(),
            nodes,
            cells,
            clusters,
            master: None,
            master_expiry: 0,
            master_needs_election: true,
            master_records: Vec::new(),
            pending_commands: Vec::new(),
            slots_per_cell,
            round: 0,
        }
    }

    // ------------------------------------------------------------------
    // inspection (tests and tooling)

    pub fn role(&self, node: NodeId) -> Role {
        self.nodes[node.0 as usize].role
    }

    pub fn cell_leader(&self, cell: CellId) -> Option<NodeId> {
        self.cells[cell.0 as usize].leader
    }

    pub fn master(&self) -> Option<NodeId> {
        self.master
    }

    pub fn neighbor_count(&self, node: NodeId) -> usize {
        self.nodes[node.0 as usize].neighbor_table.len()
    }

    pub fn neighbor_last_seen(&self, node: NodeId, peer: NodeId) -> Option<u32> {
        self.nodes[node.0 as usize]
            .neighbor_table
            .get(&peer)
            .map(|e| e.last_seen_round)
    }

    pub fn proposed_delay(&self, node: NodeId) -> Option<u32> {
        self.nodes[node.0 as usize].proposed_delay
    }

    pub fn replica_of(&self, node: NodeId, cell: CellId) -> Option<&AggregateRecord> {
        self.nodes[node.0 as usize].replica_store.get(&cell)
    }

    pub fn backlog_len(&self, node: NodeId) -> usize {
        self.nodes[node.0 as usize].backlog.len()
    }

    pub fn raw_accumulated_bytes(&self, node: NodeId) -> u64 {
        self.nodes[node.0 as usize].raw_accumulated_bytes
    }

    pub fn communicator_of(&self, cluster: ClusterId) -> Option<NodeId> {
        self.clusters[cluster.0 as usize].communicator
    }

    pub fn communicator_cell_of(&self, cluster: ClusterId) -> Option<CellId> {
        self.clusters[cluster.0 as usize].communicator_cell
    }

    pub fn is_orphaned(&self, cluster: ClusterId) -> bool {
        self.clusters[cluster.0 as usize].orphaned
    }

    pub fn is_isolated(&self, cluster: ClusterId) -> bool {
        self.clusters[cluster.0 as usize].isolated
    }

    /// Queues a base-station command; the master relays it next round.
    pub fn queue_command(&mut self, node: NodeId, activate: bool) {
        self.pending_commands.push((node, activate));
    }

    /// Watchdog recovery: wipes the node's volatile protocol state and costs
    /// it the current round of participation.
    pub fn watchdog_reset(&mut self, net: &mut Network, node: NodeId, current_round: u32) {
        let channels = self.sensors.channels as usize;
        let st = &mut self.nodes[node.0 as usize];
        st.neighbor_table.clear();
        st.replica_store.clear();
        st.backlog.clear();
        st.pending_stats = vec![ChannelStat::empty(); channels];
        st.pending_periods = 0;
        st.awaiting_ack_round = None;
        st.acked_round = None;
        st.pending_forward = None;
        st.proposed_delay = None;
        st.reset_until_round = current_round + 1;
        if st.role != Role::Follower {
            st.role = Role::Follower;
            let cell = st.cell;
            if self.cells[cell.0 as usize].leader == Some(node) {
                self.cells[cell.0 as usize].leader = None;
                self.cells[cell.0 as usize].needs_election = true;
            }
        }
        net.trace_event(
            "watchdog_reset",
            node.0 as i64,
            -1,
            0,
            "state_cleared".into(),
        );
    }

    // ------------------------------------------------------------------
    // internals

    fn participating(&self, net: &Network, node: NodeId) -> bool {
        net.is_active(node) && self.nodes[node.0 as usize].reset_until_round <= self.round
    }

    fn live_cell_members(&self, net: &Network, cell: CellId) -> Vec<NodeId> {
        net.topology
            .cell(cell)
            .members
            .iter()
            .copied()
            .filter(|&m| net.is_alive(m))
            .collect()
    }

    fn cell_channel(&self, net: &Network, cell: CellId) -> u16 {
        net.topology.cell(cell).channel
    }

    fn inter_cluster_channel(&self, net: &Network) -> u16 {
        net.topology.plan.inter_cluster_channel
    }

    /// Cell broadcasts are powered to span the cell, not the whole radio range.
    fn broadcast_radius(&self, net: &Network) -> f64 {
        (2.0 * net.topology.config.cell_radius_m).min(net.params.low_range_m)
    }

    fn control_frame(
        &self,
        net: &Network,
        src: NodeId,
        dst: Destination,
        channel: u16,
        kind: MessageKind,
    ) -> Message {
        let code = match dst {
            Destination::Unicast(d) => net.topology.plan.node_code[d.0 as usize],
            Destination::Broadcast => net.topology.plan.node_code[src.0 as usize],
        };
        Message {
            src,
            dst,
            channel,
            code,
            payload_bytes: CONTROL_BYTES,
            kind,
            route: Vec::new(),
        }
    }

    /// Refreshes listening sets after role changes: everyone hears their cell
    /// channel; leaders and heads also hear the inter-cluster channel.
    fn refresh_listening(&self, net: &mut Network, node: NodeId) {
        let cell_ch = self.cell_channel(net, self.nodes[node.0 as usize].cell);
        let mut channels = vec![cell_ch];
        if self.nodes[node.0 as usize].role != Role::Follower {
            channels.push(self.inter_cluster_channel(net));
        }
        net.set_listening(node, channels);
    }

    fn update_neighbor(&mut self, net: &Network, observer: NodeId, transmitter: NodeId) {
        if observer == transmitter {
            return;
        }
        let rssi = net.params.rssi_for_class(
            &net.position(transmitter),
            &net.position(observer),
            net.class(transmitter),
        );
        let round = self.round;
        self.nodes[observer.0 as usize]
            .neighbor_table
            .entry(transmitter)
            .and_modify(|e| {
                e.rssi_dbm = rssi;
                e.last_seen_round = round;
            })
            .or_insert(NeighborEntry {
                rssi_dbm: rssi,
                last_seen_round: round,
            });
    }

    /// Hop count from a head to the base station over the live head graph
    /// (direct base reach = 1); `None` when unreachable.
    fn head_hops_to_base(&self, net: &Network, head: NodeId) -> Option<i64> {
        if !net.is_alive(head) {
            return None;
        }
        let heads: Vec<NodeId> = net
            .head_roster()
            .into_iter()
            .filter(|h| net.is_alive(*h))
            .collect();
        let base = net.base_station;
        let reach_base = |h: NodeId| {
            net.params
                .link_feasible(&net.position(h), &base, HardwareClass::Sophisticated)
        };
        let mut dist: BTreeMap<NodeId, i64> = BTreeMap::new();
        let mut frontier: Vec<NodeId> = heads.iter().copied().filter(|&h| reach_base(h)).collect();
        for &h in &frontier {
            dist.insert(h, 1);
        }
        let mut hops = 1;
        while !frontier.is_empty() && !dist.contains_key(&head) {
            hops += 1;
            let mut next = Vec::new();
            for &u in &heads {
                if dist.contains_key(&u) {
                    continue;
                }
                if frontier.iter().any(|&f| net.hop_feasible(u, f)) {
                    dist.insert(u, hops);
                    next.push(u);
                }
            }
            frontier = next;
        }
        dist.get(&head).copied()
    }

    fn pl_score(&self, hops: Option<i64>) -> i64 {
        if let Some(pl) = self.cfg.fixed_pl {
            return pl;
        }
        match hops {
            Some(h) => (self.cfg.path_max_hops - h).max(0),
            None => 0,
        }
    }

    /// Premiership inputs for a cell-rotation candidate: Re from its battery,
    /// Ng counting live cell mates in radio range, Pl anchored on the
    /// cluster's route toward the base, Ss measured against the cell's
    /// collection point (the head, or the communicator when orphaned).
    fn rotation_inputs(&self, net: &Network, candidate: NodeId) -> PremiershipInputs {
        let st = &self.nodes[candidate.0 as usize];
        let re = net.battery(candidate).normalized_residual();
        let ng = self.cfg.fixed_ng.unwrap_or_else(|| {
            self.live_cell_members(net, st.cell)
                .iter()
                .filter(|&&m| m != candidate && net.hop_feasible(candidate, m))
                .count() as i64
        });
        let cluster = &self.clusters[st.cluster.0 as usize];
        let collection_point = if net.is_alive(cluster.head_node) {
            Some(cluster.head_node)
        } else {
            cluster.communicator.filter(|c| net.is_alive(*c))
        };
        let ss = match collection_point {
            Some(p) => {
                let rssi = net.params.rssi_for_class(
                    &net.position(p),
                    &net.position(candidate),
                    net.class(p),
                );
                net.params.normalized_ss(rssi)
            }
            None => 0,
        };
        let hops = if net.is_alive(cluster.head_node) {
            self.head_hops_to_base(net, cluster.head_node)
                .map(|h| h + 2)
        } else if let Some(comm) = cluster.communicator {
            let adoptive = self.nodes[comm.0 as usize].cluster;
            let adoptive_head = self.clusters[adoptive.0 as usize].head_node;
            self.head_hops_to_base(net, adoptive_head).map(|h| h + 3)
        } else {
            None
        };
        PremiershipInputs {
            re,
            ng,
            pl: self.pl_score(hops),
            ss,
        }
    }

    /// Premiership inputs for a head in the master election.
    fn master_inputs(&self, net: &Network, head: NodeId) -> PremiershipInputs {
        let re = net.battery(head).normalized_residual();
        let peers: Vec<NodeId> = net
            .head_roster()
            .into_iter()
            .filter(|&h| h != head && net.is_alive(h))
            .collect();
        let ng = self
            .cfg
            .fixed_ng
            .unwrap_or_else(|| peers.iter().filter(|&&p| net.hop_feasible(head, p)).count() as i64);
        let ss = peers
            .iter()
            .map(|&p| {
                let rssi = net.params.rssi_for_class(
                    &net.position(p),
                    &net.position(head),
                    HardwareClass::Sophisticated,
                );
                net.params.normalized_ss(rssi)
            })
            .max()
            .unwrap_or(0);
        PremiershipInputs {
            re,
            ng,
            pl: self.pl_score(self.head_hops_to_base(net, head)),
            ss,
        }
    }

    fn is_head(&self, net: &Network, node: NodeId) -> bool {
        net.head_roster().contains(&node)
    }

    fn set_cell_leader(&mut self, net: &mut Network, cell: CellId, leader: NodeId, round: u32) {
        let prev = self.cells[cell.0 as usize].leader.take();
        if let Some(p) = prev {
            if p != leader {
                self.nodes[p.0 as usize].role = if self.is_head(net, p) {
                    if self.master == Some(p) {
                        Role::Master
                    } else {
                        Role::HeadCluster
                    }
                } else {
                    Role::Follower
                };
                self.refresh_listening(net, p);
            }
        }
        let cluster = self.nodes[leader.0 as usize].cluster;
        let orphaned = self.clusters[cluster.0 as usize].orphaned;
        let role = if self.is_head(net, leader) {
            if self.master == Some(leader) {
                Role::Master
            } else {
                Role::HeadCluster
            }
        } else if orphaned {
            Role::Refugee
        } else {
            Role::Leader
        };
        let st = &mut self.nodes[leader.0 as usize];
        st.role = role;
        st.leadership_expiry = round + self.cfg.term_rounds;
        st.upstream_miss = 0;
        st.upstream_acked = false;
        let cs = &mut self.cells[cell.0 as usize];
        cs.leader = Some(leader);
        cs.needs_election = false;
        cs.bootstrapped = true;
        cs.collect.clear(); // a crashed leader's buffer dies with its RAM
        self.refresh_listening(net, leader);
    }

    /// Runs the pending election for one cell at its decide timer.
    fn decide_cell_election(&mut self, net: &mut Network, cell_id: CellId) {
        let round = self.round;
        let live = self.live_cell_members(net, cell_id);
        if live.is_empty() {
            // dead nodes never revive: the cell is gone for good
            if !self.cells[cell_id.0 as usize].extinct {
                self.cells[cell_id.0 as usize].extinct = true;
                self.cells[cell_id.0 as usize].leader = None;
                net.trace_event(
                    "cell_extinct",
                    -1,
                    cell_id.0 as i64,
                    0,
                    ProtocolError::CellExtinct(cell_id.0).to_string(),
                );
            }
            return;
        }
        let members: Vec<NodeId> = live
            .into_iter()
            .filter(|&m| self.participating(net, m))
            .collect();
        if members.is_empty() {
            // everyone alive is deactivated or mid-reset; retry next round
            return;
        }

        // A live sophisticated head claims its cell without an election.
        let cluster_id = self.cells[cell_id.0 as usize].cluster;
        let head = self.clusters[cluster_id.0 as usize].head_node;
        if members.contains(&head) {
            self.set_cell_leader(net, cell_id, head, round);
            net.trace_event(
                "election",
                head.0 as i64,
                cell_id.0 as i64,
                0,
                "head_claims_cell".into(),
            );
            self.schedule_cell_data_phase(net, cell_id);
            return;
        }

        let bootstrapped = self.cells[cell_id.0 as usize].bootstrapped;
        let channel = self.cell_channel(net, cell_id);
        let radius = self.broadcast_radius(net);
        let (winner, note) = if !bootstrapped {
            let delay_max = self.cfg.delay_max_ms;
            let mut draws: BTreeMap<NodeId, u32> = BTreeMap::new();
            let rng = &mut self.election_rng;
            let outcome = run_cell_election(&members, delay_max, 1023, |n, max| {
                let d = propose_election_delay(rng, max);
                draws.insert(n, d);
                d
            })
            .expect("non-empty candidate set");
            for &m in &members {
                net.add_active_ms(m, delay_max.max(64) as u64);
                self.nodes[m.0 as usize].proposed_delay = draws.get(&m).copied();
            }
            // the winner announces itself to the cell
            let claim = self.control_frame(
                net,
                outcome.winner,
                Destination::Broadcast,
                channel,
                MessageKind::LeadershipClaim { score: 0 },
            );
            net.transmit(claim, TxPower::Fixed(radius));
            (
                outcome.winner,
                format!("random_delay restarts={}", outcome.restarts),
            )
        } else {
            let candidates: Vec<(NodeId, PremiershipInputs)> = members
                .iter()
                .map(|&m| (m, self.rotation_inputs(net, m)))
                .collect();
            let winner = select_premier_leader_weighted(&self.cfg.premiership, &candidates)
                .expect("non-empty candidate set");
            for (m, inputs) in &candidates {
                net.add_active_ms(*m, ROTATION_LISTEN_MS);
                let score = premiership_weighted(&self.cfg.premiership, inputs);
                let claim = self.control_frame(
                    net,
                    *m,
                    Destination::Broadcast,
                    channel,
                    MessageKind::LeadershipClaim { score },
                );
                net.transmit(claim, TxPower::Fixed(radius));
            }
            (winner, "premiership".into())
        };
        self.set_cell_leader(net, cell_id, winner, round);
        net.counters.elections_held += 1;
        net.trace_event("election", winner.0 as i64, cell_id.0 as i64, 0, note);
        self.schedule_cell_data_phase(net, cell_id);
    }

    fn decide_master_election(&mut self, net: &mut Network) {
        self.master_needs_election = false;
        let candidates: Vec<(NodeId, PremiershipInputs)> = net
            .head_roster()
            .into_iter()
            .filter(|&h| net.is_alive(h) && self.participating(net, h))
            .map(|h| (h, self.master_inputs(net, h)))
            .collect();
        if candidates.is_empty() {
            if self.master.take().is_some() {
                net.trace_event(
                    "master_election",
                    -1,
                    -1,
                    0,
                    ProtocolError::NetworkHeadless.to_string(),
                );
            }
            return;
        }
        let channel = self.inter_cluster_channel(net);
        for (h, inputs) in &candidates {
            net.add_active_ms(*h, ROTATION_LISTEN_MS);
            let score = premiership_weighted(&self.cfg.premiership, inputs);
            let claim = self.control_frame(
                net,
                *h,
                Destination::Broadcast,
                channel,
                MessageKind::LeadershipClaim { score },
            );
            net.transmit(claim, TxPower::Fixed(net.params.high_range_m));
        }
        let winner = select_premier_leader_weighted(&self.cfg.premiership, &candidates)
            .expect("non-empty candidate set");
        if let Some(prev) = self.master {
            if prev != winner && net.is_alive(prev) {
                self.nodes[prev.0 as usize].role = Role::HeadCluster;
            }
        }
        self.master = Some(winner);
        self.master_expiry = self.round + self.cfg.term_rounds;
        self.nodes[winner.0 as usize].role = Role::Master;
        net.counters.elections_held += 1;
        net.trace_event(
            "master_election",
            winner.0 as i64,
            -1,
            0,
            "premiership".into(),
        );
        // the relay deadline may not have been scheduled at round start
        let relay_at = self.round as u64 * net.round_ms + MASTER_RELAY_MS;
        if relay_at >= net.now_ms() {
            net.queue
                .schedule(
                    relay_at,
                    EventKind::Timer(TimerKind::MasterRelayDeadline { master: winner }),
                )
                .ok();
        }
    }

    /// Assigns TDMA slots to the cell's followers for this round. The slot
    /// timer (AckTimeout attempt 0) is the follower's cue to send.
    fn schedule_cell_data_phase(&mut self, net: &mut Network, cell_id: CellId) {
        let Some(leader) = self.cells[cell_id.0 as usize].leader else {
            return;
        };
        let t0 = self.round as u64 * net.round_ms;
        for m in self.live_cell_members(net, cell_id) {
            if m == leader || !self.participating(net, m) {
                continue;
            }
            let slot = net.topology.plan.node_code[m.0 as usize] as u64;
            let at = t0 + DATA_START_MS + slot * SLOT_MS;
            if at < net.now_ms() {
                continue;
            }
            net.queue
                .schedule(
                    at,
                    EventKind::Timer(TimerKind::AckTimeout {
                        node: m,
                        attempt: 0,
                    }),
                )
                .ok();
        }
    }

    /// Builds and sends one follower report; arms the ack timeout.
    fn send_report(&mut self, net: &mut Network, node: NodeId, attempt: u8) {
        let cell = self.nodes[node.0 as usize].cell;
        let Some(leader) = self.cells[cell.0 as usize].leader else {
            return;
        };
        if leader == node || self.nodes[node.0 as usize].pending_periods == 0 {
            return;
        }
        let channel = self.cell_channel(net, cell);
        let samples = self.nodes[node.0 as usize].pending_periods;
        let stats = self.nodes[node.0 as usize].pending_stats.clone();
        let msg = Message {
            src: node,
            dst: Destination::Unicast(leader),
            channel,
            code: net.topology.plan.node_code[leader.0 as usize],
            payload_bytes: self.sensors.packet_bytes(samples),
            kind: MessageKind::DataPacket {
                origin: node,
                round: self.round,
                samples,
                stats,
            },
            route: Vec::new(),
        };
        self.nodes[node.0 as usize].awaiting_ack_round = Some(self.round);
        net.charge_cpu_records(node, 1);
        net.transmit(msg, TxPower::Auto);
        let timeout = net.now_ms() + 3 * net.params.latency_ms + 1;
        net.queue
            .schedule(
                timeout,
                EventKind::Timer(TimerKind::AckTimeout {
                    node,
                    attempt: attempt + 1,
                }),
            )
            .ok();
    }

    /// Leader closes the collection window: aggregate, replicate, forward.
    fn aggregate_and_forward(&mut self, net: &mut Network, cell_id: CellId) {
        let Some(leader) = self.cells[cell_id.0 as usize].leader else {
            return;
        };
        if !net.is_alive(leader) || !self.participating(net, leader) {
            return; // round aborted; followers keep their pending readings
        }
        let round = self.round;
        let channels = self.sensors.channels;
        let mut record = AggregateRecord::new(cell_id, round, channels);

        // the leader's own sensors contribute a report too
        {
            let st = &mut self.nodes[leader.0 as usize];
            if st.pending_periods > 0 {
                for (slot, stat) in st.pending_stats.iter().enumerate() {
                    record.stats[slot].merge(stat);
                }
                record.source_count += 1;
                st.pending_stats = vec![ChannelStat::empty(); channels as usize];
                st.pending_periods = 0;
            }
        }
        let collected = std::mem::take(&mut self.cells[cell_id.0 as usize].collect);
        for (_, (_, stats)) in collected {
            for (slot, stat) in stats.iter().enumerate() {
                record.stats[slot].merge(stat);
            }
            record.source_count += 1;
        }
        net.charge_cpu_records(leader, record.source_count.max(1));
        debug_assert!(record.size_bytes() <= crate::protocol::MAX_RECORD_BYTES);

        // replication broadcast doubles as the leader heartbeat
        let replica = Message {
            src: leader,
            dst: Destination::Broadcast,
            channel: self.cell_channel(net, cell_id),
            code: net.topology.plan.node_code[leader.0 as usize],
            payload_bytes: record.size_bytes(),
            kind: MessageKind::RecordReplica(record.clone()),
            route: Vec::new(),
        };
        net.transmit(replica, TxPower::Fixed(self.broadcast_radius(net)));
        self.nodes[leader.0 as usize]
            .replica_store
            .insert(cell_id, record.clone());

        self.forward_record_upstream(net, leader, record, 0);
    }

    /// Sends a cell record toward its collection point: the cluster head, or
    /// the communicator when orphaned, or the backlog when isolated.
    fn forward_record_upstream(
        &mut self,
        net: &mut Network,
        leader: NodeId,
        record: AggregateRecord,
        attempt: u8,
    ) {
        let cluster_id = self.nodes[leader.0 as usize].cluster;
        let (orphaned, head, communicator) = {
            let cl = &self.clusters[cluster_id.0 as usize];
            (cl.orphaned, cl.head_node, cl.communicator)
        };

        let target = if !orphaned {
            if leader == head {
                self.ingest_at_head(net, cluster_id, record, leader);
                return;
            }
            head
        } else if let Some(comm) = communicator {
            comm
        } else {
            // isolated mode: hold the record for recovery
            self.nodes[leader.0 as usize].backlog.push(record);
            net.trace_event(
                "isolated_record",
                leader.0 as i64,
                -1,
                0,
                "backlogged".into(),
            );
            return;
        };

        match net.min_energy_path(leader, target, RelayPool::LiveNodes) {
            Some(path) => {
                let msg = Message {
                    src: leader,
                    dst: Destination::Unicast(target),
                    channel: self.inter_cluster_channel(net),
                    code: net.topology.plan.node_code[target.0 as usize],
                    payload_bytes: record.size_bytes(),
                    kind: MessageKind::RecordForward {
                        record: record.clone(),
                        from: leader,
                        cluster_level: false,
                    },
                    route: path,
                };
                let st = &mut self.nodes[leader.0 as usize];
                st.upstream_acked = false;
                st.pending_forward = Some((record, attempt));
                net.transmit(msg, TxPower::Auto);
                net.queue
                    .schedule(
                        net.now_ms() + FORWARD_TIMEOUT_MS,
                        EventKind::Timer(TimerKind::ForwardTimeout {
                            node: leader,
                            attempt,
                        }),
                    )
                    .ok();
            }
            None => {
                let st = &mut self.nodes[leader.0 as usize];
                st.upstream_miss = st.upstream_miss.saturating_add(1);
                st.pending_forward = None;
                net.trace_event(
                    "record_forward",
                    leader.0 as i64,
                    target.0 as i64,
                    0,
                    "no_path".into(),
                );
            }
        }
    }

    /// A head ingests one cell record.
    fn ingest_at_head(
        &mut self,
        net: &mut Network,
        cluster_id: ClusterId,
        record: AggregateRecord,
        head: NodeId,
    ) {
        net.charge_cpu_records(head, 1);
        net.trace_event(
            "record_at_head",
            record.origin_cell.0 as i64,
            head.0 as i64,
            record.size_bytes(),
            format!("round={}", record.round),
        );
        self.nodes[head.0 as usize]
            .replica_store
            .insert(record.origin_cell, record.clone());
        self.clusters[cluster_id.0 as usize]
            .head_records
            .push(record);
    }

    /// Head merge deadline: fold this round's cell records into one cluster
    /// record and pass it toward the master.
    fn merge_and_relay(&mut self, net: &mut Network, head: NodeId) {
        if !net.is_alive(head) || !self.participating(net, head) {
            return;
        }
        let cluster_id = self.nodes[head.0 as usize].cluster;
        let records = std::mem::take(&mut self.clusters[cluster_id.0 as usize].head_records);
        if records.is_empty() {
            return;
        }
        let mut merged = records[0].clone();
        merged.origin_cell = self.clusters[cluster_id.0 as usize].head_cell;
        for r in records.iter().skip(1) {
            merged.merge(r);
        }
        net.charge_cpu_records(head, records.len() as u32);

        let Some(master) = self.master else {
            self.nodes[head.0 as usize].backlog.push(merged);
            net.trace_event("record_forward", head.0 as i64, -1, 0, "no_master".into());
            return;
        };
        if master == head {
            self.master_records.push(merged);
            return;
        }
        match net.min_energy_path(head, master, RelayPool::Heads) {
            Some(path) => {
                let msg = Message {
                    src: head,
                    dst: Destination::Unicast(master),
                    channel: self.inter_cluster_channel(net),
                    code: net.topology.plan.node_code[master.0 as usize],
                    payload_bytes: merged.size_bytes(),
                    kind: MessageKind::RecordForward {
                        record: merged.clone(),
                        from: head,
                        cluster_level: true,
                    },
                    route: path,
                };
                let st = &mut self.nodes[head.0 as usize];
                st.upstream_acked = false;
                st.pending_forward = Some((merged, 0));
                net.transmit(msg, TxPower::Auto);
                net.queue
                    .schedule(
                        net.now_ms() + FORWARD_TIMEOUT_MS,
                        EventKind::Timer(TimerKind::ForwardTimeout {
                            node: head,
                            attempt: 0,
                        }),
                    )
                    .ok();
            }
            None => {
                let st = &mut self.nodes[head.0 as usize];
                st.upstream_miss = st.upstream_miss.saturating_add(1);
                st.backlog.push(merged);
                net.trace_event(
                    "record_forward",
                    head.0 as i64,
                    master.0 as i64,
                    0,
                    "no_path".into(),
                );
            }
        }
    }

    /// Re-forwards the pending record after an unacknowledged timeout.
    fn retry_forward(&mut self, net: &mut Network, node: NodeId) {
        let Some((record, _)) = self.nodes[node.0 as usize].pending_forward.take() else {
            return;
        };
        if self.is_head(net, node) {
            // a head retrying toward the master
            if let Some(master) = self.master {
                if let Some(path) = net.min_energy_path(node, master, RelayPool::Heads) {
                    let msg = Message {
                        src: node,
                        dst: Destination::Unicast(master),
                        channel: self.inter_cluster_channel(net),
                        code: net.topology.plan.node_code[master.0 as usize],
                        payload_bytes: record.size_bytes(),
                        kind: MessageKind::RecordForward {
                            record: record.clone(),
                            from: node,
                            cluster_level: true,
                        },
                        route: path,
                    };
                    self.nodes[node.0 as usize].pending_forward = Some((record, 1));
                    net.transmit(msg, TxPower::Auto);
                    net.queue
                        .schedule(
                            net.now_ms() + FORWARD_TIMEOUT_MS,
                            EventKind::Timer(TimerKind::ForwardTimeout { node, attempt: 1 }),
                        )
                        .ok();
                    return;
                }
            }
            let st = &mut self.nodes[node.0 as usize];
            st.upstream_miss = st.upstream_miss.saturating_add(1);
            st.backlog.push(record);
        } else {
            self.forward_record_upstream(net, node, record, 1);
        }
    }

    /// Orphaned-cluster leaders broadcast the head-death notice on the
    /// inter-cluster frequency.
    fn broadcast_notices(&mut self, net: &mut Network, cluster_id: ClusterId) {
        let channel = self.inter_cluster_channel(net);
        let leaders: Vec<NodeId> = net
            .topology
            .cluster(cluster_id)
            .cells
            .iter()
            .filter_map(|c| self.cells[c.0 as usize].leader)
            .filter(|&l| net.is_alive(l))
            .collect();
        for l in leaders {
            let msg = self.control_frame(
                net,
                l,
                Destination::Broadcast,
                channel,
                MessageKind::HeadDeathNotice {
                    cluster: cluster_id.0,
                },
            );
            net.transmit(msg, TxPower::Fixed(net.params.low_range_m));
        }
        let t0 = self.round as u64 * net.round_ms;
        net.queue
            .schedule(
                t0 + NOTICE_DEADLINE_MS,
                EventKind::Timer(TimerKind::NoticeDeadline {
                    cluster: cluster_id.0,
                }),
            )
            .ok();
    }

    /// Designates the communicator: the geometrically closest responding
    /// leader's cell, measured from its cell center to the orphaned head
    /// cell's center; ties break to the lowest node id.
    fn designate_communicator(&mut self, net: &mut Network, cluster_id: ClusterId) {
        {
            let cl = &self.clusters[cluster_id.0 as usize];
            if !cl.orphaned || cl.communicator.is_some() {
                return;
            }
        }
        let head_center = net
            .topology
            .cell(self.clusters[cluster_id.0 as usize].head_cell)
            .center;
        let responders: Vec<(NodeId, CellId)> = self.clusters[cluster_id.0 as usize]
            .responders
            .iter()
            .copied()
            .filter(|(n, _)| net.is_alive(*n))
            .collect();
        if responders.is_empty() {
            if !self.clusters[cluster_id.0 as usize].isolated {
                self.clusters[cluster_id.0 as usize].isolated = true;
                net.trace_event(
                    "isolated",
                    -1,
                    cluster_id.0 as i64,
                    0,
                    "no_reachable_neighbor_cluster".into(),
                );
            }
            return;
        }
        let mut best: Option<(f64, NodeId, CellId)> = None;
        for (node, cell) in responders {
            let d = net.topology.cell(cell).center.distance(&head_center);
            let better = match best {
                None => true,
                Some((bd, bn, _)) => d < bd || (d == bd && node < bn),
            };
            if better {
                best = Some((d, node, cell));
            }
        }
        let (_, comm, comm_cell) = best.unwrap();
        {
            let cl = &mut self.clusters[cluster_id.0 as usize];
            cl.communicator = Some(comm);
            cl.communicator_cell = Some(comm_cell);
            cl.isolated = false;
        }
        net.trace_event(
            "communicator",
            comm.0 as i64,
            cluster_id.0 as i64,
            0,
            format!("cell={}", comm_cell.0),
        );
        let leaders: Vec<NodeId> = net
            .topology
            .cluster(cluster_id)
            .cells
            .iter()
            .filter_map(|c| self.cells[c.0 as usize].leader)
            .filter(|&l| net.is_alive(l))
            .collect();
        for l in leaders {
            self.nodes[l.0 as usize].role = Role::Refugee;
            self.nodes[l.0 as usize].upstream_miss = 0;
            net.trace_event(
                "refugee",
                l.0 as i64,
                cluster_id.0 as i64,
                0,
                "adopted".into(),
            );
        }
    }

    /// Rotation triggers checked at the round boundary: term expiry, the
    /// energy floor, and heartbeat-miss detection flagged earlier.
    fn check_rotations(&mut self, net: &mut Network, next_round: u32) {
        for ci in 0..self.cells.len() {
            if self.cells[ci].extinct || self.cells[ci].needs_election {
                continue;
            }
            let trigger = match self.cells[ci].leader {
                None => true,
                Some(l) => {
                    net.is_alive(l)
                        && (next_round >= self.nodes[l.0 as usize].leadership_expiry
                            || net.battery(l).normalized_residual() < self.cfg.energy_floor_norm)
                }
            };
            if trigger {
                let leader = self.cells[ci].leader;
                self.cells[ci].needs_election = true;
                net.trace_event(
                    "rotation",
                    leader.map(|l| l.0 as i64).unwrap_or(-1),
                    ci as i64,
                    0,
                    "term_or_energy".into(),
                );
            }
        }
        let master_trigger = match self.master {
            None => true,
            Some(m) => {
                !net.is_alive(m)
                    || next_round >= self.master_expiry
                    || net.battery(m).normalized_residual() < self.cfg.energy_floor_norm
            }
        };
        if master_trigger {
            self.master_needs_election = true;
        }
    }
}

impl Protocol for SidleProtocol {
    fn name(&self) -> &'static str {
        "sidle"
    }

    fn on_round_start(&mut self, net: &mut Network, round: u32) {
        self.round = round;
        let t0 = round as u64 * net.round_ms;

        // sensing: every participating node accrues one sampling period
        for i in 0..self.nodes.len() {
            let node = NodeId(i as u32);
            self.nodes[i].heard_replica_this_round = false;
            if !net.is_alive(node) || !self.participating(net, node) {
                continue;
            }
            for ch in 0..self.sensors.channels {
                let v = sensor_reading(self.reading_seed, node.0, ch, round);
                self.nodes[i].pending_stats[ch as usize].observe(v);
            }
            self.nodes[i].pending_periods += 1;
            self.nodes[i].raw_accumulated_bytes += self.sensors.raw_bytes_per_period() as u64;
        }

        // identity announcements: bootstrap round and periodic refresh
        if round.is_multiple_of(ANNOUNCE_INTERVAL_ROUNDS) {
            let radius = self.broadcast_radius(net);
            for i in 0..self.nodes.len() {
                let node = NodeId(i as u32);
                if !net.is_alive(node) || !self.participating(net, node) {
                    continue;
                }
                let channel = self.cell_channel(net, self.nodes[i].cell);
                let msg = self.control_frame(
                    net,
                    node,
                    Destination::Broadcast,
                    channel,
                    MessageKind::IdAnnounce,
                );
                net.transmit(msg, TxPower::Fixed(radius));
            }
        }

        // pending base-station commands ride downstream from the master
        if let Some(master) = self.master {
            if net.is_alive(master) {
                let commands = std::mem::take(&mut self.pending_commands);
                for (target, activate) in commands {
                    if !net.is_alive(target) {
                        continue;
                    }
                    if let Some(path) = net.min_energy_path(master, target, RelayPool::LiveNodes) {
                        let msg = Message {
                            src: master,
                            dst: Destination::Unicast(target),
                            channel: self.inter_cluster_channel(net),
                            code: net.topology.plan.node_code[target.0 as usize],
                            payload_bytes: CONTROL_BYTES,
                            kind: MessageKind::Command { activate },
                            route: path,
                        };
                        net.transmit(msg, TxPower::Auto);
                    }
                }
            }
        }

        // orphaned clusters without a communicator keep calling for one
        for ci in 0..self.clusters.len() {
            if self.clusters[ci].orphaned && self.clusters[ci].communicator.is_none() {
                self.broadcast_notices(net, ClusterId(ci as u32));
            }
        }

        // elections
        for ci in 0..self.cells.len() {
            if self.cells[ci].needs_election && !self.cells[ci].extinct {
                net.queue
                    .schedule(
                        t0 + ELECTION_DECIDE_MS,
                        EventKind::Timer(TimerKind::ElectionDecide { cell: ci as u32 }),
                    )
                    .ok();
            }
        }
        if self.master_needs_election {
            net.queue
                .schedule(
                    t0 + MASTER_DECIDE_MS,
                    EventKind::Timer(TimerKind::MasterElectionDecide),
                )
                .ok();
        }

        // data phase for cells with standing leaders
        for ci in 0..self.cells.len() {
            if !self.cells[ci].needs_election && !self.cells[ci].extinct {
                self.schedule_cell_data_phase(net, CellId(ci as u32));
            }
        }
        // aggregation deadlines for every live cell
        let agg_at = t0 + DATA_START_MS + self.slots_per_cell * SLOT_MS + AGG_MARGIN_MS;
        for ci in 0..self.cells.len() {
            if !self.cells[ci].extinct {
                net.queue
                    .schedule(
                        agg_at,
                        EventKind::Timer(TimerKind::AggregateDeadline { cell: ci as u32 }),
                    )
                    .ok();
            }
        }
        // head merges and the master relay
        for head in net.head_roster() {
            if net.is_alive(head) {
                net.queue
                    .schedule(
                        t0 + HEAD_MERGE_MS,
                        EventKind::Timer(TimerKind::HeadMergeDeadline { head }),
                    )
                    .ok();
            }
        }
        if let Some(master) = self.master {
            if net.is_alive(master) {
                net.queue
                    .schedule(
                        t0 + MASTER_RELAY_MS,
                        EventKind::Timer(TimerKind::MasterRelayDeadline { master }),
                    )
                    .ok();
            }
        }
    }

    fn on_message(&mut self, net: &mut Network, _at_ms: u64, to: NodeId, msg: Message) {
        self.update_neighbor(net, to, msg.src);
        if let MessageKind::Command { activate } = msg.kind {
            net.set_active(to, activate);
            net.trace_event(
                "command",
                msg.src.0 as i64,
                to.0 as i64,
                0,
                if activate {
                    "activate".into()
                } else {
                    "deactivate".into()
                },
            );
            return;
        }
        if !self.participating(net, to) {
            return;
        }
        match msg.kind {
            MessageKind::IdAnnounce | MessageKind::LeadershipClaim { .. } => {
                // neighbor-table refresh handled above; winners were resolved
                // at the decide timer
            }
            MessageKind::DataPacket {
                origin,
                round,
                samples,
                stats,
            } => {
                let cell = self.nodes[to.0 as usize].cell;
                if self.cells[cell.0 as usize].leader == Some(to) {
                    self.cells[cell.0 as usize]
                        .collect
                        .insert(origin, (samples, stats));
                    let ack = self.control_frame(
                        net,
                        to,
                        Destination::Unicast(origin),
                        msg.channel,
                        MessageKind::Ack { of_round: round },
                    );
                    net.transmit(ack, TxPower::Auto);
                }
            }
            MessageKind::Ack { of_round } => {
                let st = &mut self.nodes[to.0 as usize];
                if st.awaiting_ack_round == Some(of_round) {
                    // stop retrying; the readings stay pending until the
                    // replica broadcast proves they made it into the record
                    st.awaiting_ack_round = None;
                    st.acked_round = Some(of_round);
                } else {
                    st.upstream_acked = true;
                    st.upstream_miss = 0;
                    st.pending_forward = None;
                }
            }
            MessageKind::RecordReplica(record) => {
                let channels = self.sensors.channels as usize;
                let st = &mut self.nodes[to.0 as usize];
                // co-channel cells can be overheard; only the own cell's
                // replica counts as the leader heartbeat
                if record.origin_cell == st.cell {
                    st.heard_replica_this_round = true;
                    st.leader_miss = 0;
                    // an acknowledged report folded into this record is now
                    // safely replicated; drop the local copy. If the leader
                    // dies between ack and aggregation, the readings are
                    // still here and ride into the next round.
                    if st.acked_round == Some(record.round) {
                        st.acked_round = None;
                        st.pending_stats = vec![ChannelStat::empty(); channels];
                        st.pending_periods = 0;
                    }
                }
                st.replica_store.insert(record.origin_cell, record);
            }
            MessageKind::RecordForward {
                record,
                from,
                cluster_level,
            } => {
                let my_cluster = self.nodes[to.0 as usize].cluster;
                let from_cluster = self.nodes[from.0 as usize].cluster;
                if cluster_level && self.master == Some(to) {
                    self.master_records.push(record);
                } else if self.is_head(net, to) {
                    self.ingest_at_head(net, my_cluster, record, to);
                } else if from_cluster != my_cluster {
                    // communicator duty: adopt the refugee record
                    let cl = &mut self.clusters[my_cluster.0 as usize];
                    cl.refugee_inbox.push(record);
                    if !cl.flush_scheduled {
                        cl.flush_scheduled = true;
                        net.queue
                            .schedule(
                                net.now_ms() + 10,
                                EventKind::Timer(TimerKind::CommunicatorFlush { node: to }),
                            )
                            .ok();
                    }
                }
                // acknowledge receipt to the forwarding node
                let route = net
                    .min_energy_path(to, from, RelayPool::LiveNodes)
                    .unwrap_or_default();
                let ack = Message {
                    src: to,
                    dst: Destination::Unicast(from),
                    channel: msg.channel,
                    code: net.topology.plan.node_code[from.0 as usize],
                    payload_bytes: CONTROL_BYTES,
                    kind: MessageKind::Ack {
                        of_round: self.round,
                    },
                    route,
                };
                net.transmit(ack, TxPower::Auto);
            }
            MessageKind::HeadDeathNotice { cluster } => {
                let my_cluster = self.nodes[to.0 as usize].cluster;
                if my_cluster.0 == cluster {
                    return;
                }
                let my_cell = self.nodes[to.0 as usize].cell;
                if self.cells[my_cell.0 as usize].leader != Some(to) {
                    return;
                }
                let route = net
                    .min_energy_path(to, msg.src, RelayPool::LiveNodes)
                    .unwrap_or_default();
                let response = Message {
                    src: to,
                    dst: Destination::Unicast(msg.src),
                    channel: msg.channel,
                    code: net.topology.plan.node_code[msg.src.0 as usize],
                    payload_bytes: CONTROL_BYTES,
                    kind: MessageKind::NoticeResponse {
                        cluster,
                        responder_cell: my_cell.0,
                    },
                    route,
                };
                net.transmit(response, TxPower::Auto);
            }
            MessageKind::NoticeResponse {
                cluster,
                responder_cell,
            } => {
                // the last hop may be a relay; the responder is identified by
                // its cell's current leader
                if let Some(r) = self.cells[responder_cell as usize].leader {
                    self.clusters[cluster as usize]
                        .responders
                        .insert((r, CellId(responder_cell)));
                }
            }
            MessageKind::Command { .. } => unreachable!("handled above"),
        }
    }

    fn on_timer(&mut self, net: &mut Network, _at_ms: u64, timer: TimerKind) {
        match timer {
            TimerKind::ElectionDecide { cell } => {
                if self.cells[cell as usize].needs_election {
                    self.decide_cell_election(net, CellId(cell));
                }
            }
            TimerKind::MasterElectionDecide => {
                if self.master_needs_election {
                    self.decide_master_election(net);
                }
            }
            TimerKind::AckTimeout { node, attempt } => {
                if !net.is_alive(node) || !self.participating(net, node) {
                    return;
                }
                match attempt {
                    0 => self.send_report(net, node, 0),
                    1 => {
                        if self.nodes[node.0 as usize].awaiting_ack_round == Some(self.round) {
                            self.send_report(net, node, 1);
                        }
                    }
                    _ => {
                        let st = &mut self.nodes[node.0 as usize];
                        if st.awaiting_ack_round == Some(self.round) {
                            // give up; readings stay pending for next round.
                            // Leader death is detected by the missing replica
                            // heartbeat, not by unacked reports.
                            st.awaiting_ack_round = None;
                            st.acked_round = None;
                        }
                    }
                }
            }
            TimerKind::ForwardTimeout { node, attempt } => {
                if !net.is_alive(node) || self.nodes[node.0 as usize].upstream_acked {
                    return;
                }
                if attempt == 0 {
                    self.retry_forward(net, node);
                } else {
                    let st = &mut self.nodes[node.0 as usize];
                    if st.pending_forward.take().is_some() {
                        st.upstream_miss = st.upstream_miss.saturating_add(1);
                    }
                }
            }
            TimerKind::AggregateDeadline { cell } => {
                self.aggregate_and_forward(net, CellId(cell));
            }
            TimerKind::HeadMergeDeadline { head } => {
                self.merge_and_relay(net, head);
            }
            TimerKind::MasterRelayDeadline { master } => {
                if self.master != Some(master) || !net.is_alive(master) {
                    return;
                }
                let records = std::mem::take(&mut self.master_records);
                for record in records {
                    let delivered =
                        net.transmit_to_base(master, record.size_bytes(), "base_delivery");
                    if delivered {
                        net.counters.records_delivered += record.cells.len() as u32;
                    }
                }
            }
            TimerKind::CommunicatorFlush { node } => {
                let cluster = self.nodes[node.0 as usize].cluster;
                self.clusters[cluster.0 as usize].flush_scheduled = false;
                if !net.is_alive(node) {
                    return;
                }
                let inbox = std::mem::take(&mut self.clusters[cluster.0 as usize].refugee_inbox);
                let head = self.clusters[cluster.0 as usize].head_node;
                for record in inbox {
                    if node == head {
                        self.ingest_at_head(net, cluster, record, head);
                        continue;
                    }
                    if let Some(path) = net.min_energy_path(node, head, RelayPool::LiveNodes) {
                        let msg = Message {
                            src: node,
                            dst: Destination::Unicast(head),
                            channel: self.inter_cluster_channel(net),
                            code: net.topology.plan.node_code[head.0 as usize],
                            payload_bytes: record.size_bytes(),
                            kind: MessageKind::RecordForward {
                                record,
                                from: node,
                                cluster_level: false,
                            },
                            route: path,
                        };
                        net.transmit(msg, TxPower::Auto);
                    }
                }
            }
            TimerKind::NoticeDeadline { cluster } => {
                self.designate_communicator(net, ClusterId(cluster));
            }
            TimerKind::ChCollectDeadline { .. } => {}
        }
    }

    fn on_round_end(&mut self, net: &mut Network, round: u32) {
        // follower-side heartbeat detection: no replica heard this round
        for i in 0..self.nodes.len() {
            let node = NodeId(i as u32);
            if !net.is_alive(node) {
                continue;
            }
            let cell = self.nodes[i].cell;
            if self.cells[cell.0 as usize].extinct
                || self.cells[cell.0 as usize].leader == Some(node)
            {
                continue;
            }
            if !self.nodes[i].heard_replica_this_round {
                self.nodes[i].leader_miss = self.nodes[i].leader_miss.saturating_add(1);
            }
        }
        // a cell flags an election when followers miss enough heartbeats
        for ci in 0..self.cells.len() {
            if self.cells[ci].extinct || self.cells[ci].needs_election {
                continue;
            }
            let members = self.live_cell_members(net, CellId(ci as u32));
            let leader = self.cells[ci].leader;
            let worst_miss = members
                .iter()
                .filter(|&&m| Some(m) != leader)
                .map(|&m| self.nodes[m.0 as usize].leader_miss)
                .max()
                .unwrap_or(0);
            if worst_miss >= self.cfg.heartbeat_miss_limit {
                self.cells[ci].needs_election = true;
                for &m in &members {
                    self.nodes[m.0 as usize].leader_miss = 0;
                }
                net.trace_event(
                    "rotation",
                    leader.map(|l| l.0 as i64).unwrap_or(-1),
                    ci as i64,
                    0,
                    "heartbeat_missed".into(),
                );
            }
        }
        // upstream-miss detection: leaders on their head, refugees on their
        // communicator
        for ci in 0..self.clusters.len() {
            let cluster_id = ClusterId(ci as u32);
            let leaders: Vec<NodeId> = net
                .topology
                .cluster(cluster_id)
                .cells
                .iter()
                .filter_map(|c| self.cells[c.0 as usize].leader)
                .filter(|&l| net.is_alive(l) && l != self.clusters[ci].head_node)
                .collect();
            let worst_miss = leaders
                .iter()
                .map(|&l| self.nodes[l.0 as usize].upstream_miss)
                .max()
                .unwrap_or(0);
            if self.clusters[ci].orphaned {
                if self.clusters[ci].communicator.is_some()
                    && worst_miss >= self.cfg.heartbeat_miss_limit
                {
                    let cl = &mut self.clusters[ci];
                    cl.communicator = None;
                    cl.communicator_cell = None;
                    cl.responders.clear();
                    for l in leaders {
                        self.nodes[l.0 as usize].upstream_miss = 0;
                    }
                    net.trace_event(
                        "communicator",
                        -1,
                        ci as i64,
                        0,
                        "lost_re_designating".into(),
                    );
                }
            } else if worst_miss >= self.cfg.heartbeat_miss_limit {
                self.clusters[ci].orphaned = true;
                for l in leaders {
                    self.nodes[l.0 as usize].upstream_miss = 0;
                }
                net.trace_event(
                    "head_death_detected",
                    -1,
                    ci as i64,
                    0,
                    "forward_misses".into(),
                );
            }
        }
        self.check_rotations(net, round + 1);
    }

    fn safety_check(&self, net: &Network) -> Result<(), String> {
        for (ci, cell) in self.cells.iter().enumerate() {
            if cell.extinct || cell.needs_election {
                continue;
            }
            let members = self.live_cell_members(net, CellId(ci as u32));
            if members.is_empty() {
                continue; // flagged extinct at the next decide timer
            }
            if let Some(l) = cell.leader {
                if net.is_alive(l) {
                    let leaderish = members
                        .iter()
                        .filter(|&&m| {
                            self.cells[self.nodes[m.0 as usize].cell.0 as usize].leader == Some(m)
                                && self.nodes[m.0 as usize].role != Role::Follower
                        })
                        .count();
                    if leaderish != 1 {
                        return Err(format!(
                            "cell {ci} has {leaderish} leaders among live members"
                        ));
                    }
                }
            }
        }
        let masters = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, n)| n.role == Role::Master && net.is_alive(NodeId(*i as u32)))
            .count();
        if masters > 1 {
            return Err(format!("{masters} masters alive simultaneously"));
        }
        Ok(())
    }
}
