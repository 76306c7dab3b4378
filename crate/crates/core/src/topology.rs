//! Hexagonal node layout: cells tiled on an axial lattice, grouped into
//! 7-cell clusters (one central head cell ringed by six neighbors), with an
//! FDMA channel per cell and a CDMA code per node.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::TopologyError;
use crate::sim::rng::RngStream;

/// Axial neighbor offsets for a pointy-top hexagonal lattice, in the fixed
/// order used for cluster ring construction and channel indexing.
pub const HEX_DIRECTIONS: [(i32, i32); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];

/// Cells per cluster: one head cell plus its six ring neighbors.
pub const CELLS_PER_CLUSTER: usize = 7;

/// Golden angle in radians, used for the in-cell anchor spiral.
const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u32);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Radio hardware fitted to a node. Primitive nodes carry the short-range
/// sensor radio; sophisticated nodes add the long-range telemetry link that
/// qualifies them as head-cluster devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HardwareClass {
    Primitive,
    Sophisticated,
}

/// Static placement record for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSite {
    pub id: NodeId,
    pub cell: CellId,
    pub position: Position,
    pub class: HardwareClass,
}

/// One hexagonal tile. All members share `channel`; each member holds a
/// cell-unique CDMA code in the channel plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: CellId,
    pub axial: (i32, i32),
    pub center: Position,
    pub cluster: ClusterId,
    /// Member node ids in ascending order.
    pub members: Vec<NodeId>,
    pub channel: u16,
}

/// Seven cells forming one FDMA reuse group. The head cell is the
/// geometrically central one; the other six are its hex neighbors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: ClusterId,
    /// Head cell first, then the six ring cells in `HEX_DIRECTIONS` order.
    pub cells: Vec<CellId>,
    pub head_cell: CellId,
    /// The sophisticated node housed in the head cell.
    pub head_node: NodeId,
}

/// FDMA/CDMA assignment: one channel per cell (adjacent cells always differ),
/// one code per node (unique within its cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPlan {
    /// Channel index per cell, indexed by `CellId`.
    pub cell_frequency: Vec<u16>,
    /// Code index per node, indexed by `NodeId`; cell-unique.
    pub node_code: Vec<u16>,
    /// Reserved channel for head-to-head and cross-cluster traffic.
    pub inter_cluster_channel: u16,
}

/// Layout generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyConfig {
    pub clusters: u32,
    pub nodes_per_cell: u32,
    /// Circumradius of each hexagonal cell, meters.
    pub cell_radius_m: f64,
    /// Placement jitter as a fraction of the cell radius, in [0, 0.5).
    pub jitter: f64,
    pub seed: u64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            clusters: 2,
            nodes_per_cell: 7,
            cell_radius_m: 100.0,
            jitter: 0.25,
            seed: 42,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.clusters == 0 {
            return Err(TopologyError::Config {
                key: "topology.clusters",
                reason: "must be >= 1".into(),
            });
        }
        if self.nodes_per_cell == 0 {
            return Err(TopologyError::Config {
                key: "topology.nodes_per_cell",
                reason: "must be >= 1".into(),
            });
        }
        if !self.cell_radius_m.is_finite() || self.cell_radius_m <= 0.0 {
            return Err(TopologyError::Config {
                key: "topology.cell_radius_m",
                reason: "must be > 0".into(),
            });
        }
        if !self.jitter.is_finite() || self.jitter < 0.0 || self.jitter >= 0.5 {
            return Err(TopologyError::Config {
                key: "topology.jitter",
                reason: "must lie in [0, 0.5)".into(),
            });
        }
        Ok(())
    }
}

/// The generated deployment: cells, clusters, node sites, and the applied
/// channel plan. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub config: TopologyConfig,
    pub cells: Vec<Cell>,
    pub clusters: Vec<Cluster>,
    pub nodes: Vec<NodeSite>,
    pub plan: ChannelPlan,
    pub bbox_min: Position,
    pub bbox_max: Position,
}

/// Axial -> cartesian for a pointy-top lattice with circumradius `r`.
fn axial_to_cartesian(q: i32, rr: i32, r: f64) -> Position {
    let sqrt3 = 3.0_f64.sqrt();
    Position::new(
        r * sqrt3 * (q as f64 + rr as f64 / 2.0),
        r * 1.5 * rr as f64,
    )
}

/// Point-in-hexagon test for a pointy-top hexagon (vertical left/right edges).
pub fn in_hexagon(p: &Position, center: &Position, radius: f64) -> bool {
    let eps = 1e-9 * radius.max(1.0);
    let dx = (p.x - center.x).abs();
    let dy = (p.y - center.y).abs();
    dx <= radius * 3.0_f64.sqrt() / 2.0 + eps && dy <= radius - dx / 3.0_f64.sqrt() + eps
}

/// Enumerates super-lattice coordinates in a deterministic hex spiral:
/// origin first, then ring 1, ring 2, ... This orders cluster placement so
/// head cells stay maximally separated for any cluster count.
fn hex_spiral(count: usize) -> Vec<(i32, i32)> {
    let mut out = Vec::with_capacity(count);
    out.push((0, 0));
    let mut ring = 1;
    while out.len() < count {
        // Walk the ring starting from direction 4 scaled by the ring index.
        let (mut q, mut r) = (HEX_DIRECTIONS[4].0 * ring, HEX_DIRECTIONS[4].1 * ring);
        for dir in HEX_DIRECTIONS.iter() {
            for _ in 0..ring {
                if out.len() == count {
                    return out;
                }
                out.push((q, r));
                q += dir.0;
                r += dir.1;
            }
        }
        ring += 1;
    }
    out
}

/// Deterministic anchor points inside one cell: anchor 0 at the center, the
/// rest on a golden-angle spiral of radius at most `rho_max`, giving a
/// near-uniform in-cell density.
fn cell_anchors(n: u32, rho_max: f64) -> Vec<(f64, f64)> {
    let mut anchors = Vec::with_capacity(n as usize);
    for k in 0..n {
        if k == 0 {
            anchors.push((0.0, 0.0));
        } else {
            let frac = k as f64 / (n - 1) as f64;
            let rho = rho_max * frac.sqrt();
            let theta = k as f64 * GOLDEN_ANGLE;
            anchors.push((rho * theta.cos(), rho * theta.sin()));
        }
    }
    anchors
}

/// Generates the hexagonal deployment: `clusters` seven-cell flowers tiled on
/// the classic 7-cell reuse lattice, `nodes_per_cell` nodes jittered around
/// deterministic anchors inside each cell. Pure function of the config.
pub fn generate_hex_mesh(config: &TopologyConfig) -> Result<Topology, TopologyError> {
    config.validate()?;

    let r = config.cell_radius_m;
    // Reuse-lattice generators for the 7-cell flower tiling (i=2, j=1).
    let v1 = (2, 1);
    let v2 = (-1, 3);

    let super_coords = hex_spiral(config.clusters as usize);

    let mut cells: Vec<Cell> = Vec::new();
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut axial_index: BTreeMap<(i32, i32), CellId> = BTreeMap::new();

    for (ci, (a, b)) in super_coords.iter().enumerate() {
        let cluster_id = ClusterId(ci as u32);
        let center_axial = (a * v1.0 + b * v2.0, a * v1.1 + b * v2.1);
        let mut cell_ids = Vec::with_capacity(CELLS_PER_CLUSTER);
        let offsets = std::iter::once((0, 0)).chain(HEX_DIRECTIONS.iter().copied());
        for off in offsets {
            let axial = (center_axial.0 + off.0, center_axial.1 + off.1);
            let id = CellId(cells.len() as u32);
            if axial_index.insert(axial, id).is_some() {
                return Err(TopologyError::Config {
                    key: "topology.clusters",
                    reason: format!("cluster tiling produced overlapping cell at {axial:?}"),
                });
            }
            cells.push(Cell {
                id,
                axial,
                center: axial_to_cartesian(axial.0, axial.1, r),
                cluster: cluster_id,
                members: Vec::new(),
                channel: 0,
            });
            cell_ids.push(id);
        }
        clusters.push(Cluster {
            id: cluster_id,
            head_cell: cell_ids[0],
            cells: cell_ids,
            head_node: NodeId(0), // fixed up after node placement
        });
    }

    // Node placement: jitter is uniform within a disc of radius jitter*r
    // around each anchor; anchors are pulled in so every draw stays inside
    // the hexagon.
    let mut placement = RngStream::new(config.seed, "placement").rng();
    let inradius = r * 3.0_f64.sqrt() / 2.0;
    let jitter_radius = config.jitter * r;
    let rho_max = (inradius - jitter_radius).max(0.0);
    let anchors = cell_anchors(config.nodes_per_cell, rho_max);

    let mut nodes: Vec<NodeSite> = Vec::new();
    for cell in cells.iter_mut() {
        let is_head_cell = clusters[cell.cluster.0 as usize].head_cell == cell.id;
        for (k, (ax, ay)) in anchors.iter().enumerate() {
            let id = NodeId(nodes.len() as u32);
            let mut x = cell.center.x + ax;
            let mut y = cell.center.y + ay;
            if jitter_radius > 0.0 {
                let u1: f64 = placement.gen();
                let u2: f64 = placement.gen();
                let rho = jitter_radius * u1.sqrt();
                let theta = std::f64::consts::TAU * u2;
                x += rho * theta.cos();
                y += rho * theta.sin();
            }
            let position = Position::new(x, y);
            debug_assert!(in_hexagon(&position, &cell.center, r));
            // The lowest-id member of a head cell is the sophisticated
            // head-cluster device, seated on the central anchor.
            let class = if is_head_cell && k == 0 {
                HardwareClass::Sophisticated
            } else {
                HardwareClass::Primitive
            };
            nodes.push(NodeSite {
                id,
                cell: cell.id,
                position,
                class,
            });
            cell.members.push(id);
        }
    }
    for cluster in clusters.iter_mut() {
        cluster.head_node = cells[cluster.head_cell.0 as usize].members[0];
    }

    let mut bbox_min = Position::new(f64::INFINITY, f64::INFINITY);
    let mut bbox_max = Position::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for cell in &cells {
        bbox_min.x = bbox_min.x.min(cell.center.x - r);
        bbox_min.y = bbox_min.y.min(cell.center.y - r);
        bbox_max.x = bbox_max.x.max(cell.center.x + r);
        bbox_max.y = bbox_max.y.max(cell.center.y + r);
    }

    let mut topology = Topology {
        config: config.clone(),
        cells,
        clusters,
        nodes,
        plan: ChannelPlan {
            cell_frequency: Vec::new(),
            node_code: Vec::new(),
            inter_cluster_channel: 0,
        },
        bbox_min,
        bbox_max,
    };
    let plan = assign_channels(&topology);
    for cell in topology.cells.iter_mut() {
        cell.channel = plan.cell_frequency[cell.id.0 as usize];
    }
    topology.plan = plan;
    Ok(topology)
}

/// True when two cells may not share a channel: hex-adjacent, or members of
/// the same FDMA cluster (each cluster spans its own seven-channel block).
fn channel_conflict(a: &Cell, b: &Cell) -> bool {
    if a.cluster == b.cluster {
        return true;
    }
    hex_adjacent(a.axial, b.axial)
}

pub fn hex_adjacent(a: (i32, i32), b: (i32, i32)) -> bool {
    let (dq, dr) = (a.0 - b.0, a.1 - b.1);
    let ds = -dq - dr;
    (dq.abs() + dr.abs() + ds.abs()) / 2 == 1
}

/// Greedy coloring over the conflict graph, cells visited in id order;
/// CDMA codes assigned by ascending node id within each cell.
pub fn assign_channels(topology: &Topology) -> ChannelPlan {
    let cells = &topology.cells;
    let mut cell_frequency = vec![0u16; cells.len()];
    for (i, cell) in cells.iter().enumerate() {
        let mut used: Vec<u16> = Vec::new();
        for (j, other) in cells.iter().enumerate().take(i) {
            if channel_conflict(cell, other) {
                used.push(cell_frequency[j]);
            }
        }
        let mut candidate = 0u16;
        while used.contains(&candidate) {
            candidate += 1;
        }
        cell_frequency[i] = candidate;
    }
    let inter_cluster_channel = cell_frequency.iter().copied().max().unwrap_or(0) + 1;

    let mut node_code = vec![0u16; topology.nodes.len()];
    for cell in cells {
        let mut members = cell.members.clone();
        members.sort();
        for (code, node) in members.iter().enumerate() {
            node_code[node.0 as usize] = code as u16;
        }
    }
    ChannelPlan {
        cell_frequency,
        node_code,
        inter_cluster_channel,
    }
}

impl Topology {
    pub fn node(&self, id: NodeId) -> Result<&NodeSite, TopologyError> {
        self.nodes
            .get(id.0 as usize)
            .ok_or(TopologyError::UnknownNode(id.0))
    }

    pub fn cell(&self, id: CellId) -> &Cell {
        &self.cells[id.0 as usize]
    }

    pub fn cluster(&self, id: ClusterId) -> &Cluster {
        &self.clusters[id.0 as usize]
    }

    /// All nodes within `range` meters of `node` (excluding itself),
    /// ascending by node id.
    pub fn neighbors_within(&self, node: NodeId, range: f64) -> Result<Vec<NodeId>, TopologyError> {
        if !range.is_finite() || range <= 0.0 {
            return Err(TopologyError::Config {
                key: "range",
                reason: "must be > 0".into(),
            });
        }
        let origin = self.node(node)?;
        Ok(self
            .nodes
            .iter()
            .filter(|n| n.id != node && n.position.distance(&origin.position) <= range)
            .map(|n| n.id)
            .collect())
    }

    /// Serializes the layout to the plain-text scenario format so a run can
    /// be replayed from a saved deployment.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("topology serializes")
    }

    pub fn from_toml(text: &str) -> Result<Topology, TopologyError> {
        let topology: Topology =
            toml::from_str(text).map_err(|e| TopologyError::Parse(e.to_string()))?;
        topology.check_invariants()?;
        Ok(topology)
    }

    /// Structural invariants: total partition of nodes into cells and cells
    /// into clusters, in-hexagon membership, and channel-plan validity.
    pub fn check_invariants(&self) -> Result<(), TopologyError> {
        let mut seen = vec![false; self.nodes.len()];
        for cell in &self.cells {
            if cell.members.is_empty() {
                return Err(TopologyError::Invariant(format!(
                    "cell {} has no members",
                    cell.id.0
                )));
            }
            for m in &cell.members {
                let site = self.node(*m)?;
                if site.cell != cell.id {
                    return Err(TopologyError::Invariant(format!(
                        "node {} listed in cell {} but sited in cell {}",
                        m.0, cell.id.0, site.cell.0
                    )));
                }
                if seen[m.0 as usize] {
                    return Err(TopologyError::Invariant(format!(
                        "node {} appears in two cells",
                        m.0
                    )));
                }
                seen[m.0 as usize] = true;
                if !in_hexagon(&site.position, &cell.center, self.config.cell_radius_m) {
                    return Err(TopologyError::Invariant(format!(
                        "node {} lies outside its cell hexagon",
                        m.0
                    )));
                }
            }
        }
        if !seen.iter().all(|&s| s) {
            return Err(TopologyError::Invariant("node not in any cell".into()));
        }
        for cluster in &self.clusters {
            if cluster.cells.len() != CELLS_PER_CLUSTER {
                return Err(TopologyError::Invariant(format!(
                    "cluster {} has {} cells",
                    cluster.id.0,
                    cluster.cells.len()
                )));
            }
            let head = self.cell(cluster.head_cell);
            for c in cluster.cells.iter().skip(1) {
                let cell = self.cell(*c);
                if cell.cluster != cluster.id {
                    return Err(TopologyError::Invariant(format!(
                        "cell {} not owned by cluster {}",
                        c.0, cluster.id.0
                    )));
                }
                if !hex_adjacent(cell.axial, head.axial) {
                    return Err(TopologyError::Invariant(format!(
                        "cell {} is not a neighbor of head cell {}",
                        c.0, cluster.head_cell.0
                    )));
                }
            }
        }
        for a in &self.cells {
            for b in &self.cells {
                if a.id < b.id && channel_conflict(a, b) && a.channel == b.channel {
                    return Err(TopologyError::Invariant(format!(
                        "cells {} and {} conflict on channel {}",
                        a.id.0, b.id.0, a.channel
                    )));
                }
            }
            let mut codes: Vec<u16> = a
                .members
                .iter()
                .map(|m| self.plan.node_code[m.0 as usize])
                .collect();
            codes.sort_unstable();
            codes.dedup();
            if codes.len() != a.members.len() {
                return Err(TopologyError::Invariant(format!(
                    "duplicate CDMA code inside cell {}",
                    a.id.0
                )));
            }
        }
        Ok(())
    }
}
