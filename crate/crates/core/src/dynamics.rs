//! Link failures and node mobility.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::scheduling::Schedule;
use crate::topology::{edge_betweenness_ranking, NetworkGraph, NodeId, Point, UNIT_RADIUS};
use crate::virtualplane::PheromoneField;

pub const FAILURE_DECAY: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    AllLinks,
    BwPersist,
    LocalPersist,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FailureConfig {
    pub kind: FailureKind,
    /// Per-pair failure probabilities are drawn from `U(0, max_prob)`.
    pub max_prob: f64,
    pub mean_duration: f64,
    pub duration_std: f64,
    /// Share of links targeted by betweenness.
    pub bw_fraction: f64,
    /// Share of nodes the local disk covers.
    pub local_fraction: (f64, f64),
    /// Targeted links are fully down during an event instead of lossy.
    pub full_outage: bool,
}

impl Default for FailureConfig {
    fn default() -> Self {
        Self {
            kind: FailureKind::AllLinks,
            max_prob: 0.05,
            mean_duration: 20.0,
            duration_std: 5.0,
            bw_fraction: 0.05,
            local_fraction: (0.05, 0.06),
            full_outage: false,
        }
    }
}

/// Transient failure process. All state is keyed by node pair so it
/// survives topology changes.
#[derive(Clone, Debug)]
pub struct FailureModel {
    n: usize,
    cfg: FailureConfig,
    /// Symmetric `prob[i * n + j]`.
    prob: Vec<f64>,
    targeted: Vec<bool>,
    /// First slot after the pair's current event, 0 when idle.
    event_end: Vec<usize>,
    duration: Normal<f64>,
}

impl FailureModel {
    pub fn new(g: &NetworkGraph, cfg: FailureConfig, rng: &mut SimRng) -> Result<Self> {
        if !(0.0..=1.0).contains(&cfg.max_prob) {
            return Err(Error::invalid(format!("failure max_prob {} outside [0, 1]", cfg.max_prob)));
        }
        if !(cfg.mean_duration >= 1.0) || !(cfg.duration_std >= 0.0) {
            return Err(Error::invalid("failure durations must be >= 1 with nonnegative std"));
        }
        let n = g.node_count();
        let mut prob = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let p = if cfg.max_prob > 0.0 { rng.gen_range(0.0..cfg.max_prob) } else { 0.0 };
                prob[i * n + j] = p;
                prob[j * n + i] = p;
            }
        }
        let mut targeted = vec![false; n * n];
        let mut mark = |i: NodeId, j: NodeId| {
            targeted[i * n + j] = true;
            targeted[j * n + i] = true;
        };
        match cfg.kind {
            FailureKind::AllLinks => {}
            FailureKind::BwPersist => {
                let pairs = g.link_count() / 2;
                let want = ((cfg.bw_fraction * pairs as f64).ceil() as usize).min(pairs);
                let mut chosen = BTreeSet::new();
                for e in edge_betweenness_ranking(g) {
                    if chosen.len() >= want {
                        break;
                    }
                    let (i, j) = g.link(e);
                    chosen.insert((i.min(j), i.max(j)));
                }
                for (i, j) in chosen {
                    mark(i, j);
                }
            }
            FailureKind::LocalPersist => {
                let inside = local_disk_nodes(g, cfg.local_fraction, rng);
                for &(i, j) in g.links() {
                    if inside[i] || inside[j] {
                        mark(i, j);
                    }
                }
            }
        }
        let duration = Normal::new(cfg.mean_duration, cfg.duration_std)
            .map_err(|e| Error::invalid(format!("duration distribution: {e}")))?;
        Ok(Self {
            n,
            cfg,
            prob,
            targeted,
            event_end: vec![0; n * n],
            duration,
        })
    }

    pub fn kind(&self) -> FailureKind {
        self.cfg.kind
    }

    pub fn prob(&self, i: NodeId, j: NodeId) -> f64 {
        self.prob[i * self.n + j]
    }

    pub fn is_targeted(&self, i: NodeId, j: NodeId) -> bool {
        self.targeted[i * self.n + j]
    }

    pub fn in_event(&self, i: NodeId, j: NodeId, t: usize) -> bool {
        t < self.event_end[i * self.n + j]
    }

    fn draw_duration(&self, rng: &mut SimRng) -> usize {
        self.duration.sample(rng).round().max(1.0) as usize
    }

    /// Advances event windows to slot `t` and returns which links of `g`
    /// fail this slot.
    pub fn failure_mask(&mut self, g: &NetworkGraph, t: usize, rng: &mut SimRng) -> Vec<bool> {
        let n = self.n;
        if self.cfg.kind != FailureKind::AllLinks {
            for &(i, j) in g.links() {
                if i > j || !self.targeted[i * n + j] || t < self.event_end[i * n + j] {
                    continue;
                }
                let rate = self.prob[i * n + j] / self.cfg.mean_duration;
                if rate > 0.0 && rng.gen_bool(rate.min(1.0)) {
                    let end = t + self.draw_duration(rng);
                    self.event_end[i * n + j] = end;
                    self.event_end[j * n + i] = end;
                }
            }
        }
        g.links()
            .iter()
            .map(|&(i, j)| {
                let p = self.prob[i * n + j];
                match self.cfg.kind {
                    FailureKind::AllLinks => p > 0.0 && rng.gen_bool(p),
                    _ if t < self.event_end[i * n + j] => self.cfg.full_outage || (p > 0.0 && rng.gen_bool(p)),
                    _ => false,
                }
            })
            .collect()
    }
}

/// Nodes inside a uniformly placed disk sized to cover the target share of nodes.
pub fn local_disk_nodes(g: &NetworkGraph, fraction: (f64, f64), rng: &mut SimRng) -> Vec<bool> {
    let n = g.node_count();
    let side = g.area_side();
    let center = Point::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side));
    let k = ((fraction.0 * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<(f64, NodeId)> = g.positions().iter().map(|p| p.dist(&center)).zip(0..n).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut inside = vec![false; n];
    for &(_, i) in &order[..k] {
        inside[i] = true;
    }
    inside
}

/// Decays every commodity's pheromone on scheduled links that failed.
pub fn apply_failure_decay(field: &mut PheromoneField, schedule: &Schedule, failed: &[bool], factor: f64) {
    for e in schedule.active_links() {
        if failed[e] {
            field.decay_link(e, factor);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub mobile_nodes: usize,
    pub step_std: f64,
    /// Walk steps applied per mobile node at the event.
    pub walk_steps: usize,
    pub max_redraws: usize,
    pub trigger_slot: usize,
    pub update_slot: usize,
    pub pause: usize,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            mobile_nodes: 0,
            step_std: 0.1,
            walk_steps: DEFAULT_WALK_STEPS,
            max_redraws: 100,
            trigger_slot: 500,
            update_slot: 600,
            pause: 10,
        }
    }
}

pub const DEFAULT_WALK_STEPS: usize = 1000;

impl MobilityConfig {
    pub fn resume_slot(&self) -> usize {
        self.update_slot + self.pause
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MobilityOutcome {
    pub graph: NetworkGraph,
    pub moved: Vec<NodeId>,
    /// Undirected pairs `(i, j)` with `i < j`.
    pub removed: Vec<(NodeId, NodeId)>,
    pub added: Vec<(NodeId, NodeId)>,
    /// Redraw budgets exhausted (the node stayed for that step).
    pub stuck_steps: usize,
}

impl MobilityOutcome {
    /// Removed pairs over the original pair count.
    pub fn removal_ratio(&self, before: &NetworkGraph) -> f64 {
        let pairs = before.link_count() / 2;
        if pairs == 0 {
            0.0
        } else {
            self.removed.len() as f64 / pairs as f64
        }
    }
}

fn connected_positions(positions: &[Point]) -> bool {
    let n = positions.len();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !seen[j] && positions[i].dist(&positions[j]) <= UNIT_RADIUS {
                seen[j] = true;
                count += 1;
                stack.push(j);
            }
        }
    }
    count == n
}

/// Connectivity after node `i` moved from `old`. Keeping every former
/// neighbor only adds links, so the full search is skipped then.
fn connected_after_move(positions: &[Point], i: NodeId, old: Point) -> bool {
    let p = positions[i];
    let kept = positions
        .iter()
        .enumerate()
        .all(|(j, q)| j == i || old.dist(q) > UNIT_RADIUS || p.dist(q) <= UNIT_RADIUS);
    kept || connected_positions(positions)
}

fn pairs_of(g: &NetworkGraph) -> BTreeSet<(NodeId, NodeId)> {
    g.links().iter().filter(|(i, j)| i < j).copied().collect()
}

/// Moves a random subset of nodes by a constrained Gaussian walk.
///
/// Each step, mobile nodes move in index order; a displacement is redrawn
/// up to `max_redraws` times until the node stays in the square and the
/// network stays connected, otherwise the node holds still for that step.
pub fn mobility_event(g: &NetworkGraph, cfg: &MobilityConfig, rng: &mut SimRng) -> Result<MobilityOutcome> {
    let n = g.node_count();
    if cfg.mobile_nodes > n {
        return Err(Error::invalid(format!("{} mobile nodes exceed {} nodes", cfg.mobile_nodes, n)));
    }
    let step = Normal::new(0.0, cfg.step_std).map_err(|e| Error::invalid(format!("step distribution: {e}")))?;
    let mut moved: Vec<NodeId> = sample(rng, n, cfg.mobile_nodes).into_vec();
    moved.sort_unstable();
    let side = g.area_side();
    let mut positions = g.positions().to_vec();
    let mut stuck_steps = 0;
    for _ in 0..cfg.walk_steps {
        for &i in &moved {
            let old = positions[i];
            let mut placed = false;
            for _ in 0..cfg.max_redraws {
                let p = Point::new(old.x + step.sample(rng), old.y + step.sample(rng));
                if !(0.0..=side).contains(&p.x) || !(0.0..=side).contains(&p.y) {
                    continue;
                }
                positions[i] = p;
                if connected_after_move(&positions, i, old) {
                    placed = true;
                    break;
                }
                positions[i] = old;
            }
            if !placed {
                stuck_steps += 1;
            }
        }
    }
    let graph = NetworkGraph::unit_disk(positions, side);
    let before = pairs_of(g);
    let after = pairs_of(&graph);
    Ok(MobilityOutcome {
        removed: before.difference(&after).copied().collect(),
        added: after.difference(&before).copied().collect(),
        graph,
        moved,
        stuck_steps,
    })
}

/// One line of the dynamics event log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DynamicsEvent {
    pub t: usize,
    pub kind: &'static str,
    pub subject: String,
    pub detail: String,
}
