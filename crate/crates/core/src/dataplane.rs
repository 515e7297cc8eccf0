//! Physical data plane with per-neighbor FIFO queues.
//!
//! Each node `i` keeps an undecided queue `Q_ii` for packets whose next hop
//! is not chosen yet, and one FIFO `Q_ij` per neighbor. A slot runs
//! inject -> forward -> utilities -> schedule -> transmit.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::scheduling::{lgs_schedule, Schedule};
use crate::topology::{BiasField, ConflictGraph, LinkId, NetworkGraph, NodeId};
use crate::traffic::{ArrivalEvent, FlowKind};

pub type PacketId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct Packet {
    pub id: PacketId,
    pub src: NodeId,
    pub commodity: NodeId,
    pub flow: usize,
    pub kind: FlowKind,
    pub injected_at: usize,
    pub delivered_at: Option<usize>,
    pub hops: u32,
}

impl Packet {
    pub fn latency(&self) -> Option<usize> {
        self.delivered_at.map(|d| d - self.injected_at)
    }
}

/// Every packet ever injected in a run, indexed by id.
#[derive(Clone, Debug, Default)]
pub struct PacketStore {
    packets: Vec<Packet>,
    delivered: usize,
}

impl PacketStore {
    pub fn create(&mut self, src: NodeId, commodity: NodeId, flow: usize, kind: FlowKind, t: usize) -> PacketId {
        let id = self.packets.len();
        self.packets.push(Packet {
            id,
            src,
            commodity,
            flow,
            kind,
            injected_at: t,
            delivered_at: None,
            hops: 0,
        });
        id
    }

    pub fn get(&self, id: PacketId) -> &Packet {
        &self.packets[id]
    }

    pub fn deliver(&mut self, id: PacketId, t: usize) {
        let p = &mut self.packets[id];
        debug_assert!(p.delivered_at.is_none());
        p.delivered_at = Some(t);
        self.delivered += 1;
    }

    pub fn hop(&mut self, id: PacketId) {
        self.packets[id].hops += 1;
    }

    pub fn all(&self) -> &[Packet] {
        &self.packets
    }

    pub fn injected(&self) -> usize {
        self.packets.len()
    }

    pub fn delivered(&self) -> usize {
        self.delivered
    }
}

/// Next-hop probabilities `p_ij^(c)` for every link and destination.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardingPolicy {
    n_links: usize,
    /// Row-major by commodity: `prob[c * n_links + e]`.
    prob: Vec<f64>,
}

impl ForwardingPolicy {
    pub fn uniform(g: &NetworkGraph) -> Self {
        let n_links = g.link_count();
        let mut prob = vec![0.0; g.node_count() * n_links];
        for c in 0..g.node_count() {
            for i in 0..g.node_count() {
                let range = g.out_links(i);
                let share = 1.0 / range.len().max(1) as f64;
                for e in range {
                    prob[c * n_links + e] = share;
                }
            }
        }
        Self { n_links, prob }
    }

    /// Normalizes per-(node, commodity) nonnegative weights over each node's out-links.
    pub fn from_weights(g: &NetworkGraph, weights: &[f64]) -> Result<Self> {
        let n_links = g.link_count();
        debug_assert_eq!(weights.len(), g.node_count() * n_links);
        let mut prob = vec![0.0; weights.len()];
        for c in 0..g.node_count() {
            for i in 0..g.node_count() {
                let range = g.out_links(i);
                if range.is_empty() {
                    return Err(Error::Isolated { node: i });
                }
                let row = &weights[c * n_links + range.start..c * n_links + range.end];
                let total: f64 = row.iter().sum();
                if !(total > 0.0) || !total.is_finite() {
                    return Err(Error::ZeroMass { node: i, commodity: c });
                }
                for (k, w) in row.iter().enumerate() {
                    prob[c * n_links + range.start + k] = w / total;
                }
            }
        }
        Ok(Self { n_links, prob })
    }

    pub fn link_count(&self) -> usize {
        self.n_links
    }

    pub fn get(&self, e: LinkId, c: NodeId) -> f64 {
        self.prob[c * self.n_links + e]
    }

    /// Probabilities over the out-links of `i` for commodity `c`.
    pub fn row<'a>(&'a self, g: &NetworkGraph, i: NodeId, c: NodeId) -> &'a [f64] {
        let r = g.out_links(i);
        &self.prob[c * self.n_links + r.start..c * self.n_links + r.end]
    }

    pub fn sample_next(&self, g: &NetworkGraph, i: NodeId, c: NodeId, rng: &mut SimRng) -> Result<LinkId> {
        let range = g.out_links(i);
        let row = self.row(g, i, c);
        let total: f64 = row.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroMass { node: i, commodity: c });
        }
        let mut x = rng.gen::<f64>() * total;
        for (k, &p) in row.iter().enumerate() {
            if x < p {
                return Ok(range.start + k);
            }
            x -= p;
        }
        // rounding fell off the end: last link with mass
        let k = row.iter().rposition(|&p| p > 0.0).expect("positive total");
        Ok(range.start + k)
    }

    /// Every (node, commodity) row is a distribution within `tol`.
    /// Largest per-entry probability difference to `other`.
    pub fn max_abs_diff(&self, other: &ForwardingPolicy) -> f64 {
        self.prob.iter().zip(&other.prob).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_normalized(&self, g: &NetworkGraph, tol: f64) -> bool {
        (0..g.node_count()).all(|c| {
            (0..g.node_count()).all(|i| {
                let row = self.row(g, i, c);
                row.iter().all(|&p| (0.0..=1.0 + tol).contains(&p))
                    && (row.iter().sum::<f64>() - 1.0).abs() <= tol
            })
        })
    }
}

/// Transmission of `count` packets of commodity `commodity` over `link` in one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transmission {
    pub link: LinkId,
    pub commodity: NodeId,
    pub count: u32,
}

/// Summary of one physical slot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SlotReport {
    pub slot: usize,
    pub arrivals: u64,
    pub deliveries: u64,
    /// Routing cost `g(t) = sum mu_ij^(c) (B_j^(c) - B_i^(c))`.
    pub cost: f64,
    /// Packets held in the network after the slot.
    pub backlog: u64,
    pub scheduled: usize,
    /// Scheduled links whose transmission failed this slot.
    pub failed: Vec<LinkId>,
    pub transmissions: Vec<Transmission>,
}

/// Per-neighbor FIFO queues of the physical plane.
#[derive(Clone, Debug)]
pub struct PerNeighborQueueState {
    pub undecided: Vec<VecDeque<PacketId>>,
    pub link_queues: Vec<VecDeque<PacketId>>,
}

impl PerNeighborQueueState {
    pub fn new(g: &NetworkGraph) -> Self {
        Self {
            undecided: vec![VecDeque::new(); g.node_count()],
            link_queues: vec![VecDeque::new(); g.link_count()],
        }
    }

    pub fn q(&self, e: LinkId) -> usize {
        self.link_queues[e].len()
    }

    pub fn total(&self) -> usize {
        self.undecided.iter().map(VecDeque::len).sum::<usize>()
            + self.link_queues.iter().map(VecDeque::len).sum::<usize>()
    }
}

/// The physical FIFO plane: topology, queues and packet records.
#[derive(Clone, Debug)]
pub struct FifoPlane {
    pub graph: NetworkGraph,
    pub conflicts: ConflictGraph,
    pub queues: PerNeighborQueueState,
    pub packets: PacketStore,
    /// Links each packet crossed, kept only when enabled.
    paths: Option<Vec<Vec<(NodeId, NodeId)>>>,
    /// Packets delivered since the last [`FifoPlane::take_deliveries`].
    recent: Vec<PacketId>,
}

impl FifoPlane {
    pub fn new(graph: NetworkGraph, conflicts: ConflictGraph) -> Self {
        let queues = PerNeighborQueueState::new(&graph);
        Self {
            graph,
            conflicts,
            queues,
            packets: PacketStore::default(),
            paths: None,
            recent: Vec::new(),
        }
    }

    /// Records the hop sequence of every packet from now on.
    pub fn track_paths(mut self) -> Self {
        self.paths = Some(Vec::new());
        self
    }

    pub fn path(&self, id: PacketId) -> &[(NodeId, NodeId)] {
        self.paths.as_ref().map_or(&[], |p| p[id].as_slice())
    }

    /// Drains the ids of packets delivered since the previous call.
    pub fn take_deliveries(&mut self) -> Vec<PacketId> {
        std::mem::take(&mut self.recent)
    }

    /// Appends new packets to the undecided queue of each source; packets
    /// whose source is their destination are delivered on the spot.
    pub fn inject(&mut self, events: &[ArrivalEvent], kinds: &[FlowKind]) -> u64 {
        let mut delivered = 0;
        for ev in events {
            for _ in 0..ev.count {
                let id = self.packets.create(ev.node, ev.commodity, ev.flow, kinds[ev.flow], ev.slot);
                if let Some(paths) = &mut self.paths {
                    paths.push(Vec::new());
                }
                if ev.node == ev.commodity {
                    self.packets.deliver(id, ev.slot);
                    self.recent.push(id);
                    delivered += 1;
                } else {
                    self.queues.undecided[ev.node].push_back(id);
                }
            }
        }
        delivered
    }

    /// Moves every undecided packet to a per-neighbor queue drawn from `policy`.
    pub fn forward_undecided(&mut self, policy: &ForwardingPolicy, rng: &mut SimRng) -> Result<()> {
        for i in 0..self.graph.node_count() {
            while let Some(&id) = self.queues.undecided[i].front() {
                let c = self.packets.get(id).commodity;
                let e = policy.sample_next(&self.graph, i, c, rng)?;
                self.queues.undecided[i].pop_front();
                self.queues.link_queues[e].push_back(id);
            }
        }
        Ok(())
    }

    /// `u_ij = q_ij * r_ij(t)`.
    pub fn compute_utilities(&self, realized: &[u32]) -> Vec<f64> {
        self.queues
            .link_queues
            .iter()
            .zip(realized)
            .map(|(q, &r)| q.len() as f64 * r as f64)
            .collect()
    }

    /// Sends `min(q_ij, r_ij)` head-of-line packets over every scheduled link
    /// that did not fail. Packets reaching their destination are consumed;
    /// the rest join the receiver's undecided queue.
    pub fn transmit(
        &mut self,
        schedule: &Schedule,
        realized: &[u32],
        failed: Option<&[bool]>,
        t: usize,
    ) -> (Vec<Transmission>, u64) {
        let mut out = Vec::new();
        let mut delivered = 0;
        let mut per_commodity: Vec<(NodeId, u32)> = Vec::new();
        for e in schedule.active_links() {
            if failed.is_some_and(|f| f[e]) {
                continue;
            }
            let (i, j) = self.graph.link(e);
            let mu = self.queues.q(e).min(realized[e] as usize);
            per_commodity.clear();
            for _ in 0..mu {
                let id = self.queues.link_queues[e].pop_front().expect("mu <= q");
                self.packets.hop(id);
                if let Some(paths) = &mut self.paths {
                    paths[id].push((i, j));
                }
                let c = self.packets.get(id).commodity;
                match per_commodity.iter_mut().find(|(k, _)| *k == c) {
                    Some((_, n)) => *n += 1,
                    None => per_commodity.push((c, 1)),
                }
                if c == j {
                    self.packets.deliver(id, t + 1);
                    self.recent.push(id);
                    delivered += 1;
                } else {
                    self.queues.undecided[j].push_back(id);
                }
            }
            per_commodity.sort_unstable();
            out.extend(per_commodity.iter().map(|&(commodity, count)| Transmission {
                link: e,
                commodity,
                count,
            }));
        }
        (out, delivered)
    }

    /// One full slot. `failed[e]` marks links whose transmission fails this slot.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        policy: &ForwardingPolicy,
        bias: &BiasField,
        realized: &[u32],
        failed: Option<&[bool]>,
        events: &[ArrivalEvent],
        kinds: &[FlowKind],
        rng: &mut SimRng,
        t: usize,
    ) -> Result<SlotReport> {
        let arrivals: u64 = events.iter().map(|e| e.count as u64).sum();
        let mut deliveries = self.inject(events, kinds);
        self.forward_undecided(policy, rng)?;
        let utility = self.compute_utilities(realized);
        let schedule = lgs_schedule(&self.conflicts, &utility);
        let failed_links: Vec<LinkId> = match failed {
            Some(f) => schedule.active_links().filter(|&e| f[e]).collect(),
            None => Vec::new(),
        };
        let (transmissions, delivered) = self.transmit(&schedule, realized, failed, t);
        deliveries += delivered;
        let cost = routing_cost(&self.graph, bias, &transmissions);
        Ok(SlotReport {
            slot: t,
            arrivals,
            deliveries,
            cost,
            backlog: self.queues.total() as u64,
            scheduled: schedule.len(),
            failed: failed_links,
            transmissions,
        })
    }

    /// A slot in which routing is paused: arrivals queue at their sources.
    pub fn paused_step(&mut self, events: &[ArrivalEvent], kinds: &[FlowKind], t: usize) -> SlotReport {
        let arrivals: u64 = events.iter().map(|e| e.count as u64).sum();
        let deliveries = self.inject(events, kinds);
        SlotReport {
            slot: t,
            arrivals,
            deliveries,
            backlog: self.queues.total() as u64,
            ..Default::default()
        }
    }

    /// `Q_i^(c)`: packets of commodity `c` held anywhere at node `i`, as `[c * n + i]`.
    pub fn commodity_backlog(&self) -> Vec<u64> {
        let n = self.graph.node_count();
        let mut out = vec![0u64; n * n];
        for (i, q) in self.queues.undecided.iter().enumerate() {
            for &id in q {
                out[self.packets.get(id).commodity * n + i] += 1;
            }
        }
        for (e, q) in self.queues.link_queues.iter().enumerate() {
            let (i, _) = self.graph.link(e);
            for &id in q {
                out[self.packets.get(id).commodity * n + i] += 1;
            }
        }
        out
    }

    /// Switches to a new topology. Packets queued on links that no longer
    /// exist return to their node's undecided queue in FIFO order; queues of
    /// surviving links are kept.
    pub fn rebind(&mut self, graph: NetworkGraph, conflicts: ConflictGraph) -> usize {
        let mut reverted = 0;
        let mut link_queues = vec![VecDeque::new(); graph.link_count()];
        let old = std::mem::take(&mut self.queues.link_queues);
        for (e, q) in old.into_iter().enumerate() {
            let (i, j) = self.graph.link(e);
            match graph.link_id(i, j) {
                Some(new_e) => link_queues[new_e] = q,
                None => {
                    reverted += q.len();
                    self.queues.undecided[i].extend(q);
                }
            }
        }
        self.queues.link_queues = link_queues;
        self.graph = graph;
        self.conflicts = conflicts;
        reverted
    }
}

/// `sum mu_ij^(c) (B_j^(c) - B_i^(c))` over the slot's transmissions.
pub fn routing_cost(g: &NetworkGraph, bias: &BiasField, transmissions: &[Transmission]) -> f64 {
    transmissions
        .iter()
        .map(|tx| {
            let (i, j) = g.link(tx.link);
            tx.count as f64 * (bias.get(j, tx.commodity) - bias.get(i, tx.commodity))
        })
        .sum()
}
