//! Shortest-path-biased backpressure on physical per-commodity queues.

use std::collections::VecDeque;

use crate::dataplane::{routing_cost, PacketStore, SlotReport, Transmission};
use crate::scheduling::lgs_schedule;
use crate::topology::{BiasField, ConflictGraph, LinkId, NetworkGraph, NodeId};
use crate::traffic::{ArrivalEvent, FlowKind};

/// Per-commodity FIFO queues `Q_i^(c)` at each node.
#[derive(Clone, Debug)]
pub struct SpBpPlane {
    pub graph: NetworkGraph,
    pub conflicts: ConflictGraph,
    /// `queues[c * n + i]`.
    queues: Vec<VecDeque<usize>>,
    pub packets: PacketStore,
}

impl SpBpPlane {
    pub fn new(graph: NetworkGraph, conflicts: ConflictGraph) -> Self {
        let n = graph.node_count();
        Self {
            graph,
            conflicts,
            queues: vec![VecDeque::new(); n * n],
            packets: PacketStore::default(),
        }
    }

    fn n(&self) -> usize {
        self.graph.node_count()
    }

    pub fn queue_len(&self, i: NodeId, c: NodeId) -> usize {
        self.queues[c * self.n() + i].len()
    }

    pub fn backlog(&self) -> u64 {
        self.queues.iter().map(|q| q.len() as u64).sum()
    }

    /// `Q_i^(c)` as `[c * n + i]`.
    pub fn commodity_backlog(&self) -> Vec<u64> {
        self.queues.iter().map(|q| q.len() as u64).collect()
    }

    pub fn inject(&mut self, events: &[ArrivalEvent], kinds: &[FlowKind]) -> u64 {
        let n = self.n();
        let mut delivered = 0;
        for ev in events {
            for _ in 0..ev.count {
                let id = self.packets.create(ev.node, ev.commodity, ev.flow, kinds[ev.flow], ev.slot);
                if ev.node == ev.commodity {
                    self.packets.deliver(id, ev.slot);
                    delivered += 1;
                } else {
                    self.queues[ev.commodity * n + ev.node].push_back(id);
                }
            }
        }
        delivered
    }

    /// Per-link max-pressure commodity and weight, ties to the smaller commodity.
    pub fn selections(&self, bias: &BiasField, commodities: &[NodeId]) -> Vec<Option<(NodeId, f64)>> {
        (0..self.graph.link_count())
            .map(|e| {
                let (i, j) = self.graph.link(e);
                let mut best: Option<(NodeId, f64)> = None;
                for &c in commodities {
                    let p = self.queue_len(i, c) as f64 - self.queue_len(j, c) as f64 + bias.diff(i, j, c);
                    if best.is_none_or(|(_, b)| p > b) {
                        best = Some((c, p));
                    }
                }
                best.map(|(c, p)| {
                    let w = if self.queue_len(i, c) > 0 { p.max(0.0) } else { 0.0 };
                    (c, w)
                })
            })
            .collect()
    }

    /// One slot: inject, select, schedule, transmit.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        bias: &BiasField,
        commodities: &[NodeId],
        realized: &[u32],
        failed: Option<&[bool]>,
        events: &[ArrivalEvent],
        kinds: &[FlowKind],
        t: usize,
    ) -> SlotReport {
        let n = self.n();
        let arrivals: u64 = events.iter().map(|e| e.count as u64).sum();
        let mut deliveries = self.inject(events, kinds);
        let sel = self.selections(bias, commodities);
        let utility: Vec<f64> = sel
            .iter()
            .zip(realized)
            .map(|(s, &r)| s.map_or(0.0, |(_, w)| w * r as f64))
            .collect();
        let schedule = lgs_schedule(&self.conflicts, &utility);
        let mut failed_links: Vec<LinkId> = Vec::new();
        let mut transmissions = Vec::new();
        for e in schedule.active_links() {
            if failed.is_some_and(|f| f[e]) {
                failed_links.push(e);
                continue;
            }
            let Some((c, w)) = sel[e] else { continue };
            if w <= 0.0 {
                continue;
            }
            let (i, j) = self.graph.link(e);
            let mu = self.queues[c * n + i].len().min(realized[e] as usize);
            for _ in 0..mu {
                let id = self.queues[c * n + i].pop_front().expect("mu <= queue");
                self.packets.hop(id);
                if j == c {
                    self.packets.deliver(id, t + 1);
                    deliveries += 1;
                } else {
                    self.queues[c * n + j].push_back(id);
                }
            }
            if mu > 0 {
                transmissions.push(Transmission {
                    link: e,
                    commodity: c,
                    count: mu as u32,
                });
            }
        }
        SlotReport {
            slot: t,
            arrivals,
            deliveries,
            cost: routing_cost(&self.graph, bias, &transmissions),
            backlog: self.backlog(),
            scheduled: schedule.len(),
            failed: failed_links,
            transmissions,
        }
    }

    /// Node-held queues survive a topology change unchanged.
    pub fn rebind(&mut self, graph: NetworkGraph, conflicts: ConflictGraph) {
        self.graph = graph;
        self.conflicts = conflicts;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_conflict_graph, compute_bias_field, LinkRateModel, Point};

    fn line(n: usize) -> SpBpPlane {
        let g = NetworkGraph::unit_disk((0..n).map(|i| Point::new(i as f64 * 0.9, 0.0)).collect(), n as f64);
        let cg = build_conflict_graph(&g);
        SpBpPlane::new(g, cg)
    }

    fn ev(t: usize, node: NodeId, c: NodeId, count: u32) -> ArrivalEvent {
        ArrivalEvent { slot: t, node, commodity: c, count, flow: 0 }
    }

    #[test]
    fn two_node_latency_is_one() {
        let mut p = line(2);
        let rates = LinkRateModel::constant(2, 10.0);
        let bias = compute_bias_field(&p.graph, &rates).unwrap();
        for t in 0..50 {
            let events = if t % 3 == 0 { vec![ev(t, 0, 1, 1)] } else { vec![] };
            p.step(&bias, &[1], &[10, 10], None, &events, &[FlowKind::Streaming], t);
        }
        assert!(p.packets.all().iter().all(|pk| pk.latency() == Some(1)));
        assert_eq!(p.backlog(), 0);
    }

    #[test]
    fn empty_queues_do_nothing() {
        let mut p = line(3);
        let bias = BiasField::zero(&p.graph);
        let r = p.step(&bias, &[2], &[10; 4], None, &[], &[FlowKind::Streaming], 0);
        assert_eq!(r.scheduled, 0);
        assert!(r.transmissions.is_empty());
    }

    #[test]
    fn capacity_and_conservation() {
        let mut p = line(4);
        let rates = LinkRateModel::constant(6, 3.0);
        let bias = compute_bias_field(&p.graph, &rates).unwrap();
        let mut injected = 0u64;
        let mut delivered = 0u64;
        for t in 0..40 {
            let events = vec![ev(t, 0, 3, 5)];
            let before = p.backlog();
            let r = p.step(&bias, &[3], &[3; 6], None, &events, &[FlowKind::Streaming], t);
            injected += r.arrivals;
            delivered += r.deliveries;
            for tx in &r.transmissions {
                assert!(tx.count <= 3);
            }
            assert_eq!(r.backlog, before + r.arrivals - r.deliveries);
        }
        assert_eq!(injected, delivered + p.backlog());
    }

    #[test]
    fn failed_link_holds_packets() {
        let mut p = line(2);
        let bias = BiasField::zero(&p.graph);
        let r = p.step(&bias, &[1], &[10, 10], Some(&[true, true]), &[ev(0, 0, 1, 4)], &[FlowKind::Streaming], 0);
        assert_eq!(r.failed, vec![0]);
        assert_eq!(p.queue_len(0, 1), 4);
    }
}
