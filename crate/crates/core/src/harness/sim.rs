//! Scenario engine: builds the environment, prepares a policy and runs the
//! physical slots with failures and mobility.

use serde::Serialize;

use crate::dataplane::{FifoPlane, ForwardingPolicy, Packet, SlotReport};
use crate::dynamics::{mobility_event, DynamicsEvent, FailureModel};
use crate::error::{Error, Result};
use crate::harness::config::ScenarioConfig;
use crate::harness::metrics::{is_stable, packet_metrics, FlowBalance, RunMetrics};
use crate::policies::{aco_bias_policy, aco_update, run_virtual_aco, AntColony, PolicyKind, SpBpPlane};
use crate::rng::{self, SimRng};
use crate::topology::{
    build_conflict_graph_with, compute_bias_field, generate_topology, BiasField, ConflictGraph, LinkRateModel,
    NetworkGraph, NodeId, PairRates,
};
use crate::traffic::{sample_flows, slot_arrivals, virtualize_flows, FlowKind, FlowSpec, VirtualMode};
use crate::virtualplane::{policy_from_pheromone, run_virtual_spbp, NewLinkInit, PheromoneField};

/// Topology, rates and flows of one instance; identical for every policy.
#[derive(Clone, Debug)]
pub struct Environment {
    pub graph: NetworkGraph,
    pub conflicts: ConflictGraph,
    pub pairs: PairRates,
    pub rates: LinkRateModel,
    pub flows: Vec<FlowSpec>,
}

pub fn build_environment(cfg: &ScenarioConfig) -> Result<Environment> {
    let t = &cfg.topology;
    let base = cfg.run.base_seed;
    let (topo, realization) = cfg.instance();
    let flow_index = topo * cfg.run.realizations + realization;
    let bounds = (t.rate_min, t.rate_max);
    let (graph, rates, pairs) = match &t.adjacency {
        Some(path) => {
            let (g, r) = NetworkGraph::load_adjacency(path)?;
            let pairs = PairRates::sample(g.node_count(), bounds, &mut rng::stream(base, rng::LINK_RATES, topo));
            (g, LinkRateModel::new(r), pairs)
        }
        None => {
            let seed = rng::derive_seed(base, rng::TOPOLOGY, topo);
            let g = generate_topology(t.nodes, t.density, seed, t.max_retries)?;
            let pairs = PairRates::sample(g.node_count(), bounds, &mut rng::stream(base, rng::LINK_RATES, topo));
            let r = LinkRateModel::from_pairs(&pairs, &g);
            (g, r, pairs)
        }
    };
    let rates = rates.with_noise(t.rate_noise_std, t.rate_half_width);
    let conflicts = build_conflict_graph_with(&graph, t.interference_radius);
    let flows = match &cfg.traffic.flows {
        Some(f) => f.clone(),
        None => sample_flows(graph.node_count(), &cfg.traffic.sampling(), &mut rng::stream(base, rng::FLOWS, flow_index)),
    };
    Ok(Environment {
        graph,
        conflicts,
        pairs,
        rates,
        flows,
    })
}

/// Flows fed to a virtual phase.
pub fn virtual_flows(cfg: &ScenarioConfig, flows: &[FlowSpec], mode: VirtualMode) -> Vec<FlowSpec> {
    let explicit = cfg.traffic.flows.is_some()
        && cfg.policy.virtual_streaming_load.is_none()
        && cfg.policy.virtual_bursty_load.is_none();
    if explicit {
        // Fixed flow sets keep their own loads.
        flows
            .iter()
            .map(|f| match mode {
                VirtualMode::StreamingAll => FlowSpec::streaming(f.src, f.dst, f.base_rate, f.load),
                VirtualMode::Mirror => FlowSpec { burst_start: 0, ..f.clone() },
            })
            .collect()
    } else {
        virtualize_flows(flows, mode, cfg.virtual_loads(), cfg.policy.virtual_rate_rule)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlotRow {
    pub t: usize,
    pub arrivals: u64,
    pub deliveries: u64,
    pub backlog: u64,
    pub cost: f64,
    pub scheduled: usize,
    pub failed: usize,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub flows: Vec<FlowSpec>,
    pub metrics: RunMetrics,
    pub packets: Vec<Packet>,
    pub slots: Vec<SlotRow>,
    pub events: Vec<DynamicsEvent>,
}

#[allow(clippy::large_enum_variant)]
enum Plane {
    Fifo {
        plane: FifoPlane,
        field: PheromoneField,
        policy: ForwardingPolicy,
        colony: Option<AntColony>,
    },
    SpBp(SpBpPlane),
}

struct Streams {
    arrivals: SimRng,
    realized: SimRng,
    forwarding: SimRng,
    failures: SimRng,
    mobility: SimRng,
    virt: SimRng,
    ants: SimRng,
}

impl Streams {
    fn new(base: u64, instance: u64) -> Self {
        Self {
            arrivals: rng::stream(base, rng::ARRIVALS, instance),
            realized: rng::stream(base, rng::REALIZED_RATES, instance),
            forwarding: rng::stream(base, rng::FORWARDING, instance),
            failures: rng::stream(base, rng::FAILURES, instance),
            mobility: rng::stream(base, rng::MOBILITY, instance),
            virt: rng::stream(base, rng::VIRTUAL, instance),
            ants: rng::stream(base, rng::ANTS, instance),
        }
    }
}

fn invariant(ok: bool, slot: usize, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Invariant { slot, message: message() })
    }
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    kind: PolicyKind,
    graph: NetworkGraph,
    conflicts: ConflictGraph,
    rates: LinkRateModel,
    bias: BiasField,
    flows: Vec<FlowSpec>,
    kinds: Vec<FlowKind>,
    commodities: Vec<NodeId>,
    s: Streams,
    exchanges: u64,
    events: Vec<DynamicsEvent>,
}

impl Engine<'_> {
    fn refresh_policy(&self, field: &PheromoneField) -> Result<ForwardingPolicy> {
        match self.kind {
            PolicyKind::AntBaseline | PolicyKind::AntIdeal => aco_bias_policy(field, &self.graph, &self.bias, self.cfg.policy.aco_floor),
            _ => policy_from_pheromone(field, &self.graph),
        }
    }

    /// Runs the scheme's virtual phase from `backlogs` (or empty queues).
    fn virtual_phase(&mut self, start: Option<PheromoneField>, backlogs: Option<&[u64]>) -> Result<PheromoneField> {
        let p = &self.cfg.policy;
        match self.kind {
            PolicyKind::AntBaseline | PolicyKind::AntIdeal => {
                let vflows = virtual_flows(self.cfg, &self.flows, VirtualMode::StreamingAll);
                self.exchanges += (p.virtual_steps * self.graph.link_count()) as u64;
                run_virtual_aco(&self.graph, &self.conflicts, &self.bias, &vflows, &p.aco_params(), &self.rates, &mut self.s.virt, start, backlogs)
            }
            _ => {
                let vflows = virtual_flows(self.cfg, &self.flows, self.kind.virtual_mode());
                let run = run_virtual_spbp(&self.graph, &self.conflicts, &self.bias, &vflows, &p.virtual_params(), &self.rates, &mut self.s.virt, backlogs);
                self.exchanges += run.exchanges;
                Ok(run.field)
            }
        }
    }

    fn log(&mut self, t: usize, kind: &'static str, subject: String, detail: String) {
        self.events.push(DynamicsEvent { t, kind, subject, detail });
    }
}

fn plane_backlog_by_commodity(plane: &Plane) -> Vec<u64> {
    match plane {
        Plane::Fifo { plane, .. } => plane.commodity_backlog(),
        Plane::SpBp(p) => p.commodity_backlog(),
    }
}

/// Runs one scenario instance.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let env = build_environment(cfg)?;
    let horizon = cfg.traffic.horizon;
    let check = cfg.run.check_invariants;
    let bias = compute_bias_field(&env.graph, &env.rates)?;
    let mut commodities: Vec<NodeId> = env.flows.iter().map(|f| f.dst).collect();
    commodities.sort_unstable();
    commodities.dedup();
    let n = env.graph.node_count();
    let mut eng = Engine {
        cfg,
        kind: cfg.policy.kind,
        graph: env.graph.clone(),
        conflicts: env.conflicts.clone(),
        rates: env.rates.clone(),
        bias,
        kinds: env.flows.iter().map(|f| f.kind).collect(),
        flows: env.flows.clone(),
        commodities,
        s: Streams::new(cfg.run.base_seed, cfg.run.seed),
        exchanges: 0,
        events: Vec::new(),
    };

    let mut plane = if eng.kind == PolicyKind::SpBp {
        Plane::SpBp(SpBpPlane::new(eng.graph.clone(), eng.conflicts.clone()))
    } else {
        let field = eng.virtual_phase(None, None)?;
        let policy = eng.refresh_policy(&field)?;
        let colony = (eng.kind == PolicyKind::AntIdeal).then(|| AntColony::new(eng.flows.len()));
        Plane::Fifo {
            plane: FifoPlane::new(eng.graph.clone(), eng.conflicts.clone()),
            field,
            policy,
            colony,
        }
    };

    let failure_model = match &cfg.failures {
        Some(fc) => Some(FailureModel::new(&eng.graph, fc.clone(), &mut eng.s.failures)?),
        None => None,
    };
    let mut failure_model = failure_model;
    let mobility = cfg.mobility.clone().filter(|m| m.mobile_nodes > 0);
    let reruns_virtual = matches!(eng.kind, PolicyKind::AntBp | PolicyKind::AntBpMirror | PolicyKind::AntBaseline | PolicyKind::AntIdeal);

    let mut slots = Vec::with_capacity(horizon);
    let mut backlog_series = Vec::with_capacity(horizon);
    let mut balance = FlowBalance::new(n);
    let mut injected_per_flow = vec![0u64; eng.flows.len()];
    let mut realized = Vec::new();
    let mut cost_total = 0.0;

    for t in 0..horizon {
        // Environment draws happen every slot so all policies stay paired.
        let events = slot_arrivals(&eng.flows, t, &mut eng.s.arrivals);
        for ev in &events {
            injected_per_flow[ev.flow] += ev.count as u64;
            balance.arrive(ev.node, ev.commodity, ev.count as u64);
        }

        if let Some(m) = &mobility {
            if t == m.trigger_slot {
                let out = mobility_event(&eng.graph, m, &mut eng.s.mobility)?;
                for &i in &out.moved {
                    eng.log(t, "node-moved", i.to_string(), String::new());
                }
                for &(i, j) in &out.removed {
                    eng.log(t, "link-removed", format!("{i}-{j}"), String::new());
                }
                for &(i, j) in &out.added {
                    eng.log(t, "link-added", format!("{i}-{j}"), String::new());
                }
                let old = std::mem::replace(&mut eng.graph, out.graph);
                eng.conflicts = build_conflict_graph_with(&eng.graph, cfg.topology.interference_radius);
                eng.rates = LinkRateModel::new(
                    eng.graph
                        .links()
                        .iter()
                        .map(|&(i, j)| old.link_id(i, j).map_or(env.pairs.get(i, j), |e| eng.rates.long_term[e]))
                        .collect(),
                )
                .with_noise(cfg.topology.rate_noise_std, cfg.topology.rate_half_width);
                eng.bias = compute_bias_field(&eng.graph, &eng.rates)?;
                match &mut plane {
                    Plane::SpBp(p) => p.rebind(eng.graph.clone(), eng.conflicts.clone()),
                    Plane::Fifo { plane: fifo, field, .. } => {
                        let reverted = fifo.rebind(eng.graph.clone(), eng.conflicts.clone());
                        let init = if eng.kind == PolicyKind::AntBpNovirt { NewLinkInit::MeanOfNode } else { NewLinkInit::Epsilon };
                        *field = field.remap(&old, &eng.graph, init);
                        let detail = format!("{reverted} packets reverted");
                        eng.log(t, "rebind", String::new(), detail);
                    }
                }
                if let Plane::Fifo { field, policy, .. } = &mut plane {
                    *policy = eng.refresh_policy(field)?;
                }
            }
            if reruns_virtual && t == m.update_slot {
                let backlogs = plane_backlog_by_commodity(&plane);
                if let Plane::Fifo { field, .. } = &plane {
                    let start = matches!(eng.kind, PolicyKind::AntBaseline | PolicyKind::AntIdeal).then(|| field.clone());
                    let new_field = eng.virtual_phase(start, Some(&backlogs))?;
                    let new_policy = eng.refresh_policy(&new_field)?;
                    if let Plane::Fifo { field, policy, .. } = &mut plane {
                        *field = new_field;
                        *policy = new_policy;
                    }
                }
                eng.log(t, "virtual-update", String::new(), format!("pause {}", m.pause));
            }
        }

        eng.rates.sample_realized_into(&mut eng.s.realized, &mut realized);
        let failed = match &mut failure_model {
            Some(fm) => Some(fm.failure_mask(&eng.graph, t, &mut eng.s.failures)),
            None => None,
        };
        let paused = reruns_virtual && mobility.as_ref().is_some_and(|m| t >= m.update_slot && t < m.resume_slot());

        let before = check.then(|| plane_backlog_by_commodity(&plane));
        let report: SlotReport = match &mut plane {
            Plane::SpBp(p) => p.step(&eng.bias, &eng.commodities, &realized, failed.as_deref(), &events, &eng.kinds, t),
            Plane::Fifo { plane: fifo, .. } if paused => fifo.paused_step(&events, &eng.kinds, t),
            Plane::Fifo { plane: fifo, field, policy, colony } => {
                let report = fifo.step(policy, &eng.bias, &realized, failed.as_deref(), &events, &eng.kinds, &mut eng.s.forwarding, t)?;
                fifo.take_deliveries();
                let mut dirty = false;
                if !report.failed.is_empty() {
                    for &e in &report.failed {
                        field.decay_link(e, cfg.policy.failure_decay);
                    }
                    dirty = true;
                }
                if let Some(colony) = colony {
                    let params = cfg.policy.ant_ideal_params();
                    colony.emit(&eng.flows, &injected_per_flow, params.interval, t);
                    let deposits = colony.advance(&eng.graph, policy, &params, &mut eng.s.ants, t)?;
                    aco_update(field, &eng.graph, &deposits, params.evaporation);
                    dirty = true;
                }
                if dirty {
                    *policy = eng.refresh_policy(field)?;
                }
                report
            }
        };
        for &e in &report.failed {
            let (i, j) = eng.graph.link(e);
            eng.log(t, "failure", format!("{i}-{j}"), String::new());
        }
        for tx in &report.transmissions {
            let (i, j) = eng.graph.link(tx.link);
            balance.transmit(i, j, tx.commodity, tx.count as u64);
        }

        if let Some(before) = before {
            check_slot(&eng, &plane, &before, &events, &report, &realized, t)?;
        }

        cost_total += report.cost;
        backlog_series.push(report.backlog);
        slots.push(SlotRow {
            t,
            arrivals: report.arrivals,
            deliveries: report.deliveries,
            backlog: report.backlog,
            cost: report.cost,
            scheduled: report.scheduled,
            failed: report.failed.len(),
        });
    }

    let (packets, ants_emitted) = match plane {
        Plane::SpBp(p) => (p.packets.all().to_vec(), 0),
        Plane::Fifo { plane, colony, .. } => (plane.packets.all().to_vec(), colony.map_or(0, |c| c.emitted())),
    };
    let mut metrics = RunMetrics::default();
    packet_metrics(&packets, horizon, cfg.run.latency, &mut metrics);
    metrics.mean_backlog = backlog_series.iter().sum::<u64>() as f64 / horizon as f64;
    metrics.final_backlog = backlog_series.last().copied().unwrap_or(0);
    metrics.mean_cost = cost_total / horizon as f64;
    metrics.stable = is_stable(&backlog_series);
    metrics.flow_residual = metrics.stable.then(|| balance.max_relative_residual(horizon));
    metrics.virtual_exchanges = eng.exchanges;
    metrics.ants_emitted = ants_emitted;
    Ok(RunOutput {
        config: cfg.clone(),
        flows: eng.flows.clone(),
        metrics,
        packets,
        slots,
        events: eng.events,
    })
}

/// Per-slot invariants: packet conservation, queue recursion, capacity,
/// schedule independence, policy normalization and pheromone floor.
fn check_slot(
    eng: &Engine<'_>,
    plane: &Plane,
    before: &[u64],
    events: &[crate::traffic::ArrivalEvent],
    report: &SlotReport,
    realized: &[u32],
    t: usize,
) -> Result<()> {
    let n = eng.graph.node_count();
    let (injected, delivered, backlog) = match plane {
        Plane::Fifo { plane, .. } => (plane.packets.injected(), plane.packets.delivered(), plane.queues.total() as u64),
        Plane::SpBp(p) => (p.packets.injected(), p.packets.delivered(), p.backlog()),
    };
    invariant(injected as u64 == delivered as u64 + backlog, t, || {
        format!("injected {injected} != delivered {delivered} + queued {backlog}")
    })?;

    let mut expected = before.to_vec();
    for ev in events {
        if ev.node != ev.commodity {
            expected[ev.commodity * n + ev.node] += ev.count as u64;
        }
    }
    let mut per_link = vec![0u64; eng.graph.link_count()];
    for tx in &report.transmissions {
        let (i, j) = eng.graph.link(tx.link);
        let c = tx.commodity;
        per_link[tx.link] += tx.count as u64;
        expected[c * n + i] = expected[c * n + i].checked_sub(tx.count as u64).ok_or_else(|| Error::Invariant {
            slot: t,
            message: format!("link {i}->{j} moved more than queued"),
        })?;
        if j != c {
            expected[c * n + j] += tx.count as u64;
        }
    }
    let after = plane_backlog_by_commodity(plane);
    invariant(after == expected, t, || "queue recursion mismatch".to_string())?;

    for (e, &moved) in per_link.iter().enumerate() {
        invariant(moved <= realized[e] as u64, t, || format!("link {e} moved {moved} > rate {}", realized[e]))?;
    }
    let active: Vec<usize> = report.transmissions.iter().map(|tx| tx.link).chain(report.failed.iter().copied()).collect();
    for &a in &active {
        for &b in &active {
            invariant(a == b || !eng.conflicts.conflicts(a, b), t, || format!("links {a} and {b} conflict"))?;
        }
    }
    if let Plane::Fifo { field, policy, .. } = plane {
        invariant(policy.is_normalized(&eng.graph, 1e-9), t, || "policy not normalized".to_string())?;
        let floor = match eng.kind {
            PolicyKind::AntBaseline | PolicyKind::AntIdeal => eng.cfg.policy.aco_floor,
            _ => eng.cfg.policy.epsilon,
        };
        invariant(field.min_value() >= floor - 1e-12, t, || format!("pheromone below floor {floor}"))?;
    }
    Ok(())
}
