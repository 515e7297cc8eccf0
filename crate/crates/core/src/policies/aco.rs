//! Ant colony baselines: classic and bias-augmented policies, pheromone
//! updates, the virtual ant phase and proactive ants.

use std::collections::BTreeSet;

use rand::Rng;

use crate::dataplane::{FifoPlane, ForwardingPolicy};
use crate::error::Result;
use crate::rng::SimRng;
use crate::topology::{BiasField, ConflictGraph, LinkRateModel, NetworkGraph, NodeId};
use crate::traffic::{slot_arrivals, ArrivalEvent, FlowKind, FlowSpec};
use crate::virtualplane::PheromoneField;

/// `p_ij^(c) ∝ rho^alpha * h^beta`, with `heuristic` indexed by link.
pub fn aco_policy(field: &PheromoneField, g: &NetworkGraph, alpha: f64, beta: f64, heuristic: &[f64]) -> Result<ForwardingPolicy> {
    let l = g.link_count();
    let weights: Vec<f64> = field
        .values()
        .iter()
        .enumerate()
        .map(|(k, &rho)| {
            let h = heuristic[k % l];
            let hb = if beta == 0.0 { 1.0 } else { h.powf(beta) };
            let ra = if alpha == 1.0 { rho } else { rho.powf(alpha) };
            ra * hb
        })
        .collect();
    ForwardingPolicy::from_weights(g, &weights)
}

/// `p_ij^(c) ∝ max(rho_ij^(c) + B_i^(c) - B_j^(c), floor)`.
pub fn aco_bias_policy(field: &PheromoneField, g: &NetworkGraph, bias: &BiasField, floor: f64) -> Result<ForwardingPolicy> {
    let l = g.link_count();
    let weights: Vec<f64> = field
        .values()
        .iter()
        .enumerate()
        .map(|(k, &rho)| {
            let (c, e) = (k / l, k % l);
            let (i, j) = g.link(e);
            (rho + bias.diff(i, j, c)).max(floor)
        })
        .collect();
    ForwardingPolicy::from_weights(g, &weights)
}

/// Pheromone left by one ant on the distinct links of its path.
#[derive(Clone, Debug, PartialEq)]
pub struct Deposit {
    pub commodity: NodeId,
    pub path: Vec<(NodeId, NodeId)>,
    pub amount: f64,
}

/// `rho <- (1 - evaporation) rho + sum theta`, floored at the field's epsilon.
pub fn aco_update(field: &mut PheromoneField, g: &NetworkGraph, deposits: &[Deposit], evaporation: f64) {
    if evaporation > 0.0 {
        let eps = field.epsilon;
        for v in field.values_mut() {
            *v = (*v * (1.0 - evaporation)).max(eps);
        }
    }
    for d in deposits {
        let distinct: BTreeSet<_> = d.path.iter().copied().collect();
        for (i, j) in distinct {
            if let Some(e) = g.link_id(i, j) {
                let v = field.get(e, d.commodity) + d.amount;
                field.set(e, d.commodity, v);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcoParams {
    pub init: f64,
    pub evaporation: f64,
    pub deposit: f64,
    pub floor: f64,
    pub steps: usize,
}

impl Default for AcoParams {
    fn default() -> Self {
        Self {
            init: 1.3,
            evaporation: 0.002,
            deposit: 0.01,
            floor: 0.01,
            steps: 1000,
        }
    }
}

/// Virtual ant phase: virtual packets are ants routed by the bias-augmented
/// policy through per-neighbor FIFOs and LGS; each delivered ant deposits on
/// its path and the policy is refreshed every step.
#[allow(clippy::too_many_arguments)]
pub fn run_virtual_aco(
    g: &NetworkGraph,
    cg: &ConflictGraph,
    bias: &BiasField,
    flows: &[FlowSpec],
    params: &AcoParams,
    rates: &LinkRateModel,
    rng: &mut SimRng,
    start: Option<PheromoneField>,
    initial_backlogs: Option<&[u64]>,
) -> Result<PheromoneField> {
    let n = g.node_count();
    let mut field = start.unwrap_or_else(|| PheromoneField::constant(g, params.init, params.floor));
    let mut plane = FifoPlane::new(g.clone(), cg.clone()).track_paths();
    let mut kinds: Vec<FlowKind> = flows.iter().map(|f| f.kind).collect();
    kinds.push(FlowKind::Streaming);
    let seed_flow = flows.len();
    let mut realized = Vec::new();
    for tau in 0..params.steps {
        let mut events = slot_arrivals(flows, tau, rng);
        if tau == 0 {
            if let Some(init) = initial_backlogs {
                for c in 0..n {
                    for i in 0..n {
                        let count = init[c * n + i];
                        if count > 0 && i != c {
                            events.push(ArrivalEvent { slot: 0, node: i, commodity: c, count: count as u32, flow: seed_flow });
                        }
                    }
                }
            }
        }
        let policy = aco_bias_policy(&field, g, bias, params.floor)?;
        rates.sample_realized_into(rng, &mut realized);
        plane.step(&policy, bias, &realized, None, &events, &kinds, rng, tau)?;
        let deposits: Vec<Deposit> = plane
            .take_deliveries()
            .into_iter()
            .map(|id| Deposit {
                commodity: plane.packets.get(id).commodity,
                path: plane.path(id).to_vec(),
                amount: params.deposit,
            })
            .collect();
        aco_update(&mut field, g, &deposits, params.evaporation);
    }
    Ok(field)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AntIdealParams {
    /// Data packets per source between proactive ants.
    pub interval: u64,
    pub exploration: f64,
    pub evaporation: f64,
    /// Ants are dropped after `hop_cap_factor * |V|` hops.
    pub hop_cap_factor: usize,
    pub floor: f64,
}

impl Default for AntIdealParams {
    fn default() -> Self {
        Self {
            interval: 100,
            exploration: 0.1,
            evaporation: 0.002,
            hop_cap_factor: 4,
            floor: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ant {
    pub commodity: NodeId,
    pub node: NodeId,
    pub born: usize,
    pub path: Vec<(NodeId, NodeId)>,
}

/// Capacity-free proactive ants. Each moves one hop per slot.
#[derive(Clone, Debug, Default)]
pub struct AntColony {
    pub ants: Vec<Ant>,
    /// Ants emitted per flow so far.
    emitted: Vec<u64>,
    pub arrived: u64,
    pub discarded: u64,
    pub hops: u64,
}

impl AntColony {
    pub fn new(flow_count: usize) -> Self {
        Self {
            emitted: vec![0; flow_count],
            ..Default::default()
        }
    }

    pub fn emitted(&self) -> u64 {
        self.emitted.iter().sum()
    }

    /// Emits one ant per `interval` packets injected by each flow so far.
    pub fn emit(&mut self, flows: &[FlowSpec], injected_per_flow: &[u64], interval: u64, t: usize) {
        for (k, f) in flows.iter().enumerate() {
            let due = injected_per_flow[k] / interval.max(1);
            while self.emitted[k] < due {
                self.emitted[k] += 1;
                self.ants.push(Ant { commodity: f.dst, node: f.src, born: t, path: Vec::new() });
            }
        }
    }

    /// Moves every ant one hop and returns the deposits of those that arrived.
    pub fn advance(&mut self, g: &NetworkGraph, policy: &ForwardingPolicy, params: &AntIdealParams, rng: &mut SimRng, t: usize) -> Result<Vec<Deposit>> {
        let cap = params.hop_cap_factor * g.node_count();
        let mut deposits = Vec::new();
        let mut keep = Vec::with_capacity(self.ants.len());
        for mut ant in std::mem::take(&mut self.ants) {
            let deg = g.degree(ant.node);
            if deg == 0 {
                self.discarded += 1;
                continue;
            }
            let e = if rng.gen_bool(params.exploration) {
                g.out_links(ant.node).start + rng.gen_range(0..deg)
            } else {
                policy.sample_next(g, ant.node, ant.commodity, rng)?
            };
            let (i, j) = g.link(e);
            ant.path.push((i, j));
            ant.node = j;
            self.hops += 1;
            if j == ant.commodity {
                self.arrived += 1;
                let latency = (t + 1 - ant.born) as f64;
                deposits.push(Deposit { commodity: ant.commodity, path: ant.path, amount: 1.0 / latency });
            } else if ant.path.len() >= cap {
                self.discarded += 1;
            } else {
                keep.push(ant);
            }
        }
        self.ants = keep;
        Ok(deposits)
    }
}
