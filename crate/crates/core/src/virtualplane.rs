//! Count-only virtual SP-BP and the pheromone field it produces.
//!
//! Virtual queues hold per-(node, commodity) packet counts and no payload.
//! Each step: inject Poisson arrivals, pick the max-pressure commodity per
//! link, weigh links, schedule with LGS, move counts. The net number of
//! crossings per link and commodity becomes the pheromone intensity.

use crate::dataplane::{ForwardingPolicy, Transmission};
use crate::error::Result;
use crate::rng::SimRng;
use crate::scheduling::{lgs_schedule, Schedule};
use crate::topology::{BiasField, ConflictGraph, LinkId, LinkRateModel, NetworkGraph, NodeId};
use crate::traffic::{arrivals_at, FlowSpec};

pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_VIRTUAL_STEPS: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct VirtualPlaneState {
    n: usize,
    n_links: usize,
    /// Commodities tracked by this run, ascending.
    pub commodities: Vec<NodeId>,
    /// `vq[c * n + i]`.
    vq: Vec<u64>,
    /// `crossings[c * n_links + e]`.
    crossings: Vec<f64>,
    pub step: usize,
    pub injected: u64,
    pub consumed: u64,
}

impl VirtualPlaneState {
    pub fn new(g: &NetworkGraph, mut commodities: Vec<NodeId>) -> Self {
        commodities.sort_unstable();
        commodities.dedup();
        let n = g.node_count();
        Self {
            n,
            n_links: g.link_count(),
            commodities,
            vq: vec![0; n * n],
            crossings: vec![0.0; n * g.link_count()],
            step: 0,
            injected: 0,
            consumed: 0,
        }
    }

    pub fn queue(&self, i: NodeId, c: NodeId) -> u64 {
        self.vq[c * self.n + i]
    }

    pub fn set_queue(&mut self, i: NodeId, c: NodeId, value: u64) {
        if i != c {
            self.vq[c * self.n + i] = value;
        }
    }

    pub fn crossings(&self, e: LinkId, c: NodeId) -> f64 {
        self.crossings[c * self.n_links + e]
    }

    pub fn add_arrivals(&mut self, i: NodeId, c: NodeId, count: u64) {
        self.injected += count;
        if i == c {
            self.consumed += count;
        } else {
            self.vq[c * self.n + i] += count;
        }
    }

    /// Sum of all virtual queues.
    pub fn total(&self) -> u64 {
        self.vq.iter().sum()
    }
}

/// Argmax over tracked commodities of the biased pressure
/// `(Q_i + B_i) - (Q_j + B_j)` on link `e`; ties go to the smaller commodity.
/// Returns the commodity and its pressure.
pub fn select_commodity(
    state: &VirtualPlaneState,
    bias: &BiasField,
    g: &NetworkGraph,
    e: LinkId,
) -> Option<(NodeId, f64)> {
    let (i, j) = g.link(e);
    let mut best: Option<(NodeId, f64)> = None;
    for &c in &state.commodities {
        let pressure = state.queue(i, c) as f64 - state.queue(j, c) as f64 + bias.diff(i, j, c);
        if best.is_none_or(|(_, p)| pressure > p) {
            best = Some((c, pressure));
        }
    }
    best
}

/// Per-link commodity choice and weight `w = max(pressure, 0) * 1[Q_i^(c*) > 0]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selection {
    pub commodity: NodeId,
    pub weight: f64,
}

/// Link utilities `r_ij * w_ij` along with each link's selection.
pub fn virtual_utilities(
    state: &VirtualPlaneState,
    bias: &BiasField,
    g: &NetworkGraph,
    realized: &[u32],
) -> (Vec<f64>, Vec<Option<Selection>>) {
    let mut utility = vec![0.0; g.link_count()];
    let mut selections = vec![None; g.link_count()];
    for e in 0..g.link_count() {
        if let Some((c, pressure)) = select_commodity(state, bias, g, e) {
            let (i, _) = g.link(e);
            let weight = if state.queue(i, c) > 0 { pressure.max(0.0) } else { 0.0 };
            utility[e] = realized[e] as f64 * weight;
            selections[e] = Some(Selection { commodity: c, weight });
        }
    }
    (utility, selections)
}

/// Moves `min(Q_i^(c*), r_ij)` counts over every scheduled positive-weight
/// link and updates the crossing counters with evaporation `evaporation`.
pub fn virtual_transmit(
    state: &mut VirtualPlaneState,
    g: &NetworkGraph,
    schedule: &Schedule,
    realized: &[u32],
    selections: &[Option<Selection>],
    evaporation: f64,
) -> Vec<Transmission> {
    let n = state.n;
    let n_links = state.n_links;
    if evaporation > 0.0 {
        for &c in &state.commodities {
            for x in &mut state.crossings[c * n_links..(c + 1) * n_links] {
                *x *= 1.0 - evaporation;
            }
        }
    }
    let mut moves = Vec::new();
    for e in schedule.active_links() {
        let Some(sel) = selections[e] else { continue };
        if sel.weight <= 0.0 {
            continue;
        }
        let (i, j) = g.link(e);
        let c = sel.commodity;
        let mu = state.vq[c * n + i].min(realized[e] as u64);
        if mu == 0 {
            continue;
        }
        state.vq[c * n + i] -= mu;
        if j == c {
            state.consumed += mu;
        } else {
            state.vq[c * n + j] += mu;
        }
        state.crossings[c * n_links + e] += mu as f64;
        moves.push(Transmission {
            link: e,
            commodity: c,
            count: mu as u32,
        });
    }
    moves
}

/// Pheromone intensities `rho_ij^(c)`, floored at `epsilon`.
#[derive(Clone, Debug, PartialEq)]
pub struct PheromoneField {
    n_links: usize,
    /// `rho[c * n_links + e]`.
    rho: Vec<f64>,
    pub epsilon: f64,
}

impl PheromoneField {
    pub fn constant(g: &NetworkGraph, value: f64, epsilon: f64) -> Self {
        Self {
            n_links: g.link_count(),
            rho: vec![value; g.node_count() * g.link_count()],
            epsilon,
        }
    }

    pub fn link_count(&self) -> usize {
        self.n_links
    }

    pub fn get(&self, e: LinkId, c: NodeId) -> f64 {
        self.rho[c * self.n_links + e]
    }

    pub fn set(&mut self, e: LinkId, c: NodeId, value: f64) {
        self.rho[c * self.n_links + e] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.rho
    }

    pub fn commodity_count(&self) -> usize {
        self.rho.len().checked_div(self.n_links).unwrap_or(0)
    }

    /// Multiplies every commodity's intensity on `e` by `factor`, floored at epsilon.
    pub fn decay_link(&mut self, e: LinkId, factor: f64) {
        let eps = self.epsilon;
        for c in 0..self.commodity_count() {
            let v = &mut self.rho[c * self.n_links + e];
            *v = (*v * factor).max(eps);
        }
    }

    pub fn min_value(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Carries the field over to a new topology. Surviving links keep their
    /// intensity; new links get `init` for each (node, commodity).
    pub fn remap(&self, old: &NetworkGraph, new: &NetworkGraph, init: NewLinkInit) -> Self {
        let n = new.node_count();
        let mut out = Self {
            n_links: new.link_count(),
            rho: vec![self.epsilon; n * new.link_count()],
            epsilon: self.epsilon,
        };
        for c in 0..n {
            for i in 0..n {
                let mut sum = 0.0;
                let mut kept = 0usize;
                let mut fresh = Vec::new();
                for e in new.out_links(i) {
                    let (_, j) = new.link(e);
                    match old.link_id(i, j) {
                        Some(old_e) => {
                            let v = self.get(old_e, c);
                            out.set(e, c, v);
                            sum += v;
                            kept += 1;
                        }
                        None => fresh.push(e),
                    }
                }
                let value = match init {
                    NewLinkInit::Epsilon => self.epsilon,
                    NewLinkInit::MeanOfNode if kept > 0 => sum / kept as f64,
                    NewLinkInit::MeanOfNode => self.epsilon,
                };
                for e in fresh {
                    out.set(e, c, value);
                }
            }
        }
        out
    }
}

/// Intensity given to links that appear after a topology change.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NewLinkInit {
    Epsilon,
    /// Mean over the node's surviving out-links for the same commodity.
    MeanOfNode,
}

/// `rho_ij^(c) = max(n_ij^(c) - n_ji^(c), 0) + epsilon`.
pub fn pheromone_from_counts(state: &VirtualPlaneState, g: &NetworkGraph, epsilon: f64) -> PheromoneField {
    let mut field = PheromoneField::constant(g, epsilon, epsilon);
    for &c in &state.commodities {
        for e in 0..g.link_count() {
            let net = state.crossings(e, c) - state.crossings(g.reverse(e), c);
            field.set(e, c, net.max(0.0) + epsilon);
        }
    }
    field
}

/// `p_ij^(c) = rho_ij^(c) / sum_l rho_il^(c)`.
pub fn policy_from_pheromone(field: &PheromoneField, g: &NetworkGraph) -> Result<ForwardingPolicy> {
    ForwardingPolicy::from_weights(g, field.values())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VirtualParams {
    pub steps: usize,
    pub epsilon: f64,
    pub evaporation: f64,
}

impl Default for VirtualParams {
    fn default() -> Self {
        Self {
            steps: DEFAULT_VIRTUAL_STEPS,
            epsilon: DEFAULT_EPSILON,
            evaporation: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VirtualRun {
    pub field: PheromoneField,
    pub state: VirtualPlaneState,
    /// (link, commodity) count exchanges, summed over steps.
    pub exchanges: u64,
}

/// Runs `params.steps` steps of virtual SP-BP and returns the pheromone field.
///
/// `initial_backlogs`, indexed `[c * n + i]`, seeds the virtual queues; its
/// nonzero commodities are tracked even without a flow.
#[allow(clippy::too_many_arguments)]
pub fn run_virtual_spbp(
    g: &NetworkGraph,
    cg: &ConflictGraph,
    bias: &BiasField,
    flows: &[FlowSpec],
    params: &VirtualParams,
    rates: &LinkRateModel,
    rng: &mut SimRng,
    initial_backlogs: Option<&[u64]>,
) -> VirtualRun {
    let n = g.node_count();
    let mut commodities: Vec<NodeId> = flows.iter().map(|f| f.dst).collect();
    if let Some(init) = initial_backlogs {
        for c in 0..n {
            if (0..n).any(|i| i != c && init[c * n + i] > 0) {
                commodities.push(c);
            }
        }
    }
    let mut state = VirtualPlaneState::new(g, commodities);
    if let Some(init) = initial_backlogs {
        for c in 0..n {
            for i in 0..n {
                let v = init[c * n + i];
                if v > 0 && i != c {
                    state.add_arrivals(i, c, v);
                }
            }
        }
    }
    let mut realized = Vec::with_capacity(g.link_count());
    let mut exchanges = 0u64;
    for tau in 0..params.steps {
        for f in flows {
            let a = arrivals_at(f, tau, rng);
            if a > 0 {
                state.add_arrivals(f.src, f.dst, a as u64);
            }
        }
        rates.sample_realized_into(rng, &mut realized);
        let (utility, selections) = virtual_utilities(&state, bias, g, &realized);
        let schedule = lgs_schedule(cg, &utility);
        virtual_transmit(&mut state, g, &schedule, &realized, &selections, params.evaporation);
        exchanges += (g.link_count() * state.commodities.len()) as u64;
        state.step = tau + 1;
    }
    let field = pheromone_from_counts(&state, g, params.epsilon);
    VirtualRun {
        field,
        state,
        exchanges,
    }
}
