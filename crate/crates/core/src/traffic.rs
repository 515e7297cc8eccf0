//! Flow sets and Poisson packet arrivals.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;
use crate::topology::NodeId;

pub const DEFAULT_BURST_LEN: usize = 30;
pub const BASE_RATE_RANGE: (f64, f64) = (0.2, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowKind {
    Streaming,
    Bursty,
}

impl FlowKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FlowKind::Streaming => "streaming",
            FlowKind::Bursty => "bursty",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub src: NodeId,
    /// Destination; also the commodity of every packet in the flow.
    pub dst: NodeId,
    pub kind: FlowKind,
    pub base_rate: f64,
    pub load: f64,
    /// First active slot of a bursty flow.
    pub burst_start: usize,
    pub burst_len: usize,
}

impl FlowSpec {
    pub fn streaming(src: NodeId, dst: NodeId, base_rate: f64, load: f64) -> Self {
        Self {
            src,
            dst,
            kind: FlowKind::Streaming,
            base_rate,
            load,
            burst_start: 0,
            burst_len: 0,
        }
    }

    pub fn bursty(
        src: NodeId,
        dst: NodeId,
        base_rate: f64,
        load: f64,
        burst_start: usize,
        burst_len: usize,
    ) -> Self {
        Self {
            src,
            dst,
            kind: FlowKind::Bursty,
            base_rate,
            load,
            burst_start,
            burst_len,
        }
    }

    /// Mean arrivals per active slot.
    pub fn rate(&self) -> f64 {
        self.load * self.base_rate
    }

    pub fn is_active(&self, t: usize) -> bool {
        match self.kind {
            FlowKind::Streaming => true,
            FlowKind::Bursty => t >= self.burst_start && t < self.burst_start + self.burst_len,
        }
    }

    /// Number of active slots within `[0, horizon)`.
    pub fn active_slots(&self, horizon: usize) -> usize {
        match self.kind {
            FlowKind::Streaming => horizon,
            FlowKind::Bursty => (self.burst_start + self.burst_len)
                .min(horizon)
                .saturating_sub(self.burst_start),
        }
    }
}

/// One slot's exogenous arrivals of a commodity at a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArrivalEvent {
    pub slot: usize,
    pub node: NodeId,
    pub commodity: NodeId,
    pub count: u32,
    /// Index of the generating flow.
    pub flow: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSampling {
    pub p_bursty: f64,
    pub streaming_load: f64,
    pub bursty_load: f64,
    pub horizon: usize,
    pub burst_len: usize,
    /// Bursts start uniformly in `[0, horizon - burst_start_margin]`.
    pub burst_start_margin: usize,
}

impl Default for FlowSampling {
    fn default() -> Self {
        Self {
            p_bursty: 0.5,
            streaming_load: 1.0,
            bursty_load: 1.0,
            horizon: 1000,
            burst_len: DEFAULT_BURST_LEN,
            burst_start_margin: 100,
        }
    }
}

/// Inclusive bounds on the number of flows for an `n`-node network.
pub fn flow_count_bounds(n: usize) -> (usize, usize) {
    let lo = (0.15 * n as f64).floor() as usize;
    let hi = (0.30 * n as f64).ceil() as usize;
    (lo.max(1), hi.max(1))
}

/// Draws a random flow set with distinct `(src, dst)` pairs.
pub fn sample_flows(n_nodes: usize, params: &FlowSampling, rng: &mut SimRng) -> Vec<FlowSpec> {
    assert!(n_nodes >= 2, "flows need at least two nodes");
    let (lo, hi) = flow_count_bounds(n_nodes);
    let max_pairs = n_nodes * (n_nodes - 1);
    let count = rng.gen_range(lo..=hi).min(max_pairs);
    let mut used = BTreeSet::new();
    let mut flows = Vec::with_capacity(count);
    while flows.len() < count {
        let src = rng.gen_range(0..n_nodes);
        let dst = rng.gen_range(0..n_nodes);
        if src == dst || !used.insert((src, dst)) {
            continue;
        }
        let base_rate = rng.gen_range(BASE_RATE_RANGE.0..=BASE_RATE_RANGE.1);
        let bursty = rng.gen_bool(params.p_bursty.clamp(0.0, 1.0));
        let latest_start = params.horizon.saturating_sub(params.burst_start_margin);
        let burst_start = rng.gen_range(0..=latest_start);
        flows.push(if bursty {
            FlowSpec::bursty(src, dst, base_rate, params.bursty_load, burst_start, params.burst_len)
        } else {
            FlowSpec::streaming(src, dst, base_rate, params.streaming_load)
        });
    }
    flows
}

/// Poisson arrival count of flow `f` in slot `t`.
pub fn arrivals_at(f: &FlowSpec, t: usize, rng: &mut SimRng) -> u32 {
    let rate = f.rate();
    if !f.is_active(t) || !(rate > 0.0) {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng) as u32
}

/// All arrivals of one slot, in flow order.
pub fn slot_arrivals(flows: &[FlowSpec], t: usize, rng: &mut SimRng) -> Vec<ArrivalEvent> {
    let mut out = Vec::new();
    for (idx, f) in flows.iter().enumerate() {
        let count = arrivals_at(f, t, rng);
        if count > 0 {
            out.push(ArrivalEvent {
                slot: t,
                node: f.src,
                commodity: f.dst,
                count,
                flow: idx,
            });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VirtualMode {
    /// Every flow becomes a persistent stream.
    StreamingAll,
    /// Kinds preserved; bursts start at the first virtual step.
    Mirror,
}

/// How streaming-all virtualization picks each flow's rate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VirtualRateRule {
    /// `L_s` times the flow's own base rate.
    #[default]
    PerFlow,
    /// `L_s` times the mean base rate of all flows.
    Common,
}

/// Maps physical flows to virtual-plane flows under loads `(L_s, L_b)`.
pub fn virtualize_flows(
    flows: &[FlowSpec],
    mode: VirtualMode,
    virtual_loads: (f64, f64),
    rule: VirtualRateRule,
) -> Vec<FlowSpec> {
    let (ls, lb) = virtual_loads;
    let mean_base = if flows.is_empty() {
        0.0
    } else {
        flows.iter().map(|f| f.base_rate).sum::<f64>() / flows.len() as f64
    };
    flows
        .iter()
        .map(|f| match mode {
            VirtualMode::StreamingAll => {
                let base = match rule {
                    VirtualRateRule::PerFlow => f.base_rate,
                    VirtualRateRule::Common => mean_base,
                };
                FlowSpec::streaming(f.src, f.dst, base, ls)
            }
            VirtualMode::Mirror => match f.kind {
                FlowKind::Streaming => FlowSpec::streaming(f.src, f.dst, f.base_rate, ls),
                FlowKind::Bursty => FlowSpec::bursty(f.src, f.dst, f.base_rate, lb, 0, f.burst_len),
            },
        })
        .collect()
}
