//! Per-run metrics.

use serde::Serialize;

use crate::dataplane::Packet;
use crate::harness::config::LatencyMode;
use crate::traffic::FlowKind;

/// Bin width for latency-versus-time curves.
pub const BIN_WIDTH: usize = 50;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunMetrics {
    pub injected: u64,
    pub delivered: u64,
    pub delivery_ratio: Option<f64>,
    pub delivery_streaming: Option<f64>,
    pub delivery_bursty: Option<f64>,
    pub latency: Option<f64>,
    pub latency_streaming: Option<f64>,
    pub latency_bursty: Option<f64>,
    /// Delivered packets per slot.
    pub goodput: f64,
    pub mean_backlog: f64,
    pub final_backlog: u64,
    pub mean_cost: f64,
    /// Largest relative flow-conservation residual; `None` when the run
    /// fails the stability precondition.
    pub flow_residual: Option<f64>,
    pub stable: bool,
    pub virtual_exchanges: u64,
    pub ants_emitted: u64,
}

/// End-to-end latency of one packet under `mode`.
pub fn packet_latency(p: &Packet, horizon: usize, mode: LatencyMode) -> f64 {
    match (p.latency(), mode) {
        (Some(l), _) => l as f64,
        (None, LatencyMode::CapAtHorizon) => horizon as f64,
        (None, LatencyMode::Residency) => horizon.saturating_sub(p.injected_at) as f64,
    }
}

#[derive(Default)]
struct Acc {
    n: u64,
    delivered: u64,
    latency: f64,
}

impl Acc {
    fn ratio(&self) -> Option<f64> {
        (self.n > 0).then(|| self.delivered as f64 / self.n as f64)
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.latency / self.n as f64)
    }
}

/// Delivery ratios and mean latencies overall and per class.
pub fn packet_metrics(packets: &[Packet], horizon: usize, mode: LatencyMode, m: &mut RunMetrics) {
    let mut all = Acc::default();
    let mut streaming = Acc::default();
    let mut bursty = Acc::default();
    for p in packets {
        let l = packet_latency(p, horizon, mode);
        let d = p.delivered_at.is_some() as u64;
        for acc in [&mut all, if p.kind == FlowKind::Streaming { &mut streaming } else { &mut bursty }] {
            acc.n += 1;
            acc.delivered += d;
            acc.latency += l;
        }
    }
    m.injected = all.n;
    m.delivered = all.delivered;
    m.delivery_ratio = all.ratio();
    m.delivery_streaming = streaming.ratio();
    m.delivery_bursty = bursty.ratio();
    m.latency = all.mean();
    m.latency_streaming = streaming.mean();
    m.latency_bursty = bursty.mean();
    m.goodput = all.delivered as f64 / horizon as f64;
}

/// Mean backlog over the last quarter stays within 1.5x the second quarter.
pub fn is_stable(backlog: &[u64]) -> bool {
    let q = backlog.len() / 4;
    if q == 0 {
        return true;
    }
    let mean = |s: &[u64]| s.iter().sum::<u64>() as f64 / s.len() as f64;
    let second = mean(&backlog[q..2 * q]);
    let last = mean(&backlog[backlog.len() - q..]);
    // A near-empty network is stable regardless of the ratio.
    last <= 1.5 * second || last <= 1.0
}

/// Node-level flow balance for the incidence check `A f = d`.
#[derive(Clone, Debug)]
pub struct FlowBalance {
    n: usize,
    /// Net outgoing transmissions, `[c * n + i]`.
    net_out: Vec<i64>,
    /// Exogenous arrivals, `[c * n + i]`.
    arrivals: Vec<u64>,
}

impl FlowBalance {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            net_out: vec![0; n * n],
            arrivals: vec![0; n * n],
        }
    }

    pub fn transmit(&mut self, i: usize, j: usize, c: usize, count: u64) {
        self.net_out[c * self.n + i] += count as i64;
        self.net_out[c * self.n + j] -= count as i64;
    }

    pub fn arrive(&mut self, i: usize, c: usize, count: u64) {
        self.arrivals[c * self.n + i] += count;
    }

    /// Largest `|f_out - f_in - d_i|` over nodes, relative to the
    /// commodity's total arrival rate. The destination's demand is minus
    /// the total. Arrival rates are the run's empirical means.
    pub fn max_relative_residual(&self, horizon: usize) -> f64 {
        let n = self.n;
        let t = horizon as f64;
        let mut worst = 0.0f64;
        for c in 0..n {
            let total: u64 = (0..n).filter(|&i| i != c).map(|i| self.arrivals[c * n + i]).sum();
            if total == 0 {
                continue;
            }
            let lambda = total as f64 / t;
            for i in 0..n {
                let d = if i == c { -lambda } else { self.arrivals[c * n + i] as f64 / t };
                let f = self.net_out[c * n + i] as f64 / t;
                worst = worst.max((f - d).abs() / lambda);
            }
        }
        worst
    }
}

/// Midpoint of the bin containing slot `t`.
pub fn bin_mid(t: usize, width: usize) -> f64 {
    (t / width * width) as f64 + width as f64 / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LatencyBin {
    pub mid: f64,
    pub count: u64,
    pub mean_latency: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinBy {
    Arrival,
    Delivery,
}

/// Mean latency of delivered packets binned by injection or delivery slot.
pub fn latency_bins(packets: &[Packet], width: usize, by: BinBy) -> Vec<LatencyBin> {
    let mut sums: std::collections::BTreeMap<usize, (u64, u64)> = Default::default();
    for p in packets {
        let (Some(d), Some(l)) = (p.delivered_at, p.latency()) else { continue };
        let key = match by {
            BinBy::Arrival => p.injected_at,
            BinBy::Delivery => d,
        } / width;
        let e = sums.entry(key).or_default();
        e.0 += 1;
        e.1 += l as u64;
    }
    sums.into_iter()
        .map(|(k, (count, total))| LatencyBin {
            mid: bin_mid(k * width, width),
            count,
            mean_latency: total as f64 / count as f64,
        })
        .collect()
}
