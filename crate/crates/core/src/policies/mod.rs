//! Routing schemes and their preparation steps.

pub mod aco;
pub mod spbp;

use serde::{Deserialize, Serialize};

use crate::rng::SimRng;
use crate::topology::{BiasField, ConflictGraph, LinkRateModel, NetworkGraph};
use crate::traffic::{virtualize_flows, FlowSpec, VirtualMode, VirtualRateRule};
use crate::virtualplane::{run_virtual_spbp, VirtualParams, VirtualRun};

pub use aco::{aco_bias_policy, aco_policy, aco_update, run_virtual_aco, AcoParams, Ant, AntColony, AntIdealParams, Deposit};
pub use spbp::SpBpPlane;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    AntBp,
    AntBpMirror,
    AntBpNovirt,
    SpBp,
    AntBaseline,
    AntIdeal,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::AntBp,
        PolicyKind::AntBpMirror,
        PolicyKind::AntBpNovirt,
        PolicyKind::SpBp,
        PolicyKind::AntBaseline,
        PolicyKind::AntIdeal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::AntBp => "ant-bp",
            PolicyKind::AntBpMirror => "ant-bp-mirror",
            PolicyKind::AntBpNovirt => "ant-bp-novirt",
            PolicyKind::SpBp => "sp-bp",
            PolicyKind::AntBaseline => "ant-baseline",
            PolicyKind::AntIdeal => "ant-ideal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Schemes that forward through per-neighbor FIFOs.
    pub fn uses_fifo_plane(&self) -> bool {
        !matches!(self, PolicyKind::SpBp)
    }

    pub fn is_ant_bp(&self) -> bool {
        matches!(self, PolicyKind::AntBp | PolicyKind::AntBpMirror | PolicyKind::AntBpNovirt)
    }

    pub fn virtual_mode(&self) -> VirtualMode {
        match self {
            PolicyKind::AntBpMirror => VirtualMode::Mirror,
            _ => VirtualMode::StreamingAll,
        }
    }
}

/// Runs the virtual SP-BP phase on the virtualized flows.
#[allow(clippy::too_many_arguments)]
pub fn antbp_prepare(
    g: &NetworkGraph,
    cg: &ConflictGraph,
    bias: &BiasField,
    flows: &[FlowSpec],
    mode: VirtualMode,
    virtual_loads: (f64, f64),
    rule: VirtualRateRule,
    params: &VirtualParams,
    rates: &LinkRateModel,
    rng: &mut SimRng,
    initial_backlogs: Option<&[u64]>,
) -> VirtualRun {
    let vflows = virtualize_flows(flows, mode, virtual_loads, rule);
    run_virtual_spbp(g, cg, bias, &vflows, params, rates, rng, initial_backlogs)
}
