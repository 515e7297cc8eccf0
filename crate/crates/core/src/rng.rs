//! Labeled random streams.
//!
//! Every source of randomness in a run draws from its own stream, derived
//! from the master seed and a label. Changing the routing scheme therefore
//! never perturbs the topology, flows, arrivals, link rates, failures or
//! mobility that the scheme is evaluated on.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

pub const TOPOLOGY: &str = "topology";
pub const LINK_RATES: &str = "link-rates";
pub const FLOWS: &str = "flows";
pub const ARRIVALS: &str = "arrivals";
pub const REALIZED_RATES: &str = "realized-rates";
pub const FORWARDING: &str = "forwarding";
pub const FAILURES: &str = "failures";
pub const MOBILITY: &str = "mobility";
pub const VIRTUAL: &str = "virtual";
pub const ANTS: &str = "ants";

/// Stable 64-bit seed for `(master, label, index)`; identical on every platform.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(master: u64, label: &str, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, label, index))
}

pub fn from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
