//! Named random substreams derived from a master seed.
//!
//! Every named stream is a ChaCha8 generator keyed by
//! `SHA-256(master_seed as 8 little-endian bytes || stream name as UTF-8)`.
//! Sequential streams (network, population) use ChaCha stream id 0. Per-agent
//! streams (attempts, outcomes, substitution, withdrawals) use the agent index
//! as the ChaCha stream id, so each customer owns an independent sequence and
//! results do not depend on the order in which customers are processed.
//!
//! Per-step draw protocol, one customer, in this order:
//!
//! * `attempts`: two `f64` draws, attempt then merchant choice. Always drawn.
//! * `outcomes`: one `f64` draw. Always drawn.
//! * `substitution`: one `f64` draw, only when substitution is enabled, the
//!   customer is an adopter and the card outcome was adverse.
//! * `withdrawals`: one `f64` draw. Always drawn.
//!
//! `f64` draws are `rand`'s standard `[0, 1)` sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const NETWORK: &str = "network";
pub const POPULATION: &str = "population";
pub const ATTEMPTS: &str = "attempts";
pub const OUTCOMES: &str = "outcomes";
pub const SUBSTITUTION: &str = "substitution";
pub const WITHDRAWALS: &str = "withdrawals";

/// ChaCha key for stream `name` under `master_seed`.
pub fn stream_key(master_seed: u64, name: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(name.as_bytes());
    hasher.finalize().into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStreams {
    master_seed: u64,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Sequential stream (ChaCha stream id 0).
    pub fn stream(&self, name: &str) -> ChaCha8Rng {
        self.agent_stream(name, 0)
    }

    /// Stream `name` for agent `index`.
    pub fn agent_stream(&self, name: &str, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(stream_key(self.master_seed, name));
        rng.set_stream(index);
        rng
    }

    pub fn customer_streams(&self, index: usize) -> CustomerStreams {
        let index = index as u64;
        CustomerStreams {
            attempts: self.agent_stream(ATTEMPTS, index),
            outcomes: self.agent_stream(OUTCOMES, index),
            substitution: self.agent_stream(SUBSTITUTION, index),
            withdrawals: self.agent_stream(WITHDRAWALS, index),
        }
    }
}

/// The per-customer generators used inside the step loop.
#[derive(Clone, Debug)]
pub struct CustomerStreams {
    pub attempts: ChaCha8Rng,
    pub outcomes: ChaCha8Rng,
    pub substitution: ChaCha8Rng,
    pub withdrawals: ChaCha8Rng,
}
