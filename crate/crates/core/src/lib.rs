//! Simulation of temporal deanonymization attacks on anonymity networks
//! under AS-level routing.

pub mod anonnet;
pub mod attacks;
pub mod metrics;
pub mod mobility;
pub mod netlayer;
pub mod synth;
pub mod topology;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent, reproducible stream for one trial of a seeded experiment.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}
