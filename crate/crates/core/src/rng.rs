//! Named deterministic random streams.
//!
//! Every consumer of randomness owns a stream identified by a
//! `(vehicle, purpose)` pair derived from the run seed. Streams never share
//! state, so adding draws to one mechanism leaves every other stream's
//! sequence untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    Fading = 0,
    Backoff = 1,
    Phase = 2,
    Scenario = 3,
}

pub type StreamRng = ChaCha8Rng;

/// Stream for `purpose` owned by `owner` (a vehicle id, or 0 for global
/// streams such as scenario generation).
pub fn stream(seed: u64, owner: u32, purpose: StreamPurpose) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((owner as u64) << 8) | purpose as u64);
    rng
}
