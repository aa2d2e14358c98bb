//! Counter-based random streams.
//!
//! Every replication draws from ChaCha8 streams keyed by the master seed and
//! `(replication, role)`, so results do not depend on which worker runs which
//! replication.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    /// Minor allele frequencies and true effects.
    Parameters = 0,
    /// Sample used for the variant-exposure associations.
    ExposureSample = 1,
    /// Sample used for the variant-outcome associations.
    OutcomeSample = 2,
    /// Seeds for the estimators' own randomness.
    Estimation = 3,
}

const ROLES: u64 = 4;

pub fn replication_rng(seed: u64, replication: u64, role: StreamRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication * ROLES + role as u64);
    rng
}
