//! Synthetic tables and seeded mock predictors standing in for trained
//! recognizers.

mod bank;
mod predictor;
mod synth;

pub use bank::{default_bank, identity_bank, load_bank, parse_bank, PredictorSpec};
pub use predictor::{cell_faintness, mock_predict, PredictorParams};
pub use synth::{generate_dataset, generate_table, to_dataset, SynthParams, SyntheticTable};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A generator keyed by a tuple of identifiers, independent of call order.
pub(crate) fn keyed_rng(domain: &str, parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(domain.as_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}
