//! Test support shared by the texture crates: the six-document fixture,
//! seeded random corpora, and full-scan reference implementations.

pub mod corpus;
pub mod fixture;
pub mod oracle;

pub use corpus::{random_corpus, random_selection, Corpus, CorpusConfig};
pub use fixture::{fixture6, fixture6_records, fixture6_schema, fixture6_with_embeddings};
pub use oracle::Oracle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded generator used by every randomized suite.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
