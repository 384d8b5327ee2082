//! Synthetic data standing in for frozen text-encoder outputs, and the
//! precomputed embedding cache they are served from.

mod cache;
mod synth;

pub use cache::{read_cache, write_cache, CacheReader, EmbeddingCache, CACHE_MAGIC, CACHE_VERSION};
pub use synth::{
    generate, oracle_auc_bound, read_jsonl, row_of, rows_of, Dataset, SampleRecord, Split,
    SyntheticSpec, CACHE_FILE, SPEC_FILE,
};
