//! Channel-independent single-series samples, instance normalization and
//! non-overlapping patch tokens.

mod s3;
mod split;
mod store;
mod tokens;

pub use s3::{denormalize, to_s3, to_s3_with_context, NormStats, S3Sequence, STD_FLOOR};
pub use split::{build_splits, windowed_splits, SplitBounds, SplitSpec, Splits, WindowStrides};
pub use store::{read_cache, read_manifest, write_cache, write_manifest, ManifestEntry, CACHE_MAGIC, CACHE_VERSION};
pub use tokens::{detokenize, tokenize, TokenSequence, DEFAULT_PATCH};
