//! Hash-based, order-invariant cardinality sketches and their differentially
//! private constructions.
//!
//! * [`hashing`]: seeded 64-bit hashing, the only source of randomness.
//! * [`sketch`] and [`sketches`]: HLL, Bottom-k, FM85 (PCSA), LPCA and
//!   adaptive sampling behind one state type with `add`, `merge`, `estimate`
//!   and the sampling probability `π(s)`.
//! * [`dp`]: downsampling, phantom-item initialization and merge-based
//!   privatization of existing sketches.
//! * [`bounds`]: closed-form `δ` for unmodified sketches.
//! * [`audit`]: Monte Carlo checks of the privacy and utility claims.
//! * [`bench`]: update-time and sketch-size experiments.
//! * [`format`]: the binary sketch file format.

pub mod audit;
pub mod bench;
pub mod bounds;
pub mod dp;
pub mod error;
pub mod format;
pub mod hashing;
pub mod sketch;
pub mod sketches;
pub mod stats;

pub use error::{Result, SketchError};
pub use hashing::{hash64, split_bucket_rank, to_unit_interval, HashRole, HashValue, ItemHasher, Seed};
pub use sketch::{build, Family, SketchConfig, SketchState};
