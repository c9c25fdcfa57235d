//! folionet: who holds alike, trades alike.
//!
//! This crate reconstructs a full analysis pipeline over shareholder
//! register snapshots:
//!
//! 1. [`ingest`] — parse two register snapshots plus price tables and clean
//!    them down to a comparable stock/investor universe;
//! 2. [`vectors`] — build per-investor portfolio proportion vectors and
//!    trading (net purchase) vectors priced at the first date;
//! 3. [`simnet`] — deduplicate identical portfolios into classes and build
//!    the reduced cosine-similarity network between classes;
//! 4. [`mapeq`] — cluster the network by minimizing the map equation
//!    (two-level and hierarchical), and project clusters back to investors;
//! 5. [`cohort`] — bootstrap tests of whether investor groups trade more
//!    alike inside than outside, plus per-group summary statistics;
//! 6. [`report`] — similarity-vs-trading curves, random-group similarity
//!    distributions, and group scatter tables;
//! 7. [`synth`] — a deterministic synthetic market generator with planted
//!    group structure, used to validate the pipeline end to end;
//! 8. [`pipeline`] — stage orchestration with persisted artifacts and a
//!    hashed manifest.
//!
//! Everything is deterministic for a fixed seed, including under Rayon
//! parallelism: parallel loops derive per-task seeds and reduce in a fixed
//! order, so rerunning at any thread count reproduces artifacts byte for
//! byte.

pub mod cohort;
pub mod config;
pub mod error;
pub mod ingest;
pub mod mapeq;
mod numeric;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod simnet;
pub mod synth;
pub mod vectors;

pub use error::{Error, Result};
