//! Turn annotated cooking-video detection streams into executable
//! collaborative manipulation plans.
//!
//! The crate is organised as a pipeline of small, independently testable
//! stages:
//!
//! 1. [`ingest`] — parse and validate detection streams and object lexica.
//! 2. [`segment`] — temporally segment hand trajectories with a
//!    covariance-regularised greedy splitter, then merge per-hand boundaries
//!    into a single timeline.
//! 3. [`associate`] — decide, per segment, which object each hand operates
//!    and which objects act on which others (overlap- and distance-based).
//! 4. [`recognize`] — naive-Bayes action inference over co-occurrence
//!    tables, plus transfer / handover / assisted-hold event detection.
//! 5. [`grammar`] — a small context-free grammar for manipulation
//!    sentences, a CYK parser producing canonical trees, and the mapping
//!    from trees to per-agent action directives.
//! 6. [`plan`] — merge repeated directives, expand them into motion
//!    primitives, and wire cross-agent synchronisation edges.
//! 7. [`simulate`] — deterministic discrete-event execution of a plan,
//!    producing a trace and validating ordering constraints.
//! 8. [`evalkit`] — precision/recall over trees, confusion matrices and
//!    timeline exports for benchmarking against ground truth.
//! 9. [`fixtures`] — synthetic detection-stream generators used by the
//!    test-suite and the `fixture` CLI subcommand.
//!
//! [`pipeline`] strings the stages together behind one config struct and
//! writes a manifest of content hashes so runs can be compared
//! bit-for-bit.
//!
//! Numeric kernels (geometry, segmentation) are generic over the scalar
//! type via [`num_traits::Float`]; the crate-level aliases [`Scalar`] and
//! [`BBox`] fix the default precision used by the pipeline proper.

pub mod associate;
pub mod error;
pub mod evalkit;
pub mod fixtures;
pub mod geometry;
pub mod grammar;
pub mod ingest;
pub mod pipeline;
pub mod plan;
pub mod recognize;
pub mod segment;
pub mod simulate;

/// Default scalar type used by the pipeline stages.
pub type Scalar = f64;

/// Axis-aligned bounding box at the default precision.
pub type BBox = geometry::BoundingBox<Scalar>;

pub use error::Error;

/// Crate version plus the on-disk schema revision, as reported by
/// `video2plan --version` and embedded in run manifests.
pub fn version_info() -> String {
    format!("{} (schema {})", env!("CARGO_PKG_VERSION"), SCHEMA_VERSION)
}

/// Revision of the serialized file formats (streams, trees, plans,
/// manifests). Bumped when any on-disk layout changes incompatibly.
pub const SCHEMA_VERSION: u32 = 1;
