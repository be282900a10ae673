//! Bipartite nonlocal boxes and the communication-complexity collapse criterion.
//!
//! A *nonlocal box* is a two-party input/output device described by a
//! conditional distribution `P(a,b|x,y)` on bits, constrained only by
//! non-signalling. This crate provides:
//!
//! - [`boxes`]: box representation, validation, named boxes (`PR`, `PR'`,
//!   `I`, `SR`, `P0`, `P1`), mixing, biases and local uniformization;
//! - [`protocol`]: the recursive distributed-computation protocols built on
//!   majority amplification, both as exact enumerations and as a seeded
//!   Monte-Carlo simulator;
//! - [`collapse`]: the bias-recursion map `F(mu) = (mu/16)(A+B - mu^2(A-B))`,
//!   its fixed points, and the sufficient collapse criterion `A+B > 16`;
//! - [`slices`]: two-dimensional slice scans of the non-signalling set with
//!   the analytic collapse regions (ellipses and circle) and threshold
//!   bisection;
//! - [`sampling`]: seeded random non-signalling boxes for cross-checks;
//! - [`verify`]: the built-in self-check suite wired into the CLI.
//!
//! Everything is plain `f64` arithmetic over immutable values; all
//! operations are pure functions and safe to call concurrently.

pub mod boxes;
pub mod collapse;
pub mod protocol;
pub mod sampling;
pub mod slices;
pub mod verify;

pub use boxes::{BiasVector, BoxError, NamedBox, NonlocalBox, ValidationReport, Violation};
pub use collapse::{
    canonical_params, recursion_params, resource_count, CanonicalParams, IterationTrace,
    RecursionParams, ResourceUsage,
};
pub use protocol::{BooleanFunction, ProtocolConfig, SimMode, SuccessReport};
pub use slices::{CoordinateMap, ScanPoint, SliceSpec};

/// Default tolerance for validating probability constraints.
pub const DEFAULT_TOL: f64 = 1e-9;
