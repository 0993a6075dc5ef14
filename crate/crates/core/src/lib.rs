//! Certified upper and lower bounds on stationary performance measures of
//! homogeneous random walks in the positive orthant `{0,1,...}^M`.
//!
//! The pipeline: partition the orthant into axis-aligned boxes on which the
//! transition law is homogeneous ([`lattice`]), refine the partition so that
//! shifted component membership is constant per cell, express the perturbed
//! stationary measure in weighted-geometric form ([`measure`]), solve small
//! transportation problems for the bias-recursion flow coefficients
//! ([`flow`]), and assemble finite linear programs whose optima bound the
//! performance measure of the original walk ([`bounds`]). An exact
//! truncated-chain oracle ([`oracle`]) cross-checks every bound at desk scale.
//!
//! The crate is `no_std` (with `alloc`); all heavy lifting is plain `f64`
//! arithmetic over `Vec`/`BTreeMap`. Every type is immutable after
//! construction and safe to share across threads.

#![no_std]

extern crate alloc;

pub mod bounds;
pub mod flow;
pub mod lattice;
pub mod linfunc;
pub mod lp;
pub mod measure;
pub mod num;
pub mod oracle;
pub mod walk;


pub use bounds::{sandwich, solve_bound, BoundKind, BoundResult, Sandwich};
pub use lattice::{refine, validate_partition, LatticeBox, Partition, Refinement};
pub use measure::GeometricStationaryMeasure;
pub use walk::{delta, uniformize, validate_walk, RandomWalkSpec, TransitionLaw};
