//! Exact tooling for restricted max-min fair allocation.
//!
//! * [`instance`]: instances, validation, normalization and fat/thin classes.
//! * [`ratlp`]: a dense exact simplex used by everything LP-shaped.
//! * [`clp`]: configuration-LP feasibility by column generation, and `T*`.
//! * [`matching`]: the Build/Contract local search for a perfect matching of
//!   the fat/thin hypergraph, which yields an allocation worth `6/23·T` to all.
//! * [`certify`]: dual certificates extracted from a stuck search.
//! * [`oracle`]: brute-force ground truth and invariant audits.

pub mod certify;
pub mod clp;
pub mod instance;
pub mod matching;
pub mod oracle;
pub mod rational;
pub mod ratlp;

pub use instance::{
    bundle_value, lambda, normalize, validate_instance, Allocation, Bundle, Instance,
    InstanceError, NormalizedInstance, PlayerId, RawInstance, RawResource, ResourceId,
};
pub use rational::{format_rational, parse_rational, rat, Rational};
