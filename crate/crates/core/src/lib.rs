//! Certification of incremental L2-stability for negative-feedback
//! interconnections `e = u - tau H2(y)`, `y = H1(e)`.
//!
//! Two certification routes are provided — separation of scaled relative
//! graphs ([`certify::certify_srg`]) and incremental integral quadratic
//! constraints ([`iqc::certify_iqc`]) — together with a Picard feedback
//! solver ([`feedback::solve_feedback`]) used to cross-check every
//! certificate empirically.

pub mod certify;
pub mod error;
pub mod feedback;
pub mod iqc;
pub mod lti;
pub mod operators;
pub mod probes;
pub mod signals;
pub mod srg;

pub use error::{Error, Result};
pub use lti::StateSpace;
pub use operators::{Operator, OperatorSpec, StaticFn};
pub use signals::Signal;
