//! Certified lower bounds on conditional von Neumann entropies for
//! device-independent and one-sided device-independent protocols.
//!
//! The entropy `H(A0|E)` is bounded through the entropy production of the key
//! measurement's pinching channel: for any real vector `λ`,
//!
//! ```text
//! H(A0|E) >= Σ_j λ_j l_j - ln sup <K>
//! ```
//!
//! where `K` is a noncommutative polynomial in the measurement projectors
//! ([`kfactory`]) and the supremum over all quantum realizations consistent
//! with the observed statistics is upper bounded by an NPA-type moment
//! relaxation ([`relax`]) solved with a dual-certified interior-point method
//! ([`sdp`]). The [`pipeline`] module turns these bounds into key rates and
//! the [`oracle`] module checks every ingredient on explicit qubit
//! realizations.

pub mod error;
pub mod io;
pub mod kfactory;
pub mod linalg;
pub mod opalg;
pub mod optim;
pub mod oracle;
pub mod par;
pub mod pipeline;
pub mod quad;
pub mod relax;
pub mod scenarios;
pub mod sdp;

pub use error::{Error, Result};
