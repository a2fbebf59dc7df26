//! Document-level entity disambiguation.
//!
//! Entity vectors are bootstrapped from word co-occurrence statistics
//! ([`embed`]), mentions are scored locally by an attention model over their
//! context words ([`local`]), and a fully connected pairwise CRF over all
//! mentions of a document is resolved by a fixed number of damped
//! max-product message passing rounds unrolled into a differentiable
//! network ([`global`]). Everything trainable is differentiated by the small
//! tape in [`diff`].

pub mod candidates;
pub mod diff;
pub mod embed;
mod error;
pub mod global;
pub mod harness;
pub mod local;
pub mod nn;
pub mod store;

pub use error::{Error, Result};
