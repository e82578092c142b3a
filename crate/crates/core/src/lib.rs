//! Numeric and performance models of a generalizable radiance-field renderer
//! and its accelerator.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod geometry;
pub mod memmodel;
pub mod perfmodel;
pub mod pipeline;
pub mod profile;
pub mod rig;
pub mod sampling;
pub mod scheduler;
pub mod volume;

pub use error::{Error, Result};
