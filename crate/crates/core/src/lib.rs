//! Locally private inference for bounded means.
//!
//! Data in `[0, 1]` are privatized on the client with randomized-response
//! style mechanisms ([`mechanisms`]), and the analyst builds confidence
//! intervals, confidence sequences and e-processes directly from the
//! privatized stream ([`confseq`], [`eprocess`], [`abtest`]). The
//! [`harness`] module runs Monte Carlo experiments and handles file formats.

pub mod abtest;
pub mod confseq;
pub mod eprocess;
pub mod error;
pub mod harness;
pub mod mechanisms;
pub mod schedules;

pub use error::{Error, Result};
