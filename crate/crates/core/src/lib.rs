//! Differentially private entity-resolution cleaning.
//!
//! A cleaner never sees the private pair table directly. It talks to an
//! [`engine::Session`] that answers counting, comparison and top-k queries
//! within an `(alpha, beta)` tolerance and charges the resulting privacy
//! loss against a fixed budget.

// `!(x > 0.0)` is how parameters reject NaN along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod cleaners;
pub mod data;
pub mod engine;
pub mod error;
pub mod formula;
pub mod mechanisms;
pub mod quality;
pub mod query;
pub mod similarity;

pub use error::{Error, Result};
