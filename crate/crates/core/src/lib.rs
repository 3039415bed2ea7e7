//! Boosting objectives for image-text matching at desk scale.
//!
//! The crate trains toy dual encoders on synthetic paired data and compares a
//! single-branch hinge-ranking baseline against target branches that are boosted
//! by an anchor branch's similarity scores (relative / absolute, sum / max, with
//! fixed or soft-adaptive margins) under offline, online and momentum scenarios.

pub mod check;
pub mod cohort;
pub mod data;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod losses;
pub mod numcore;

pub use error::{Error, Result};
pub use numcore::{Matrix, RngStream};
