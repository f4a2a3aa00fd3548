//! Onset-period detection from timestamped short-text archives.
//!
//! The pipeline runs cohort selection ([`cohort`]), window extraction
//! ([`windows`]), text, pattern-of-life and phonological features
//! ([`textfeat`], [`bdplf`], [`phonology`], [`features`]), a random forest
//! ([`forest`]) and prodromal-period location ([`prodrome`]). [`synth`]
//! generates cohorts with known onset behavior.

pub mod bdplf;
pub mod cohort;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod features;
pub mod forest;
pub mod phonology;
pub mod prodrome;
pub mod resources;
pub mod synth;
pub mod textfeat;
pub mod windows;

pub use error::{Error, Result};
