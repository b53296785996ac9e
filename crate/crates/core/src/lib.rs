//! Reliability evaluation of spectrogram attribution maps.
//!
//! A committee of classifiers each explains the same spectrogram; the top
//! fraction of every attribution map becomes a binary mask. Agreement between
//! the masks is stratified into consensus tiers and tested against a null in
//! which each mask is cyclically shifted along time by an independent random
//! offset. Stationary (time-invariant) agreement survives every shift and
//! scores an FDR of 1; sparse, time-locked agreement does not.

pub mod attribution;
pub mod committee;
pub mod consensus;
pub mod error;
pub mod masking;
pub mod matrix;
pub mod null_fdr;
pub mod pipeline;
pub mod report;
pub mod synthgen;
pub mod theorem;
pub mod types;

pub use error::{Error, Result};
pub use matrix::{load_matrix, parse_matrix, save_matrix, Matrix};
pub use types::{AttributionMap, BinaryMask, Spectrogram};
