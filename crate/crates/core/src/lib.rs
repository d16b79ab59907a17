//! Graph-attention syndrome decoding, reinforcement-learning attacks on the
//! decoder, and adversarial hardening.
//!
//! The pipeline:
//!
//! 1. [`codesim`] produces labeled syndrome datasets (or imports them).
//! 2. [`graph`] turns each syndrome into a time-flattened complete graph.
//! 3. [`decoder`] trains a GATv2 classifier for the logical-flip label.
//! 4. [`adversary`] trains a GATv2 policy that flips syndrome bits until the
//!    frozen decoder reports a logical error, and enumerates exact optimal
//!    attacks for comparison.
//! 5. [`hardening`] retrains the decoder on the discovered examples.
//! 6. [`report`] writes heatmaps, curves and before/after summaries.

pub mod adversary;
pub mod autodiff;
pub mod checkpoint;
pub mod codesim;
pub mod decoder;
mod error;
pub mod gat;
pub mod graph;
pub mod hardening;
pub mod report;
pub mod seeding;

pub use error::{Error, Result};
