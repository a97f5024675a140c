//! Triple-gated CTR prediction at desk scale.
//!
//! Implements a gated target-attention architecture over multi-view user
//! behavior sequences: sparse-gated attention (ASGA), cascading query
//! calibration (GCQC), and context-gated view fusion (CGDF), on top of a
//! minimal f64 reverse-mode tensor engine. Everything here is `no_std`
//! compatible (alloc only); file formats, CLI, and IO live in the `gapnet`
//! companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod asga;
pub mod cgdf;
pub mod data;
pub mod error;
pub mod gcqc;
pub mod gradcheck;
pub mod layers;
pub mod math;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::CoreError;
pub use tensor::{Tape, TensorId};
