//! Numerical core for privacy-preserving early seizure detection from
//! optical flow.
//!
//! The crate is `no_std` with `alloc`. It holds everything that is pure
//! computation: a tape-based reverse-mode differentiator, TV-L1 optical
//! flow, a flow-histogram featurizer, the SETR transformer classifier,
//! progressive knowledge distillation, and the evaluation harness
//! (synthetic data, patient-level folds, metrics). File formats, the
//! experiment runner and the command line live in the `setr` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod autodiff;
pub mod distill;
pub mod error;
pub mod features;
pub mod flow;
pub mod harness;
pub mod model;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
