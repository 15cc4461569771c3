//! Anomaly detection by checkpoint influence.
//!
//! A model (VAE, Deep-SVDD, or a plain squared-error objective) is trained on
//! normal data with minibatch SGD while parameter snapshots are stored. A test
//! sample is then scored by the mean learning-rate-weighted inner product
//! between its loss gradient and the loss gradients of a random subsample of
//! training points, summed over the snapshots. Normal samples are strongly
//! supported by the training data; anomalies are not, so low mean influence
//! signals an anomaly.
//!
//! The crate is `no_std` + `alloc` without the default `std` feature. The
//! `parallel` feature spreads influence scoring over a rayon pool.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod influence;
pub mod models;
pub mod numeric;
pub mod training;

pub use error::{Error, Result};
