//! Per-sample objectives the influence scores are computed over.

mod dsvdd;
mod simple;
mod vae;

pub use dsvdd::{dsvdd_center_init, DsvddModel, CENTER_MIN_ABS};
pub use simple::{Autoencoder, Centroid};
pub use vae::{kl_diag_gaussian, VaeModel};
