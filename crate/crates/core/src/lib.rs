//! Phantom-trained, voxel-wise spherical-harmonics harmonization of
//! diffusion MRI.
//!
//! The crate provides the SH signal model ([`sh`]), diffusion tensor and
//! fiber ODF scalar maps ([`dti`], [`odf`]), the order-scale harmonization
//! network ([`harp`]), the RISH ratio baseline ([`rish`]), a synthetic
//! two-site simulator ([`sim`]), variability statistics ([`metrics`]),
//! file I/O ([`io`]) and evaluation workflows that compose them
//! ([`evaluation`]).

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dti;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod harp;
pub mod io;
pub mod metrics;
pub mod odf;
pub mod quadrature;
pub mod rish;
pub mod sh;
pub mod sim;
pub mod volume;

pub use error::{HarpError, Result};
