//! Frequency-domain image augmentation and robustness analysis.
//!
//! The crate decomposes images into amplitude and phase spectra and
//! recombines them across images ([`augment::apr_pair`]) and across
//! augmentation chains ([`augment::apr_single`]). Around that core sit the
//! diagnostics used to study what a classifier relies on:
//!
//! - [`filters`]: radial band masks and band-limited spectrum composition.
//! - [`templates`]: the four-template reading of a single DFT coefficient.
//! - [`sensitivity`]: Fourier-basis perturbations and error heatmaps.
//! - [`metrics`]: corruption error, AUROC, CCR/FPR/OSCR and blended predictions.
//! - [`dataset`]: raster I/O, manifests and whole-dataset pipelines.

// `!(x >= 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod dataset;
pub mod error;
pub mod filters;
pub mod io;
pub mod metrics;
pub mod seed;
pub mod sensitivity;
pub mod spectral;
pub mod templates;
pub mod transforms;

pub use error::{Error, Result};
pub use spectral::{Grid, Image, PolarSpectrum, RealGrid, Spectrum};
