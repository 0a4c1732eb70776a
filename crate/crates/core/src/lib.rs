//! Self-supervised image denoising trained on clean images only.
//!
//! Clean training images are corrupted in the Haar wavelet domain by adding
//! per-subband Gaussian noise ([`wia`]), a residual encoder–decoder
//! ([`backbone`]) learns to undo the corruption, and a frequency-aware
//! feature loss ([`fam`]) compares the high-frequency subbands of the output
//! and the target through an online encoder and its moving-average twin.
//!
//! [`metrics`] holds PSNR, SSIM, noise power spectra and subband
//! differences; [`data`] holds image I/O, synthetic phantoms and a low-dose
//! degradation simulator used for evaluation; [`trainer`] wires everything
//! into the alternating training loop.

pub mod backbone;
pub mod data;
pub mod error;
pub mod fam;
pub mod metrics;
pub mod nn;
pub mod raster;
pub mod rng;
pub mod trainer;
pub mod wavelet;
pub mod wia;

pub use error::{Error, ErrorClass, Result};
pub use raster::Image;
pub use wavelet::{Subband, SubbandSet};
pub use wia::NoiseConfig;
