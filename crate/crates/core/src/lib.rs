//! Adaptive JPEG luminance quantization tables learned with an amplitude-based
//! population optimizer, plus the rate-distortion tooling to evaluate them.
//!
//! The pipeline is: [`image_io`] loads a luminance plane, [`dct`] runs the
//! block transform codec, [`quant`] builds tables from [`quant::BandParams`],
//! [`rd`] scores a table on an image, [`qwio`] searches the parameter space,
//! and [`metrics`] reports PSNR, SSIM, BPP and error heat maps.

pub mod dct;
pub mod error;
pub mod exec;
pub mod image_io;
pub mod metrics;
pub mod quant;
pub mod qwio;
pub mod rd;
pub mod selftest;

pub use error::{Error, Result};
pub use image_io::ImagePlane;
pub use quant::{BandParams, QuantTable};
