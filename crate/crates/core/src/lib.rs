//! A miniature hybrid block video codec whose entropy stage selectively
//! encrypts the bypass-coded sign bins (transform-coefficient signs and
//! motion-vector-difference signs), together with a keyless transrater that
//! requantizes an encrypted bitstream to higher QPs without ever seeing the
//! key, and the measurement kit used to evaluate the scheme.
//!
//! Module map:
//!
//! * [`frame_io`] — planar YUV 4:2:0 frames, Y4M reading/writing, PPM export
//! * [`xquant`] — integer block transform and dead-zone quantizer
//! * [`motion`] — full-search motion estimation, compensation, MV sidecar
//! * [`entropy`] — binary range coder (adaptive + bypass bins), binarization
//! * [`cipher`] — AES-128 and XOR keystreams over the encryptable sign slots
//! * [`syntax`] — frame syntax model and its arithmetic-coded wire form
//! * [`codec`] — encoder/decoder pipeline and the `CVB1` container
//! * [`transrate`] — open-loop, closed-loop and cascaded requantization
//! * [`evalkit`] — PSNR/SSIM, histograms, edge/pixelate probes, experiments
//! * [`corpus`] — seeded synthetic test clips

pub mod cipher;
pub mod codec;
pub mod corpus;
pub mod entropy;
mod error;
pub mod evalkit;
pub mod frame_io;
pub mod motion;
pub mod rng;
pub mod syntax;
pub mod transrate;
pub mod xquant;

pub use error::{Error, Result};
