//! Binary range coder with context-adaptive and bypass bins, plus the
//! binarization of all syntax elements.
//!
//! Bypass bins halve the range exactly, so the coded length of a stream is
//! a function of the bin *kinds* alone: flipping any subset of bypass bin
//! values changes neither the output byte count nor any other bin's decode.
//! That bit-exact invariance is what makes sign-bin encryption free.

mod binarize;
mod coder;

pub use binarize::{
    binarize_level, binarize_mvd_component, exp_golomb_bins, read_exp_golomb, sig_ctx_class,
    zigzag_scan, Bin, BinKind, CtxId,
};
pub use coder::{Context, RangeDecoder, RangeEncoder};
