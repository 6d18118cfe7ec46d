//! Noncoherent random access with Gabor-frame codebooks.
//!
//! Each user owns one orthonormal basis of an Alltop–Gabor frame; the basis
//! identifies the user and the chosen vector carries `log2 M` bits. The
//! receiver searches the effective codebook (all concatenations over all
//! active sets) with a subspace MAP rule, detects overload from the received
//! energy, and drives a randomized retransmission round when it sees one.
//!
//! The numerical modules are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix `f64`, which is what the simulator and CLI use.

pub mod calibration;
pub mod channel;
pub mod codebook;
pub mod decoder;
pub mod error;
pub mod gabor;
pub mod harness;
pub mod linalg;
pub mod protocol;
pub mod scalar;
pub mod stats;
pub mod subspace;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Codeword = gabor::Codeword<f64>;
pub type Codebook = gabor::Codebook<f64>;
pub type EffectiveCodeword = codebook::EffectiveCodeword<f64>;
pub type EffectiveCodebookIndex = codebook::EffectiveCodebookIndex<f64>;
pub type SubspaceBasis = subspace::SubspaceBasis<f64>;
pub type SvdTriple = subspace::SvdTriple<f64>;
pub type ReceivedFrame = channel::ReceivedFrame<f64>;
pub type DecodeResult = decoder::DecodeResult<f64>;
pub type Calibration = calibration::Calibration<f64>;

pub type Codeword32 = gabor::Codeword<f32>;
pub type EffectiveCodebookIndex32 = codebook::EffectiveCodebookIndex<f32>;
