//! Functional quantization of Gaussian processes in L²\[0,1\].
//!
//! A Gaussian process with Karhunen-Loève expansion X = Σ √λ_j Z_j u_j is
//! quantized by cutting the coefficient sequence into blocks, quantizing each
//! block with an optimal (or trained) codebook of N(0, I_l), and keeping the
//! product of the per-block codebooks as the path-space codebook. The crate
//! provides:
//!
//! * eigenvalue models for Brownian motion, Riemann-Liouville and integrated
//!   Brownian motion families ([`process`]),
//! * exact optimal scalar quantizers of N(0,1) by Newton's method ([`scalar`]),
//! * CLVQ / Lloyd training of multivariate codebooks ([`vector`]),
//! * the block size allocation rule and a brute-force reference optimizer
//!   ([`allocation`]),
//! * assembly of product quantizers with analytic distortion, path
//!   enumeration and synthesis ([`product`]),
//! * closed-form high-resolution rate and entropy predictions
//!   ([`asymptotics`]),
//! * Monte-Carlo distortion measurement with analytic tail correction
//!   ([`mc`]),
//! * a text codebook file format ([`store`]).

pub mod allocation;
pub mod asymptotics;
pub mod error;
pub mod mc;
pub mod process;
pub mod product;
pub mod rng;
pub mod scalar;
pub mod special;
pub mod store;
pub mod vector;

pub use allocation::{BlockAllocation, CapacityTable};
pub use error::FunqError;
pub use mc::{DistortionMode, McEstimate};
pub use process::{EigenModel, ModelKind, RegVarFns};
pub use product::{ProductQuantizer, QuantizedPath};
pub use scalar::Codebook1D;
pub use vector::{CodebookD, GainSchedule, Quality};

/// Crate result alias.
pub type Result<T> = std::result::Result<T, FunqError>;
