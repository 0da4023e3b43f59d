//! Uniform sparse FFT (usFFT) for simultaneous high-dimensional Fourier
//! approximation of many functionals that share one parameter space.

// Range checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approximant;
pub mod detect;
pub mod error;
pub mod fixtures;
pub mod freq;
pub mod lattice;
pub mod matrix;
pub mod pde;
pub mod periodize;
pub mod post;
pub mod special;

pub use approximant::Approximant;
pub use num_complex::Complex64;
pub use detect::{usfft, AlgoA, BlackBox, Detection, DetectionConfig};
pub use error::{Error, Result};
pub use freq::{CandidateGrid, Frequency, FrequencySet};
pub use lattice::Rank1Lattice;
pub use matrix::CMatrix;
pub use pde::{Mesh, PdeBlackBox, PdeModel, PdeSolver};
pub use periodize::Periodization;
