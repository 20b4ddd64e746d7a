//! Decoupled control of ring-symmetric multi-actuator-array systems.
//!
//! The pipeline implemented by this crate:
//!
//! 1. [`block_circulant`] — the ring symmetry makes every static response map
//!    block-circulant; a spatial Fourier transform block-diagonalizes it and
//!    yields an FFT-accelerated matvec.
//! 2. [`gsvd`] — a generalized singular value decomposition simultaneously
//!    diagonalizes the per-cell response blocks of two actuator arrays,
//!    splitting each cell into coupled two-input channels and slow-only
//!    single-input channels.
//! 3. [`plant`] — the two-array ring model: response matrices, first-order
//!    actuator dynamics with loop delay, and the two-stage decomposition.
//! 4. [`controller`] — per-mode internal-model controllers with mid-ranging
//!    between the slow and fast arrays, and Tikhonov-regularized static gains.
//! 5. [`simulator`] — discrete-time closed-loop simulation with the internal
//!    model running in parallel to the plant, plus disturbance synthesis.
//! 6. [`analysis`] — Welch spectra, integrated-motion curves and the
//!    two-controller comparison study.

pub mod analysis;
pub mod block_circulant;
pub mod controller;
pub mod error;
pub mod filter;
pub mod gsvd;
pub mod io;
pub mod linalg;
pub mod plant;
pub mod simulator;

pub use block_circulant::{BlockCirculantMatrix, BlockDiagonalForm, FftMatvec};
pub use error::{Error, Result};
