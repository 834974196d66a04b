//! Semiclassical analysis on the flat torus `[-pi, pi)^n`.
//!
//! The crate provides the pieces needed to experiment numerically with joint
//! quasimodes of several pseudodifferential operators at once:
//!
//! * [`symbols`] - exact sparse-polynomial phase-space symbols `p(x, xi)`,
//!   their derivatives, linear changes of the fibre coordinates, and the
//!   admissibility checks (smooth characteristic hypersurfaces, independent
//!   normals, curved first level set).
//! * [`quantization`] - FFT-based left quantization `p(x, hD)` on a periodic
//!   grid, the semiclassical Fourier transform, the exact composition
//!   expansion in powers of `h`, commutator defects, and elliptic parametrix
//!   residuals.
//! * [`quasimodes`] - plane waves, spectral clusters, Knapp-type caps,
//!   tensor-product joint quasimodes, localization, and defect reports for
//!   iterated operator applications.
//! * [`reduction`] - orthogonal normalization of the symbol gradients,
//!   implicit-function graph solves, inductive substitution, and curvature
//!   certificates down to the final graph `xi_1 = b(x, eta)`.
//! * [`analysis`] - `L^p` quadrature, the growth exponents `delta(n, p)` and
//!   `delta(n, p, r)`, and frequency sweeps fitting measured growth rates.
//!
//! The crate is `no_std` (with `alloc`); IO, file formats, and the command
//! line front end live in the companion `qmlab-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod error;
pub mod fft;
pub mod linalg;
pub mod quantization;
pub mod quasimodes;
pub mod reduction;
pub mod rng;
pub mod symbols;

mod mathfn;

pub use error::{Error, Result};

/// Complex scalar used across grid data and spectra.
pub type Complex64 = num_complex::Complex<f64>;
