//! Fourier-Galerkin transfer operators for random expanding circle maps and
//! their U(1) extensions, with quenched linear and quadratic response.

pub mod cli;
pub mod cocycle;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod response;
pub mod rng;
pub mod spectral;
pub mod transfer;

pub use error::{Error, Result};
pub use spectral::{Dim, Freq, SpaceLadder, SpectralField, C64};
pub use transfer::{Quadrature, TransferMatrix};
