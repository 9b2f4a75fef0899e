//! Non-Hermitian circulator-cavity models: Hamiltonians, biorthogonal
//! eigensystems, input-output scattering, ferrite tensors, a Boltzmann
//! anisotropy toy model and Lorentzian fitting.
//!
//! Frequencies are linear (ω/2π) in GHz, linewidths and couplings in MHz,
//! fields in mT.

pub mod anisotropy;
pub mod error;
pub mod fitting;
pub mod ferrite;
pub mod matrix;
pub mod model;
pub mod nonhermitian;
pub mod optimize;
pub mod scattering;

pub use error::{Error, Result};
pub use matrix::{ComplexMatrix, C64};
pub use model::ModelParams;

/// Guide chapters, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/eigensystems.md")]
    mod eigensystems {}
    #[doc = include_str!("../../../book/src/scattering.md")]
    mod scattering {}
    #[doc = include_str!("../../../book/src/reduction.md")]
    mod reduction {}
    #[doc = include_str!("../../../book/src/circulator.md")]
    mod circulator {}
    #[doc = include_str!("../../../book/src/ferrite.md")]
    mod ferrite {}
    #[doc = include_str!("../../../book/src/anisotropy.md")]
    mod anisotropy {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
