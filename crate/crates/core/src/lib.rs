//! Gabor-transform concentration operators on a uniform sample grid.
//!
//! The operator `C = S* chi_Omega S` is assembled as a dense Hermitian matrix,
//! diagonalized, and used to study eigenvalue counts, plunge-region growth and
//! eigenfunction decay.

pub mod asymptotics;
pub mod concentration;
pub mod error;
mod fft;
pub mod gabor;
pub mod grid;
pub mod region;
pub mod regularity;
pub mod rkhs;

pub use concentration::{
    assemble, auto_grid, auto_grid_for, counting, eigendecompose, eigenfilter, energy, hs_identity, trace_identity,
    AssemblyMethod, ConcentrationOperator, Spectrum,
};
pub use error::{Error, Result};
pub use gabor::{analyze, synthesize, GaborCoefficients, PhaseGrid};
pub use rkhs::{ambiguity, kernel, kernel_factorized, project, AmbiguityFunction, PhasePoint};
pub use region::{rasterize, RasterizedRegion, Region};
pub use grid::{
    fourier_transform, inner_product, inverse_fourier_transform, make_window, tf_shift, SampleGrid, Signal,
    Window, WindowFamily, WindowSpec,
};
