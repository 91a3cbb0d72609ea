//! Numerical laboratory for Pleijel-type nodal-domain bounds of
//! Schrödinger operators `-Δ + V`.
//!
//! The crate is organised bottom-up:
//!
//! - [`constants`]: ball volumes, Bessel zeros, Faber–Krahn and Pleijel constants;
//! - [`potentials`]: growing (Case A) and vanishing singular (Case B) potentials;
//! - [`partition`]: cube lattices, annular coverings and partitions of unity;
//! - [`field`]: uniform Dirichlet grids and sampled scalar fields;
//! - [`spectral`]: grid Hamiltonians, the block eigensolver and eigenvalue counts;
//! - [`nodal`]: nodal-domain labelling, localisation audits and nodal upper bounds;
//! - [`weyl`]: Weyl integrals, bracketing sums and exponent fits;
//! - [`hardy`]: Hardy weights and the lower semibound constant.

pub mod constants;
pub mod error;
pub mod field;
pub mod hardy;
pub mod nodal;
pub mod partition;
pub mod potentials;
pub(crate) mod quadrature;
pub mod spectral;
pub mod weyl;

pub use constants::{DimensionalConstants, PleijelForm};
pub use error::{Error, Result};
pub use field::{Grid, SampledField};
pub use partition::{AnnularLayout, CubeCell, PartitionOfUnity};
pub use potentials::{Case, Family, Pole, PotentialSpec};
pub use spectral::EigenPair;
