//! Triangular-lattice transverse-field Ising model with a longitudinal bias.
//!
//! The crate covers the classical sector of the model (energies, flip costs,
//! ordered and domain-wall states), a second-order effective Hamiltonian for a
//! two-spin domain-wall subspace, dense exact diagonalization of small
//! clusters, Suzuki-Trotter path-integral Monte Carlo for relaxation dynamics,
//! and the reconfiguration-rate scaling-collapse analysis.
//!
//! The algebraic parts ([`model`], [`swtheory`], [`ed`]) are generic over the
//! scalar type. [`swtheory`] only needs field operations, so it also runs on
//! exact rationals; see [`ExactSwSubspace`]. The Monte Carlo engine and the
//! collapse analysis are statistical pipelines and work in `f64`.

pub mod analysis;
pub mod ed;
pub mod lattice;
pub mod model;
pub mod qmc;
pub mod scalar;
pub mod swtheory;

pub use lattice::{LatticeError, LatticeGeom, Sublattice};
pub use model::{ModelError, ModelParams, SpinConfig};
pub use scalar::Scalar;

/// Exact rational scalar.
pub type Rational = num_rational::Ratio<i64>;

pub type ModelParams64 = ModelParams<f64>;
pub type SwSubspace64 = swtheory::SwSubspace<f64>;
pub type SwSubspace32 = swtheory::SwSubspace<f32>;
pub type ExactSwSubspace = swtheory::SwSubspace<Rational>;
pub type SwResult64 = swtheory::SwResult<f64>;
pub type DenseHamiltonian64 = ed::DenseHamiltonian<f64>;
pub type Cluster64 = ed::Cluster<f64>;
