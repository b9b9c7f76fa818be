//! Time-dependent variational Monte Carlo for open spin lattices with a
//! periodic matrix-product-operator density-matrix ansatz.

pub mod error;
pub mod lattice;
pub mod linalg;
pub mod liouvillian;
pub mod mpo;
pub mod observables;
pub mod oracle;
pub mod runner;
pub mod sampler;
pub mod tdvp;

pub use nalgebra::DMatrix;
pub use num_complex::Complex64;

pub use error::{Error, Result};
pub use lattice::Lattice;
pub use liouvillian::{LindbladianSpec, ModelParams};
pub use mpo::{MpoAnsatz, PartialProducts, SpinConfiguration};
