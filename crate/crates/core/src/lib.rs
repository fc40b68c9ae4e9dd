//! Quantum stochastic filtering and feedback control of finite-level
//! systems: density operators, the controlled filtering equation, generator
//! calculus, mean-field fixed points, stabilizing feedback and `N`-body
//! Ising simulations.
//!
//! Every numeric type is generic over a [`Real`] scalar (`f32` or `f64`);
//! the aliases at the crate root fix `f64`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod density;
pub mod eigen;
pub mod embed;
pub mod ensemble;
pub mod error;
pub mod feedback;
pub mod generator;
pub mod matrix;
pub mod meanfield;
pub mod nbody;
pub mod pauli;
pub mod sampling;
pub mod scalar;
pub mod sme;
pub mod sparse;

pub use control::{ConstantControl, ControlLaw, ControlPath, ZeroControl};
pub use density::{
    bloch_of_matrix, bloch_to_density, density_to_bloch, partial_trace, BlochVector,
    DensityOperator,
};
pub use embed::{embed_pair, embed_site, PairOperator, SiteOperator};
pub use error::{Error, Result};
pub use matrix::{hs_inner, hs_norm, ComplexMatrix};
pub use scalar::{Real, C};
pub use sme::{
    integrate, lindblad_ode, lindbladian, measurement_superop, simulate_trajectory, sme_step,
    IntegratorConfig, SdeModel, TrajectoryRecord,
};
pub use sparse::CsrMatrix;

pub type Complex64 = C<f64>;
pub type Matrix = ComplexMatrix<f64>;
pub type Density = DensityOperator<f64>;
pub type Bloch = BlochVector<f64>;
pub type Model = SdeModel<f64>;
pub type Config = IntegratorConfig<f64>;
pub type Trajectory = TrajectoryRecord<f64>;
