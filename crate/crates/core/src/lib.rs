//! Lagrangian stochastic particle transport on unstructured 3-D meshes.
//!
//! The crate integrates a simplified Langevin model for fluid particles with
//! an exponential scheme that is exact for piecewise-constant fields, and
//! splits each time step at cell faces using a deterministic "virtual
//! partner" so that sub-step durations never depend on the noise they are
//! integrated with.

pub mod cell_to_cell;
pub mod fields;
pub mod mesh;
pub mod noise;
pub mod scenario;
pub mod sde;
pub mod stats;
pub mod tracking;
pub mod verify;
pub mod vec3;

pub use vec3::Vec3;
