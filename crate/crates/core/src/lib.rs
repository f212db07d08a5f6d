//! Pointwise numerical checks of F-manifold structures: Hessian geometry of
//! convex cones, WDVV associativity, A_n singularity unfoldings, paracomplex
//! Dolbeault forms and finite Markov kernels.

pub mod cones;
pub mod diffcore;
pub mod hessian_geometry;
pub mod paracomplex;
pub mod saito;
pub mod statman;
pub mod tensor;
pub mod wdvv;

pub use tensor::{Tensor3, Tensor4};
