//! Thick distributions on tubular neighbourhoods of submanifolds Σ ⊂ R^n:
//! tubular coordinates, asymptotic expansions of singular test functions,
//! finite-part pairings and their derivatives.

pub mod cli;
pub mod distributions;
pub mod error;
pub mod expansion;
pub mod geometry;
pub mod quadrature;
pub mod shapes;
pub mod tangent_calculus;
pub mod validation;

pub use error::{Error, Result};
pub use geometry::{FiberPoint, NormalFrame, Submanifold, TubePoint, TubularCoordinates};
pub use shapes::{make_circle3d, make_sphere, ShapeOracle};
