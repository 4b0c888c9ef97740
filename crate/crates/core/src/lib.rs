//! A stochastic two-player game whose value approximates the arrival time of
//! motion by mean curvature.
//!
//! Paul and Carol each pick a spherical cap slightly larger than a half
//! sphere; the token moves by `eps * v` with `v` uniform on the intersection
//! of the two caps, and Carol pays `eps^2 K` per round until the token leaves
//! the convex domain. The value `u^eps` of this game solves a dynamic
//! programming principle and converges to the solution of
//! `|Du| div(Du/|Du|) = -1` in the domain, `u = 0` on its boundary, whose
//! superlevel sets `{u > t}` are the domain evolved by mean curvature flow
//! for time `t`.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`) and the
//! dimension `N` (2 or 3). The aliases at the crate root fix `f64`.

pub mod analysis;
pub mod domain;
pub mod error;
pub mod field;
pub mod game;
pub mod quadrature;
pub mod scalar;
pub mod solver;
pub mod sphere;
pub mod vector;

pub use domain::{Domain, DomainSpec};
pub use error::{Error, Result};
pub use field::{FieldHeader, Grid, ValueField};
pub use scalar::Scalar;
pub use sphere::{
    cap_measure, constant_c, delta_eps, equator_average, intersect_caps, region_average, sample_uniform,
    theta_from_delta, Cap, CapIntersection, Direction, QuadratureRule,
};

pub type Direction2 = Direction<f64, 2>;
pub type Direction3 = Direction<f64, 3>;
pub type Cap2 = Cap<f64, 2>;
pub type Cap3 = Cap<f64, 3>;
pub type Domain2 = Domain<f64, 2>;
pub type Domain3 = Domain<f64, 3>;
pub type Grid2 = Grid<f64, 2>;
pub type Grid3 = Grid<f64, 3>;
pub type ValueField2 = ValueField<f64, 2>;
pub type ValueField3 = ValueField<f64, 3>;
