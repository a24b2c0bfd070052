//! Numerical toolkit for parabolic Muckenhoupt weights on space-time grids.
//!
//! Functions are piecewise constant on a uniform space-time grid and every
//! average is taken over the cells whose centres fall inside a box. The core
//! is generic over `f32` and `f64`; the `*64` aliases fix `f64`.

// `!(x > 0)` rejects NaN as well; that is the intent everywhere.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bmo;
pub mod construct;
pub mod error;
pub mod factorize;
pub mod geometry;
pub mod gridfn;
pub mod maximal;
pub mod scalar;
pub mod synthetic;
pub mod weights;

pub use bmo::BmoReport;
pub use construct::{MeasureSpec, SupersolutionSpec};
pub use error::{Error, Result};
pub use factorize::FactorizationResult;
pub use geometry::{Direction, Exponents, ParabolicRectangle, RectangleFamily, SpaceTimeBox};
pub use gridfn::{CellBox, GridFunction, GridSpec};
pub use maximal::{EvalPath, MaximalResult};
pub use scalar::Scalar;
pub use weights::{Verdict, WeightReport, Witness};

pub type GridFunction64 = GridFunction<f64>;
pub type GridSpec64 = GridSpec<f64>;
pub type Exponents64 = Exponents<f64>;
pub type SpaceTimeBox64 = SpaceTimeBox<f64>;
pub type ParabolicRectangle64 = ParabolicRectangle<f64>;
pub type RectangleFamily64 = RectangleFamily<f64>;
pub type GridFunction32 = GridFunction<f32>;
pub type Exponents32 = Exponents<f32>;
