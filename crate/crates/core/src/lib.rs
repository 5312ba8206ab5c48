pub mod error;
pub mod geometry;
pub mod harness;
pub mod heat;
pub mod hitting;
pub mod laplace;
pub mod levy;
pub mod montecarlo;
pub mod perimeter;
pub mod quad;
pub mod special;

pub use error::{Error, Result};
pub use geometry::{OpenSet1D, SetTopology};
pub use levy::{LevyModel, ModelKind, VariationClass};
