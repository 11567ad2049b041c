//! Parameters, log-polar grids, field storage and weighted quadrature shared
//! by every other module.

pub mod field;
pub mod grid;
pub mod params;
pub mod quadrature;

pub use field::{weighted_volume_integral, FieldKind, FieldPair, LogPolarField};
pub use grid::{build_grid, LogPolarGrid};
pub use params::{make_params, FracParam};
pub use quadrature::ThetaRule;
