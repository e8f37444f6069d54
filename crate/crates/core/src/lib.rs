//! Core numerics for robust Bayesian simulation-based inference with
//! density ratio classes: exact class algebra on densities and grids,
//! seedable forward simulators with summary statistics, prior families,
//! kernel density estimation, and the closed-form oracles for the
//! two-source normal example.
//!
//! Everything is generic over the scalar type via [`Scalar`]; concrete
//! `f64` aliases are exported at the crate root.

pub mod analytic;
pub mod drc;
pub mod error;
pub mod grid;
pub mod kde;
pub mod prior;
pub mod quad;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod special;

pub use error::CoreError;
pub use rng::Stream;
pub use scalar::Scalar;

/// Default scalar type for the concrete aliases below.
pub type Real = f64;

pub type Rect = grid::Rect<Real>;
pub type Grid = grid::Grid<Real>;
pub type GridDensity = grid::GridDensity<Real>;
pub type ParamEvent = drc::ParamEvent<Real>;
pub type DensityRatioClass = drc::DensityRatioClass<Real>;
pub type GridClass = drc::GridClass<Real>;
pub type PriorSpec = prior::PriorSpec<Real>;
pub type SimDataset = sim::SimDataset<Real>;
pub type NormalTwoSourceModel = sim::NormalTwoSourceModel<Real>;
pub type NormalExampleConfig = analytic::NormalExampleConfig<Real>;
