//! Quadrature configuration for class algebra on rectangular supports.

use crate::error::Result;
use crate::grid::{Grid, Rect};
use crate::scalar::Scalar;

/// Composite-trapezoid settings: bound functions in the supported examples
/// are smooth and compactly truncated, so uniform lattices suffice.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    /// Nodes per axis for one-dimensional supports.
    pub nodes_1d: usize,
    /// Nodes per axis for multi-dimensional supports.
    pub nodes_nd: usize,
    /// Relative residual tolerance for the coarse-vs-fine consistency check.
    pub residual_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        // Node counts are odd so the half-resolution lattice used for the
        // residual check is nested in the full one.
        QuadratureConfig {
            nodes_1d: 2049,
            nodes_nd: 257,
            residual_tol: 0.02,
        }
    }
}

impl QuadratureConfig {
    pub fn grid_for<F: Scalar>(&self, rect: &Rect<F>) -> Result<Grid<F>> {
        let n = if rect.dim() == 1 {
            self.nodes_1d
        } else {
            self.nodes_nd
        };
        Grid::new(rect.clone(), vec![n; rect.dim()])
    }

    /// Lattice with roughly `total` nodes spread evenly over the axes,
    /// used for bound-order validation.
    pub fn validation_grid<F: Scalar>(&self, rect: &Rect<F>, total: usize) -> Result<Grid<F>> {
        let d = rect.dim() as f64;
        let per_axis = ((total as f64).powf(1.0 / d).round() as usize).max(2);
        Grid::new(rect.clone(), vec![per_axis; rect.dim()])
    }
}
