//! Hyper-rectangles and uniform lattices with trapezoid integration.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Axis-aligned hyper-rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Rect<F> {
    lo: Vec<F>,
    hi: Vec<F>,
}

impl<F: Scalar> Rect<F> {
    pub fn new(lo: Vec<F>, hi: Vec<F>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(CoreError::InvalidConfig(
                "rectangle bounds must be nonempty and of equal length".into(),
            ));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(CoreError::InvalidConfig(format!(
                    "rectangle needs finite lo < hi, got [{a}, {b}]"
                )));
            }
        }
        Ok(Rect { lo, hi })
    }

    pub fn interval(lo: F, hi: F) -> Result<Self> {
        Rect::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[F] {
        &self.lo
    }

    pub fn hi(&self) -> &[F] {
        &self.hi
    }

    pub fn contains(&self, x: &[F]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn volume(&self) -> F {
        self.lo
            .iter()
            .zip(&self.hi)
            .fold(F::one(), |acc, (a, b)| acc * (*b - *a))
    }

    /// Sub-rectangle for the given axes.
    pub fn project(&self, axes: &[usize]) -> Result<Rect<F>> {
        let mut lo = Vec::with_capacity(axes.len());
        let mut hi = Vec::with_capacity(axes.len());
        for &a in axes {
            if a >= self.dim() {
                return Err(CoreError::AxisOutOfRange {
                    axis: a,
                    dim: self.dim(),
                });
            }
            lo.push(self.lo[a]);
            hi.push(self.hi[a]);
        }
        Rect::new(lo, hi)
    }
}

/// Uniform lattice over a rectangle. Nodes are stored row-major with the
/// last axis varying fastest; every axis has at least two nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<F> {
    rect: Rect<F>,
    shape: Vec<usize>,
}

impl<F: Scalar> Grid<F> {
    pub fn new(rect: Rect<F>, shape: Vec<usize>) -> Result<Self> {
        if shape.len() != rect.dim() {
            return Err(CoreError::InvalidConfig(format!(
                "grid shape has {} axes for a {}-d rectangle",
                shape.len(),
                rect.dim()
            )));
        }
        if shape.iter().any(|&n| n < 2) {
            return Err(CoreError::InvalidConfig(
                "grid needs at least two nodes per axis".into(),
            ));
        }
        Ok(Grid { rect, shape })
    }

    pub fn rect(&self) -> &Rect<F> {
        &self.rect
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Step length along an axis.
    pub fn step(&self, axis: usize) -> F {
        let n = F::of((self.shape[axis] - 1) as f64);
        (self.rect.hi[axis] - self.rect.lo[axis]) / n
    }

    /// Node coordinates along an axis.
    pub fn axis_coords(&self, axis: usize) -> Vec<F> {
        let h = self.step(axis);
        (0..self.shape[axis])
            .map(|i| self.rect.lo[axis] + h * F::of(i as f64))
            .collect()
    }

    /// Multi-index of a flat node index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = flat % self.shape[axis];
            flat /= self.shape[axis];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0usize;
        for (axis, &i) in idx.iter().enumerate() {
            flat = flat * self.shape[axis] + i;
        }
        flat
    }

    /// Coordinates of a node, written into `buf`.
    pub fn node_into(&self, flat: usize, buf: &mut Vec<F>) {
        buf.clear();
        let idx = self.multi_index(flat);
        for (axis, &i) in idx.iter().enumerate() {
            buf.push(self.rect.lo[axis] + self.step(axis) * F::of(i as f64));
        }
    }

    pub fn node(&self, flat: usize) -> Vec<F> {
        let mut buf = Vec::with_capacity(self.dim());
        self.node_into(flat, &mut buf);
        buf
    }

    /// Composite trapezoid weight of a node (product over axes of `h`, or
    /// `h/2` at the axis ends).
    pub fn trapezoid_weight(&self, flat: usize) -> F {
        let idx = self.multi_index(flat);
        let half = F::of(0.5);
        let mut w = F::one();
        for (axis, &i) in idx.iter().enumerate() {
            let h = self.step(axis);
            w = w * if i == 0 || i == self.shape[axis] - 1 {
                h * half
            } else {
                h
            };
        }
        w
    }

    /// Evaluate a function on every node.
    pub fn tabulate(&self, f: impl Fn(&[F]) -> F) -> Vec<F> {
        let mut buf = Vec::with_capacity(self.dim());
        (0..self.len())
            .map(|i| {
                self.node_into(i, &mut buf);
                f(&buf)
            })
            .collect()
    }

    /// Composite trapezoid integral of tabulated values.
    pub fn integrate(&self, values: &[F]) -> F {
        debug_assert_eq!(values.len(), self.len());
        let mut acc = F::zero();
        for (i, v) in values.iter().enumerate() {
            acc += self.trapezoid_weight(i) * *v;
        }
        acc
    }

    /// Trapezoid integral restricted to nodes where the predicate holds.
    pub fn integrate_where(&self, values: &[F], pred: impl Fn(&[F]) -> bool) -> F {
        debug_assert_eq!(values.len(), self.len());
        let mut buf = Vec::with_capacity(self.dim());
        let mut acc = F::zero();
        for (i, v) in values.iter().enumerate() {
            self.node_into(i, &mut buf);
            if pred(&buf) {
                acc += self.trapezoid_weight(i) * *v;
            }
        }
        acc
    }

    /// Coarsened grid keeping every other node (node counts must be odd for
    /// the sub-lattice to share endpoints; callers use this for residual
    /// estimation where exact sharing is not required).
    pub fn values_on_coarse(&self, values: &[F]) -> (Grid<F>, Vec<F>) {
        let shape: Vec<usize> = self.shape.iter().map(|&n| n.div_ceil(2).max(2)).collect();
        let coarse = Grid::new(self.rect.clone(), shape.clone()).expect("valid coarse grid");
        let vals = (0..coarse.len())
            .map(|flat| {
                let idx = coarse.multi_index(flat);
                let fine_idx: Vec<usize> = idx
                    .iter()
                    .enumerate()
                    .map(|(axis, &i)| (i * 2).min(self.shape[axis] - 1))
                    .collect();
                values[self.flat_index(&fine_idx)]
            })
            .collect();
        (coarse, vals)
    }

    /// Marginalize tabulated values onto the kept axes by trapezoid sums
    /// over the dropped axes.
    pub fn marginalize(&self, values: &[F], keep: &[usize]) -> Result<(Grid<F>, Vec<F>)> {
        for &a in keep {
            if a >= self.dim() {
                return Err(CoreError::AxisOutOfRange {
                    axis: a,
                    dim: self.dim(),
                });
            }
        }
        let mut keep_sorted = keep.to_vec();
        keep_sorted.sort_unstable();
        keep_sorted.dedup();
        if keep_sorted.len() != keep.len() {
            return Err(CoreError::InvalidConfig(
                "kept axes must be distinct".into(),
            ));
        }
        let dropped: Vec<usize> = (0..self.dim()).filter(|a| !keep_sorted.contains(a)).collect();
        let out_rect = self.rect.project(&keep_sorted)?;
        let out_shape: Vec<usize> = keep_sorted.iter().map(|&a| self.shape[a]).collect();
        let out = Grid::new(out_rect, out_shape)?;
        let mut acc = vec![F::zero(); out.len()];
        let half = F::of(0.5);
        for (flat, v) in values.iter().enumerate() {
            let idx = self.multi_index(flat);
            let mut w = F::one();
            for &axis in &dropped {
                let h = self.step(axis);
                let i = idx[axis];
                w = w * if i == 0 || i == self.shape[axis] - 1 {
                    h * half
                } else {
                    h
                };
            }
            let out_idx: Vec<usize> = keep_sorted.iter().map(|&a| idx[a]).collect();
            acc[out.flat_index(&out_idx)] += w * *v;
        }
        Ok((out, acc))
    }
}

/// Nonnegative values tabulated on a grid.
#[derive(Debug, Clone)]
pub struct GridDensity<F> {
    grid: Grid<F>,
    values: Vec<F>,
}

impl<F: Scalar> GridDensity<F> {
    pub fn new(grid: Grid<F>, values: Vec<F>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(CoreError::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < F::zero()) {
            return Err(CoreError::InvalidConfig(
                "grid density values must be finite and nonnegative".into(),
            ));
        }
        Ok(GridDensity { grid, values })
    }

    pub fn from_fn(grid: Grid<F>, f: impl Fn(&[F]) -> F) -> Result<Self> {
        let values = grid.tabulate(f);
        GridDensity::new(grid, values)
    }

    pub fn grid(&self) -> &Grid<F> {
        &self.grid
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn mass(&self) -> F {
        self.grid.integrate(&self.values)
    }

    /// Write as CSV: header `axis0,...,axisK,value`, row-major over the
    /// lattice, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = self.grid.dim();
        let mut header: Vec<String> = (0..dim).map(|a| format!("axis{a}")).collect();
        header.push("value".into());
        writeln!(w, "{}", header.join(","))?;
        let mut buf = Vec::with_capacity(dim);
        for (i, v) in self.values.iter().enumerate() {
            self.grid.node_into(i, &mut buf);
            let mut row: Vec<String> = buf.iter().map(|x| format!("{:.16e}", x.f64())).collect();
            row.push(format!("{:.16e}", v.f64()));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Read values written by [`GridDensity::write_csv`], matched against a
    /// grid the caller reconstructs (the CSV stores node coordinates, not
    /// the lattice definition).
    pub fn read_csv_values<R: std::io::Read>(r: R, grid: &Grid<F>) -> Result<Vec<F>> {
        let reader = BufReader::new(r);
        let mut values = Vec::with_capacity(grid.len());
        for (ln, line) in reader.lines().enumerate() {
            let line = line?;
            if ln == 0 || line.trim().is_empty() {
                continue;
            }
            let last = line
                .rsplit(',')
                .next()
                .ok_or_else(|| CoreError::Parse(format!("line {ln}: empty row")))?;
            let v: f64 = last
                .trim()
                .parse()
                .map_err(|e| CoreError::Parse(format!("line {ln}: {e}")))?;
            values.push(F::of(v));
        }
        if values.len() != grid.len() {
            return Err(CoreError::GridMismatch(format!(
                "csv has {} rows for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_square() -> Rect<f64> {
        Rect::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let g = Grid::new(Rect::interval(0.0, 2.0).unwrap(), vec![33]).unwrap();
        let vals = g.tabulate(|x| 3.0 * x[0] + 1.0);
        assert_relative_eq!(g.integrate(&vals), 8.0, epsilon = 1e-12);
    }

    #[test]
    fn trapezoid_2d_constant() {
        let g = Grid::new(unit_square(), vec![17, 9]).unwrap();
        let vals = g.tabulate(|_| 2.0);
        assert_relative_eq!(g.integrate(&vals), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn marginalize_product_density() {
        // f(x, y) = g(x) h(y) marginalizes to g(x) * integral(h)
        let g = Grid::new(unit_square(), vec![65, 65]).unwrap();
        let vals = g.tabulate(|x| (1.0 + x[0]) * (2.0 - x[1]));
        let (gx, mx) = g.marginalize(&vals, &[0]).unwrap();
        let coords = gx.axis_coords(0);
        for (c, m) in coords.iter().zip(&mx) {
            assert_relative_eq!(*m, (1.0 + c) * 1.5, epsilon = 1e-10);
        }
        // keep all axes: identity
        let (gall, vall) = g.marginalize(&vals, &[0, 1]).unwrap();
        assert_eq!(gall.shape(), g.shape());
        assert_eq!(vall, vals);
    }

    #[test]
    fn marginalize_bad_axis_errors() {
        let g = Grid::new(unit_square(), vec![5, 5]).unwrap();
        let vals = g.tabulate(|_| 1.0);
        assert!(matches!(
            g.marginalize(&vals, &[2]),
            Err(CoreError::AxisOutOfRange { .. })
        ));
    }

    #[test]
    fn csv_roundtrip() {
        let g = Grid::new(Rect::interval(0.0, 1.0).unwrap(), vec![11]).unwrap();
        let d = GridDensity::from_fn(g.clone(), |x: &[f64]| (x[0] * 3.7).exp()).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let vals = GridDensity::read_csv_values(buf.as_slice(), &g).unwrap();
        for (a, b) in vals.iter().zip(d.values()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn integrate_where_splits_mass() {
        let g = Grid::new(Rect::interval(0.0, 1.0).unwrap(), vec![4097]).unwrap();
        let vals = g.tabulate(|_| 1.0);
        let left = g.integrate_where(&vals, |x| x[0] <= 0.5);
        let right = g.integrate_where(&vals, |x| x[0] > 0.5);
        assert_relative_eq!(left + right, 1.0, epsilon = 1e-12);
        assert_relative_eq!(left, 0.5, epsilon = 1e-3);
    }
}
