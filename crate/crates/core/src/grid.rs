//! Uniform 1D grid numerics shared by every solver: trapezoid quadrature,
//! linear interpolation, and the second central-difference Laplacian.

use crate::error::CoreError;

/// Uniform symmetric grid on [-L, L] with an odd number of nodes, so that
/// x = 0 is always a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    half_width: f64,
    n: usize,
}

impl Grid {
    pub fn new(half_width: f64, n: usize) -> Result<Self, CoreError> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(CoreError::Domain(format!(
                "grid half-width must be positive and finite, got {half_width}"
            )));
        }
        if n < 3 || n % 2 == 0 {
            return Err(CoreError::Domain(format!(
                "grid needs an odd node count >= 3 so that x = 0 is a node, got {n}"
            )));
        }
        Ok(Grid { half_width, n })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    /// Index of the node at x = 0.
    pub fn center(&self) -> usize {
        (self.n - 1) / 2
    }

    pub fn contains(&self, x: f64) -> bool {
        x.abs() <= self.half_width * (1.0 + 1e-12)
    }

    /// Samples a scalar field at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        let values = self.nodes().map(f).collect();
        GridFunction { grid: *self, values }
    }

    /// Node values of the indicator of a union of intervals, averaged over the
    /// dual cell [x_i - dx/2, x_i + dx/2]. Cell averaging keeps the
    /// Crank-Nicolson observables second order on discontinuous data.
    pub fn cell_averaged_indicator(&self, intervals: &[(f64, f64)]) -> GridFunction {
        let dx = self.spacing();
        let mut values = vec![0.0; self.n];
        for (i, x) in self.nodes().enumerate() {
            let (cell_lo, cell_hi) = (x - 0.5 * dx, x + 0.5 * dx);
            let mut covered = 0.0;
            for &(a, b) in intervals {
                let lo = a.max(cell_lo);
                let hi = b.min(cell_hi);
                if hi > lo {
                    covered += hi - lo;
                }
            }
            values[i] = (covered / dx).min(1.0);
        }
        GridFunction { grid: *self, values }
    }
}

/// Scalar field on a [`Grid`]: one value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, CoreError> {
        if values.len() != grid.len() {
            return Err(CoreError::Domain(format!(
                "value count {} does not match grid node count {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Domain("grid function contains non-finite values".into()));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        GridFunction { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        GridFunction { grid, values: vec![c; grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        let values = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        GridFunction { grid: self.grid, values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_difference(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        self.values
            .iter()
            .zip(other.values.iter())
            .fold(0.0, |m: f64, (&a, &b)| m.max((a - b).abs()))
    }

    /// Trapezoid-rule integral over [-L, L].
    pub fn quadrature(&self) -> f64 {
        let dx = self.grid.spacing();
        let n = self.values.len();
        let interior: f64 = self.values[1..n - 1].iter().sum();
        dx * (0.5 * self.values[0] + interior + 0.5 * self.values[n - 1])
    }

    /// Piecewise-linear interpolation; exact at nodes and on linear fields.
    pub fn interpolate(&self, x: f64) -> Result<f64, CoreError> {
        if !self.grid.contains(x) {
            return Err(CoreError::Domain(format!(
                "x = {x} outside grid [-{L}, {L}]",
                L = self.grid.half_width()
            )));
        }
        Ok(self.interpolate_unchecked(x))
    }

    /// Interpolation with clamping to the boundary nodes; callers that have
    /// already range-checked x use this on hot paths.
    #[inline]
    pub fn interpolate_unchecked(&self, x: f64) -> f64 {
        let dx = self.grid.spacing();
        let pos = (x + self.grid.half_width()) / dx;
        let n = self.values.len();
        if pos <= 0.0 {
            return self.values[0];
        }
        let rounded = pos.round();
        if (pos - rounded).abs() < 1e-9 {
            // Snap to the node so node evaluations are exact.
            let i = (rounded as usize).min(n - 1);
            return self.values[i];
        }
        let i = pos as usize;
        if i >= n - 1 {
            return self.values[n - 1];
        }
        let frac = pos - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// Second central difference at interior nodes; the boundary rows are left
    /// at zero for the caller's boundary condition to fill in.
    pub fn discrete_laplacian(&self) -> GridFunction {
        let dx2 = self.grid.spacing().powi(2);
        let n = self.values.len();
        let mut out = vec![0.0; n];
        for i in 1..n - 1 {
            out[i] = (self.values[i - 1] - 2.0 * self.values[i] + self.values[i + 1]) / dx2;
        }
        GridFunction { grid: self.grid, values: out }
    }

    /// Centered first derivative (one-sided at the ends).
    pub fn derivative(&self) -> GridFunction {
        let dx = self.grid.spacing();
        let n = self.values.len();
        let mut out = vec![0.0; n];
        out[0] = (self.values[1] - self.values[0]) / dx;
        out[n - 1] = (self.values[n - 1] - self.values[n - 2]) / dx;
        for i in 1..n - 1 {
            out[i] = (self.values[i + 1] - self.values[i - 1]) / (2.0 * dx);
        }
        GridFunction { grid: self.grid, values: out }
    }

    /// <f, g> = ∫ f g dx by trapezoid.
    pub fn inner(&self, other: &GridFunction) -> f64 {
        self.zip_with(other, |a, b| a * b).quadrature()
    }
}
