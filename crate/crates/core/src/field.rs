//! Periodic grids and grid-sampled scalar and vector fields.
//!
//! Samples live at `x_j = j * 2π / n` along every axis and are stored
//! row-major with the first axis slowest. Fields are immutable after
//! construction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::FieldError;

/// Uniform periodic Cartesian grid on `[0, 2π)^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self, FieldError> {
        if dim != 2 && dim != 3 {
            return Err(FieldError::InvalidGrid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if n < 8 || !n.is_multiple_of(2) {
            return Err(FieldError::InvalidGrid(format!(
                "resolution must be even and at least 8, got {n}"
            )));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of samples, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn period(&self) -> f64 {
        2.0 * PI
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn domain_volume(&self) -> f64 {
        (2.0 * PI).powi(self.dim as i32)
    }

    /// Largest retained wavenumber component under the 2/3 rule.
    pub fn dealias_cutoff(&self) -> usize {
        self.n / 3
    }

    /// Signed wavenumber of FFT bin `j`. The Nyquist bin maps to `+n/2`.
    #[inline]
    pub fn wavenumber(&self, j: usize) -> i64 {
        let n = self.n as i64;
        let j = j as i64;
        if j <= n / 2 {
            j
        } else {
            j - n
        }
    }

    #[inline]
    pub fn is_nyquist(&self, j: usize) -> bool {
        j == self.n / 2
    }

    /// Multi-index of a flat index; unused trailing entries are zero.
    #[inline]
    pub fn unravel(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    /// Flat index of a multi-index, wrapping each entry periodically.
    #[inline]
    pub fn index_wrapped(&self, multi: [i64; 3]) -> usize {
        let n = self.n as i64;
        let mut idx = 0usize;
        for &m in multi.iter().take(self.dim) {
            idx = idx * self.n + m.rem_euclid(n) as usize;
        }
        idx
    }

    #[inline]
    pub fn index(&self, multi: [usize; 3]) -> usize {
        let mut idx = 0usize;
        for &m in multi.iter().take(self.dim) {
            idx = idx * self.n + m;
        }
        idx
    }

    /// Physical coordinates of sample `idx`; unused trailing entries are zero.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let m = self.unravel(idx);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = m[axis] as f64 * h;
        }
        x
    }
}

/// Real scalar field sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    mean: f64,
}

impl ScalarField {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(pos));
        }
        Ok(Self::from_finite(grid, values))
    }

    /// Construct from values already known to be finite and of the right length.
    pub(crate) fn from_finite(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Self { grid, values, mean }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self::from_finite(grid, vec![value; grid.len()])
    }

    /// Samples `f` at every grid point. Trailing coordinates beyond `dim` are zero.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self::from_finite(grid, values)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rectangle-rule integral over the torus (spectrally exact for band-limited fields).
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_finite(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_finite(self.grid, values)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn shift(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// Periodic multilinear interpolation at an arbitrary point.
    pub fn interpolate(&self, x: [f64; 3]) -> f64 {
        let h = self.grid.spacing();
        let dim = self.grid.dim();
        let mut base = [0i64; 3];
        let mut frac = [0.0; 3];
        for axis in 0..dim {
            let s = x[axis] / h;
            let fl = s.floor();
            base[axis] = fl as i64;
            frac[axis] = s - fl;
        }
        let corners = 1usize << dim;
        let mut acc = 0.0;
        for corner in 0..corners {
            let mut w = 1.0;
            let mut m = [0i64; 3];
            for axis in 0..dim {
                let bit = (corner >> axis) & 1;
                m[axis] = base[axis] + bit as i64;
                w *= if bit == 1 { frac[axis] } else { 1.0 - frac[axis] };
            }
            if w != 0.0 {
                acc += w * self.values[self.grid.index_wrapped(m)];
            }
        }
        acc
    }

    /// Periodic tensor-product cubic Lagrange interpolation on the four
    /// nearest samples per axis. Fourth-order accurate for smooth fields.
    pub fn interpolate_cubic(&self, x: [f64; 3]) -> f64 {
        let h = self.grid.spacing();
        let dim = self.grid.dim();
        let mut base = [0i64; 3];
        let mut weights = [[1.0, 0.0, 0.0, 0.0]; 3];
        for axis in 0..dim {
            let s = x[axis] / h;
            let fl = s.floor();
            base[axis] = fl as i64;
            weights[axis] = cubic_weights(s - fl);
        }
        let taps = if dim == 3 { 4 } else { 1 };
        let mut acc = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..taps {
                    let w = weights[0][a] * weights[1][b] * weights[2][c];
                    let m = [
                        base[0] + a as i64 - 1,
                        base[1] + b as i64 - 1,
                        base[2] + c as i64 - if dim == 3 { 1 } else { 0 },
                    ];
                    acc += w * self.values[self.grid.index_wrapped(m)];
                }
            }
        }
        acc
    }
}

/// Lagrange weights on the nodes `-1, 0, 1, 2` at `t ∈ [0, 1)`.
fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Vector field with one [`ScalarField`] per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<ScalarField>,
    divergence_free: bool,
}

impl VectorField {
    /// Builds an unflagged vector field. Use [`crate::spectral::leray_project`]
    /// or [`VectorField::mark_divergence_free`] to obtain a flagged one.
    pub fn new(components: Vec<ScalarField>) -> Result<Self, FieldError> {
        let grid = components
            .first()
            .map(ScalarField::grid)
            .ok_or(FieldError::ComponentCount { expected: 2, got: 0 })?;
        if components.len() != grid.dim() {
            return Err(FieldError::ComponentCount {
                expected: grid.dim(),
                got: components.len(),
            });
        }
        if components.iter().any(|c| c.grid() != grid) {
            return Err(FieldError::GridMismatch);
        }
        Ok(Self {
            grid,
            components,
            divergence_free: false,
        })
    }

    pub(crate) fn from_parts(components: Vec<ScalarField>, divergence_free: bool) -> Self {
        let grid = components[0].grid();
        Self {
            grid,
            components,
            divergence_free,
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::from_parts(vec![ScalarField::zeros(grid); grid.dim()], true)
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let comps = (0..grid.dim())
            .map(|axis| ScalarField::from_fn(grid, |x| f(x)[axis]))
            .collect();
        Self::from_parts(comps, false)
    }

    /// Sets the divergence-free flag after measuring the spectral divergence.
    pub fn mark_divergence_free(self) -> Result<Self, FieldError> {
        let div = crate::spectral::divergence(&self).max_abs();
        let scale = self.max_abs();
        if div <= crate::spectral::SOLENOIDAL_TOLERANCE * scale {
            Ok(Self {
                divergence_free: true,
                ..self
            })
        } else {
            Err(FieldError::NotSolenoidal {
                divergence: div,
                scale,
            })
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    pub fn is_divergence_free(&self) -> bool {
        self.divergence_free
    }

    /// Largest component magnitude over all samples.
    pub fn max_abs(&self) -> f64 {
        self.components.iter().map(ScalarField::max_abs).fold(0.0, f64::max)
    }

    /// Largest pointwise Euclidean norm.
    pub fn max_norm(&self) -> f64 {
        self.norm_sq().max().sqrt()
    }

    pub fn dot(&self, other: &Self) -> ScalarField {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let mut acc = vec![0.0; self.grid.len()];
        for (a, b) in self.components.iter().zip(&other.components) {
            for ((o, &x), &y) in acc.iter_mut().zip(a.values()).zip(b.values()) {
                *o += x * y;
            }
        }
        ScalarField::from_finite(self.grid, acc)
    }

    pub fn norm_sq(&self) -> ScalarField {
        self.dot(self)
    }

    pub fn norm(&self) -> ScalarField {
        self.norm_sq().map(f64::sqrt)
    }

    /// Linear combination `a * self + b * other`; the result keeps the flag
    /// only when both inputs carry it.
    pub fn axpby(&self, a: f64, other: &Self, b: f64) -> Self {
        let comps = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(x, y)| x.zip_with(y, |p, q| a * p + b * q))
            .collect();
        Self::from_parts(comps, self.divergence_free && other.divergence_free)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_parts(
            self.components.iter().map(|c| c.scale(s)).collect(),
            self.divergence_free,
        )
    }

    /// Drops the divergence-free flag.
    pub fn unflagged(self) -> Self {
        Self {
            divergence_free: false,
            ..self
        }
    }

    pub fn interpolate(&self, x: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (axis, c) in self.components.iter().enumerate() {
            out[axis] = c.interpolate(x);
        }
        out
    }

    pub fn interpolate_cubic(&self, x: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (axis, c) in self.components.iter().enumerate() {
            out[axis] = c.interpolate_cubic(x);
        }
        out
    }

    /// Kinetic energy `½ ∫ |v|² dx`.
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.norm_sq().integral()
    }
}
