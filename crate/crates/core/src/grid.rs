//! Uniform tensor-product grids, fourth-order finite differences and quadrature.
//!
//! Every axis is centred on the origin with on-point sampling. Stencils treat
//! values outside the box as zero (hard-wall Dirichlet box).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest number of points an axis may carry: the five-point stencil plus
/// a boundary layer on each side.
pub const MIN_POINTS: usize = 7;

/// Fourth-order central second-derivative stencil, offsets 0, ±1, ±2.
const STENCIL: [f64; 3] = [-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("axis length {length} and spacing {spacing} must both be positive and finite")]
    InvalidAxis { length: f64, spacing: f64 },
    #[error("axis length {length} is not commensurate with spacing {spacing}")]
    NonCommensurate { length: f64, spacing: f64 },
    #[error("axis has {points} points, at least {min} are required")]
    TooSmall { points: usize, min: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("expected {expected} values, got {actual}")]
    ValueCount { expected: usize, actual: usize },
}

/// Requested extent of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub length: f64,
    pub spacing: f64,
}

impl AxisSpec {
    pub fn new(length: f64, spacing: f64) -> Self {
        Self { length, spacing }
    }
}

/// One uniform axis with points `x_i = (i - (n-1)/2) h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    spacing: f64,
    points: usize,
}

impl Axis {
    /// Builds an axis without the stencil-size floor. Useful for quadrature
    /// on tiny axes; solver grids go through [`make_grid`].
    pub fn new(spec: AxisSpec) -> Result<Self, GridError> {
        let AxisSpec { length, spacing } = spec;
        if !(length > 0.0 && spacing > 0.0 && length.is_finite() && spacing.is_finite()) {
            return Err(GridError::InvalidAxis { length, spacing });
        }
        let ratio = length / spacing;
        let cells = ratio.round();
        if (ratio - cells).abs() > 0.5 || cells < 1.0 {
            return Err(GridError::NonCommensurate { length, spacing });
        }
        Ok(Self {
            spacing,
            points: cells as usize + 1,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    /// Effective box length `(n - 1) h`.
    pub fn length(&self) -> f64 {
        (self.points - 1) as f64 * self.spacing
    }

    pub fn point(&self, i: usize) -> f64 {
        (i as f64 - 0.5 * (self.points - 1) as f64) * self.spacing
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.point(i)).collect()
    }

    /// Riemann sum of on-point samples.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.spacing * values.iter().sum::<f64>()
    }
}

/// Tensor-product mesh; values are stored row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    axes: Vec<Axis>,
}

/// Builds a solver grid. Every axis needs at least [`MIN_POINTS`] points.
pub fn make_grid(axes: &[AxisSpec]) -> Result<UniformGrid, GridError> {
    let axes = axes
        .iter()
        .map(|spec| {
            let axis = Axis::new(*spec)?;
            if axis.len() < MIN_POINTS {
                return Err(GridError::TooSmall {
                    points: axis.len(),
                    min: MIN_POINTS,
                });
            }
            Ok(axis)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(UniformGrid { axes })
}

impl UniformGrid {
    pub fn from_axes(axes: Vec<Axis>) -> Self {
        Self { axes }
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, index: usize) -> &Axis {
        &self.axes[index]
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Axis::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume element `Π h_a`.
    pub fn volume_element(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let dims = self.dims();
        let mut strides = vec![1; dims.len()];
        for a in (0..dims.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        strides
    }

    /// Multi-index of a flat position.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let dims = self.dims();
        let mut idx = vec![0; dims.len()];
        for a in (0..dims.len()).rev() {
            idx[a] = flat % dims[a];
            flat /= dims[a];
        }
        idx
    }

    /// Coordinates of a flat position.
    pub fn coordinates(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, axis)| axis.point(i))
            .collect()
    }

    /// Grid obtained by repeating this grid's axes `copies` times, e.g. the
    /// configuration space of two particles.
    pub fn power(&self, copies: usize) -> Self {
        let mut axes = Vec::with_capacity(self.axes.len() * copies);
        for _ in 0..copies {
            axes.extend_from_slice(&self.axes);
        }
        Self { axes }
    }

    /// Samples `f` at every grid point.
    pub fn sample<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> Field {
        let mut coords = vec![0.0; self.ndim()];
        let values = (0..self.len())
            .map(|flat| {
                for (a, &i) in self.unravel(flat).iter().enumerate() {
                    coords[a] = self.axes[a].point(i);
                }
                f(&coords)
            })
            .collect();
        Field {
            grid: self.clone(),
            values,
        }
    }
}

/// Real samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: UniformGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::ValueCount {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &UniformGrid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn grid(&self) -> &UniformGrid {
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

    pub fn norm(&self) -> f64 {
        inner_product_values(&self.grid, &self.values, &self.values).sqrt()
    }

    /// Scales to unit L2 norm; returns the previous norm.
    pub fn normalize(&mut self) -> f64 {
        let norm = self.norm();
        if norm > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= norm);
        }
        norm
    }
}

/// Sum of second derivatives along the selected axes.
pub fn apply_laplacian(f: &Field, axes: &[usize]) -> Field {
    let mut out = vec![0.0; f.values.len()];
    let dims = f.grid.dims();
    for &a in axes {
        let h = f.grid.axis(a).spacing();
        add_second_derivative(&f.values, &dims, a, 1.0 / (h * h), &mut out);
    }
    Field {
        grid: f.grid.clone(),
        values: out,
    }
}

/// Accumulates `scale * d²f/da²` along axis `axis` into `out`, with zero
/// padding outside the box. `scale` normally carries `1/h²` and any prefactor.
pub fn add_second_derivative(f: &[f64], dims: &[usize], axis: usize, scale: f64, out: &mut [f64]) {
    let n = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let c0 = STENCIL[0] * scale;
    let c1 = STENCIL[1] * scale;
    let c2 = STENCIL[2] * scale;
    if inner == 1 {
        for o in 0..outer {
            let base = o * n;
            let line = &f[base..base + n];
            let dst = &mut out[base..base + n];
            for i in 0..n {
                let mut acc = c0 * line[i];
                if i >= 1 {
                    acc += c1 * line[i - 1];
                }
                if i >= 2 {
                    acc += c2 * line[i - 2];
                }
                if i + 1 < n {
                    acc += c1 * line[i + 1];
                }
                if i + 2 < n {
                    acc += c2 * line[i + 2];
                }
                dst[i] += acc;
            }
        }
        return;
    }
    for o in 0..outer {
        let base = o * n * inner;
        for i in 0..n {
            let dst_start = base + i * inner;
            for (offset, c) in [(-2isize, c2), (-1, c1), (0, c0), (1, c1), (2, c2)] {
                let j = i as isize + offset;
                if j < 0 || j >= n as isize {
                    continue;
                }
                let src_start = base + j as usize * inner;
                let src = &f[src_start..src_start + inner];
                let dst = &mut out[dst_start..dst_start + inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += c * s;
                }
            }
        }
    }
}

/// `(Π h_a) Σ f`, summed in storage order.
pub fn integrate(f: &Field) -> f64 {
    f.grid.volume_element() * f.values.iter().sum::<f64>()
}

/// `∫ f g` for real fields on the same grid.
pub fn inner_product(f: &Field, g: &Field) -> Result<f64, GridError> {
    if f.grid != g.grid {
        return Err(GridError::GridMismatch);
    }
    Ok(inner_product_values(&f.grid, &f.values, &g.values))
}

pub(crate) fn inner_product_values(grid: &UniformGrid, f: &[f64], g: &[f64]) -> f64 {
    grid.volume_element() * dot(f, g)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(length: f64, spacing: f64) -> UniformGrid {
        make_grid(&[AxisSpec::new(length, spacing)]).unwrap()
    }

    #[test]
    fn three_point_axis() {
        let axis = Axis::new(AxisSpec::new(2.0, 1.0)).unwrap();
        assert_eq!(axis.points(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(axis.integrate(&[1.0, 1.0, 1.0]), 3.0);
        assert!(matches!(
            make_grid(&[AxisSpec::new(2.0, 1.0)]),
            Err(GridError::TooSmall { points: 3, .. })
        ));
    }

    #[test]
    fn point_counts() {
        assert_eq!(line(20.0, 0.1).axis(0).len(), 201);
        let g = line(16.0, 0.14);
        assert_eq!(g.axis(0).len(), 115);
        assert!((g.axis(0).length() - 15.96).abs() < 1e-12);
    }

    #[test]
    fn invalid_axes() {
        assert!(matches!(
            Axis::new(AxisSpec::new(-1.0, 0.1)),
            Err(GridError::InvalidAxis { .. })
        ));
        assert!(matches!(
            Axis::new(AxisSpec::new(1.0, 0.0)),
            Err(GridError::InvalidAxis { .. })
        ));
        assert!(matches!(
            Axis::new(AxisSpec::new(0.1, 1.0)),
            Err(GridError::NonCommensurate { .. })
        ));
    }

    #[test]
    fn axis_is_symmetric() {
        for (l, h) in [(20.0, 0.1), (16.0, 0.14), (10.0, 0.25), (7.3, 0.3)] {
            let axis = Axis::new(AxisSpec::new(l, h)).unwrap();
            let n = axis.len();
            for i in 0..n {
                assert!((axis.point(i) + axis.point(n - 1 - i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn laplacian_of_quadratic_is_exact() {
        let g = line(4.0, 0.25);
        let f = g.sample(|c| c[0] * c[0]);
        let lap = apply_laplacian(&f, &[0]);
        let n = g.axis(0).len();
        for i in 2..n - 2 {
            assert!((lap.values()[i] - 2.0).abs() < 1e-10, "{}", lap.values()[i]);
        }
        let zero = Field::zeros(&g);
        assert!(apply_laplacian(&zero, &[0]).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_of_sine() {
        let g = line(20.0, 0.1);
        let f = g.sample(|c| c[0].sin());
        let lap = apply_laplacian(&f, &[0]);
        let n = g.axis(0).len();
        let err = (2..n - 2)
            .map(|i| (lap.values()[i] + g.axis(0).point(i).sin()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn laplacian_along_each_axis_of_2d_field() {
        let g = make_grid(&[AxisSpec::new(3.0, 0.25), AxisSpec::new(4.0, 0.5)]).unwrap();
        let f = g.sample(|c| c[0] * c[0] + 3.0 * c[1] * c[1]);
        let lap = apply_laplacian(&f, &[0, 1]);
        let dims = g.dims();
        for ix in 2..dims[0] - 2 {
            for iq in 2..dims[1] - 2 {
                assert!((lap.values()[ix * dims[1] + iq] - 8.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gaussian_quadrature() {
        let g = line(20.0, 0.1);
        let f = g.sample(|c| (-c[0] * c[0]).exp());
        assert!((integrate(&f) - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn normalized_field() {
        let g = make_grid(&[AxisSpec::new(10.0, 0.2), AxisSpec::new(8.0, 0.25)]).unwrap();
        let mut f = g.sample(|c| (-(c[0] * c[0] + 0.5 * c[1] * c[1])).exp());
        f.normalize();
        assert!((inner_product(&f, &f).unwrap() - 1.0).abs() < 1e-12);
        let other = Field::zeros(&line(10.0, 0.2));
        assert_eq!(inner_product(&f, &other), Err(GridError::GridMismatch));
    }

    #[test]
    fn quadrature_converges_under_refinement() {
        // Endpoints carry full weight, so the error is first order in h.
        let exact = 2.0 + 2.0 / 3.0;
        let err = |h: f64| (integrate(&line(2.0, h).sample(|c| 1.0 + c[0] * c[0])) - exact).abs();
        let (coarse, fine) = (err(0.2), err(0.1));
        assert!(fine < coarse);
        assert!((coarse / fine).log2() > 0.9, "{coarse} {fine}");
    }

    fn random_field(grid: &UniformGrid, seed: &[f64]) -> Field {
        let n = grid.len();
        let values = (0..n).map(|i| seed[i % seed.len()] * ((i * 7919) % 13) as f64).collect();
        Field::new(grid.clone(), values).unwrap()
    }

    proptest! {
        #[test]
        fn laplacian_symmetric_and_nonpositive(
            a in proptest::collection::vec(-1.0f64..1.0, 11..40),
            b in proptest::collection::vec(-1.0f64..1.0, 11..40),
        ) {
            let g = make_grid(&[AxisSpec::new(2.0, 0.2), AxisSpec::new(1.8, 0.2)]).unwrap();
            let f = random_field(&g, &a);
            let h = random_field(&g, &b);
            let lf = apply_laplacian(&f, &[0, 1]);
            let lh = apply_laplacian(&h, &[0, 1]);
            let lhs = inner_product(&f, &lh).unwrap();
            let rhs = inner_product(&lf, &h).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * f.norm() * h.norm() * 100.0 + 1e-12);
            prop_assert!(inner_product(&f, &lf).unwrap() <= 1e-12);
        }

        #[test]
        fn quadrature_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = line(6.0, 0.3);
            let f = g.sample(|c| c[0].cos());
            let h = g.sample(|c| c[0] * c[0]);
            let combo = Field::new(
                g.clone(),
                f.values().iter().zip(h.values()).map(|(x, y)| a * x + b * y).collect(),
            ).unwrap();
            let lhs = integrate(&combo);
            let rhs = a * integrate(&f) + b * integrate(&h);
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
