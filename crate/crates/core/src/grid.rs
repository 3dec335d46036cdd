//! Square sampling of the transverse plane and the unitary transforms between
//! its real-space (ρ) and momentum-space (q) representations.
//!
//! Sample `i` on either axis sits at `(i - N/2) * step`, so the origin is sample
//! `N/2` in both spaces (centered, fftshift-style ordering). The real step is
//! `2 * half_extent / N` and the momentum step is `π / half_extent`, giving
//! `N * Δρ * Δq = 2π` per axis.
//!
//! All lengths are dimensionless. The pipeline measures them in units of
//! `sqrt(L / σ_p)`, the length scale at which the double-Gaussian biphoton
//! kernel has Schmidt modes of waist `√2` in both spaces.
//!
//! The continuous transform pair is
//! `F(q) = (1/2π) ∫ f(ρ) exp(-i q·ρ) d²ρ`, `f(ρ) = (1/2π) ∫ F(q) exp(i q·ρ) d²q`,
//! discretized so that `Σ |f|² Δρ² = Σ |F|² Δq²` holds to rounding.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Space {
    Real,
    Momentum,
}

impl Space {
    pub fn tag(self) -> u32 {
        match self {
            Space::Real => 0,
            Space::Momentum => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Space::Real),
            1 => Some(Space::Momentum),
            _ => None,
        }
    }

    pub fn conjugate(self) -> Self {
        match self {
            Space::Real => Space::Momentum,
            Space::Momentum => Space::Real,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransverseGrid {
    n: usize,
    half_extent: f64,
}

impl TransverseGrid {
    pub const MIN_SAMPLES: usize = 8;

    pub fn new(samples_per_axis: usize, half_extent: f64) -> Result<Self> {
        if samples_per_axis < Self::MIN_SAMPLES {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least {} samples per axis, got {samples_per_axis}",
                Self::MIN_SAMPLES
            )));
        }
        if !samples_per_axis.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "grid sample count must be even, got {samples_per_axis}"
            )));
        }
        if !(half_extent.is_finite() && half_extent > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid half extent must be positive, got {half_extent}"
            )));
        }
        Ok(Self {
            n: samples_per_axis,
            half_extent,
        })
    }

    pub fn samples_per_axis(&self) -> usize {
        self.n
    }

    /// Total number of samples, `N²`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    pub fn real_step(&self) -> f64 {
        2.0 * self.half_extent / self.n as f64
    }

    pub fn momentum_step(&self) -> f64 {
        PI / self.half_extent
    }

    pub fn step(&self, space: Space) -> f64 {
        match space {
            Space::Real => self.real_step(),
            Space::Momentum => self.momentum_step(),
        }
    }

    /// Largest representable |coordinate| on one axis side, `N/2 * step`.
    pub fn axis_half_span(&self, space: Space) -> f64 {
        (self.n / 2) as f64 * self.step(space)
    }

    pub fn cell_area(&self, space: Space) -> f64 {
        let d = self.step(space);
        d * d
    }

    pub fn coordinate(&self, index: usize, space: Space) -> f64 {
        (index as f64 - (self.n / 2) as f64) * self.step(space)
    }

    pub fn coordinates(&self, space: Space) -> Vec<f64> {
        (0..self.n).map(|i| self.coordinate(i, space)).collect()
    }

    /// Same extent, `factor` times as many samples per axis.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.n * factor, self.half_extent)
    }

    /// Index of the sample at `-ρ` on the periodic grid.
    pub fn mirror_index(&self, index: usize) -> usize {
        (self.n - index) % self.n
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.n == other.n && self.half_extent.to_bits() == other.half_extent.to_bits()
    }
}

/// A complex function sampled on a [`TransverseGrid`], stored row-major with
/// `values[iy * N + ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: TransverseGrid,
    space: Space,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: TransverseGrid, space: Space, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "field has {} samples, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            space,
            values,
        })
    }

    pub fn zeros(grid: TransverseGrid, space: Space) -> Self {
        Self {
            grid,
            space,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Samples `f(x, y)` at every grid point of `space`.
    pub fn from_fn(
        grid: TransverseGrid,
        space: Space,
        mut f: impl FnMut(f64, f64) -> Complex64,
    ) -> Self {
        let coords = grid.coordinates(space);
        let mut values = Vec::with_capacity(grid.len());
        for &y in &coords {
            for &x in &coords {
                values.push(f(x, y));
            }
        }
        Self {
            grid,
            space,
            values,
        }
    }

    pub fn grid(&self) -> &TransverseGrid {
        &self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn at(&self, ix: usize, iy: usize) -> Complex64 {
        self.values[iy * self.grid.n + ix]
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            grid: self.grid,
            space: self.space,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        self.map(|v| v * factor)
    }

    /// `Σ |f|² ΔA`, summed in storage order.
    pub fn norm_sqr(&self) -> f64 {
        let sum: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        sum * self.grid.cell_area(self.space)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let norm = self.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Numerical(format!("cannot normalize field of norm {norm}")));
        }
        Ok(self.scaled(Complex64::new(1.0 / norm, 0.0)))
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch(format!(
                "grids differ: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        if self.space != other.space {
            return Err(Error::GridMismatch(format!(
                "spaces differ: {:?} vs {:?}",
                self.space, other.space
            )));
        }
        Ok(())
    }

    /// Pointwise product.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            grid: self.grid,
            space: self.space,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            grid: self.grid,
            space: self.space,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            grid: self.grid,
            space: self.space,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// The field evaluated at `-ρ` (or `-q`) on the periodic grid.
    pub fn mirrored(&self) -> Self {
        let n = self.grid.n;
        let mut values = Vec::with_capacity(self.values.len());
        for iy in 0..n {
            let my = self.grid.mirror_index(iy);
            for ix in 0..n {
                values.push(self.values[my * n + self.grid.mirror_index(ix)]);
            }
        }
        Self {
            grid: self.grid,
            space: self.space,
            values,
        }
    }

    /// Bilinear interpolation at an arbitrary point; `None` outside the sampled square.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<Complex64> {
        let n = self.grid.n;
        let step = self.grid.step(self.space);
        let tx = x / step + (n / 2) as f64;
        let ty = y / step + (n / 2) as f64;
        let last = (n - 1) as f64;
        if !(0.0..=last).contains(&tx) || !(0.0..=last).contains(&ty) {
            return None;
        }
        let ix = (tx.floor() as usize).min(n - 2);
        let iy = (ty.floor() as usize).min(n - 2);
        let fx = tx - ix as f64;
        let fy = ty - iy as f64;
        let v00 = self.at(ix, iy);
        let v10 = self.at(ix + 1, iy);
        let v01 = self.at(ix, iy + 1);
        let v11 = self.at(ix + 1, iy + 1);
        Some(
            v00 * ((1.0 - fx) * (1.0 - fy))
                + v10 * (fx * (1.0 - fy))
                + v01 * ((1.0 - fx) * fy)
                + v11 * (fx * fy),
        )
    }

    /// Unitary transform from real to momentum space.
    pub fn to_momentum(&self) -> Result<Self> {
        if self.space != Space::Real {
            return Err(Error::GridMismatch(
                "to_momentum expects a real-space field".into(),
            ));
        }
        Ok(self.transformed(Direction::Forward))
    }

    /// Inverse of [`ComplexField::to_momentum`].
    pub fn to_real(&self) -> Result<Self> {
        if self.space != Space::Momentum {
            return Err(Error::GridMismatch(
                "to_real expects a momentum-space field".into(),
            ));
        }
        Ok(self.transformed(Direction::Inverse))
    }

    fn transformed(&self, direction: Direction) -> Self {
        let n = self.grid.n;
        let plan = CenteredDft::new(n, direction);
        let mut data = self.values.clone();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for row in data.chunks_exact_mut(n) {
            plan.apply(row, &mut line);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); n];
        for ix in 0..n {
            for iy in 0..n {
                column[iy] = data[iy * n + ix];
            }
            plan.apply(&mut column, &mut line);
            for iy in 0..n {
                data[iy * n + ix] = column[iy];
            }
        }
        // Two unitary passes preserve Σ|f|²; rescale to the cell areas.
        let ratio = self.grid.real_step() / self.grid.momentum_step();
        let scale = match direction {
            Direction::Forward => ratio,
            Direction::Inverse => 1.0 / ratio,
        };
        for v in &mut data {
            *v *= scale;
        }
        let space = match direction {
            Direction::Forward => Space::Momentum,
            Direction::Inverse => Space::Real,
        };
        Self {
            grid: self.grid,
            space,
            values: data,
        }
    }
}

/// `⟨f, g⟩ = Σ conj(f) g ΔA`, summed in storage order.
pub fn inner_product(f: &ComplexField, g: &ComplexField) -> Result<Complex64> {
    f.check_compatible(g)?;
    Ok(dot_conj(&f.values, &g.values) * f.grid.cell_area(f.space))
}

/// `Σ conj(a_i) b_i` in index order.
pub(crate) fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// One-axis unitary DFT in centered ordering.
pub(crate) struct CenteredDft {
    fft: Arc<dyn Fft<f64>>,
    n: usize,
    scale: f64,
}

impl CenteredDft {
    pub(crate) fn new(n: usize, direction: Direction) -> Self {
        let mut planner = FftPlanner::new();
        let fft = match direction {
            Direction::Forward => planner.plan_fft_forward(n),
            Direction::Inverse => planner.plan_fft_inverse(n),
        };
        Self {
            fft,
            n,
            scale: 1.0 / (n as f64).sqrt(),
        }
    }

    /// Transforms `data` in place; `scratch` must have the same length.
    pub(crate) fn apply(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        let half = self.n / 2;
        for (i, v) in data.iter().enumerate() {
            scratch[(i + half) % self.n] = *v;
        }
        self.fft.process(scratch);
        for (k, v) in data.iter_mut().enumerate() {
            *v = scratch[(k + half) % self.n] * self.scale;
        }
    }
}

/// Continuum-normalized one-axis transform: `Σ|f|²Δρ = Σ|F|²Δq`.
pub(crate) fn transform_axis(
    values: &[Complex64],
    grid: &TransverseGrid,
    direction: Direction,
) -> Vec<Complex64> {
    let plan = CenteredDft::new(grid.n, direction);
    let mut data = values.to_vec();
    let mut scratch = vec![Complex64::new(0.0, 0.0); grid.n];
    plan.apply(&mut data, &mut scratch);
    let ratio = (grid.real_step() / grid.momentum_step()).sqrt();
    let scale = match direction {
        Direction::Forward => ratio,
        Direction::Inverse => 1.0 / ratio,
    };
    data.iter().map(|v| v * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gaussian(grid: TransverseGrid, space: Space, waist: f64) -> ComplexField {
        // Unit L2 norm: (2/π)^{1/2} / w * exp(-r²/w²)
        let amp = (2.0 / PI).sqrt() / waist;
        ComplexField::from_fn(grid, space, |x, y| {
            Complex64::new(amp * (-(x * x + y * y) / (waist * waist)).exp(), 0.0)
        })
    }

    #[test]
    fn grid_steps_follow_definition() {
        let g = TransverseGrid::new(64, 5.0).unwrap();
        assert!((g.real_step() - 0.15625).abs() < 1e-15);
        assert!((g.momentum_step() - 2.0 * PI / 10.0).abs() < 1e-15);
        let g = TransverseGrid::new(8, 1.0).unwrap();
        assert!((g.real_step() - 0.25).abs() < 1e-15);
        assert!((g.momentum_step() - PI).abs() < 1e-15);
        let product = g.samples_per_axis() as f64 * g.real_step() * g.momentum_step();
        assert!((product - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(TransverseGrid::new(7, 1.0).is_err());
        assert!(TransverseGrid::new(6, 1.0).is_err());
        assert!(TransverseGrid::new(8, 0.0).is_err());
        assert!(TransverseGrid::new(8, -1.0).is_err());
        assert!(TransverseGrid::new(8, f64::NAN).is_err());
    }

    #[test]
    fn origin_is_center_sample() {
        let g = TransverseGrid::new(16, 2.0).unwrap();
        assert_eq!(g.coordinate(8, Space::Real), 0.0);
        assert_eq!(g.coordinate(8, Space::Momentum), 0.0);
        assert_eq!(g.coordinate(0, Space::Real), -2.0);
        assert_eq!(g.mirror_index(8), 8);
        assert_eq!(g.mirror_index(9), 7);
        assert_eq!(g.mirror_index(0), 0);
    }

    #[test]
    fn gaussian_transforms_to_gaussian_of_inverse_waist() {
        let waist = 2f64.sqrt();
        let grid = TransverseGrid::new(64, 5.0 * waist).unwrap();
        let f = gaussian(grid, Space::Real, waist);
        let spectrum = f.to_momentum().unwrap();
        let expected = gaussian(grid, Space::Momentum, 2.0 / waist);
        let diff = spectrum.sub(&expected).unwrap();
        assert!(diff.norm() / expected.norm() < 1e-6, "rel err {}", diff.norm());
        assert!((spectrum.norm() - 1.0).abs() < 1e-6);

        // Narrow Gaussian: momentum waist 2/w = 2
        let f = gaussian(grid, Space::Real, 1.0);
        let spectrum = f.to_momentum().unwrap();
        let expected = gaussian(grid, Space::Momentum, 2.0);
        let diff = spectrum.sub(&expected).unwrap();
        assert!(diff.norm() / expected.norm() < 1e-6);
    }

    #[test]
    fn transform_requires_matching_space() {
        let grid = TransverseGrid::new(8, 1.0).unwrap();
        let f = ComplexField::zeros(grid, Space::Momentum);
        assert!(f.to_momentum().is_err());
        assert!(ComplexField::zeros(grid, Space::Real).to_real().is_err());
    }

    #[test]
    fn inner_product_examples() {
        let grid = TransverseGrid::new(64, 5.0 * 2f64.sqrt()).unwrap();
        let g = gaussian(grid, Space::Real, 2f64.sqrt());
        let ip = inner_product(&g, &g).unwrap();
        assert!((ip.re - 1.0).abs() < 1e-10 && ip.im == 0.0);
        let odd = ComplexField::from_fn(grid, Space::Real, |x, y| {
            Complex64::new(x * (-(x * x + y * y) / 2.0).exp(), 0.0)
        });
        assert!(inner_product(&g, &odd).unwrap().norm() < 1e-10);
    }

    #[test]
    fn inner_product_rejects_mismatch() {
        let a = ComplexField::zeros(TransverseGrid::new(8, 1.0).unwrap(), Space::Real);
        let b = ComplexField::zeros(TransverseGrid::new(8, 2.0).unwrap(), Space::Real);
        let c = ComplexField::zeros(TransverseGrid::new(8, 1.0).unwrap(), Space::Momentum);
        assert!(inner_product(&a, &b).is_err());
        assert!(inner_product(&a, &c).is_err());
    }

    #[test]
    fn bilinear_reproduces_samples_and_linear_functions() {
        let grid = TransverseGrid::new(16, 2.0).unwrap();
        let f = ComplexField::from_fn(grid, Space::Real, |x, y| Complex64::new(2.0 * x - y, x + 0.5));
        let v = f.sample_bilinear(0.3, -0.71).unwrap();
        assert!((v - Complex64::new(0.6 + 0.71, 0.8)).norm() < 1e-12);
        let s = f.sample_bilinear(grid.coordinate(3, Space::Real), grid.coordinate(5, Space::Real));
        assert_eq!(s.unwrap(), f.at(3, 5));
        assert!(f.sample_bilinear(2.0, 0.0).is_none());
        assert!(f.sample_bilinear(0.0, -2.01).is_none());
    }

    #[test]
    fn mirrored_is_involution() {
        let grid = TransverseGrid::new(8, 1.0).unwrap();
        let f = ComplexField::from_fn(grid, Space::Real, |x, y| Complex64::new(x, y * y));
        let m = f.mirrored();
        assert_eq!(m.at(5, 4), f.at(3, 4));
        assert_eq!(m.mirrored(), f);
    }

    fn arb_field() -> impl Strategy<Value = ComplexField> {
        let grid = TransverseGrid::new(8, 1.5).unwrap();
        prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 64).prop_map(move |v| {
            ComplexField::new(
                grid,
                Space::Real,
                v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn parseval_holds(f in arb_field()) {
            let n0 = f.norm_sqr();
            let n1 = f.to_momentum().unwrap().norm_sqr();
            prop_assert!((n0 - n1).abs() <= 1e-12 * n0.max(1e-300));
        }

        #[test]
        fn round_trip_reproduces_input(f in arb_field()) {
            let back = f.to_momentum().unwrap().to_real().unwrap();
            let err = back.sub(&f).unwrap().norm();
            prop_assert!(err <= 1e-12 * f.norm().max(1e-300));
        }

        #[test]
        fn inner_product_is_conjugate_symmetric(f in arb_field(), g in arb_field()) {
            let a = inner_product(&f, &g).unwrap();
            let b = inner_product(&g, &f).unwrap();
            prop_assert_eq!(a, b.conj());
        }
    }
}
