//! Synthetic charge densities used by tests, benches and the CLI demos.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Space, TransverseGrid};
use crate::matter::ChargeDensity;

fn sigmoid_disk(r: f64, radius: f64, edge: f64) -> f64 {
    1.0 / (1.0 + ((r - radius) / edge).exp())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// Real disk `1/(1 + exp((|ρ| - radius)/edge))`.
pub fn disk(grid: &TransverseGrid, radius: f64, edge: f64) -> Result<ChargeDensity> {
    check_positive("radius", radius)?;
    check_positive("edge", edge)?;
    let f = ComplexField::from_fn(*grid, Space::Real, |x, y| {
        Complex64::new(sigmoid_disk(x.hypot(y), radius, edge), 0.0)
    });
    ChargeDensity::new(f, format!("disk(radius={radius},edge={edge})"))
}

/// Disk of diameter `l_obj` carrying the radial phase `exp(-i 2π |ρ| / (l_obj/3))`.
pub fn phase_disk(grid: &TransverseGrid, l_obj: f64, edge: f64) -> Result<ChargeDensity> {
    check_positive("object size", l_obj)?;
    check_positive("edge", edge)?;
    let k = 2.0 * PI / (l_obj / 3.0);
    let f = ComplexField::from_fn(*grid, Space::Real, |x, y| {
        let r = x.hypot(y);
        Complex64::from_polar(sigmoid_disk(r, l_obj / 2.0, edge), -k * r)
    });
    ChargeDensity::new(f, format!("phase-disk(l_obj={l_obj},edge={edge})"))
}

/// The programmed phase `-2π |ρ| / (l_obj/3)` of [`phase_disk`], per pixel.
pub fn phase_disk_phase(grid: &TransverseGrid, l_obj: f64) -> Vec<f64> {
    let k = 2.0 * PI / (l_obj / 3.0);
    let c = grid.coordinates(Space::Real);
    let n = c.len();
    (0..grid.len()).map(|p| -k * c[p % n].hypot(c[p / n])).collect()
}

/// A single unit pixel at `(ix, iy)`.
pub fn point(grid: &TransverseGrid, ix: usize, iy: usize) -> Result<ChargeDensity> {
    let n = grid.samples_per_axis();
    if ix >= n || iy >= n {
        return Err(Error::InvalidParameter(format!("pixel ({ix},{iy}) outside a {n}x{n} grid")));
    }
    let mut f = ComplexField::zeros(*grid, Space::Real);
    f.values_mut()[iy * n + ix] = Complex64::new(1.0, 0.0);
    ChargeDensity::new(f, format!("point({ix},{iy})"))
}

/// Centered real Gaussian `exp(-|ρ|²/width²)`.
pub fn gaussian(grid: &TransverseGrid, width: f64) -> Result<ChargeDensity> {
    check_positive("width", width)?;
    let f = ComplexField::from_fn(*grid, Space::Real, |x, y| {
        Complex64::new((-(x * x + y * y) / (width * width)).exp(), 0.0)
    });
    ChargeDensity::new(f, format!("gaussian(width={width})"))
}

/// Independent uniform real and imaginary parts in `[-1, 1)`.
pub fn random_complex(grid: &TransverseGrid, seed: u64) -> Result<ChargeDensity> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    ChargeDensity::new(
        ComplexField::new(*grid, Space::Real, values)?,
        format!("random(seed={seed})"),
    )
}
