//! Hermite-Gauss and Laguerre-Gauss transverse modes.
//!
//! A [`ModeSpec`] describes a unit-norm real-space mode of waist `w`
//! (intensity `∝ exp(-2r²/w²)` for the fundamental). Its momentum-space
//! representation under the grid's transform convention is the same family
//! member with waist `2/w`, multiplied by `(-i)^n` where `n` is the total order.
//!
//! Mode sets are ordered by total order, and inside a shell by `n_x`
//! descending for Hermite-Gauss (`(1,0)` before `(0,1)`) and by `ℓ` descending
//! for Laguerre-Gauss (`ℓ = n, n-2, ..., -n` with `p = (n-|ℓ|)/2`).

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{inner_product, ComplexField, Space, TransverseGrid};

/// Largest tolerated deviation of a sampled mode's norm from 1 before the grid
/// is declared unable to represent it.
pub const NORM_TOLERANCE: f64 = 1e-3;
/// Gram-matrix deviation above which [`build_mode_set`] fails.
pub const GRAM_FAIL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeFamily {
    HermiteGauss,
    LaguerreGauss,
}

impl ModeFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModeFamily::HermiteGauss => "hermite_gauss",
            ModeFamily::LaguerreGauss => "laguerre_gauss",
        }
    }
}

impl std::str::FromStr for ModeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hermite_gauss" | "hg" => Ok(ModeFamily::HermiteGauss),
            "laguerre_gauss" | "lg" => Ok(ModeFamily::LaguerreGauss),
            _ => Err(Error::InvalidParameter(format!("unknown mode family '{s}'"))),
        }
    }
}

/// `index_a` is `n_x` (HG) or the radial index `p` (LG); `index_b` is `n_y`
/// (HG, non-negative) or the azimuthal charge `ℓ` (LG).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSpec {
    pub family: ModeFamily,
    pub index_a: u32,
    pub index_b: i32,
    pub waist: f64,
}

impl ModeSpec {
    pub fn new(family: ModeFamily, index_a: u32, index_b: i32, waist: f64) -> Result<Self> {
        if family == ModeFamily::HermiteGauss && index_b < 0 {
            return Err(Error::InvalidParameter(format!(
                "Hermite-Gauss index n_y must be non-negative, got {index_b}"
            )));
        }
        if !(waist.is_finite() && waist > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mode waist must be positive, got {waist}"
            )));
        }
        Ok(Self {
            family,
            index_a,
            index_b,
            waist,
        })
    }

    pub fn hermite_gauss(nx: u32, ny: u32, waist: f64) -> Result<Self> {
        Self::new(ModeFamily::HermiteGauss, nx, ny as i32, waist)
    }

    pub fn laguerre_gauss(p: u32, l: i32, waist: f64) -> Result<Self> {
        Self::new(ModeFamily::LaguerreGauss, p, l, waist)
    }

    /// `n_x + n_y` or `2p + |ℓ|`.
    pub fn total_order(&self) -> u32 {
        match self.family {
            ModeFamily::HermiteGauss => self.index_a + self.index_b as u32,
            ModeFamily::LaguerreGauss => 2 * self.index_a + self.index_b.unsigned_abs(),
        }
    }

    pub fn with_waist(&self, waist: f64) -> Self {
        Self { waist, ..*self }
    }

    /// Analytic value of the unit-norm real-space mode.
    pub fn evaluate(&self, x: f64, y: f64) -> Complex64 {
        match self.family {
            ModeFamily::HermiteGauss => Complex64::new(
                hermite_gauss_1d(self.index_a as usize, self.waist, x)
                    * hermite_gauss_1d(self.index_b as usize, self.waist, y),
                0.0,
            ),
            ModeFamily::LaguerreGauss => {
                laguerre_gauss_value(self.index_a as usize, self.index_b, self.waist, x, y)
            }
        }
    }

    /// Analytic value of the mode's continuous transform at momentum `(qx, qy)`.
    pub fn evaluate_momentum(&self, qx: f64, qy: f64) -> Complex64 {
        fourier_phase(self.total_order()) * self.with_waist(2.0 / self.waist).evaluate(qx, qy)
    }

    pub fn evaluate_in(&self, space: Space, x: f64, y: f64) -> Complex64 {
        match space {
            Space::Real => self.evaluate(x, y),
            Space::Momentum => self.evaluate_momentum(x, y),
        }
    }
}

impl fmt::Display for ModeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            ModeFamily::HermiteGauss => write!(f, "HG({},{})", self.index_a, self.index_b),
            ModeFamily::LaguerreGauss => write!(f, "LG({},{})", self.index_a, self.index_b),
        }
    }
}

/// `(-i)^n`.
pub fn fourier_phase(order: u32) -> Complex64 {
    match order % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

/// Normalized Hermite functions `ψ_0(t) .. ψ_n(t)` with `∫ψ_k² dt = 1`.
pub fn hermite_functions(n: usize, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let psi0 = PI.powf(-0.25) * (-0.5 * t * t).exp();
    out.push(psi0);
    if n == 0 {
        return out;
    }
    out.push(std::f64::consts::SQRT_2 * t * psi0);
    for k in 1..n {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * t * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        out.push(next);
    }
    out
}

/// Unit-norm 1-D Hermite-Gauss function of order `n` and waist `w`.
pub fn hermite_gauss_1d(n: usize, waist: f64, x: f64) -> f64 {
    let scale = std::f64::consts::SQRT_2 / waist;
    hermite_functions(n, scale * x)[n] * scale.sqrt()
}

/// Generalized Laguerre polynomial `L_p^α(x)` by upward recurrence.
pub fn laguerre(p: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if p == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..p {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn laguerre_gauss_value(p: usize, l: i32, waist: f64, x: f64, y: f64) -> Complex64 {
    let abs_l = l.unsigned_abs() as usize;
    let r2 = x * x + y * y;
    let s = 2.0 * r2 / (waist * waist);
    let poly = laguerre(p, abs_l as f64, s);
    if poly == 0.0 || (abs_l > 0 && r2 == 0.0) {
        return Complex64::new(0.0, 0.0);
    }
    // log of sqrt(2 p! / (π (p+|ℓ|)!)) / w · (√2 r / w)^|ℓ| · exp(-r²/w²)
    let mut ln_mag = 0.5 * (2f64.ln() + ln_factorial(p) - PI.ln() - ln_factorial(p + abs_l))
        - waist.ln()
        - r2 / (waist * waist);
    if abs_l > 0 {
        ln_mag += abs_l as f64 * 0.5 * s.ln();
    }
    let magnitude = ln_mag.exp() * poly;
    let phi = y.atan2(x);
    Complex64::from_polar(1.0, l as f64 * phi) * magnitude
}

/// Samples `spec` on `grid` in `space` and normalizes it by the grid inner product.
pub fn mode_field(spec: &ModeSpec, grid: &TransverseGrid, space: Space) -> Result<ComplexField> {
    let field = ComplexField::from_fn(*grid, space, |x, y| spec.evaluate_in(space, x, y));
    let norm = field.norm();
    if norm.is_nan() || (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::Resolution(format!(
            "{spec} with waist {} has sampled norm {norm:.6} on a grid of {} samples and half extent {}",
            spec.waist,
            grid.samples_per_axis(),
            grid.half_extent()
        )));
    }
    Ok(field.scaled(Complex64::new(1.0 / norm, 0.0)))
}

/// Real-space Hermite-Gauss mode, unit-normalized on the grid.
pub fn hermite_gauss(spec: &ModeSpec, grid: &TransverseGrid) -> Result<ComplexField> {
    if spec.family != ModeFamily::HermiteGauss {
        return Err(Error::InvalidParameter(format!("{spec} is not a Hermite-Gauss mode")));
    }
    mode_field(spec, grid, Space::Real)
}

/// Real-space Laguerre-Gauss mode, unit-normalized on the grid.
pub fn laguerre_gauss(spec: &ModeSpec, grid: &TransverseGrid) -> Result<ComplexField> {
    if spec.family != ModeFamily::LaguerreGauss {
        return Err(Error::InvalidParameter(format!("{spec} is not a Laguerre-Gauss mode")));
    }
    mode_field(spec, grid, Space::Real)
}

/// All `(index_a, index_b)` pairs with total order `≤ max_total_order`, in set order.
pub fn mode_indices(family: ModeFamily, max_total_order: u32) -> Vec<(u32, i32)> {
    let mut out = Vec::new();
    for n in 0..=max_total_order {
        match family {
            ModeFamily::HermiteGauss => {
                for nx in (0..=n).rev() {
                    out.push((nx, (n - nx) as i32));
                }
            }
            ModeFamily::LaguerreGauss => {
                let mut l = n as i32;
                while l >= -(n as i32) {
                    out.push(((n - l.unsigned_abs()) / 2, l));
                    l -= 2;
                }
            }
        }
    }
    out
}

/// Number of modes with total order `≤ max_total_order` (either family).
pub fn mode_count(max_total_order: u32) -> usize {
    let k = max_total_order as usize + 1;
    k * (k + 1) / 2
}

/// An ordered list of modes sharing one grid and space.
#[derive(Debug, Clone)]
pub struct ModeSet {
    labels: Vec<String>,
    specs: Vec<ModeSpec>,
    fields: Vec<ComplexField>,
    gram_deviation: f64,
}

impl ModeSet {
    /// Assembles a set from sampled fields, checking orthonormality.
    pub fn from_fields(labels: Vec<String>, fields: Vec<ComplexField>) -> Result<Self> {
        if labels.len() != fields.len() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {} fields",
                labels.len(),
                fields.len()
            )));
        }
        if let Some(first) = fields.first() {
            for f in &fields[1..] {
                if !f.grid().same_as(first.grid()) || f.space() != first.space() {
                    return Err(Error::GridMismatch(
                        "mode set fields must share one grid and space".into(),
                    ));
                }
            }
        }
        let gram_deviation = gram_deviation(&fields)?;
        if gram_deviation > GRAM_FAIL_TOLERANCE {
            return Err(Error::Resolution(format!(
                "mode set Gram matrix deviates from identity by {gram_deviation:.3e}"
            )));
        }
        Ok(Self {
            labels,
            specs: Vec::new(),
            fields,
            gram_deviation,
        })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Analytic descriptions, empty for numerically obtained modes.
    pub fn specs(&self) -> &[ModeSpec] {
        &self.specs
    }

    pub fn fields(&self) -> &[ComplexField] {
        &self.fields
    }

    pub fn grid(&self) -> Option<&TransverseGrid> {
        self.fields.first().map(|f| f.grid())
    }

    pub fn space(&self) -> Option<Space> {
        self.fields.first().map(|f| f.space())
    }

    /// `max |G - I|` over the Gram matrix, measured at construction.
    pub fn gram_deviation(&self) -> f64 {
        self.gram_deviation
    }

    /// The same modes transformed into `space`.
    pub fn in_space(&self, space: Space) -> Result<Self> {
        let fields = self
            .fields
            .par_iter()
            .map(|f| {
                if f.space() == space {
                    Ok(f.clone())
                } else if space == Space::Momentum {
                    f.to_momentum()
                } else {
                    f.to_real()
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            labels: self.labels.clone(),
            specs: self.specs.clone(),
            fields,
            gram_deviation: self.gram_deviation,
        })
    }
}

/// `max_{n,m} |⟨f_n, f_m⟩ - δ_nm|`.
pub fn gram_deviation(fields: &[ComplexField]) -> Result<f64> {
    let m = fields.len();
    let rows = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut worst: f64 = 0.0;
            for j in i..m {
                let ip = inner_product(&fields[i], &fields[j])?;
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).norm());
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(rows.into_iter().fold(0.0, f64::max))
}

/// Every mode of `family` with total order `≤ max_total_order`, sampled in real space.
pub fn build_mode_set(
    family: ModeFamily,
    max_total_order: u32,
    waist: f64,
    grid: &TransverseGrid,
) -> Result<ModeSet> {
    build_mode_set_in(family, max_total_order, waist, grid, Space::Real)
}

pub fn build_mode_set_in(
    family: ModeFamily,
    max_total_order: u32,
    waist: f64,
    grid: &TransverseGrid,
    space: Space,
) -> Result<ModeSet> {
    let specs = mode_indices(family, max_total_order)
        .into_iter()
        .map(|(a, b)| ModeSpec::new(family, a, b, waist))
        .collect::<Result<Vec<_>>>()?;
    let fields = specs
        .par_iter()
        .map(|s| mode_field(s, grid, space))
        .collect::<Result<Vec<_>>>()?;
    let labels = specs.iter().map(|s| s.to_string()).collect();
    let mut set = ModeSet::from_fields(labels, fields)?;
    set.specs = specs;
    Ok(set)
}
