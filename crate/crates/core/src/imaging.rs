//! Coincidence images from truncated, reweighted Schmidt-mode sums.
//!
//! For a coupling matrix `C` (β⁽¹⁾, β⁽²⁾ or γ) and weights `w_n` the complex
//! image is `Z(ρ̄) = Σ_{n,m<N} w_n w_m C_nm v̄_n*(ρ̄) v̄_m(ρ̄)` with `v̄_n` the
//! sample-frame idler modes (see
//! [`SchmidtDecomposition::sample_frame_idler`]). The coincidence image is
//! `Re Z`; `arg Z` is the recovered phase map. Reweighting replaces `√λ_n`
//! by the scheme's `w_n`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Space, TransverseGrid};
use crate::matter::{ChargeDensity, CouplingMatrix};
use crate::schmidt::{ModeStorage, SchmidtDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightScheme {
    Natural,
    Flattened,
    Custom,
}

impl WeightScheme {
    pub fn name(self) -> &'static str {
        match self {
            WeightScheme::Natural => "natural",
            WeightScheme::Flattened => "flattened",
            WeightScheme::Custom => "custom",
        }
    }
}

impl std::str::FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "natural" => Ok(WeightScheme::Natural),
            "flattened" => Ok(WeightScheme::Flattened),
            "custom" => Ok(WeightScheme::Custom),
            _ => Err(Error::InvalidParameter(format!("unknown weight scheme '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
    scheme: WeightScheme,
}

impl WeightVector {
    /// User-supplied weights; all must be positive.
    pub fn custom(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidParameter(
                "custom weights must be a non-empty list of positive numbers".into(),
            ));
        }
        Ok(Self {
            values,
            scheme: WeightScheme::Custom,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Weights for the first `n` modes: `√λ_n` (natural) or the constant `c` with
/// `N c² = Σ_{k<N} λ_k` (flattened).
pub fn reweight(dec: &SchmidtDecomposition, scheme: WeightScheme, n: usize) -> Result<WeightVector> {
    if n == 0 || n > dec.rank() {
        return Err(Error::InvalidParameter(format!(
            "truncation {n} outside 1..={}",
            dec.rank()
        )));
    }
    let lambda = &dec.weights()[..n];
    let values = match scheme {
        WeightScheme::Natural => lambda.iter().map(|l| l.sqrt()).collect(),
        WeightScheme::Flattened => {
            let energy: f64 = lambda.iter().sum();
            vec![(energy / n as f64).sqrt(); n]
        }
        WeightScheme::Custom => {
            return Err(Error::InvalidParameter(
                "custom weights are built with WeightVector::custom".into(),
            ))
        }
    };
    Ok(WeightVector { values, scheme })
}

/// A signed real image on the idler grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealImage {
    grid: TransverseGrid,
    values: Vec<f64>,
    background_subtracted: bool,
}

impl RealImage {
    pub fn new(grid: TransverseGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "image has {} pixels, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("image contains non-finite values".into()));
        }
        Ok(Self {
            grid,
            values,
            background_subtracted: false,
        })
    }

    pub fn from_fn(grid: TransverseGrid, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let c = grid.coordinates(Space::Real);
        let mut values = Vec::with_capacity(grid.len());
        for &y in &c {
            for &x in &c {
                values.push(f(x, y));
            }
        }
        Self::new(grid, values)
    }

    pub fn real_part(field: &ComplexField) -> Result<Self> {
        Self::new(*field.grid(), field.values().iter().map(|z| z.re).collect())
    }

    pub fn grid(&self) -> &TransverseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn background_subtracted(&self) -> bool {
        self.background_subtracted
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.samples_per_axis() + ix]
    }

    /// Index `(ix, iy)` of the largest value (first in storage order).
    pub fn argmax(&self) -> (usize, usize) {
        let n = self.grid.samples_per_axis();
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        (best % n, best / n)
    }

    /// The image at `-ρ`.
    pub fn mirrored(&self) -> Self {
        let n = self.grid.samples_per_axis();
        let mut values = Vec::with_capacity(self.values.len());
        for iy in 0..n {
            let my = self.grid.mirror_index(iy);
            for ix in 0..n {
                values.push(self.values[my * n + self.grid.mirror_index(ix)]);
            }
        }
        Self {
            values,
            ..self.clone()
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("images live on different grids".into()));
        }
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect(),
            background_subtracted: false,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

fn check_inputs(
    dec: &SchmidtDecomposition,
    coupling: &CouplingMatrix,
    weights: &[f64],
    n: usize,
) -> Result<()> {
    if n == 0 || n > dec.rank() {
        return Err(Error::InvalidParameter(format!(
            "truncation {n} outside 1..={}",
            dec.rank()
        )));
    }
    if weights.len() < n {
        return Err(Error::InvalidParameter(format!(
            "{} weights for truncation {n}",
            weights.len()
        )));
    }
    if coupling.dim() < n {
        return Err(Error::BasisMismatch(format!(
            "coupling matrix has dimension {} < truncation {n}",
            coupling.dim()
        )));
    }
    let basis = dec.basis();
    let theirs = coupling.basis();
    if theirs.id != basis.id || theirs.labels[..n] != basis.labels[..n] {
        return Err(Error::BasisMismatch(format!(
            "coupling basis '{}' does not match decomposition basis '{}'",
            theirs.id, basis.id
        )));
    }
    Ok(())
}

/// `C_nm = w_n w_m coupling_nm` for `n, m < N`, row-major.
fn contraction(coupling: &CouplingMatrix, weights: &[f64], n: usize) -> Vec<Complex64> {
    let e = coupling.entries();
    let mut c = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            c.push(e[(i, j)] * (weights[i] * weights[j]));
        }
    }
    c
}

/// Complex sample-frame image `Z(ρ̄)`; [`coincidence_image`] is its real part.
pub fn complex_image(
    dec: &SchmidtDecomposition,
    coupling: &CouplingMatrix,
    weights: &WeightVector,
    n: usize,
) -> Result<ComplexField> {
    check_inputs(dec, coupling, weights.values(), n)?;
    let c = contraction(coupling, weights.values(), n);
    match dec.storage() {
        ModeStorage::Separable { x, y, pairs } => {
            let flip = dec.regime_sign() < 0;
            let grid = dec.grid();
            let frame = |axis: &[Vec<Complex64>]| -> Vec<Vec<Complex64>> {
                axis.iter()
                    .map(|v| {
                        (0..v.len())
                            .map(|i| {
                                let j = if flip { grid.mirror_index(i) } else { i };
                                v[j].conj()
                            })
                            .collect()
                    })
                    .collect()
            };
            Ok(separable_image(grid, &frame(&x.idler_r), &frame(&y.idler_r), &pairs[..n], &c))
        }
        _ => {
            let modes = (0..n)
                .into_par_iter()
                .map(|k| dec.sample_frame_idler(k))
                .collect::<Result<Vec<_>>>()?;
            Ok(dense_image(dec.grid(), &modes, &c))
        }
    }
}

fn dense_image(grid: &TransverseGrid, modes: &[ComplexField], c: &[Complex64]) -> ComplexField {
    let n = modes.len();
    let values: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let v: Vec<Complex64> = modes.iter().map(|m| m.values()[p]).collect();
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                let row = &c[i * n..(i + 1) * n];
                let mut inner = Complex64::new(0.0, 0.0);
                for (cij, vj) in row.iter().zip(&v) {
                    inner += cij * vj;
                }
                acc += v[i].conj() * inner;
            }
            acc
        })
        .collect();
    ComplexField::new(*grid, Space::Real, values).expect("pixel count matches grid")
}

/// Same contraction for product modes `v̄_n(x, y) = X_{a_n}(x) Y_{b_n}(y)`.
fn separable_image(
    grid: &TransverseGrid,
    vx: &[Vec<Complex64>],
    vy: &[Vec<Complex64>],
    pairs: &[(usize, usize)],
    c: &[Complex64],
) -> ComplexField {
    let size = grid.samples_per_axis();
    let n = pairs.len();
    let nb = pairs.iter().map(|p| p.1).max().unwrap_or(0) + 1;
    // For each column x: A[b][d] = Σ_{n,m: b_n=b, b_m=d} C_nm X*_{a_n}(x) X_{a_m}(x).
    let columns: Vec<Vec<Complex64>> = (0..size)
        .into_par_iter()
        .map(|ix| {
            let xs: Vec<Complex64> = pairs.iter().map(|&(a, _)| vx[a][ix]).collect();
            let mut a = vec![Complex64::new(0.0, 0.0); nb * nb];
            for i in 0..n {
                let left = xs[i].conj();
                let bi = pairs[i].1;
                let row = &c[i * n..(i + 1) * n];
                for j in 0..n {
                    a[bi * nb + pairs[j].1] += row[j] * left * xs[j];
                }
            }
            let mut col = Vec::with_capacity(size);
            for iy in 0..size {
                let ys: Vec<Complex64> = (0..nb).map(|b| vy[b][iy]).collect();
                let mut acc = Complex64::new(0.0, 0.0);
                for b in 0..nb {
                    let mut inner = Complex64::new(0.0, 0.0);
                    for d in 0..nb {
                        inner += a[b * nb + d] * ys[d];
                    }
                    acc += ys[b].conj() * inner;
                }
                col.push(acc);
            }
            col
        })
        .collect();
    let mut values = vec![Complex64::new(0.0, 0.0); size * size];
    for (ix, col) in columns.into_iter().enumerate() {
        for (iy, v) in col.into_iter().enumerate() {
            values[iy * size + ix] = v;
        }
    }
    ComplexField::new(*grid, Space::Real, values).expect("pixel count matches grid")
}

/// `Re Σ_{n,m<N} w_n w_m β_nm v̄_n*(ρ̄) v̄_m(ρ̄)` in the sample frame.
pub fn coincidence_image(
    dec: &SchmidtDecomposition,
    beta: &CouplingMatrix,
    weights: &WeightVector,
    n: usize,
) -> Result<RealImage> {
    RealImage::real_part(&complex_image(dec, beta, weights, n)?)
}

/// Recovered phase `arg Z(ρ̄)` of the complex image.
pub fn phase_map(image: &ComplexField) -> Vec<f64> {
    image.values().iter().map(|z| z.arg()).collect()
}

/// Far-field image from a γ matrix with natural weights.
pub fn far_field_image(
    dec: &SchmidtDecomposition,
    gamma: &CouplingMatrix,
    n: usize,
) -> Result<RealImage> {
    let w = reweight(dec, WeightScheme::Natural, n)?;
    coincidence_image(dec, gamma, &w, n)
}

/// The idler marginal `Σ_n λ_n |v_n|²` over the first `n` modes, sample frame.
pub fn idler_marginal(dec: &SchmidtDecomposition, n: usize) -> Result<RealImage> {
    if n == 0 || n > dec.rank() {
        return Err(Error::InvalidParameter(format!("truncation {n} outside 1..={}", dec.rank())));
    }
    let mut values = vec![0.0; dec.grid().len()];
    for k in 0..n {
        let v = dec.sample_frame_idler(k)?;
        let l = dec.weights()[k];
        for (out, z) in values.iter_mut().zip(v.values()) {
            *out += l * z.norm_sqr();
        }
    }
    RealImage::new(*dec.grid(), values)
}

/// How `ρ̄` enters the frequency-resolved phase factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseProjection {
    /// `|ρ̄|`.
    #[default]
    Radial,
    /// The `x` coordinate of `ρ̄`.
    XAxis,
}

/// `Re[σ(ρ̄) exp(-i (ω̄/c) r)]` with `r` chosen by `projection`.
pub fn frequency_resolved_image(
    sigma: &ChargeDensity,
    omega_bar: f64,
    speed_of_light: f64,
    projection: PhaseProjection,
) -> Result<RealImage> {
    if !(omega_bar.is_finite() && omega_bar >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "frequency must be non-negative, got {omega_bar}"
        )));
    }
    if !(speed_of_light.is_finite() && speed_of_light > 0.0) {
        return Err(Error::InvalidParameter("speed of light must be positive".into()));
    }
    let k = omega_bar / speed_of_light;
    let field = sigma.field();
    let grid = *field.grid();
    let c = grid.coordinates(Space::Real);
    let n = c.len();
    let values = field
        .values()
        .iter()
        .enumerate()
        .map(|(p, s)| {
            let (x, y) = (c[p % n], c[p / n]);
            let r = match projection {
                PhaseProjection::Radial => x.hypot(y),
                PhaseProjection::XAxis => x,
            };
            (s * Complex64::from_polar(1.0, -k * r)).re
        })
        .collect();
    RealImage::new(grid, values)
}

/// `-(raw - reference)`.
pub fn subtract_background(raw: &RealImage, reference: &RealImage) -> Result<RealImage> {
    let mut out = raw.zip(reference, |a, b| -(a - b))?;
    out.background_subtracted = true;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageMetrics {
    /// `min_{a ≥ 0} ‖a·img - ref‖² / ‖ref‖²`.
    pub nmse: f64,
    pub pearson: f64,
}

/// Pearson correlation of two equally long samples.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidParameter("pearson needs two samples of equal length ≥ 2".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if sbb == 0.0 {
        return Err(Error::InvalidParameter("reference has zero variance".into()));
    }
    if saa == 0.0 {
        return Ok(0.0);
    }
    Ok(sab / (saa * sbb).sqrt())
}

pub fn nmse(img: &[f64], reference: &[f64]) -> Result<f64> {
    if img.len() != reference.len() {
        return Err(Error::GridMismatch("images differ in size".into()));
    }
    let rr: f64 = reference.iter().map(|v| v * v).sum();
    if rr == 0.0 {
        return Err(Error::InvalidParameter("reference image is identically zero".into()));
    }
    let ii: f64 = img.iter().map(|v| v * v).sum();
    let ir: f64 = img.iter().zip(reference).map(|(a, b)| a * b).sum();
    let scale = if ii > 0.0 { (ir / ii).max(0.0) } else { 0.0 };
    let err: f64 = img
        .iter()
        .zip(reference)
        .map(|(a, b)| (scale * a - b).powi(2))
        .sum();
    Ok(err / rr)
}

pub fn image_metrics(img: &RealImage, reference: &RealImage) -> Result<ImageMetrics> {
    if !img.grid().same_as(reference.grid()) {
        return Err(Error::GridMismatch("images live on different grids".into()));
    }
    Ok(ImageMetrics {
        nmse: nmse(img.values(), reference.values())?,
        pearson: pearson(img.values(), reference.values())?,
    })
}

/// Agreement between a recovered and a programmed phase, as the Pearson
/// correlation of the stacked phasor components `[cos φ, sin φ]` over the
/// masked pixels. Insensitive to 2π wrapping.
pub fn phase_correlation(recovered: &[f64], programmed: &[f64], mask: &[bool]) -> Result<f64> {
    if recovered.len() != programmed.len() || mask.len() != programmed.len() {
        return Err(Error::InvalidParameter("phase maps differ in size".into()));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for ((r, p), _) in recovered.iter().zip(programmed).zip(mask).filter(|(_, m)| **m) {
        a.push(r.cos());
        b.push(p.cos());
    }
    for ((r, p), _) in recovered.iter().zip(programmed).zip(mask).filter(|(_, m)| **m) {
        a.push(r.sin());
        b.push(p.sin());
    }
    pearson(&a, &b)
}
