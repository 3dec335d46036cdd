//! Charge density input, mode-coupling matrices and the idler density matrix.
//!
//! Couplings follow `β⁽ᵖ⁾_nm = ∫ u_n(ρ) w(ρ) u_m*(ρ) d²ρ` with `w = σ` for
//! `p = 1` and `w = |σ|²` for `p = 2`, evaluated as grid sums in storage
//! order.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{dot_conj, ComplexField, Space, TransverseGrid};
use crate::io::{read_pgm, GrayImage};
use crate::modes::ModeSet;
use crate::schmidt::{BasisManifest, ModeStorage, SchmidtDecomposition};

/// The complex effective scattering density σ(ρ), projected on the transverse plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeDensity {
    field: ComplexField,
    source: String,
}

impl ChargeDensity {
    pub fn new(field: ComplexField, source: impl Into<String>) -> Result<Self> {
        if field.space() != Space::Real {
            return Err(Error::GridMismatch("charge density must be a real-space field".into()));
        }
        if field.values().iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidParameter("charge density has non-finite values".into()));
        }
        Ok(Self {
            field,
            source: source.into(),
        })
    }

    pub fn field(&self) -> &ComplexField {
        &self.field
    }

    pub fn grid(&self) -> &TransverseGrid {
        self.field.grid()
    }

    /// Where the density came from (file paths or a generator name).
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Rescaled so that `max |σ| = 1`.
    pub fn max_normalized(&self) -> Result<Self> {
        let max = self.field.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            return Err(Error::InvalidParameter("charge density is identically zero".into()));
        }
        Ok(Self {
            field: self.field.scaled(Complex64::new(1.0 / max, 0.0)),
            source: self.source.clone(),
        })
    }

    pub fn is_real(&self) -> bool {
        self.field.values().iter().all(|z| z.im == 0.0)
    }
}

/// Bilinear sample of a raster at grid point `(x, y)`. Pixel `c` sits at
/// `-h + c·2h/W`; coordinates beyond the last pixel clamp to the edge.
fn raster_sample(img: &GrayImage, h: f64, x: f64, y: f64) -> f64 {
    let fx = ((x + h) * img.width as f64 / (2.0 * h)).clamp(0.0, (img.width - 1) as f64);
    let fy = ((y + h) * img.height as f64 / (2.0 * h)).clamp(0.0, (img.height - 1) as f64);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width - 1), (y0 + 1).min(img.height - 1));
    let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
    let p = |c: usize, r: usize| img.pixels[r * img.width + c] as f64;
    p(x0, y0) * (1.0 - tx) * (1.0 - ty)
        + p(x1, y0) * tx * (1.0 - ty)
        + p(x0, y1) * (1.0 - tx) * ty
        + p(x1, y1) * tx * ty
}

/// Loads σ from a grayscale magnitude PGM and an optional phase PGM whose
/// gray level `g` maps to `2π g/(max+1) - π`. Both are resampled bilinearly
/// onto the grid (image row `r` to grid row `iy = r`) and the magnitude is
/// normalized to a maximum of one.
pub fn load_charge_density(
    magnitude_path: &Path,
    phase_path: Option<&Path>,
    grid: &TransverseGrid,
) -> Result<ChargeDensity> {
    let mag = read_pgm(magnitude_path)?;
    let phase = match phase_path {
        Some(p) => {
            let img = read_pgm(p)?;
            if img.width != mag.width || img.height != mag.height {
                return Err(Error::format(
                    p,
                    format!(
                        "phase image is {}x{} but magnitude is {}x{}",
                        img.width, img.height, mag.width, mag.height
                    ),
                ));
            }
            Some(img)
        }
        None => None,
    };
    let h = grid.half_extent();
    let field = ComplexField::from_fn(*grid, Space::Real, |x, y| {
        let m = raster_sample(&mag, h, x, y);
        let phi = phase.as_ref().map_or(0.0, |p| {
            2.0 * PI * raster_sample(p, h, x, y) / (p.max_value as f64 + 1.0) - PI
        });
        Complex64::from_polar(m, phi)
    });
    let mut source = magnitude_path.display().to_string();
    if let Some(p) = phase_path {
        source.push_str(&format!(" + phase {}", p.display()));
    }
    let max = field.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::format(magnitude_path, "magnitude image is entirely black"));
    }
    ChargeDensity::new(field, source)?.max_normalized()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CouplingOrder {
    /// Weight σ.
    First,
    /// Weight |σ|².
    Second,
}

impl CouplingOrder {
    pub fn from_index(p: u32) -> Result<Self> {
        match p {
            1 => Ok(CouplingOrder::First),
            2 => Ok(CouplingOrder::Second),
            _ => Err(Error::InvalidParameter(format!("coupling order must be 1 or 2, got {p}"))),
        }
    }

    pub fn index(self) -> u32 {
        match self {
            CouplingOrder::First => 1,
            CouplingOrder::Second => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CouplingKind {
    Beta1,
    Beta2,
    Gamma,
}

impl CouplingKind {
    pub fn name(self) -> &'static str {
        match self {
            CouplingKind::Beta1 => "beta1",
            CouplingKind::Beta2 => "beta2",
            CouplingKind::Gamma => "gamma",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "beta1" => Some(CouplingKind::Beta1),
            "beta2" => Some(CouplingKind::Beta2),
            "gamma" => Some(CouplingKind::Gamma),
            _ => None,
        }
    }
}

impl From<CouplingOrder> for CouplingKind {
    fn from(p: CouplingOrder) -> Self {
        match p {
            CouplingOrder::First => CouplingKind::Beta1,
            CouplingOrder::Second => CouplingKind::Beta2,
        }
    }
}

/// A square mode-to-mode coupling tagged with the basis it was computed in.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    entries: DMatrix<Complex64>,
    basis: BasisManifest,
    kind: CouplingKind,
}

impl CouplingMatrix {
    pub fn new(entries: DMatrix<Complex64>, basis: BasisManifest, kind: CouplingKind) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() > basis.labels.len() {
            return Err(Error::BasisMismatch(format!(
                "{}x{} matrix for a basis of {} modes",
                entries.nrows(),
                entries.ncols(),
                basis.labels.len()
            )));
        }
        let basis = BasisManifest {
            id: basis.id,
            labels: basis.labels[..entries.nrows()].to_vec(),
        };
        Ok(Self { entries, basis, kind })
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn basis(&self) -> &BasisManifest {
        &self.basis
    }

    pub fn kind(&self) -> CouplingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Same basis and kind with different entries.
    pub fn with_entries(&self, entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.shape() != self.entries.shape() {
            return Err(Error::BasisMismatch("entry shape differs".into()));
        }
        Ok(Self {
            entries,
            ..self.clone()
        })
    }
}

fn weight_field(sigma: &ChargeDensity, order: CouplingOrder) -> Vec<Complex64> {
    match order {
        CouplingOrder::First => sigma.field.values().to_vec(),
        CouplingOrder::Second => sigma
            .field
            .values()
            .iter()
            .map(|z| Complex64::new(z.norm_sqr(), 0.0))
            .collect(),
    }
}

/// `Σ_ρ u_n(ρ) w(ρ) conj(u_m(ρ)) Δρ²` for sampled real-space modes.
fn dense_beta(fields: &[&[Complex64]], weight: &[Complex64], cell: f64) -> DMatrix<Complex64> {
    let m = fields.len();
    let rows: Vec<Vec<Complex64>> = (0..m)
        .into_par_iter()
        .map(|n| {
            let a: Vec<Complex64> = fields[n].iter().zip(weight).map(|(u, w)| u * w).collect();
            (0..m).map(|k| dot_conj(fields[k], &a) * cell).collect()
        })
        .collect();
    DMatrix::from_fn(m, m, |i, j| rows[i][j])
}

/// Coupling matrix of `sigma` between the real-space modes of `modes`.
pub fn beta_matrix(sigma: &ChargeDensity, modes: &ModeSet, order: CouplingOrder) -> Result<CouplingMatrix> {
    let grid = modes
        .grid()
        .ok_or_else(|| Error::InvalidParameter("empty mode set".into()))?;
    if !grid.same_as(sigma.grid()) || modes.space() != Some(Space::Real) {
        return Err(Error::GridMismatch(
            "modes must be real-space fields on the charge density's grid".into(),
        ));
    }
    let weight = weight_field(sigma, order);
    let fields: Vec<&[Complex64]> = modes.fields().iter().map(|f| f.values()).collect();
    let entries = dense_beta(&fields, &weight, grid.cell_area(Space::Real));
    CouplingMatrix::new(
        entries,
        BasisManifest {
            id: "mode-set".into(),
            labels: modes.labels().to_vec(),
        },
        order.into(),
    )
}

/// Coupling matrix in the signal basis of a Schmidt decomposition, using
/// one-axis factors when the decomposition is separable.
pub fn beta_matrix_schmidt(
    sigma: &ChargeDensity,
    dec: &SchmidtDecomposition,
    order: CouplingOrder,
) -> Result<CouplingMatrix> {
    if !dec.grid().same_as(sigma.grid()) {
        return Err(Error::GridMismatch("decomposition and charge density grids differ".into()));
    }
    let weight = weight_field(sigma, order);
    let cell = dec.grid().cell_area(Space::Real);
    let entries = match dec.storage() {
        ModeStorage::Separable { x, y, pairs } => {
            separable_beta(&x.signal_r, &y.signal_r, pairs, &weight, cell)
        }
        _ => {
            let fields = (0..dec.rank())
                .into_par_iter()
                .map(|n| dec.signal_mode(n, Space::Real))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&[Complex64]> = fields.iter().map(|f| f.values()).collect();
            dense_beta(&refs, &weight, cell)
        }
    };
    CouplingMatrix::new(entries, dec.basis(), order.into())
}

/// `β_nm = Σ_x X_a(x) X_c*(x) T[x][b][d]` with
/// `T[x][b][d] = Σ_y Y_b(y) w(x, y) Y_d*(y)`, for `n = (a, b)`, `m = (c, d)`.
fn separable_beta(
    ux: &[Vec<Complex64>],
    uy: &[Vec<Complex64>],
    pairs: &[(usize, usize)],
    weight: &[Complex64],
    cell: f64,
) -> DMatrix<Complex64> {
    let size = ux[0].len();
    let nb = pairs.iter().map(|p| p.1).max().unwrap_or(0) + 1;
    let t: Vec<Vec<Complex64>> = (0..size)
        .into_par_iter()
        .map(|ix| {
            let mut out = vec![Complex64::new(0.0, 0.0); nb * nb];
            for b in 0..nb {
                let a: Vec<Complex64> = (0..size).map(|iy| uy[b][iy] * weight[iy * size + ix]).collect();
                for d in 0..nb {
                    out[b * nb + d] = dot_conj(&uy[d], &a);
                }
            }
            out
        })
        .collect();
    let m = pairs.len();
    let rows: Vec<Vec<Complex64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let (a, b) = pairs[i];
            (0..m)
                .map(|j| {
                    let (c, d) = pairs[j];
                    let mut acc = Complex64::new(0.0, 0.0);
                    for ix in 0..size {
                        acc += ux[a][ix] * ux[c][ix].conj() * t[ix][b * nb + d];
                    }
                    acc * cell
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(m, m, |i, j| rows[i][j])
}

/// β⁽¹⁾ from momentum-space modes and the transformed density:
/// `β_nm = (1/2π) Σ_{k,k'} U_n(k) S(k' - k) U_m*(k') Δq⁴`, with `S` the
/// transform of σ and differences taken on the periodic momentum grid.
pub fn beta_matrix_momentum(sigma: &ChargeDensity, modes: &ModeSet) -> Result<CouplingMatrix> {
    let grid = *modes
        .grid()
        .ok_or_else(|| Error::InvalidParameter("empty mode set".into()))?;
    if !grid.same_as(sigma.grid()) {
        return Err(Error::GridMismatch("modes and charge density grids differ".into()));
    }
    let momentum = modes.in_space(Space::Momentum)?;
    let s = sigma.field.to_momentum()?;
    let n = grid.samples_per_axis();
    let half = n / 2;
    let sv = s.values();
    let dq2 = grid.cell_area(Space::Momentum);
    let scale = dq2 * dq2 / (2.0 * PI);
    // W_m(k) = Σ_k' S(k' - k) conj(U_m(k'))
    let convolved: Vec<Vec<Complex64>> = momentum
        .fields()
        .par_iter()
        .map(|f| {
            let u = f.values();
            let mut w = vec![Complex64::new(0.0, 0.0); n * n];
            for ky in 0..n {
                for kx in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for py in 0..n {
                        let dy = (py + n + half - ky) % n;
                        for px in 0..n {
                            let dx = (px + n + half - kx) % n;
                            acc += sv[dy * n + dx] * u[py * n + px].conj();
                        }
                    }
                    w[ky * n + kx] = acc;
                }
            }
            w
        })
        .collect();
    let m = momentum.len();
    let entries = DMatrix::from_fn(m, m, |i, j| {
        let u = momentum.fields()[i].values();
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, b) in u.iter().zip(&convolved[j]) {
            acc += a * b;
        }
        acc * scale
    });
    CouplingMatrix::new(
        entries,
        BasisManifest {
            id: "mode-set".into(),
            labels: modes.labels().to_vec(),
        },
        CouplingKind::Beta1,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityOrder {
    Zeroth,
    FirstOrderCorrection,
}

/// Idler reduced density matrix in the Schmidt basis.
#[derive(Debug, Clone, PartialEq)]
pub struct IdlerDensityMatrix {
    entries: DMatrix<Complex64>,
    basis: BasisManifest,
    order: DensityOrder,
}

impl IdlerDensityMatrix {
    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn basis(&self) -> &BasisManifest {
        &self.basis
    }

    pub fn order(&self) -> DensityOrder {
        self.order
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    /// `tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        (&self.entries * &self.entries).trace().re
    }
}

/// `diag(λ_n)`.
pub fn idler_density_initial(dec: &SchmidtDecomposition) -> Result<IdlerDensityMatrix> {
    let total: f64 = dec.weights().iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::Unnormalized(total));
    }
    let m = dec.rank();
    let entries = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            Complex64::new(dec.weights()[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    Ok(IdlerDensityMatrix {
        entries,
        basis: dec.basis(),
        order: DensityOrder::Zeroth,
    })
}

/// First-order correction `P + P†` with `P_nm = i β⁽¹⁾_nm √(λ_n λ_m)`.
pub fn idler_density_first_order(
    dec: &SchmidtDecomposition,
    beta1: &CouplingMatrix,
) -> Result<IdlerDensityMatrix> {
    if beta1.kind() != CouplingKind::Beta1 {
        return Err(Error::BasisMismatch(format!(
            "first-order density needs beta1, got {}",
            beta1.kind().name()
        )));
    }
    if !beta1.basis().is_prefix_of(&dec.basis()) {
        return Err(Error::BasisMismatch(format!(
            "beta1 basis '{}' does not match decomposition basis '{}'",
            beta1.basis().id,
            dec.basis().id
        )));
    }
    let m = beta1.dim();
    let lam = dec.weights();
    let i = Complex64::new(0.0, 1.0);
    let p = DMatrix::from_fn(m, m, |a, b| i * beta1.entries()[(a, b)] * (lam[a] * lam[b]).sqrt());
    let entries = DMatrix::from_fn(m, m, |a, b| p[(a, b)] + p[(b, a)].conj());
    Ok(IdlerDensityMatrix {
        entries,
        basis: beta1.basis().clone(),
        order: DensityOrder::FirstOrderCorrection,
    })
}

/// Partial trace over the second axis index: `T[a][c] = Σ_b M[(a,b),(c,b)]`
/// over mode pairs present in `indices`.
pub fn trace_second_index(matrix: &DMatrix<Complex64>, indices: &[(usize, usize)]) -> Result<DMatrix<Complex64>> {
    if indices.len() < matrix.nrows() {
        return Err(Error::BasisMismatch(format!(
            "{} axis labels for a matrix of dimension {}",
            indices.len(),
            matrix.nrows()
        )));
    }
    let m = matrix.nrows();
    let size = indices[..m].iter().map(|p| p.0).max().unwrap_or(0) + 1;
    let mut out = DMatrix::zeros(size, size);
    for i in 0..m {
        for j in 0..m {
            if indices[i].1 == indices[j].1 {
                out[(indices[i].0, indices[j].0)] += matrix[(i, j)];
            }
        }
    }
    Ok(out)
}
