//! Spectral gating and the far-field coupling γ.
//!
//! `ℰ(ω_s) = ∫ dω_i G_s(ω_s) G_i(ω_i) |A(ω_s + ω_i)|²` with Gaussian gates
//! of unit peak and a unit-area Gaussian pump spectrum. The far-field
//! coupling is `γ_nm = Σ_k I_nk β_km` with
//! `I_nk = ∫ d²ρ dω ℰ(ω) u_n(ρ) u_k*(Q)`, `Q = (ω/c) ρ/R` over a detector
//! disk of radius `R`.

use std::f64::consts::{LN_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Space, TransverseGrid};
use crate::matter::{CouplingKind, CouplingMatrix};
use crate::schmidt::{ModeStorage, SchmidtDecomposition};

/// Simpson points for the inner idler-frequency integral.
const IDLER_POINTS: usize = 257;
/// Half width of a Gaussian's support, in standard deviations.
const SUPPORT_SIGMAS: f64 = 8.0;
/// Samples required across the narrowest spectral feature.
pub const MIN_SAMPLES_PER_WIDTH: f64 = 8.0;

fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * LN_2).sqrt())
}

/// A Gaussian detector gate of unit peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate {
    pub center: f64,
    pub fwhm: f64,
}

impl Gate {
    pub fn new(center: f64, fwhm: f64) -> Result<Self> {
        if !(fwhm > 0.0 && fwhm.is_finite() && center.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gate needs a finite center and positive width, got center {center}, fwhm {fwhm}"
            )));
        }
        Ok(Self { center, fwhm })
    }

    pub fn value(&self, omega: f64) -> f64 {
        let d = omega - self.center;
        (-4.0 * LN_2 * d * d / (self.fwhm * self.fwhm)).exp()
    }

    pub fn sigma(&self) -> f64 {
        fwhm_to_sigma(self.fwhm)
    }
}

/// Signal and idler gates plus the pump spectrum `|A(ω)|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSpec {
    pub signal: Gate,
    pub idler: Gate,
    /// Pump center frequency; `signal.center + idler.center` when `None`.
    pub pump_center: Option<f64>,
    pub pump_fwhm: f64,
}

impl GateSpec {
    pub fn new(signal: Gate, idler: Gate, pump_center: Option<f64>, pump_fwhm: f64) -> Result<Self> {
        if !(pump_fwhm > 0.0 && pump_fwhm.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "pump spectral width must be positive, got {pump_fwhm}"
            )));
        }
        if pump_center.is_some_and(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("pump center must be finite".into()));
        }
        Ok(Self {
            signal,
            idler,
            pump_center,
            pump_fwhm,
        })
    }

    pub fn pump_center(&self) -> f64 {
        self.pump_center
            .unwrap_or(self.signal.center + self.idler.center)
    }

    /// Unit-area Gaussian `|A(ω)|²`.
    pub fn pump_density(&self, omega: f64) -> f64 {
        let s = fwhm_to_sigma(self.pump_fwhm);
        let d = omega - self.pump_center();
        (-d * d / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
    }

    /// FWHM of the idler-gate/pump convolution that shapes ℰ besides the signal gate.
    pub fn combined_fwhm(&self) -> f64 {
        self.idler.fwhm.hypot(self.pump_fwhm)
    }

    /// Narrowest feature of ℰ that a frequency grid must resolve.
    pub fn narrowest_width(&self) -> f64 {
        self.signal.fwhm.min(self.combined_fwhm())
    }

    /// Closed form of ℰ for these all-Gaussian gates.
    pub fn closed_form(&self, omega_s: f64) -> f64 {
        let si = self.idler.sigma();
        let sp = fwhm_to_sigma(self.pump_fwhm);
        let var = si * si + sp * sp;
        let d = self.pump_center() - omega_s - self.idler.center;
        self.signal.value(omega_s) * si / var.sqrt() * (-d * d / (2.0 * var)).exp()
    }
}

/// Composite Simpson weights for `m` (odd) uniform points of spacing `h`.
fn simpson_weights(m: usize, h: f64) -> Vec<f64> {
    (0..m)
        .map(|k| {
            let c = if k == 0 || k == m - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

fn check_frequency_grid(gates: &GateSpec, omega: &[f64]) -> Result<()> {
    if omega.len() < 2 {
        return Err(Error::Resolution("frequency grid needs at least two samples".into()));
    }
    if omega.iter().any(|w| !w.is_finite()) || omega.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("frequency grid must be finite and increasing".into()));
    }
    let widest = omega.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let limit = gates.narrowest_width() / MIN_SAMPLES_PER_WIDTH;
    if widest > limit * (1.0 + 1e-9) {
        return Err(Error::Resolution(format!(
            "frequency spacing {widest} exceeds {limit} (narrowest width {} over {MIN_SAMPLES_PER_WIDTH} samples)",
            gates.narrowest_width()
        )));
    }
    Ok(())
}

/// ℰ sampled on `omega`, each value an idler-frequency Simpson integral.
pub fn spectral_gate_functional(gates: &GateSpec, omega: &[f64]) -> Result<Vec<f64>> {
    check_frequency_grid(gates, omega)?;
    let si = gates.idler.sigma();
    let sp = fwhm_to_sigma(gates.pump_fwhm);
    let wp = gates.pump_center();
    Ok(omega
        .iter()
        .map(|&ws| {
            let g = gates.signal.value(ws);
            if g == 0.0 {
                return 0.0;
            }
            // The integrand lives where both the idler gate and the shifted pump do.
            let lo = (gates.idler.center - SUPPORT_SIGMAS * si).max(wp - ws - SUPPORT_SIGMAS * sp);
            let hi = (gates.idler.center + SUPPORT_SIGMAS * si).min(wp - ws + SUPPORT_SIGMAS * sp);
            if hi <= lo {
                return 0.0;
            }
            let h = (hi - lo) / (IDLER_POINTS - 1) as f64;
            let sum: f64 = simpson_weights(IDLER_POINTS, h)
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    let wi = lo + k as f64 * h;
                    w * gates.idler.value(wi) * gates.pump_density(ws + wi)
                })
                .sum();
            g * sum
        })
        .collect())
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Sample counts and geometry for the γ quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaQuadrature {
    /// Gauss-Legendre nodes in `|ρ|` over `[0, R]`.
    pub radial: usize,
    /// Uniform nodes in the azimuth.
    pub angular: usize,
    /// Uniform signal-frequency grid with an odd number of points.
    pub omega: Vec<f64>,
    pub detector_radius: f64,
    pub speed_of_light: f64,
}

impl GammaQuadrature {
    /// A frequency grid spanning `±4` signal FWHM with at least
    /// [`MIN_SAMPLES_PER_WIDTH`] samples per narrowest width (times
    /// `refinement`), and a detector disk filling the real-space grid.
    pub fn for_gates(gates: &GateSpec, grid: &TransverseGrid, refinement: usize) -> Result<Self> {
        if refinement == 0 {
            return Err(Error::InvalidParameter("refinement must be at least 1".into()));
        }
        let span = 8.0 * gates.signal.fwhm;
        let step = gates.narrowest_width() / (MIN_SAMPLES_PER_WIDTH * refinement as f64);
        let mut m = (span / step).ceil() as usize + 1;
        if m.is_multiple_of(2) {
            m += 1;
        }
        let lo = gates.signal.center - span / 2.0;
        let h = span / (m - 1) as f64;
        let n = grid.samples_per_axis();
        Ok(Self {
            radial: n,
            angular: 2 * n,
            omega: (0..m).map(|k| lo + k as f64 * h).collect(),
            detector_radius: (n / 2 - 1) as f64 * grid.real_step(),
            speed_of_light: 1.0,
        })
    }

    fn validate(&self, grid: &TransverseGrid) -> Result<()> {
        if self.radial == 0 || self.angular == 0 {
            return Err(Error::InvalidParameter("quadrature needs radial and angular nodes".into()));
        }
        if self.omega.len() < 3 || self.omega.len().is_multiple_of(2) {
            return Err(Error::InvalidParameter(
                "frequency grid needs an odd number (≥ 3) of points".into(),
            ));
        }
        let h = self.omega[1] - self.omega[0];
        if self
            .omega
            .windows(2)
            .any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1e-300))
        {
            return Err(Error::InvalidParameter("frequency grid must be uniform".into()));
        }
        if !(self.speed_of_light > 0.0 && self.detector_radius > 0.0) {
            return Err(Error::InvalidParameter(
                "speed of light and detector radius must be positive".into(),
            ));
        }
        let real_limit = (grid.samples_per_axis() / 2 - 1) as f64 * grid.real_step();
        if self.detector_radius > real_limit * (1.0 + 1e-12) {
            return Err(Error::Resolution(format!(
                "detector radius {} exceeds the real-space grid span {real_limit}",
                self.detector_radius
            )));
        }
        let q_limit = (grid.samples_per_axis() / 2 - 1) as f64 * grid.momentum_step();
        let w_max = self.omega.iter().map(|w| w.abs()).fold(0.0, f64::max);
        let q_max = w_max / self.speed_of_light;
        if q_max > q_limit {
            return Err(Error::Resolution(format!(
                "diffraction wavevector reaches {q_max} but the momentum grid only spans {q_limit}; \
                 use a larger momentum span (more samples or a smaller half extent) or a lower frequency range"
            )));
        }
        Ok(())
    }
}

/// Mode values at off-grid points.
fn sample_mode(dec: &SchmidtDecomposition, field: &ComplexField, n: usize, space: Space, x: f64, y: f64) -> Complex64 {
    match dec.storage() {
        ModeStorage::Analytic { specs, .. } => specs[n].evaluate_in(space, x, y),
        _ => field.sample_bilinear(x, y).unwrap_or(Complex64::new(0.0, 0.0)),
    }
}

/// The transfer matrix `I_nk` over the first `n` signal modes, so that `γ = I β`.
pub fn gamma_transfer(
    dec: &SchmidtDecomposition,
    gates: &GateSpec,
    quad: &GammaQuadrature,
    n: usize,
) -> Result<DMatrix<Complex64>> {
    if n == 0 || n > dec.rank() {
        return Err(Error::InvalidParameter(format!("truncation {n} outside 1..={}", dec.rank())));
    }
    let grid = dec.grid();
    quad.validate(grid)?;
    let spectrum = spectral_gate_functional(gates, &quad.omega)?;
    let h = quad.omega[1] - quad.omega[0];
    let w_omega: Vec<f64> = simpson_weights(quad.omega.len(), h)
        .iter()
        .zip(&spectrum)
        .map(|(w, e)| w * e)
        .collect();

    let r = quad.detector_radius;
    let radial: Vec<(f64, f64)> = gauss_legendre(quad.radial)
        .into_iter()
        .map(|(t, w)| {
            let rho = 0.5 * r * (t + 1.0);
            (rho, 0.5 * r * w * rho)
        })
        .collect();
    let dphi = 2.0 * PI / quad.angular as f64;
    let mut nodes = Vec::with_capacity(radial.len() * quad.angular);
    for &(rho, w) in &radial {
        for j in 0..quad.angular {
            let phi = j as f64 * dphi;
            nodes.push((rho * phi.cos(), rho * phi.sin(), w * dphi));
        }
    }

    let sampled = |space: Space| -> Result<Vec<ComplexField>> {
        match dec.storage() {
            ModeStorage::Analytic { .. } => Ok(Vec::new()),
            _ => (0..n).into_par_iter().map(|k| dec.signal_mode(k, space)).collect(),
        }
    };
    let real = sampled(Space::Real)?;
    let momentum = sampled(Space::Momentum)?;
    let pick = |v: &[ComplexField], k: usize| -> ComplexField {
        v.get(k).cloned().unwrap_or_else(|| ComplexField::zeros(*grid, Space::Real))
    };
    let (fields_r, fields_q): (Vec<ComplexField>, Vec<ComplexField>) =
        (0..n).map(|k| (pick(&real, k), pick(&momentum, k))).unzip();

    // u_n at each node and B_k(ρ) = Σ_ω w_ω ℰ(ω) u_k((ω/c) ρ/R).
    let u: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            nodes
                .iter()
                .map(|&(x, y, _)| sample_mode(dec, &fields_r[k], k, Space::Real, x, y))
                .collect()
        })
        .collect();
    let b: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            nodes
                .iter()
                .map(|&(x, y, _)| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (omega, w) in quad.omega.iter().zip(&w_omega) {
                        if *w == 0.0 {
                            continue;
                        }
                        let s = omega / (quad.speed_of_light * r);
                        acc += sample_mode(dec, &fields_q[k], k, Space::Momentum, s * x, s * y) * *w;
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|k| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (p, node) in nodes.iter().enumerate() {
                        acc += u[i][p] * b[k][p].conj() * node.2;
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(n, n, |i, k| rows[i][k]))
}

/// `γ = I β⁽¹⁾` in the basis of `beta1`.
pub fn gamma_matrix(
    dec: &SchmidtDecomposition,
    beta1: &CouplingMatrix,
    gates: &GateSpec,
    quad: &GammaQuadrature,
) -> Result<CouplingMatrix> {
    if beta1.kind() != CouplingKind::Beta1 {
        return Err(Error::BasisMismatch(format!(
            "gamma needs beta1, got {}",
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
    let transfer = gamma_transfer(dec, gates, quad, beta1.dim())?;
    CouplingMatrix::new(transfer * beta1.entries(), beta1.basis().clone(), CouplingKind::Gamma)
}
