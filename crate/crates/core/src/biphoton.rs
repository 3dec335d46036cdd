//! The two-photon transverse amplitude `Φ(q_s, q_i) = Γ(q_s + q_i) · K(q_s - q_i)`
//! with pump envelope `Γ(q) = exp(-|q|²/(4σ_p²))` and phase-matching factor
//! either `sinc(L²|q_s - q_i|²)` or its Gaussian stand-in
//! `exp(-c_g L² |q_s - q_i|²)`.
//!
//! With `c_g = 1/4` the Gaussian model has the closed-form Schmidt number
//! `κ = ¼(σ_p L + 1/(σ_p L))²` exactly, and factorizes over the x and y axes.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Space, TransverseGrid};

/// Gaussian phase-matching constant: `sinc(L²d²) ≈ exp(-c_g L² d²)`.
pub const GAUSSIAN_MATCH: f64 = 0.25;

/// Largest grid (samples per axis) accepted for the dense full-kernel route:
/// the kernel is `N² × N²` complex, i.e. 256 MiB at `N = 64`.
pub const MAX_FULL_KERNEL_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelModel {
    Sinc,
    DoubleGaussian,
}

impl KernelModel {
    pub fn name(self) -> &'static str {
        match self {
            KernelModel::Sinc => "sinc",
            KernelModel::DoubleGaussian => "double_gaussian",
        }
    }
}

impl std::str::FromStr for KernelModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinc" => Ok(KernelModel::Sinc),
            "double_gaussian" | "gaussian" => Ok(KernelModel::DoubleGaussian),
            _ => Err(Error::InvalidParameter(format!("unknown kernel model '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpCrystalSpec {
    /// Transverse-momentum width of the pump.
    pub sigma_p: f64,
    /// Crystal length parameter, `L² = l_z λ_p / 4π`.
    pub crystal_l: f64,
    pub model: KernelModel,
}

impl PumpCrystalSpec {
    pub fn new(sigma_p: f64, crystal_l: f64, model: KernelModel) -> Result<Self> {
        for (name, v) in [("sigma_p", sigma_p), ("L", crystal_l)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            sigma_p,
            crystal_l,
            model,
        })
    }

    /// Pump and crystal parameters for a given `σ_p L` in the simulation's length unit
    /// `sqrt(L/σ_p)`, where `σ_p = L = sqrt(σ_p L)`.
    pub fn from_product(sigma_p_l: f64, model: KernelModel) -> Result<Self> {
        if !(sigma_p_l.is_finite() && sigma_p_l > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma_p * L must be positive, got {sigma_p_l}"
            )));
        }
        let s = sigma_p_l.sqrt();
        Self::new(s, s, model)
    }

    pub fn product(&self) -> f64 {
        self.sigma_p * self.crystal_l
    }

    /// `-1` in the strongly correlated regime `σ_p L > 1` (mirror mapping),
    /// `+1` otherwise.
    pub fn regime_sign(&self) -> i8 {
        if self.product() > 1.0 {
            -1
        } else {
            1
        }
    }

    fn narrow_scale(&self) -> f64 {
        self.sigma_p.min(1.0 / self.crystal_l)
    }

    fn broad_scale(&self) -> f64 {
        self.sigma_p.max(1.0 / self.crystal_l)
    }

    /// Checks that the momentum grid resolves both kernel factors: the step
    /// must be at most `1.6 min(σ_p, 1/L)` and the half span at least
    /// `2 max(σ_p, 1/L)`.
    pub fn check_resolution(&self, grid: &TransverseGrid) -> Result<()> {
        let dq = grid.momentum_step();
        let span = grid.axis_half_span(Space::Momentum);
        if dq > 1.6 * self.narrow_scale() {
            return Err(Error::Resolution(format!(
                "momentum step {dq:.4} exceeds 1.6 x the narrowest kernel scale {:.4}; increase the half extent",
                self.narrow_scale()
            )));
        }
        if span < 2.0 * self.broad_scale() {
            return Err(Error::Resolution(format!(
                "momentum half span {span:.4} is below 2 x the broadest kernel scale {:.4}; increase the sample count",
                self.broad_scale()
            )));
        }
        Ok(())
    }

    /// Default real-space half extent for `samples` per axis: five times
    /// `largest_waist`, widened if needed until the momentum step resolves
    /// the kernel.
    pub fn default_half_extent(&self, samples: usize, largest_waist: f64) -> Result<f64> {
        let h = (5.0 * largest_waist).max(std::f64::consts::PI / (1.6 * self.narrow_scale()));
        let grid = TransverseGrid::new(samples, h)?;
        self.check_resolution(&grid).map_err(|e| {
            Error::Resolution(format!("{e} (no half extent works with N = {samples})"))
        })?;
        Ok(h)
    }
}

/// Closed-form 2-D Schmidt number of the double-Gaussian amplitude.
pub fn schmidt_number_gaussian(sigma_p: f64, crystal_l: f64) -> Result<f64> {
    let x = sigma_p * crystal_l;
    if !(x.is_finite() && x > 0.0) || sigma_p <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sigma_p * L must be positive, got {x}"
        )));
    }
    Ok(0.25 * (x + 1.0 / x).powi(2))
}

/// Per-axis Schmidt number `½(σ_p L + 1/(σ_p L))`; the 2-D value is its square.
pub fn schmidt_number_gaussian_1d(sigma_p_l: f64) -> f64 {
    0.5 * (sigma_p_l + 1.0 / sigma_p_l)
}

/// Per-axis geometric ratio `μ` of the double-Gaussian spectrum
/// `λ_n = (1 - μ) μⁿ`.
pub fn gaussian_spectrum_ratio(sigma_p_l: f64) -> f64 {
    ((1.0 - sigma_p_l) / (1.0 + sigma_p_l)).powi(2)
}

#[derive(Debug, Clone)]
pub enum Representation {
    /// `(N²) × (N²)` matrix indexed by flattened `(q_s, q_i)`, `flat = iy·N + ix`.
    FullKernel(DMatrix<Complex64>),
    /// One-axis kernels whose tensor product is the 2-D kernel.
    Separable { x: DMatrix<f64>, y: DMatrix<f64> },
}

/// A sampled biphoton amplitude with unit Frobenius norm.
#[derive(Debug, Clone)]
pub struct BiphotonAmplitude {
    grid: TransverseGrid,
    spec: PumpCrystalSpec,
    representation: Representation,
}

impl BiphotonAmplitude {
    pub fn grid(&self) -> &TransverseGrid {
        &self.grid
    }

    pub fn spec(&self) -> &PumpCrystalSpec {
        &self.spec
    }

    pub fn representation(&self) -> &Representation {
        &self.representation
    }

    /// Multiplies the kernel by a unit-modulus constant.
    pub fn with_global_phase(&self, phase: f64) -> Self {
        let c = Complex64::from_polar(1.0, phase);
        let representation = match &self.representation {
            Representation::FullKernel(m) => Representation::FullKernel(m * c),
            Representation::Separable { x, y } => {
                let full = separable_to_full(x, y);
                Representation::FullKernel(full * c)
            }
        };
        Self {
            representation,
            ..self.clone()
        }
    }

    /// The kernel as a dense `(N²) × (N²)` matrix.
    pub fn to_full_matrix(&self) -> DMatrix<Complex64> {
        match &self.representation {
            Representation::FullKernel(m) => m.clone(),
            Representation::Separable { x, y } => separable_to_full(x, y),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match &self.representation {
            Representation::FullKernel(m) => frobenius(m.iter().map(|v| v.norm_sqr())),
            Representation::Separable { x, y } => {
                frobenius(x.iter().map(|v| v * v)) * frobenius(y.iter().map(|v| v * v))
            }
        }
    }
}

fn frobenius(squares: impl Iterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    for s in squares {
        acc += s;
    }
    acc.sqrt()
}

fn separable_to_full(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = x.nrows();
    DMatrix::from_fn(n * n, n * n, |s, i| {
        let (sy, sx) = (s / n, s % n);
        let (iy, ix) = (i / n, i % n);
        Complex64::new(x[(sx, ix)] * y[(sy, iy)], 0.0)
    })
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Dense kernel `Γ(q_s + q_i) · sinc(L²|q_s - q_i|²)`.
pub fn amplitude_sinc(spec: &PumpCrystalSpec, grid: &TransverseGrid) -> Result<BiphotonAmplitude> {
    if spec.model != KernelModel::Sinc {
        return Err(Error::InvalidParameter("amplitude_sinc needs the sinc model".into()));
    }
    let n = grid.samples_per_axis();
    if n > MAX_FULL_KERNEL_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "full kernel limited to {MAX_FULL_KERNEL_SAMPLES} samples per axis, got {n}"
        )));
    }
    spec.check_resolution(grid)?;
    let q = grid.coordinates(Space::Momentum);
    let m = n * n;
    let inv4s2 = 1.0 / (4.0 * spec.sigma_p * spec.sigma_p);
    let l2 = spec.crystal_l * spec.crystal_l;
    let mut data = vec![Complex64::new(0.0, 0.0); m * m];
    data.par_chunks_mut(m).enumerate().for_each(|(i, column)| {
        let (qix, qiy) = (q[i % n], q[i / n]);
        for (s, out) in column.iter_mut().enumerate() {
            let (qsx, qsy) = (q[s % n], q[s / n]);
            let sum2 = (qsx + qix).powi(2) + (qsy + qiy).powi(2);
            let diff2 = (qsx - qix).powi(2) + (qsy - qiy).powi(2);
            *out = Complex64::new((-sum2 * inv4s2).exp() * sinc(l2 * diff2), 0.0);
        }
    });
    let mut matrix = DMatrix::from_vec(m, m, data);
    let norm = frobenius(matrix.iter().map(|v| v.norm_sqr()));
    matrix /= Complex64::new(norm, 0.0);
    Ok(BiphotonAmplitude {
        grid: *grid,
        spec: *spec,
        representation: Representation::FullKernel(matrix),
    })
}

/// One-axis factor of the double-Gaussian kernel, unit Frobenius norm.
pub fn gaussian_axis_kernel(spec: &PumpCrystalSpec, grid: &TransverseGrid) -> DMatrix<f64> {
    let q = grid.coordinates(Space::Momentum);
    let n = q.len();
    let inv4s2 = 1.0 / (4.0 * spec.sigma_p * spec.sigma_p);
    let cl2 = GAUSSIAN_MATCH * spec.crystal_l * spec.crystal_l;
    let mut k = DMatrix::from_fn(n, n, |s, i| {
        (-(q[s] + q[i]).powi(2) * inv4s2 - cl2 * (q[s] - q[i]).powi(2)).exp()
    });
    let norm = frobenius(k.iter().map(|v| v * v));
    k /= norm;
    k
}

/// Separable double-Gaussian amplitude.
pub fn amplitude_gaussian(
    spec: &PumpCrystalSpec,
    grid: &TransverseGrid,
) -> Result<BiphotonAmplitude> {
    if spec.model != KernelModel::DoubleGaussian {
        return Err(Error::InvalidParameter(
            "amplitude_gaussian needs the double_gaussian model".into(),
        ));
    }
    spec.check_resolution(grid)?;
    let x = gaussian_axis_kernel(spec, grid);
    Ok(BiphotonAmplitude {
        grid: *grid,
        spec: *spec,
        representation: Representation::Separable { y: x.clone(), x },
    })
}

/// Builds the amplitude for whichever model `spec` names.
pub fn amplitude(spec: &PumpCrystalSpec, grid: &TransverseGrid) -> Result<BiphotonAmplitude> {
    match spec.model {
        KernelModel::Sinc => amplitude_sinc(spec, grid),
        KernelModel::DoubleGaussian => amplitude_gaussian(spec, grid),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntanglementMetrics {
    /// Participation ratio `κ = 1/Σλ²`.
    pub schmidt_number_kappa: f64,
    /// `-Σ λ log₂ λ`.
    pub entropy_bits: f64,
}

pub fn entanglement_metrics(weights: &[f64]) -> Result<EntanglementMetrics> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::Unnormalized(total));
    }
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
    let entropy: f64 = weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| -w * w.log2())
        .sum();
    Ok(EntanglementMetrics {
        schmidt_number_kappa: 1.0 / sum_sq,
        entropy_bits: entropy.max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_schmidt_number() {
        assert_eq!(schmidt_number_gaussian(1.0, 1.0).unwrap(), 1.0);
        assert!((schmidt_number_gaussian(10.0, 1.0).unwrap() - 25.5025).abs() < 1e-12);
        assert!((schmidt_number_gaussian(0.1, 0.1).unwrap() - 2500.5000249).abs() < 1e-6);
        assert!(schmidt_number_gaussian(-1.0, 1.0).is_err());
        assert!(schmidt_number_gaussian(0.0, 1.0).is_err());
        assert!(
            (schmidt_number_gaussian_1d(10.0).powi(2) - schmidt_number_gaussian(10.0, 1.0).unwrap())
                .abs()
                < 1e-12
        );
    }

    proptest! {
        #[test]
        fn schmidt_number_is_inversion_symmetric(x in 1e-3f64..1e3) {
            let a = schmidt_number_gaussian(x, 1.0).unwrap();
            let b = schmidt_number_gaussian(1.0 / x, 1.0).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
            prop_assert!(a >= 1.0);
        }
    }

    #[test]
    fn metrics_examples() {
        let m = entanglement_metrics(&[1.0]).unwrap();
        assert_eq!((m.schmidt_number_kappa, m.entropy_bits), (1.0, 0.0));
        let m = entanglement_metrics(&[1.0 / 16.0; 16]).unwrap();
        assert!((m.schmidt_number_kappa - 16.0).abs() < 1e-12);
        assert!((m.entropy_bits - 4.0).abs() < 1e-12);
        let mu: f64 = 0.5;
        let mut w: Vec<f64> = (0..80).map(|n| (1.0 - mu) * mu.powi(n)).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        let m = entanglement_metrics(&w).unwrap();
        assert!((m.schmidt_number_kappa - 3.0).abs() < 1e-10);
        assert!(matches!(entanglement_metrics(&[0.5, 0.4]), Err(Error::Unnormalized(_))));
    }

    #[test]
    fn sinc_kernel_peak_and_symmetry() {
        let spec = PumpCrystalSpec::from_product(1.0, KernelModel::Sinc).unwrap();
        let grid = TransverseGrid::new(16, 3.0).unwrap();
        let amp = amplitude_sinc(&spec, &grid).unwrap();
        let Representation::FullKernel(m) = amp.representation() else { panic!() };
        let center = 8 * 16 + 8;
        let peak = m[(center, center)];
        assert!(m.iter().all(|v| v.norm() <= peak.norm()));
        assert_eq!(m.transpose(), *m);
        assert!((amp.frobenius_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_kernel_is_isotropic_and_normalized() {
        let spec = PumpCrystalSpec::from_product(0.5, KernelModel::DoubleGaussian).unwrap();
        let grid = TransverseGrid::new(32, 7.0).unwrap();
        let amp = amplitude_gaussian(&spec, &grid).unwrap();
        let Representation::Separable { x, y } = amp.representation() else { panic!() };
        assert_eq!(x, y);
        assert!((amp.frobenius_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn model_mismatch_and_resolution_errors() {
        let grid = TransverseGrid::new(16, 3.0).unwrap();
        let g = PumpCrystalSpec::from_product(1.0, KernelModel::DoubleGaussian).unwrap();
        assert!(amplitude_sinc(&g, &grid).is_err());
        let narrow = PumpCrystalSpec::from_product(0.01, KernelModel::DoubleGaussian).unwrap();
        assert!(matches!(amplitude_gaussian(&narrow, &grid), Err(Error::Resolution(_))));
        assert!(narrow.default_half_extent(64, 2f64.sqrt()).is_err());
    }

    #[test]
    fn default_half_extent_rule() {
        let s = PumpCrystalSpec::from_product(1.0, KernelModel::DoubleGaussian).unwrap();
        assert!((s.default_half_extent(64, 2f64.sqrt()).unwrap() - 5.0 * 2f64.sqrt()).abs() < 1e-12);
        let s = PumpCrystalSpec::from_product(0.07, KernelModel::DoubleGaussian).unwrap();
        let h = s.default_half_extent(64, 2f64.sqrt()).unwrap();
        assert!(h > 5.0 * 2f64.sqrt());
        s.check_resolution(&TransverseGrid::new(64, h).unwrap()).unwrap();
    }

    #[test]
    fn regime_sign_switches_at_unity() {
        let f = |x| PumpCrystalSpec::from_product(x, KernelModel::DoubleGaussian).unwrap().regime_sign();
        assert_eq!((f(20.0), f(1.0), f(0.05)), (-1, 1, 1));
    }
}
