//! Simulation core for entangled-photon diffraction imaging: biphoton
//! amplitudes and their Schmidt modes, matter couplings, and coincidence
//! images.
//!
//! Lengths are dimensionless, in units of `sqrt(L/σ_p)`. Momentum-space
//! fields use the centered (fftshift) layout.

pub mod biphoton;
pub mod error;
pub mod grid;
pub mod imaging;
pub mod io;
pub mod linalg;
pub mod matter;
pub mod modes;
pub mod noise;
pub mod phantom;
pub mod schmidt;
pub mod spectral;

pub use biphoton::{
    amplitude, amplitude_gaussian, amplitude_sinc, entanglement_metrics, schmidt_number_gaussian,
    BiphotonAmplitude, EntanglementMetrics, KernelModel, PumpCrystalSpec,
};
pub use error::{Error, Result};
pub use grid::{inner_product, ComplexField, Space, TransverseGrid};
pub use imaging::{
    coincidence_image, complex_image, far_field_image, frequency_resolved_image, image_metrics,
    phase_map, reweight, subtract_background, ImageMetrics, PhaseProjection, RealImage,
    WeightScheme, WeightVector,
};
pub use matter::{
    beta_matrix, beta_matrix_momentum, beta_matrix_schmidt, idler_density_first_order,
    idler_density_initial, load_charge_density, ChargeDensity, CouplingKind, CouplingMatrix,
    CouplingOrder, IdlerDensityMatrix,
};
pub use modes::{build_mode_set, ModeFamily, ModeSet, ModeSpec};
pub use schmidt::{
    gaussian_schmidt_analytic, schmidt_decompose, BasisManifest, SchmidtDecomposition,
};
pub use spectral::{gamma_matrix, gamma_transfer, spectral_gate_functional, Gate, GateSpec, GammaQuadrature};
