//! Shared fixtures for the qdiff benchmarks.

use qdiff_core::biphoton::amplitude_gaussian;
use qdiff_core::{
    schmidt_decompose, KernelModel, PumpCrystalSpec, SchmidtDecomposition, TransverseGrid,
};

/// Double-Gaussian decomposition at `sigma_p_l` on an `n`-point grid of half extent `h`.
pub fn decomposition(sigma_p_l: f64, n: usize, h: f64, rank: usize) -> SchmidtDecomposition {
    let spec = PumpCrystalSpec::from_product(sigma_p_l, KernelModel::DoubleGaussian).unwrap();
    let grid = TransverseGrid::new(n, h).unwrap();
    schmidt_decompose(&amplitude_gaussian(&spec, &grid).unwrap(), rank).unwrap()
}
