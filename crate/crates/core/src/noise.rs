//! Seeded additive white Gaussian noise for robustness studies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imaging::RealImage;

/// Adds zero-mean Gaussian noise of variance `relative_power · mean(image²)`.
/// The same seed always produces the same noise.
pub fn add_white_noise(image: &RealImage, relative_power: f64, seed: u64) -> Result<RealImage> {
    if !(relative_power >= 0.0 && relative_power.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise power must be non-negative, got {relative_power}"
        )));
    }
    let v = image.values();
    let power = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    let normal = Normal::new(0.0, (relative_power * power).sqrt())
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = v.iter().map(|x| x + normal.sample(&mut rng)).collect();
    RealImage::new(*image.grid(), values)
}
