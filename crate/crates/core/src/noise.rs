//! Gaussian noise synthesis, MAD noise-level estimation and quality metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DmsError, Result};
use crate::grid::{compensated_sum, Image};

/// Additive white Gaussian noise `z = u + sigma * zeta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(DmsError::InvalidParameter(format!(
                "noise sigma must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(Self { sigma, seed })
    }
}

/// Seeded generator used for every Gaussian draw in the crate.
///
/// ChaCha8 is counter based, so a `(seed, stream)` pair pins the sequence on
/// every platform.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// An image of i.i.d. standard normal samples.
pub fn gaussian_image(height: usize, width: usize, seed: u64, stream: u64) -> Image {
    let mut rng = rng_for(seed, stream);
    Image::from_fn(height, width, |_, _| StandardNormal.sample(&mut rng))
}

pub fn add_noise(clean: &Image, model: NoiseModel) -> Image {
    if model.sigma == 0.0 {
        return clean.clone();
    }
    let zeta = gaussian_image(clean.height(), clean.width(), model.seed, 0);
    clean.axpy(model.sigma, &zeta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaEstimate {
    pub sigma: f64,
    /// Set when an odd last row or column was dropped before the transform.
    pub cropped: bool,
}

/// `median(|H|, |V|, |D|) / 0.6745` over one level of the orthonormal 2D Haar
/// transform.
pub fn estimate_sigma_mad(z: &Image) -> Result<SigmaEstimate> {
    let (h, w) = (z.height() & !1, z.width() & !1);
    if h == 0 || w == 0 {
        return Err(DmsError::InvalidDimension {
            height: z.height(),
            width: z.width(),
            reason: "MAD estimation needs at least a 2x2 block",
        });
    }
    let mut details = Vec::with_capacity(3 * h * w / 4);
    for r in (0..h).step_by(2) {
        for c in (0..w).step_by(2) {
            let (a, b) = (z.get(r, c), z.get(r, c + 1));
            let (p, q) = (z.get(r + 1, c), z.get(r + 1, c + 1));
            details.push((0.5 * ((a + b) - (p + q))).abs());
            details.push((0.5 * ((a - b) + (p - q))).abs());
            details.push((0.5 * ((a - b) - (p - q))).abs());
        }
    }
    Ok(SigmaEstimate {
        sigma: median(&mut details) / 0.6745,
        cropped: h != z.height() || w != z.width(),
    })
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    values.sort_unstable_by(f64::total_cmp);
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// `||u - uref||^2`.
pub fn quadratic_error(u: &Image, uref: &Image) -> Result<f64> {
    uref.check_shape(u)?;
    Ok(compensated_sum(
        u.values().iter().zip(uref.values()).map(|(a, b)| (a - b) * (a - b)),
    ))
}

/// `20 log10(||uref|| / ||u - uref||)`, `+inf` when the images coincide.
pub fn psnr(u: &Image, uref: &Image) -> Result<f64> {
    let q = quadratic_error(u, uref)?;
    if q == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (uref.norm_sq() / q).log10())
}
