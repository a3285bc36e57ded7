#![allow(dead_code)]

use dms_core::noise::{add_noise, NoiseModel};
use dms_core::phantom::{make_phantom, Geometry, PhantomParams};
use dms_core::solver::{slpam_solve, SolverConfig};
use dms_core::{DifferenceOperator, HyperParams, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Minimizer of a convex 1D function by bisection on the sign of its right derivative.
pub fn argmin_convex_1d(right_derivative: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    assert!(right_derivative(lo) < 0.0 && right_derivative(hi) >= 0.0, "not bracketed");
    for _ in 0..300 {
        let m = 0.5 * (lo + hi);
        if m == lo || m == hi {
            break;
        }
        if right_derivative(m) < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

/// `(clean, noisy)` pair for a phantom with the default constants.
pub fn noisy_phantom(geometry: Geometry, size: usize, sigma: f64, seed: u64) -> (Image, Image) {
    let ph = make_phantom(geometry, size, size, &PhantomParams::default()).unwrap();
    let z = add_noise(&ph.clean, NoiseModel::new(sigma, seed).unwrap());
    (ph.clean, z)
}

pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

pub fn rel_err(a: &Image, b: &Image) -> f64 {
    let diff = a.axpy(-1.0, b).norm_sq().sqrt();
    let scale = b.norm_sq().sqrt();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub struct FdResult {
    pub fd: Image,
    pub step: f64,
    /// Whether both stencil points kept the base active set.
    pub stable: bool,
}

/// Central difference of the solver output along one hyperparameter.
///
/// Starts at `h = rel_step * theta_i` and halves (up to 6 times) while either
/// stencil point changes the active set of the base solve.
pub fn solve_fd(
    z: &Image,
    theta: HyperParams,
    along_beta: bool,
    rel_step: f64,
    solver: &SolverConfig,
    op: &DifferenceOperator,
) -> FdResult {
    let base = slpam_solve(z, theta, solver, op).unwrap().active_set_digest;
    let value = if along_beta { theta.beta } else { theta.lambda };
    let mut h = rel_step * value;
    let shifted = |d: f64| {
        let mut t = theta;
        if along_beta {
            t.beta += d;
        } else {
            t.lambda += d;
        }
        slpam_solve(z, t, solver, op).unwrap()
    };
    let mut last = None;
    for _ in 0..7 {
        let (p, m) = (shifted(h), shifted(-h));
        let stable = p.active_set_digest == base && m.active_set_digest == base;
        let fd = p.u.axpy(-1.0, &m.u).scaled(0.5 / h);
        if stable {
            return FdResult { fd, step: h, stable };
        }
        last = Some(FdResult { fd, step: h, stable });
        h *= 0.5;
    }
    last.unwrap()
}

pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn variance(values: &[f64]) -> f64 {
    std_dev(values).powi(2)
}
