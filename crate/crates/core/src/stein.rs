//! Finite-difference Monte-Carlo SURE and its hyperparameter gradient (SUGAR).
//!
//! For a probe `delta ~ N(0, I)` and step `eps`:
//!
//! ```text
//! SURE  = |u(z) - z|^2 + (2 sigma^2 / eps) <u(z + eps delta) - u(z), delta> - sigma^2 N
//! SUGAR = 2 J(z)^T (u(z) - z) + (2 sigma^2 / eps) (J(z + eps delta) - J(z))^T delta
//! ```
//!
//! where `J = d u / d(beta, lambda)`. SUGAR is the exact gradient of SURE in
//! `(beta, lambda)` for a frozen probe.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DmsError, Result};
use crate::grid::{DifferenceOperator, HyperParams, Image};
use crate::jacobian::{diff_slpam_solve, JacobianPair};
use crate::noise::gaussian_image;
use crate::solver::{slpam_solve, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteinConfig {
    /// Noise standard deviation (true or estimated).
    pub sigma: f64,
    /// Exponent in the finite-difference step `2 sigma / N^alpha`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Number of Monte-Carlo probes.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    0.3
}

fn default_replicates() -> usize {
    5
}

impl SteinConfig {
    pub fn new(sigma: f64) -> Self {
        Self {
            sigma,
            alpha: default_alpha(),
            replicates: default_replicates(),
            seed: 0,
        }
    }

    pub fn with_replicates(mut self, replicates: usize) -> Self {
        self.replicates = replicates;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(DmsError::InvalidParameter(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DmsError::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.replicates == 0 {
            return Err(DmsError::InvalidParameter("replicates must be >= 1".into()));
        }
        Ok(())
    }

    /// Finite-difference step for an image of `n` pixels.
    pub fn epsilon(&self, n: usize) -> f64 {
        fd_step(self.sigma, n, self.alpha)
    }
}

/// `2 sigma / n^alpha`.
pub fn fd_step(sigma: f64, n: usize, alpha: f64) -> f64 {
    2.0 * sigma / (n as f64).powf(alpha)
}

/// Frozen standard-normal probes `delta_1 .. delta_R`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSet {
    deltas: Vec<Image>,
    seed: Option<u64>,
}

impl MonteCarloSet {
    /// Draws `replicates` probes; probe `r` comes from stream `r` of `seed`.
    pub fn draw(height: usize, width: usize, replicates: usize, seed: u64) -> Self {
        Self {
            deltas: (0..replicates as u64)
                .map(|r| gaussian_image(height, width, seed, r))
                .collect(),
            seed: Some(seed),
        }
    }

    pub fn for_config(z: &Image, cfg: &SteinConfig) -> Self {
        Self::draw(z.height(), z.width(), cfg.replicates, cfg.seed)
    }

    /// Wraps externally supplied probes.
    pub fn from_deltas(deltas: Vec<Image>) -> Result<Self> {
        let Some(first) = deltas.first() else {
            return Err(DmsError::InvalidParameter("at least one probe is required".into()));
        };
        for d in &deltas {
            first.check_shape(d)?;
        }
        Ok(Self { deltas, seed: None })
    }

    pub fn deltas(&self) -> &[Image] {
        &self.deltas
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// An estimator `z -> u(z; theta)`.
pub trait Estimator: Sync {
    fn estimate(&self, z: &Image, theta: HyperParams) -> Result<Image>;
}

/// An estimator that also returns `d u / d(beta, lambda)`.
pub trait DiffEstimator: Estimator {
    fn estimate_with_jacobian(
        &self,
        z: &Image,
        theta: HyperParams,
    ) -> Result<(Image, JacobianPair<Image>)>;
}

/// The D-MS estimator solved by SL-PAM from a cold start.
#[derive(Debug, Clone)]
pub struct DmsEstimator<'a> {
    pub op: &'a DifferenceOperator,
    pub solver: SolverConfig,
}

impl<'a> DmsEstimator<'a> {
    pub fn new(op: &'a DifferenceOperator, solver: SolverConfig) -> Self {
        Self { op, solver }
    }
}

impl Estimator for DmsEstimator<'_> {
    fn estimate(&self, z: &Image, theta: HyperParams) -> Result<Image> {
        Ok(slpam_solve(z, theta, &self.solver, self.op)?.u)
    }
}

impl DiffEstimator for DmsEstimator<'_> {
    fn estimate_with_jacobian(
        &self,
        z: &Image,
        theta: HyperParams,
    ) -> Result<(Image, JacobianPair<Image>)> {
        let res = diff_slpam_solve(z, theta, &self.solver, self.op)?;
        Ok((res.primal.u, res.du))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRisk {
    pub sure: f64,
    /// `(d/dbeta, d/dlambda)`.
    pub sugar: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEval {
    pub sure: f64,
    pub sugar: [f64; 2],
    pub per_replicate: Vec<ReplicateRisk>,
}

fn check_probe(z: &Image, delta: &Image, cfg: &SteinConfig) -> Result<()> {
    cfg.validate()?;
    z.check_shape(delta)
}

fn perturbed(z: &Image, delta: &Image, eps: f64) -> Image {
    z.axpy(eps, delta)
}

fn sure_from(z: &Image, u: &Image, u_eps: &Image, delta: &Image, cfg: &SteinConfig) -> f64 {
    let n = z.len();
    let eps = cfg.epsilon(n);
    let s2 = cfg.sigma * cfg.sigma;
    let residual = u.axpy(-1.0, z).norm_sq();
    let dof = u_eps.axpy(-1.0, u).dot(delta);
    residual + 2.0 * s2 / eps * dof - s2 * n as f64
}

fn sugar_from(
    z: &Image,
    u: &Image,
    du: &JacobianPair<Image>,
    du_eps: &JacobianPair<Image>,
    delta: &Image,
    cfg: &SteinConfig,
) -> [f64; 2] {
    let eps = cfg.epsilon(z.len());
    let s2 = cfg.sigma * cfg.sigma;
    let residual = u.axpy(-1.0, z);
    let one = |d: &Image, d_eps: &Image| {
        2.0 * d.dot(&residual) + 2.0 * s2 / eps * d_eps.axpy(-1.0, d).dot(delta)
    };
    [one(&du.d_beta, &du_eps.d_beta), one(&du.d_lambda, &du_eps.d_lambda)]
}

/// Single-probe FDMC SURE: two independent cold-start solves.
pub fn sure_fdmc(
    z: &Image,
    theta: HyperParams,
    cfg: &SteinConfig,
    delta: &Image,
    estimator: &impl Estimator,
) -> Result<f64> {
    check_probe(z, delta, cfg)?;
    let u = estimator.estimate(z, theta)?;
    let u_eps = estimator.estimate(&perturbed(z, delta, cfg.epsilon(z.len())), theta)?;
    Ok(sure_from(z, &u, &u_eps, delta, cfg))
}

/// Single-probe FDMC SUGAR `(d/dbeta, d/dlambda)`: two differentiated solves.
pub fn sugar_fdmc(
    z: &Image,
    theta: HyperParams,
    cfg: &SteinConfig,
    delta: &Image,
    estimator: &impl DiffEstimator,
) -> Result<[f64; 2]> {
    check_probe(z, delta, cfg)?;
    let (u, du) = estimator.estimate_with_jacobian(z, theta)?;
    let (_, du_eps) =
        estimator.estimate_with_jacobian(&perturbed(z, delta, cfg.epsilon(z.len())), theta)?;
    Ok(sugar_from(z, &u, &du, &du_eps, delta, cfg))
}

fn mean_in_order(values: impl Iterator<Item = f64>, count: usize) -> f64 {
    values.fold(0.0, |acc, v| acc + v) / count as f64
}

fn wrap_replicate(index: usize) -> impl Fn(DmsError) -> DmsError {
    move |e| DmsError::Replicate {
        index,
        source: Box::new(e),
    }
}

/// Monte-Carlo averaged SURE and SUGAR over the frozen probes.
///
/// The unperturbed solve `u(z)` is identical for every probe, so it is
/// computed once; each probe then costs one differentiated solve. Per-probe
/// values equal those of [`sure_fdmc`] / [`sugar_fdmc`] exactly.
pub fn averaged_risk(
    z: &Image,
    theta: HyperParams,
    cfg: &SteinConfig,
    probes: &MonteCarloSet,
    estimator: &impl DiffEstimator,
) -> Result<RiskEval> {
    cfg.validate()?;
    for delta in probes.deltas() {
        z.check_shape(delta)?;
    }
    let eps = cfg.epsilon(z.len());
    let (u, du) = estimator.estimate_with_jacobian(z, theta)?;
    let per_replicate = probes
        .deltas()
        .par_iter()
        .enumerate()
        .map(|(index, delta)| {
            let (u_eps, du_eps) = estimator
                .estimate_with_jacobian(&perturbed(z, delta, eps), theta)
                .map_err(wrap_replicate(index))?;
            Ok(ReplicateRisk {
                sure: sure_from(z, &u, &u_eps, delta, cfg),
                sugar: sugar_from(z, &u, &du, &du_eps, delta, cfg),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(per_replicate))
}

fn summarize(per_replicate: Vec<ReplicateRisk>) -> RiskEval {
    let r = per_replicate.len();
    RiskEval {
        sure: mean_in_order(per_replicate.iter().map(|p| p.sure), r),
        sugar: [
            mean_in_order(per_replicate.iter().map(|p| p.sugar[0]), r),
            mean_in_order(per_replicate.iter().map(|p| p.sugar[1]), r),
        ],
        per_replicate,
    }
}

/// Averaged SURE alone (no Jacobians), `R + 1` plain solves.
pub fn averaged_sure(
    z: &Image,
    theta: HyperParams,
    cfg: &SteinConfig,
    probes: &MonteCarloSet,
    estimator: &impl Estimator,
) -> Result<f64> {
    cfg.validate()?;
    for delta in probes.deltas() {
        z.check_shape(delta)?;
    }
    let eps = cfg.epsilon(z.len());
    let u = estimator.estimate(z, theta)?;
    let values = probes
        .deltas()
        .par_iter()
        .enumerate()
        .map(|(index, delta)| {
            let u_eps = estimator
                .estimate(&perturbed(z, delta, eps), theta)
                .map_err(wrap_replicate(index))?;
            Ok(sure_from(z, &u, &u_eps, delta, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_in_order(values.iter().copied(), values.len()))
}
