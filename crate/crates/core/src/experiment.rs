//! End-to-end pipeline (noise level, tuning, final solve) and the PSNR table
//! over geometries, noise levels and noise-level policies.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{DmsError, Result};
use crate::grid::{DifferenceOperator, HyperParams, Image};
use crate::hyperopt::{sugar_descent, OptimConfig, OptimTrace};
use crate::noise::{add_noise, estimate_sigma_mad, psnr, NoiseModel};
use crate::phantom::{make_phantom, Geometry, PhantomParams};
use crate::solver::{slpam_solve, SolveResult, SolverConfig};
use crate::stein::SteinConfig;

pub const TABLE_SIGMAS: [f64; 5] = [0.01, 0.05, 0.1, 0.2, 0.3];

/// How the noise level fed to the risk estimate is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaPolicy {
    /// The true (or user-supplied) value.
    Given,
    /// Wavelet MAD estimate from the noisy image.
    Mad,
}

impl SigmaPolicy {
    pub const ALL: [SigmaPolicy; 2] = [SigmaPolicy::Given, SigmaPolicy::Mad];

    pub fn name(self) -> &'static str {
        match self {
            SigmaPolicy::Given => "given",
            SigmaPolicy::Mad => "mad",
        }
    }
}

impl std::str::FromStr for SigmaPolicy {
    type Err = DmsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "given" | "true" => Ok(SigmaPolicy::Given),
            "mad" | "estimated" => Ok(SigmaPolicy::Mad),
            other => Err(DmsError::InvalidParameter(format!("unknown sigma policy '{other}'"))),
        }
    }
}

/// Picks sigma according to `policy`; `given` is required for [`SigmaPolicy::Given`].
pub fn resolve_sigma(z: &Image, policy: SigmaPolicy, given: Option<f64>) -> Result<f64> {
    match (policy, given) {
        (SigmaPolicy::Given, Some(s)) => Ok(s),
        (SigmaPolicy::Given, None) => Err(DmsError::InvalidParameter(
            "sigma policy 'given' needs a sigma value".into(),
        )),
        (SigmaPolicy::Mad, _) => {
            let s = estimate_sigma_mad(z)?.sigma;
            if s > 0.0 {
                Ok(s)
            } else {
                Err(DmsError::DegenerateInput("MAD noise estimate is zero".into()))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct AutoTuneResult {
    pub sigma: f64,
    pub theta: HyperParams,
    pub trace: OptimTrace,
    pub solution: SolveResult,
}

/// Averaged SUGAR tuning at noise level `stein.sigma`, then a final solve at the optimum.
pub fn auto_tune(
    z: &Image,
    stein: &SteinConfig,
    optim: &OptimConfig,
    solver: &SolverConfig,
) -> Result<AutoTuneResult> {
    let op = DifferenceOperator::new(z.height(), z.width())?;
    let (theta, trace) = sugar_descent(z, stein, optim, solver, &op)?;
    let solution = slpam_solve(z, theta, solver, &op)?;
    Ok(AutoTuneResult {
        sigma: stein.sigma,
        theta,
        trace,
        solution,
    })
}

/// Mean and half-width of the two-sided 95% Student-t confidence interval.
///
/// A single value has an undefined interval, reported as `NaN`.
pub fn confidence_interval(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.975);
    (mean, t * (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableConfig {
    pub size: usize,
    pub realizations: usize,
    pub sigmas: Vec<f64>,
    pub geometries: Vec<Geometry>,
    pub policies: Vec<SigmaPolicy>,
    pub seed: u64,
    pub replicates: usize,
    pub alpha: f64,
    pub phantom: PhantomParams,
    pub solver: SolverConfig,
    pub optim: OptimConfig,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            size: 64,
            realizations: 5,
            sigmas: TABLE_SIGMAS.to_vec(),
            geometries: Geometry::ALL.to_vec(),
            policies: SigmaPolicy::ALL.to_vec(),
            seed: 0,
            replicates: 5,
            alpha: 0.3,
            phantom: PhantomParams::default(),
            solver: SolverConfig::default(),
            optim: OptimConfig::default(),
        }
    }
}

impl TableConfig {
    /// 256x256 images and 10 realizations per cell.
    pub fn full() -> Self {
        Self {
            size: 256,
            realizations: 10,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub geometry: Geometry,
    pub sigma: f64,
    pub policy: SigmaPolicy,
    /// PSNR of each successful realization.
    pub psnr: Vec<f64>,
    pub mean: f64,
    pub half_width: f64,
    pub failures: Vec<String>,
}

/// Noise seed of realization `k` in row `(geometry, sigma index)`; shared by
/// both policies so their cells are paired.
pub fn realization_seed(base: u64, geometry: Geometry, sigma_index: usize, k: usize) -> u64 {
    let g = Geometry::ALL.iter().position(|&x| x == geometry).unwrap_or(0) as u64;
    base.wrapping_mul(1_000_003)
        .wrapping_add(g * 1_000_000 + sigma_index as u64 * 1_000 + k as u64)
}

fn run_realization(
    cfg: &TableConfig,
    geometry: Geometry,
    sigma_index: usize,
    policy: SigmaPolicy,
    k: usize,
) -> Result<f64> {
    let sigma = cfg.sigmas[sigma_index];
    let ph = make_phantom(geometry, cfg.size, cfg.size, &cfg.phantom)?;
    let seed = realization_seed(cfg.seed, geometry, sigma_index, k);
    let z = add_noise(&ph.clean, NoiseModel::new(sigma, seed)?);
    let stein = SteinConfig {
        sigma: resolve_sigma(&z, policy, Some(sigma))?,
        alpha: cfg.alpha,
        replicates: cfg.replicates,
        seed,
    };
    let tuned = auto_tune(&z, &stein, &cfg.optim, &cfg.solver)?;
    psnr(&tuned.solution.u, &ph.clean)
}

/// Runs every cell; failed realizations are recorded in the cell and skipped.
///
/// `progress` is called once per finished cell.
pub fn run_table(cfg: &TableConfig, progress: impl Fn(&TableCell) + Sync) -> Result<Vec<TableCell>> {
    if cfg.realizations == 0 || cfg.sigmas.is_empty() || cfg.geometries.is_empty() || cfg.policies.is_empty() {
        return Err(DmsError::InvalidParameter("table has no cells or realizations".into()));
    }
    let mut cells = Vec::new();
    for &geometry in &cfg.geometries {
        for sigma_index in 0..cfg.sigmas.len() {
            for &policy in &cfg.policies {
                cells.push((geometry, sigma_index, policy));
            }
        }
    }
    Ok(cells
        .par_iter()
        .map(|&(geometry, sigma_index, policy)| {
            let mut values = Vec::new();
            let mut failures = Vec::new();
            for k in 0..cfg.realizations {
                match run_realization(cfg, geometry, sigma_index, policy, k) {
                    Ok(p) => values.push(p),
                    Err(e) => failures.push(format!("realization {k}: {e}")),
                }
            }
            let (mean, half_width) = confidence_interval(&values);
            let cell = TableCell {
                geometry,
                sigma: cfg.sigmas[sigma_index],
                policy,
                psnr: values,
                mean,
                half_width,
                failures,
            };
            progress(&cell);
            cell
        })
        .collect())
}

/// CSV with header `geometry,sigma,policy,mean_psnr,ci95_half_width,realizations,failures`.
pub fn write_table_csv(cells: &[TableCell], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| DmsError::Format(e.to_string());
    w.write_record([
        "geometry",
        "sigma",
        "policy",
        "mean_psnr",
        "ci95_half_width",
        "realizations",
        "failures",
    ])
    .map_err(err)?;
    for c in cells {
        w.write_record(&[
            c.geometry.name().to_string(),
            c.sigma.to_string(),
            c.policy.name().to_string(),
            format!("{:.4}", c.mean),
            format!("{:.4}", c.half_width),
            c.psnr.len().to_string(),
            c.failures.len().to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

/// Number of adjacent-sigma pairs in `cells` (one geometry and policy, sorted
/// by sigma) where mean PSNR fails to decrease.
pub fn count_inversions(cells: &[&TableCell]) -> usize {
    cells.windows(2).filter(|w| !(w[1].mean < w[0].mean)).count()
}
