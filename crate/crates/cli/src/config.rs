//! Declarative run description read from TOML (or from the `config` entry of
//! a previously written manifest).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dms_core::experiment::SigmaPolicy;
use dms_core::hyperopt::{GridSpec, OptimConfig};
use dms_core::phantom::{Geometry, PhantomParams};
use dms_core::solver::SolverConfig;
use dms_core::stein::SteinConfig;
use dms_core::HyperParams;
use serde::{Deserialize, Serialize};

/// Everything a command needs besides its output directory. Every field has a
/// default; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Noisy input image. Ignored when `synthetic` is set.
    pub input: Option<PathBuf>,
    /// Build the input from a phantom instead of reading a file.
    pub synthetic: Option<SyntheticInput>,
    pub ground_truth: Option<PathBuf>,
    /// Defaults to `given` when `sigma` is set and `mad` otherwise.
    pub sigma_policy: Option<SigmaPolicy>,
    pub sigma: Option<f64>,
    /// Skip tuning and solve at these weights.
    pub theta: Option<HyperParams>,
    /// Seed of the Monte-Carlo probes and of synthetic noise.
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// `|e|` above which an edge is drawn in the overlay.
    pub overlay_threshold: f64,
    pub phantom: PhantomParams,
    pub solver: SolverConfig,
    pub stein: SteinOptions,
    pub optim: OptimConfig,
    pub grid: GridSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            synthetic: None,
            ground_truth: None,
            sigma_policy: None,
            sigma: None,
            theta: None,
            seed: 0,
            output: None,
            overlay_threshold: 0.5,
            phantom: PhantomParams::default(),
            solver: SolverConfig::default(),
            stein: SteinOptions::default(),
            optim: OptimConfig::default(),
            grid: GridSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticInput {
    pub geometry: Geometry,
    pub size: usize,
    pub sigma: f64,
    #[serde(default)]
    pub noise_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteinOptions {
    pub alpha: f64,
    pub replicates: usize,
}

impl Default for SteinOptions {
    fn default() -> Self {
        let d = SteinConfig::new(1.0);
        Self {
            alpha: d.alpha,
            replicates: d.replicates,
        }
    }
}

impl RunConfig {
    /// Reads TOML, or JSON when the file holds a manifest with a `config` entry.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config '{}'", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg: RunConfig = if is_json {
            let mut value: serde_json::Value = serde_json::from_str(&text)
                .with_context(|| format!("invalid JSON in '{}'", path.display()))?;
            let inner = value.get_mut("config").map(serde_json::Value::take).unwrap_or(value);
            serde_json::from_value(inner)
                .with_context(|| format!("invalid run config in '{}'", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("invalid config '{}'", path.display()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.optim.validate()?;
        self.grid.validate()?;
        if let Some(t) = self.theta {
            t.validate()?;
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                bail!("sigma must be positive, got {s}");
            }
        }
        if !(self.overlay_threshold >= 0.0) {
            bail!("overlay_threshold must be nonnegative");
        }
        self.stein_config(1.0).validate()?;
        Ok(())
    }

    pub fn policy(&self) -> SigmaPolicy {
        self.sigma_policy.unwrap_or(if self.sigma.is_some() {
            SigmaPolicy::Given
        } else {
            SigmaPolicy::Mad
        })
    }

    pub fn stein_config(&self, sigma: f64) -> SteinConfig {
        SteinConfig {
            sigma,
            alpha: self.stein.alpha,
            replicates: self.stein.replicates,
            seed: self.seed,
        }
    }
}
