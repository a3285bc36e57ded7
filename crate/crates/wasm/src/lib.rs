//! WebAssembly bindings behind `www/index.html`.
//!
//! A [`Session`] holds one synthetic phantom and its noisy observation. The
//! page calls [`Session::denoise`] with sliders for `(beta, lambda)` or
//! [`Session::auto_tune`] to let averaged SUGAR pick them, then paints the
//! RGBA buffers straight into a canvas.

use dms_core::experiment::auto_tune;
use dms_core::hyperopt::{OptimConfig, StartPolicy};
use dms_core::noise::{add_noise, estimate_sigma_mad, psnr, NoiseModel};
use dms_core::phantom::{make_phantom, Geometry, PhantomParams};
use dms_core::solver::{slpam_solve, SolveResult, SolverConfig};
use dms_core::stein::SteinConfig;
use dms_core::{DifferenceOperator, DmsError, EdgeField, HyperParams, Image};
use wasm_bindgen::prelude::*;

fn js_err(e: DmsError) -> JsError {
    JsError::new(&e.to_string())
}

/// Outcome of the last solve, read field by field from JS.
#[wasm_bindgen]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Report {
    pub beta: f64,
    pub lambda: f64,
    pub psnr: f64,
    pub iterations: usize,
    /// Noise level used by the tuner, `NaN` after a plain solve.
    pub sigma: f64,
    /// Descent iterations, 0 after a plain solve.
    pub tuning_steps: usize,
}

#[wasm_bindgen]
pub struct Session {
    clean: Image,
    noisy: Image,
    op: DifferenceOperator,
    solver: SolverConfig,
    result: Option<SolveResult>,
}

#[wasm_bindgen]
impl Session {
    /// `geometry` is `"diamond"` or `"ellipse"`.
    #[wasm_bindgen(constructor)]
    pub fn new(geometry: &str, size: usize, sigma: f64, seed: u64) -> Result<Session, JsError> {
        Self::build(geometry, size, sigma, seed).map_err(js_err)
    }

    pub fn size(&self) -> usize {
        self.clean.width()
    }

    /// PSNR of the noisy observation against the clean phantom.
    pub fn noisy_psnr(&self) -> f64 {
        psnr(&self.noisy, &self.clean).unwrap_or(f64::NAN)
    }

    pub fn mad_sigma(&self) -> f64 {
        estimate_sigma_mad(&self.noisy).map(|s| s.sigma).unwrap_or(f64::NAN)
    }

    pub fn clean_rgba(&self) -> Vec<u8> {
        gray_rgba(&self.clean)
    }

    pub fn noisy_rgba(&self) -> Vec<u8> {
        gray_rgba(&self.noisy)
    }

    /// Last estimate with edges `|e| > threshold` painted red; empty before any solve.
    pub fn result_rgba(&self, threshold: f64) -> Vec<u8> {
        match &self.result {
            Some(r) => overlay_rgba(&r.u, &r.e, &self.op, threshold),
            None => Vec::new(),
        }
    }

    pub fn denoise(&mut self, beta: f64, lambda: f64) -> Result<Report, JsError> {
        self.solve_at(beta, lambda).map_err(js_err)
    }

    /// Averaged SUGAR descent with `replicates` probes and at most `steps`
    /// iterations; `sigma <= 0` means estimate it by MAD. With `scan` the
    /// start is the best node of a 5x5 SURE grid, otherwise the closed-form
    /// initialization.
    pub fn auto_tune(&mut self, sigma: f64, replicates: usize, steps: usize, scan: bool) -> Result<Report, JsError> {
        self.tune(sigma, replicates, steps, scan).map_err(js_err)
    }
}

impl Session {
    pub fn build(geometry: &str, size: usize, sigma: f64, seed: u64) -> dms_core::Result<Session> {
        let geometry: Geometry = geometry.parse()?;
        let phantom = make_phantom(geometry, size, size, &PhantomParams::default())?;
        let noisy = add_noise(&phantom.clean, NoiseModel::new(sigma, seed)?);
        Ok(Session {
            op: DifferenceOperator::new(size, size)?,
            clean: phantom.clean,
            noisy,
            solver: SolverConfig::default(),
            result: None,
        })
    }

    pub fn solve_at(&mut self, beta: f64, lambda: f64) -> dms_core::Result<Report> {
        let theta = HyperParams::new(beta, lambda)?;
        let res = slpam_solve(&self.noisy, theta, &self.solver, &self.op)?;
        let report = Report {
            beta,
            lambda,
            psnr: psnr(&res.u, &self.clean)?,
            iterations: res.iterations,
            sigma: f64::NAN,
            tuning_steps: 0,
        };
        self.result = Some(res);
        Ok(report)
    }

    pub fn tune(&mut self, sigma: f64, replicates: usize, steps: usize, scan: bool) -> dms_core::Result<Report> {
        let sigma = if sigma > 0.0 { sigma } else { estimate_sigma_mad(&self.noisy)?.sigma };
        let stein = SteinConfig::new(sigma).with_replicates(replicates);
        let optim = OptimConfig {
            t_max: steps,
            start: if scan { StartPolicy::default() } else { StartPolicy::Formula },
            ..OptimConfig::default()
        };
        let tuned = auto_tune(&self.noisy, &stein, &optim, &self.solver)?;
        let report = Report {
            beta: tuned.theta.beta,
            lambda: tuned.theta.lambda,
            psnr: psnr(&tuned.solution.u, &self.clean)?,
            iterations: tuned.solution.iterations,
            sigma,
            tuning_steps: tuned.trace.iterates.len() - 1,
        };
        self.result = Some(tuned.solution);
        Ok(report)
    }

    pub fn result(&self) -> Option<&SolveResult> {
        self.result.as_ref()
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn gray_rgba(img: &Image) -> Vec<u8> {
    img.values()
        .iter()
        .flat_map(|&v| {
            let g = to_byte(v);
            [g, g, g, 255]
        })
        .collect()
}

/// The pixel on the far side of each strong edge is painted red.
pub fn overlay_rgba(img: &Image, e: &EdgeField, op: &DifferenceOperator, threshold: f64) -> Vec<u8> {
    let mut rgba = gray_rgba(img);
    for (&(_, q), &v) in op.rows().iter().zip(e.values()) {
        if v.abs() > threshold {
            rgba[4 * q..4 * q + 4].copy_from_slice(&[230, 30, 30, 255]);
        }
    }
    rgba
}
