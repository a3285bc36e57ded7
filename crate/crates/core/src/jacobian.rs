//! Forward (tangent) differentiation of SL-PAM with respect to `(beta, lambda)`.
//!
//! Every primal update is followed by its chain-rule counterpart, so the
//! derivative of the final iterate is the exact derivative of the finite
//! iteration, not of the limit point. `2 beta / c_k` and `d_k / beta` do not
//! depend on the hyperparameters, which keeps the recursion short:
//!
//! * `du~ = du - (2/(gamma |D|^2)) D*[(1-e)^2 D du - 2 (1-e) de D u]`
//! * `du+ = c/(c+1) du~ + (u~ - z)/(c+1)^2 dc`, with `dc/dbeta = gamma |D|^2`
//! * `de~ = 2 (Du)(D du) (d/2)(1-e) / ((Du)^2 + d/2)^2 + (d/2) de / ((Du)^2 + d/2)`
//! * `de+ = [de~ - sign(e~) (dphi/du . du + dphi/dtau . dtau)] 1{|e~| > phi}`
//!
//! where `tau = lambda / beta`, so `dtau/dbeta = -lambda/beta^2` and
//! `dtau/dlambda = 1/beta`.

use crate::error::{DmsError, Result};
use crate::grid::{adjoint_slices, apply_slices, DifferenceOperator, EdgeField, HyperParams, Image};
use crate::solver::{check_inputs, should_stop, Primal, SolveResult, SolverConfig, StepConstants};

/// Directional derivatives of one variable along `beta` and `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianPair<T> {
    pub d_beta: T,
    pub d_lambda: T,
}

impl<T> JacobianPair<T> {
    pub fn get(&self, param: Param) -> &T {
        match param {
            Param::Beta => &self.d_beta,
            Param::Lambda => &self.d_lambda,
        }
    }
}

/// Which hyperparameter a derivative is taken along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Beta,
    Lambda,
}

impl Param {
    pub const BOTH: [Param; 2] = [Param::Beta, Param::Lambda];

    fn dc(self, k: &StepConstants) -> f64 {
        match self {
            Param::Beta => k.dc_dbeta,
            Param::Lambda => 0.0,
        }
    }

    fn dtau(self, k: &StepConstants) -> f64 {
        match self {
            Param::Beta => -k.lambda / (k.beta * k.beta),
            Param::Lambda => 1.0 / k.beta,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiffSolveResult {
    pub primal: SolveResult,
    pub du: JacobianPair<Image>,
    pub de: JacobianPair<EdgeField>,
}

fn tangent_utilde(
    h: usize,
    w: usize,
    k: &StepConstants,
    du: &[f64],
    ddu: &[f64],
    e: &[f64],
    de: &[f64],
    grad_u: &[f64],
    scratch_edges: &mut [f64],
    scratch_pixels: &mut [f64],
    out: &mut [f64],
) {
    for i in 0..scratch_edges.len() {
        let g = 1.0 - e[i];
        scratch_edges[i] = g * g * ddu[i] - 2.0 * g * de[i] * grad_u[i];
    }
    adjoint_slices(h, w, scratch_edges, scratch_pixels);
    for i in 0..out.len() {
        out[i] = du[i] - k.grad_step * scratch_pixels[i];
    }
}

fn tangent_u(k: &StepConstants, dc: f64, dutilde: &[f64], utilde: &[f64], z: &[f64], out: &mut [f64]) {
    let ratio = k.c / (k.c + 1.0);
    let inv_sq = 1.0 / ((k.c + 1.0) * (k.c + 1.0));
    for i in 0..out.len() {
        out[i] = ratio * dutilde[i] + (utilde[i] - z[i]) * inv_sq * dc;
    }
}

#[inline]
fn tangent_etilde_edge(k: &StepConstants, grad: f64, dgrad: f64, e_prev: f64, de_prev: f64) -> f64 {
    let half = 0.5 * k.d_bar;
    let denom = grad * grad + half;
    2.0 * grad * dgrad * half * (1.0 - e_prev) / (denom * denom) + half * de_prev / denom
}

#[inline]
fn tangent_e_edge(
    k: &StepConstants,
    dtau: f64,
    grad: f64,
    dgrad: f64,
    etilde: f64,
    detilde: f64,
    phi: f64,
) -> f64 {
    // strict inequality: the derivative at the kink is taken as 0
    if etilde.abs() > phi {
        let denom = 2.0 * grad * grad + k.d_bar;
        let dphi_u = -4.0 * k.tau * grad * dgrad / (denom * denom);
        let dphi_tau = 1.0 / denom;
        detilde - etilde.signum() * (dphi_u + dphi_tau * dtau)
    } else {
        0.0
    }
}

/// Derivative of `u~^k` given iterate `(u^k, e^k)` and its tangents.
pub fn diff_utilde_step(
    u: &Image,
    e: &EdgeField,
    du: &JacobianPair<Image>,
    de: &JacobianPair<EdgeField>,
    theta: HyperParams,
    cfg: &SolverConfig,
    op: &DifferenceOperator,
) -> Result<JacobianPair<Image>> {
    check_inputs(u, theta, cfg, op)?;
    let k = StepConstants::new(theta, cfg, op);
    let (h, w) = (u.height(), u.width());
    let grad_u = op.apply(u)?;
    let step = |param: Param| -> Result<Image> {
        let dui = du.get(param);
        let dei = de.get(param);
        u.check_shape(dui)?;
        if dei.len() != e.len() {
            return Err(DmsError::shape(e.len(), dei.len()));
        }
        let ddu = op.apply(dui)?;
        let mut se = vec![0.0; e.len()];
        let mut sp = vec![0.0; u.len()];
        let mut out = vec![0.0; u.len()];
        tangent_utilde(
            h,
            w,
            &k,
            dui.values(),
            ddu.values(),
            e.values(),
            dei.values(),
            grad_u.values(),
            &mut se,
            &mut sp,
            &mut out,
        );
        Ok(Image::from_raw(h, w, out))
    };
    Ok(JacobianPair {
        d_beta: step(Param::Beta)?,
        d_lambda: step(Param::Lambda)?,
    })
}

/// Derivative of `u^{k+1} = (c u~ + z)/(c + 1)`.
pub fn diff_u_step(
    dutilde: &JacobianPair<Image>,
    utilde: &Image,
    z: &Image,
    theta: HyperParams,
    cfg: &SolverConfig,
    op: &DifferenceOperator,
) -> Result<JacobianPair<Image>> {
    check_inputs(z, theta, cfg, op)?;
    utilde.check_shape(z)?;
    let k = StepConstants::new(theta, cfg, op);
    let step = |param: Param| -> Result<Image> {
        let d = dutilde.get(param);
        d.check_shape(z)?;
        let mut out = vec![0.0; z.len()];
        tangent_u(&k, param.dc(&k), d.values(), utilde.values(), z.values(), &mut out);
        Ok(Image::from_raw(z.height(), z.width(), out))
    };
    Ok(JacobianPair {
        d_beta: step(Param::Beta)?,
        d_lambda: step(Param::Lambda)?,
    })
}

/// Derivative of the contour pre-step `e~^k` from `u^{k+1}`, `e^k` and tangents.
pub fn diff_etilde_step(
    u_next: &Image,
    du_next: &JacobianPair<Image>,
    e: &EdgeField,
    de: &JacobianPair<EdgeField>,
    theta: HyperParams,
    cfg: &SolverConfig,
    op: &DifferenceOperator,
) -> Result<JacobianPair<EdgeField>> {
    check_inputs(u_next, theta, cfg, op)?;
    let k = StepConstants::new(theta, cfg, op);
    let grad = op.apply(u_next)?;
    let step = |param: Param| -> Result<EdgeField> {
        let dgrad = op.apply(du_next.get(param))?;
        let dei = de.get(param);
        if dei.len() != e.len() || e.len() != grad.len() {
            return Err(DmsError::shape(grad.len(), dei.len()));
        }
        let vals = (0..grad.len())
            .map(|i| {
                tangent_etilde_edge(
                    &k,
                    grad.values()[i],
                    dgrad.values()[i],
                    e.values()[i],
                    dei.values()[i],
                )
            })
            .collect();
        Ok(EdgeField::from_raw(e.height(), e.width(), vals))
    };
    Ok(JacobianPair {
        d_beta: step(Param::Beta)?,
        d_lambda: step(Param::Lambda)?,
    })
}

/// Derivative of `e^{k+1} = soft_threshold(e~^k, phi^{k+1})`.
pub fn diff_e_step(
    u_next: &Image,
    du_next: &JacobianPair<Image>,
    etilde: &EdgeField,
    detilde: &JacobianPair<EdgeField>,
    theta: HyperParams,
    cfg: &SolverConfig,
    op: &DifferenceOperator,
) -> Result<JacobianPair<EdgeField>> {
    check_inputs(u_next, theta, cfg, op)?;
    let k = StepConstants::new(theta, cfg, op);
    let grad = op.apply(u_next)?;
    let step = |param: Param| -> Result<EdgeField> {
        let dgrad = op.apply(du_next.get(param))?;
        let det = detilde.get(param);
        if det.len() != grad.len() || etilde.len() != grad.len() {
            return Err(DmsError::shape(grad.len(), det.len()));
        }
        let dtau = param.dtau(&k);
        let vals = (0..grad.len())
            .map(|i| {
                let g = grad.values()[i];
                tangent_e_edge(
                    &k,
                    dtau,
                    g,
                    dgrad.values()[i],
                    etilde.values()[i],
                    det.values()[i],
                    k.threshold(g * g),
                )
            })
            .collect();
        Ok(EdgeField::from_raw(etilde.height(), etilde.width(), vals))
    };
    Ok(JacobianPair {
        d_beta: step(Param::Beta)?,
        d_lambda: step(Param::Lambda)?,
    })
}

/// Tangent buffers for one hyperparameter direction.
struct Tangent {
    param: Param,
    du: Vec<f64>,
    de: Vec<f64>,
    /// `D du` for the current `du`.
    ddu: Vec<f64>,
    dutilde: Vec<f64>,
    scratch_edges: Vec<f64>,
    scratch_pixels: Vec<f64>,
}

impl Tangent {
    fn new(param: Param, n: usize, m: usize) -> Self {
        Self {
            param,
            du: vec![0.0; n],
            de: vec![0.0; m],
            ddu: vec![0.0; m],
            dutilde: vec![0.0; n],
            scratch_edges: vec![0.0; m],
            scratch_pixels: vec![0.0; n],
        }
    }

    /// Advances the tangent after `p.step` moved the primal to iterate `k + 1`.
    fn step(&mut self, p: &Primal, z: &[f64], k: &StepConstants) -> bool {
        let (h, w) = (p.height, p.width);
        tangent_utilde(
            h,
            w,
            k,
            &self.du,
            &self.ddu,
            &p.e_prev,
            &self.de,
            &p.du_prev,
            &mut self.scratch_edges,
            &mut self.scratch_pixels,
            &mut self.dutilde,
        );
        tangent_u(k, self.param.dc(k), &self.dutilde, &p.utilde, z, &mut self.du);
        apply_slices(h, w, &self.du, &mut self.ddu);
        let dtau = self.param.dtau(k);
        let mut finite = true;
        for i in 0..self.de.len() {
            let (g, dg) = (p.du[i], self.ddu[i]);
            let det = tangent_etilde_edge(k, g, dg, p.e_prev[i], self.de[i]);
            let v = tangent_e_edge(k, dtau, g, dg, p.etilde[i], det, p.phi[i]);
            finite &= v.is_finite();
            self.de[i] = v;
        }
        finite && self.du.iter().all(|v| v.is_finite())
    }
}

/// SL-PAM with forward propagation of `d/dbeta` and `d/dlambda` of `(u, e)`.
///
/// The primal trajectory is computed by the same code path as
/// [`crate::solver::slpam_solve`] and is therefore bitwise identical to it.
pub fn diff_slpam_solve(
    z: &Image,
    theta: HyperParams,
    cfg: &SolverConfig,
    op: &DifferenceOperator,
) -> Result<DiffSolveResult> {
    check_inputs(z, theta, cfg, op)?;
    let k = StepConstants::new(theta, cfg, op);
    let zv = z.values();
    let (h, w) = (z.height(), z.width());
    let mut primal = Primal::new(z);
    let n = zv.len();
    let m = primal.e.len();
    let mut beta = Tangent::new(Param::Beta, n, m);
    let mut lambda = Tangent::new(Param::Lambda, n, m);

    let initial = primal.objective(zv, &k);
    let mut trace = Vec::new();
    let mut prev = initial;
    loop {
        let next = primal.step(zv, &k);
        trace.push(next);
        let iteration = trace.len();
        if !next.is_finite() {
            return Err(DmsError::Divergence { iteration });
        }
        // the two directions never read each other
        let (ok_b, ok_l) = rayon::join(
            || beta.step(&primal, zv, &k),
            || lambda.step(&primal, zv, &k),
        );
        if !(ok_b && ok_l) {
            return Err(DmsError::JacobianOverflow { iteration });
        }
        if should_stop(cfg, iteration, prev, next) {
            break;
        }
        prev = next;
    }
    Ok(DiffSolveResult {
        primal: primal.into_result(initial, trace),
        du: JacobianPair {
            d_beta: Image::from_raw(h, w, beta.du),
            d_lambda: Image::from_raw(h, w, lambda.du),
        },
        de: JacobianPair {
            d_beta: EdgeField::from_raw(h, w, beta.de),
            d_lambda: EdgeField::from_raw(h, w, lambda.de),
        },
    })
}
