//! Automatic selection of `(beta, lambda)`: projected limited-memory BFGS on
//! averaged SURE driven by averaged SUGAR, and the exhaustive grid search used
//! as a reference.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DmsError, Result};
use crate::grid::{DifferenceOperator, HyperParams, Image};
use crate::noise::quadratic_error;
use crate::solver::{slpam_solve, SolverConfig};
use crate::stein::{averaged_risk, averaged_sure, DmsEstimator, MonteCarloSet, SteinConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineSearchConfig {
    /// Step multiplier after a rejected trial.
    pub shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_trials: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            c1: 1e-4,
            max_trials: 30,
        }
    }
}

/// Where the descent starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum StartPolicy {
    /// The model-based formulas of [`init_hyperparams`].
    Formula,
    /// Best node of averaged SURE on a coarse log grid.
    Scan(GridSpec),
    Fixed(HyperParams),
}

impl Default for StartPolicy {
    fn default() -> Self {
        StartPolicy::Scan(GridSpec::square(5))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub t_max: usize,
    /// Stop when the Euclidean norm of the gradient in `(beta, lambda)` falls below this.
    pub grad_tol: f64,
    /// Scale of the initial inverse Hessian.
    pub kappa: f64,
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Longest allowed step in `(ln beta, ln lambda)`, Euclidean norm.
    pub max_log_step: f64,
    pub beta_min: f64,
    pub lambda_min: f64,
    pub line_search: LineSearchConfig,
    pub start: StartPolicy,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            t_max: 20,
            grad_tol: 1e-8,
            kappa: 0.9,
            memory: 10,
            max_log_step: 3.0,
            beta_min: 1e-12,
            lambda_min: 1e-12,
            line_search: LineSearchConfig::default(),
            start: StartPolicy::default(),
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let ls = &self.line_search;
        let ok = self.t_max > 0
            && self.grad_tol > 0.0
            && self.kappa > 0.0
            && self.kappa < 1.0
            && self.memory > 0
            && self.max_log_step > 0.0
            && self.beta_min > 0.0
            && self.lambda_min > 0.0
            && ls.shrink > 0.0
            && ls.shrink < 1.0
            && ls.c1 > 0.0
            && ls.c1 < 1.0
            && ls.max_trials > 0
            && match self.start {
                StartPolicy::Scan(grid) => grid.validate().is_ok(),
                StartPolicy::Fixed(theta) => theta.validate().is_ok(),
                StartPolicy::Formula => true,
            };
        if ok {
            Ok(())
        } else {
            Err(DmsError::InvalidParameter(format!("invalid optimizer settings: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Termination {
    GradTol,
    TMax,
    LineSearchFail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimIterate {
    pub theta: HyperParams,
    pub sure: f64,
    pub sugar: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimTrace {
    /// Accepted iterates, starting with the initial point.
    pub iterates: Vec<OptimIterate>,
    pub termination: Termination,
    /// Objective evaluations including rejected line-search trials.
    pub evaluations: usize,
}

impl OptimTrace {
    pub fn last(&self) -> &OptimIterate {
        self.iterates.last().expect("trace holds the initial iterate")
    }

    /// CSV with header `iteration,beta,lambda,sure,sugar_beta,sugar_lambda`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "beta", "lambda", "sure", "sugar_beta", "sugar_lambda"])
            .map_err(csv_error)?;
        for (t, it) in self.iterates.iter().enumerate() {
            w.write_record(&[
                t.to_string(),
                it.theta.beta.to_string(),
                it.theta.lambda.to_string(),
                it.sure.to_string(),
                it.sugar[0].to_string(),
                it.sugar[1].to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> DmsError {
    DmsError::Format(e.to_string())
}

/// `beta0 = N sigma |Dz|^2 / 4`, `lambda0 = beta0 |Dz|^2 / (2N)`.
pub fn init_hyperparams(z: &Image, sigma: f64, op: &DifferenceOperator) -> Result<HyperParams> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(DmsError::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let grad_sq = op.apply(z)?.norm_sq();
    if grad_sq == 0.0 {
        return Err(DmsError::DegenerateInput(
            "constant image: the initial lambda would be zero".into(),
        ));
    }
    let n = z.len() as f64;
    let beta = n * sigma * grad_sq / 4.0;
    let lambda = beta * grad_sq / (2.0 * n);
    HyperParams::new(beta, lambda)
}

/// Diagonal `|kappa theta_i / g_i|`; an axis with zero gradient gets 1.
pub fn init_inverse_hessian(theta0: HyperParams, grad0: [f64; 2], kappa: f64) -> [f64; 2] {
    let axis = |t: f64, g: f64| if g == 0.0 { 1.0 } else { (kappa * t / g).abs() };
    [axis(theta0.beta, grad0[0]), axis(theta0.lambda, grad0[1])]
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn to_log(theta: HyperParams) -> [f64; 2] {
    [theta.beta.ln(), theta.lambda.ln()]
}

fn from_log(x: [f64; 2]) -> HyperParams {
    HyperParams {
        beta: x[0].exp(),
        lambda: x[1].exp(),
    }
}

/// Two-loop recursion `-H g` with the diagonal base `h0`.
fn lbfgs_direction(g: [f64; 2], h0: [f64; 2], pairs: &[([f64; 2], [f64; 2])]) -> [f64; 2] {
    let mut q = g;
    let mut alphas = Vec::with_capacity(pairs.len());
    for &(s, y) in pairs.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, q);
        q = [q[0] - a * y[0], q[1] - a * y[1]];
        alphas.push((a, rho));
    }
    let mut r = [h0[0] * q[0], h0[1] * q[1]];
    for (&(s, y), &(a, rho)) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, r);
        r = [r[0] + s[0] * (a - b), r[1] + s[1] * (a - b)];
    }
    [-r[0], -r[1]]
}

/// Projected L-BFGS with Armijo backtracking on `f(theta) -> (value, gradient)`.
///
/// Iterates live in `(ln beta, ln lambda)`; the objective and its gradient are
/// supplied in the original coordinates. Evaluation errors at a trial point
/// count as a rejected trial; an error at the initial point is returned.
pub fn minimize_box_lbfgs(
    theta0: HyperParams,
    cfg: &OptimConfig,
    mut f: impl FnMut(HyperParams) -> Result<(f64, [f64; 2])>,
) -> Result<(HyperParams, OptimTrace)> {
    cfg.validate()?;
    theta0.validate()?;
    let lower = [cfg.beta_min.ln(), cfg.lambda_min.ln()];
    let project = |x: [f64; 2]| [x[0].max(lower[0]), x[1].max(lower[1])];

    let mut x = project(to_log(theta0));
    let mut theta = from_log(x);
    let (mut value, mut grad) = f(theta)?;
    let mut evaluations = 1;
    let mut iterates = vec![OptimIterate { theta, sure: value, sugar: grad }];

    let log_grad = |t: HyperParams, g: [f64; 2]| [t.beta * g[0], t.lambda * g[1]];
    // the inverse Hessian |kappa theta / g| expressed in log coordinates
    let h_theta = init_inverse_hessian(theta, grad, cfg.kappa);
    let h0 = [h_theta[0] / (theta.beta * theta.beta), h_theta[1] / (theta.lambda * theta.lambda)];
    let mut pairs: Vec<([f64; 2], [f64; 2])> = Vec::new();

    let finish = |iterates: Vec<OptimIterate>, termination, evaluations| {
        let best = iterates.last().map(|i: &OptimIterate| i.theta).unwrap();
        Ok((best, OptimTrace { iterates, termination, evaluations }))
    };

    for _ in 0..cfg.t_max {
        if !(value.is_finite() && grad.iter().all(|g| g.is_finite())) {
            return Err(DmsError::InvalidParameter("objective is not finite at the current iterate".into()));
        }
        if norm(grad) <= cfg.grad_tol {
            return finish(iterates, Termination::GradTol, evaluations);
        }
        let gx = log_grad(theta, grad);
        // H0 seeds the first step; afterwards each axis is rescaled by its
        // latest secant ratio, which tracks curvature changes in log space
        let base = match pairs.last() {
            Some(&(s, y)) => {
                let axis = |i: usize| if s[i] * y[i] > 0.0 { s[i] / y[i] } else { h0[i] };
                [axis(0), axis(1)]
            }
            None => h0,
        };
        let mut d = lbfgs_direction(gx, base, &pairs);
        if !(dot(d, gx) < 0.0) {
            pairs.clear();
            d = [-h0[0] * gx[0], -h0[1] * gx[1]];
        }
        let len = norm(d);
        if len > cfg.max_log_step {
            d = [d[0] * cfg.max_log_step / len, d[1] * cfg.max_log_step / len];
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..cfg.line_search.max_trials {
            let trial = project([x[0] + step * d[0], x[1] + step * d[1]]);
            let moved = [trial[0] - x[0], trial[1] - x[1]];
            if moved == [0.0, 0.0] {
                break;
            }
            let t_theta = from_log(trial);
            evaluations += 1;
            if let Ok((v, g)) = f(t_theta) {
                if v.is_finite() && v <= value + cfg.line_search.c1 * dot(gx, moved) {
                    accepted = Some((trial, t_theta, v, g));
                    break;
                }
            }
            step *= cfg.line_search.shrink;
        }
        let Some((x_new, theta_new, v_new, g_new)) = accepted else {
            return finish(iterates, Termination::LineSearchFail, evaluations);
        };

        let s = [x_new[0] - x[0], x_new[1] - x[1]];
        let gx_new = log_grad(theta_new, g_new);
        let y = [gx_new[0] - gx[0], gx_new[1] - gx[1]];
        if dot(s, y) > 1e-12 * norm(s) * norm(y) {
            if pairs.len() == cfg.memory {
                pairs.remove(0);
            }
            pairs.push((s, y));
        }
        x = x_new;
        theta = theta_new;
        value = v_new;
        grad = g_new;
        iterates.push(OptimIterate { theta, sure: value, sugar: grad });
    }
    if norm(grad) <= cfg.grad_tol {
        return finish(iterates, Termination::GradTol, evaluations);
    }
    finish(iterates, Termination::TMax, evaluations)
}

/// Resolves `optim.start` to a starting point.
pub fn starting_point(
    z: &Image,
    stein: &SteinConfig,
    optim: &OptimConfig,
    solver: &SolverConfig,
    op: &DifferenceOperator,
) -> Result<HyperParams> {
    match optim.start {
        StartPolicy::Formula => init_hyperparams(z, stein.sigma, op),
        StartPolicy::Fixed(theta) => {
            theta.validate()?;
            Ok(theta)
        }
        StartPolicy::Scan(grid) => {
            Ok(grid_search(z, &grid, &GridObjective::AveragedSure(*stein), solver, op)?.argmin)
        }
    }
}

/// Averaged SUGAR D-MS: minimize averaged SURE over `(beta, lambda)`, with
/// the probe set drawn once from `stein.seed` and kept for the whole run.
pub fn sugar_descent(
    z: &Image,
    stein: &SteinConfig,
    optim: &OptimConfig,
    solver: &SolverConfig,
    op: &DifferenceOperator,
) -> Result<(HyperParams, OptimTrace)> {
    optim.validate()?;
    let theta0 = starting_point(z, stein, optim, solver, op)?;
    sugar_descent_from(z, theta0, stein, optim, solver, op)
}

/// [`sugar_descent`] from an explicit starting point.
pub fn sugar_descent_from(
    z: &Image,
    theta0: HyperParams,
    stein: &SteinConfig,
    optim: &OptimConfig,
    solver: &SolverConfig,
    op: &DifferenceOperator,
) -> Result<(HyperParams, OptimTrace)> {
    stein.validate()?;
    solver.validate()?;
    let probes = MonteCarloSet::for_config(z, stein);
    let estimator = DmsEstimator::new(op, *solver);
    minimize_box_lbfgs(theta0, optim, |theta| {
        let risk = averaged_risk(z, theta, stein, &probes, &estimator)?;
        Ok((risk.sure, risk.sugar))
    })
}

/// Log-spaced rectangular grid of hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub beta_range: (f64, f64),
    pub lambda_range: (f64, f64),
    pub beta_steps: usize,
    pub lambda_steps: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            beta_range: (1e-2, 1e3),
            lambda_range: (1e-4, 1e1),
            beta_steps: 40,
            lambda_steps: 40,
        }
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

impl GridSpec {
    pub fn square(steps: usize) -> Self {
        Self {
            beta_steps: steps,
            lambda_steps: steps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| lo > 0.0 && hi >= lo && hi.is_finite();
        if !(range_ok(self.beta_range) && range_ok(self.lambda_range)) {
            return Err(DmsError::InvalidParameter(format!(
                "grid ranges must be positive and ordered: {self:?}"
            )));
        }
        if self.beta_steps == 0 || self.lambda_steps == 0 {
            return Err(DmsError::InvalidParameter("grid must have at least one node".into()));
        }
        Ok(())
    }

    pub fn betas(&self) -> Vec<f64> {
        log_space(self.beta_range.0, self.beta_range.1, self.beta_steps)
    }

    pub fn lambdas(&self) -> Vec<f64> {
        log_space(self.lambda_range.0, self.lambda_range.1, self.lambda_steps)
    }

    /// Nodes in row-major order: `beta` outer, `lambda` inner.
    pub fn nodes(&self) -> Vec<HyperParams> {
        let lambdas = self.lambdas();
        self.betas()
            .into_iter()
            .flat_map(|beta| lambdas.iter().map(move |&lambda| HyperParams { beta, lambda }))
            .collect()
    }
}

/// What a grid search minimizes.
#[derive(Debug, Clone)]
pub enum GridObjective<'a> {
    /// Monte-Carlo averaged SURE with probes drawn from the config seed.
    AveragedSure(SteinConfig),
    /// `|u(z; theta) - clean|^2`, available only with ground truth.
    TrueQuadraticError(&'a Image),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskMap {
    pub betas: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Row-major, `beta` outer.
    pub values: Vec<f64>,
    pub argmin: HyperParams,
    pub min_value: f64,
}

impl RiskMap {
    pub fn value(&self, beta_index: usize, lambda_index: usize) -> f64 {
        self.values[beta_index * self.lambdas.len() + lambda_index]
    }

    /// CSV with header `beta,lambda,value`, one row per node.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["beta", "lambda", "value"]).map_err(csv_error)?;
        for (i, &beta) in self.betas.iter().enumerate() {
            for (j, &lambda) in self.lambdas.iter().enumerate() {
                w.write_record(&[beta.to_string(), lambda.to_string(), self.value(i, j).to_string()])
                    .map_err(csv_error)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates `f` at every node (in parallel) and returns the full map with its argmin.
///
/// Ties are broken towards the first node in row-major order.
pub fn grid_search_with(
    grid: &GridSpec,
    f: impl Fn(HyperParams) -> Result<f64> + Sync,
) -> Result<RiskMap> {
    grid.validate()?;
    let nodes = grid.nodes();
    let values = nodes.par_iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
    let (best, min_value) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    Ok(RiskMap {
        betas: grid.betas(),
        lambdas: grid.lambdas(),
        argmin: nodes[best],
        min_value,
        values,
    })
}

pub fn grid_search(
    z: &Image,
    grid: &GridSpec,
    objective: &GridObjective<'_>,
    solver: &SolverConfig,
    op: &DifferenceOperator,
) -> Result<RiskMap> {
    solver.validate()?;
    match objective {
        GridObjective::AveragedSure(stein) => {
            stein.validate()?;
            let probes = MonteCarloSet::for_config(z, stein);
            let estimator = DmsEstimator::new(op, *solver);
            grid_search_with(grid, |t| averaged_sure(z, t, stein, &probes, &estimator))
        }
        GridObjective::TrueQuadraticError(clean) => {
            z.check_shape(clean)?;
            grid_search_with(grid, |t| quadratic_error(&slpam_solve(z, t, solver, op)?.u, clean))
        }
    }
}
