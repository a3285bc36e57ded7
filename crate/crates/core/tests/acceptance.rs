//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`). Pass `--ignored` or
//! `--include-ignored` to add the full-scale table run; any other free
//! argument selects criteria by number (`cargo test --test acceptance -- 3 5`).

mod common;

use std::time::{Duration, Instant};

use common::*;
use dms_core::experiment::{count_inversions, run_table, SigmaPolicy, TableCell, TableConfig};
use dms_core::hyperopt::{
    grid_search, sugar_descent, GridObjective, GridSpec, OptimConfig,
};
use dms_core::jacobian::diff_slpam_solve;
use dms_core::noise::{estimate_sigma_mad, gaussian_image, psnr, quadratic_error};
use dms_core::phantom::Geometry;
use dms_core::solver::{prox_data, slpam_solve, soft_threshold, SolverConfig};
use dms_core::stein::{sugar_fdmc, sure_fdmc, DmsEstimator, MonteCarloSet, SteinConfig};
use dms_core::{DifferenceOperator, HyperParams, Image};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    full_only: bool,
    run: fn() -> Outcome,
}

const MIN: u64 = 60;

fn criteria() -> Vec<Criterion> {
    let c = |id, name, secs: Option<u64>, full_only, run| Criterion {
        id,
        name,
        budget: secs.map(Duration::from_secs),
        full_only,
        run,
    };
    vec![
        c(1, "prox oracles", Some(5), false, prox_oracles as fn() -> Outcome),
        c(2, "SL-PAM monotonicity", Some(2 * MIN), false, slpam_monotone),
        c(3, "Jacobian vs finite differences", Some(10 * MIN), false, jacobian_fd),
        c(4, "SUGAR is the gradient of SURE", Some(15 * MIN), false, sugar_is_gradient),
        c(5, "SURE tracks the risk", Some(30 * MIN), false, sure_tracks_risk),
        c(6, "auto-tuning quality", Some(20 * MIN), false, autotune_quality),
        c(7, "variance reduction", Some(40 * MIN), false, variance_reduction),
        c(8, "table trends at full scale", Some(180 * MIN), true, table_trends),
        c(9, "speedup over grid search", None, false, speedup),
        c(10, "MAD estimator", None, false, mad_estimator),
    ]
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let full = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let only_ignored = args.iter().any(|a| a == "--ignored");
    let selected: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    if args.iter().any(|a| a == "--list") {
        for c in criteria() {
            println!("criterion_{}: test", c.id);
        }
        return;
    }

    let mut failures = 0;
    for c in criteria() {
        if !selected.is_empty() && !selected.contains(&c.id) {
            continue;
        }
        if (c.full_only && !full) || (only_ignored && !c.full_only) {
            println!("SKIP criterion {:>2} {}: full-scale run, pass --include-ignored", c.id, c.name);
            continue;
        }
        let start = Instant::now();
        let out = (c.run)();
        let elapsed = start.elapsed();
        let in_budget = c.budget.is_none_or(|b| elapsed <= b);
        let pass = out.pass && in_budget;
        if !pass {
            failures += 1;
        }
        println!(
            "{} criterion {:>2} {}: {} [{:.1}s{}]",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            out.detail,
            elapsed.as_secs_f64(),
            match (c.budget, in_budget) {
                (None, _) => String::new(),
                (Some(b), true) => format!(" of {}s", b.as_secs()),
                (Some(b), false) => format!(" of {}s, over budget", b.as_secs()),
            }
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn prox_oracles() -> Outcome {
    let mut r = rng(101);
    let mut worst_st = 0.0f64;
    for _ in 0..200 {
        let x: f64 = r.random_range(-5.0..5.0);
        let phi: f64 = r.random_range(0.0..3.0);
        let t = argmin_convex_1d(|t| t - x + if t >= 0.0 { phi } else { -phi }, -10.0, 10.0);
        worst_st = worst_st.max((soft_threshold(x, phi) - t).abs());
    }
    let mut worst_pd = 0.0f64;
    for _ in 0..200 {
        let ut: f64 = r.random_range(-3.0..3.0);
        let zv: f64 = r.random_range(-3.0..3.0);
        let c = log_uniform(&mut r, 1e-3, 1e4);
        let got = prox_data(&Image::filled(1, 1, ut), &Image::filled(1, 1, zv), c).unwrap();
        // argmin c/2 (x - ut)^2 + 1/2 (x - z)^2
        let t = argmin_convex_1d(|x| c * (x - ut) + (x - zv), -10.0, 10.0);
        worst_pd = worst_pd.max((got.values()[0] - t).abs());
    }
    outcome(
        worst_st <= 1e-8 && worst_pd <= 1e-8,
        format!("max abs err soft_threshold {worst_st:.2e}, prox_data {worst_pd:.2e} (tol 1e-8)"),
    )
}

fn slpam_monotone() -> Outcome {
    let grid = GridSpec::default();
    let op = DifferenceOperator::new(32, 32).unwrap();
    let mut r = rng(202);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..20 {
        let geometry = Geometry::ALL[i % 2];
        let sigma = log_uniform(&mut r, 0.01, 0.3);
        let (_, z) = noisy_phantom(geometry, 32, sigma, 2000 + i as u64);
        let theta = HyperParams::new(
            log_uniform(&mut r, grid.beta_range.0, grid.beta_range.1),
            log_uniform(&mut r, grid.lambda_range.0, grid.lambda_range.1),
        )
        .unwrap();
        let res = slpam_solve(&z, theta, &SolverConfig::default(), &op).unwrap();
        let mut prev = res.initial_objective;
        for &v in &res.objective_trace {
            worst = worst.max(v - prev);
            prev = v;
        }
    }
    outcome(
        worst <= 1e-10,
        format!("largest per-iteration increase {worst:.2e} over 20 instances (slack 1e-10)"),
    )
}

/// Instance draws for the finite-difference criteria: only instances whose
/// active set survives the stencil are admissible, up to `5 * wanted` draws.
fn admissible_instances(
    wanted: usize,
    mut draw: impl FnMut(u64) -> Option<Vec<f64>>,
) -> (Vec<Vec<f64>>, usize) {
    let mut kept = Vec::new();
    let mut rejected = 0;
    for i in 0..5 * wanted as u64 {
        if kept.len() == wanted {
            break;
        }
        match draw(i) {
            Some(errs) => kept.push(errs),
            None => rejected += 1,
        }
    }
    (kept, rejected)
}

fn summarize_fd(kept: &[Vec<f64>], wanted: usize, need: usize, rejected: usize) -> Outcome {
    let passed = kept.iter().filter(|e| e.iter().all(|&v| v <= 1e-2)).count();
    let mut all: Vec<f64> = kept.iter().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    let (median, max) = match all.len() {
        0 => (f64::NAN, f64::NAN),
        n => (all[n / 2], all[n - 1]),
    };
    outcome(
        kept.len() == wanted && passed >= need,
        format!(
            "{passed}/{} instances within rel 1e-2 in both components (need {need} of {wanted}), median rel err {median:.2e}, max {max:.2e}, {rejected} draws rejected for an unstable active set",
            kept.len()
        ),
    )
}

fn jacobian_fd() -> Outcome {
    let op = DifferenceOperator::new(32, 32).unwrap();
    let solver = SolverConfig::default().with_fixed_iter(100);
    let mut r = rng(303);
    let (kept, rejected) = admissible_instances(10, |i| {
        let (_, z) = noisy_phantom(Geometry::ALL[i as usize % 2], 32, 0.05, 3000 + i);
        let theta =
            HyperParams::new(log_uniform(&mut r, 0.3, 30.0), log_uniform(&mut r, 3e-3, 0.3))
                .unwrap();
        let diff = diff_slpam_solve(&z, theta, &solver, &op).unwrap();
        let mut errs = Vec::new();
        for (along_beta, jac) in [(true, &diff.du.d_beta), (false, &diff.du.d_lambda)] {
            let fd = solve_fd(&z, theta, along_beta, 1e-4, &solver, &op);
            if !fd.stable {
                return None;
            }
            errs.push(rel_err(jac, &fd.fd));
        }
        Some(errs)
    });
    summarize_fd(&kept, 10, 9, rejected)
}

fn sugar_is_gradient() -> Outcome {
    let op = DifferenceOperator::new(32, 32).unwrap();
    let solver = SolverConfig::default().with_fixed_iter(100);
    let est = DmsEstimator::new(&op, solver);
    let mut r = rng(404);
    let (kept, rejected) = admissible_instances(20, |i| {
        let (_, z) = noisy_phantom(Geometry::ALL[i as usize % 2], 32, 0.05, 4000 + i);
        let cfg = SteinConfig::new(0.05).with_replicates(1).with_seed(4100 + i);
        let probes = MonteCarloSet::for_config(&z, &cfg);
        let delta = &probes.deltas()[0];
        let z_eps = z.axpy(cfg.epsilon(z.len()), delta);
        let theta =
            HyperParams::new(log_uniform(&mut r, 0.3, 30.0), log_uniform(&mut r, 3e-3, 0.3))
                .unwrap();
        let sugar = sugar_fdmc(&z, theta, &cfg, delta, &est).unwrap();
        let digest = |zz: &Image, t| slpam_solve(zz, t, &solver, &op).unwrap().active_set_digest;
        let base = (digest(&z, theta), digest(&z_eps, theta));
        let mut errs = Vec::new();
        for (k, along_beta) in [(0, true), (1, false)] {
            let shift = |d: f64| {
                let mut t = theta;
                if along_beta {
                    t.beta += d;
                } else {
                    t.lambda += d;
                }
                t
            };
            let mut h = 1e-4 * if along_beta { theta.beta } else { theta.lambda };
            let mut fd = None;
            for _ in 0..7 {
                let (tp, tm) = (shift(h), shift(-h));
                if [tp, tm].iter().all(|&t| (digest(&z, t), digest(&z_eps, t)) == base) {
                    fd = Some(
                        (sure_fdmc(&z, tp, &cfg, delta, &est).unwrap()
                            - sure_fdmc(&z, tm, &cfg, delta, &est).unwrap())
                            / (2.0 * h),
                    );
                    break;
                }
                h *= 0.5;
            }
            let fd = fd?;
            errs.push((sugar[k] - fd).abs() / fd.abs().max(f64::MIN_POSITIVE));
        }
        Some(errs)
    });
    summarize_fd(&kept, 20, 18, rejected)
}

fn sure_tracks_risk() -> Outcome {
    let op = DifferenceOperator::new(64, 64).unwrap();
    let solver = SolverConfig::default();
    let est = DmsEstimator::new(&op, solver);
    let betas = [1.0, 10f64.sqrt(), 10.0];
    let lambdas = [0.01, 0.1f64.sqrt() * 0.1, 0.1];
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for &beta in &betas {
        for &lambda in &lambdas {
            let theta = HyperParams::new(beta, lambda).unwrap();
            let (mut sure_sum, mut risk_sum) = (0.0, 0.0);
            for k in 0..20u64 {
                let (clean, z) = noisy_phantom(Geometry::Diamond, 64, 0.05, 5000 + k);
                let cfg = SteinConfig::new(0.05).with_replicates(1).with_seed(5100 + k);
                let probes = MonteCarloSet::for_config(&z, &cfg);
                sure_sum += sure_fdmc(&z, theta, &cfg, &probes.deltas()[0], &est).unwrap();
                let u = slpam_solve(&z, theta, &solver, &op).unwrap().u;
                risk_sum += quadratic_error(&u, &clean).unwrap();
            }
            let gap = (sure_sum - risk_sum).abs() / risk_sum;
            worst = worst.max(gap);
            details.push(format!("{gap:.3}"));
        }
    }
    outcome(
        worst <= 0.15,
        format!("max relative gap {worst:.3} over 9 points (tol 0.15): [{}]", details.join(", ")),
    )
}

fn standard_instance() -> (Image, Image, DifferenceOperator) {
    let (clean, z) = noisy_phantom(Geometry::Diamond, 64, 0.05, 0);
    (clean, z, DifferenceOperator::new(64, 64).unwrap())
}

fn autotune_quality() -> Outcome {
    let (clean, z, op) = standard_instance();
    let solver = SolverConfig::default();
    let stein = SteinConfig::new(0.05);
    let (theta, trace) = sugar_descent(&z, &stein, &OptimConfig::default(), &solver, &op).unwrap();
    let tuned = psnr(&slpam_solve(&z, theta, &solver, &op).unwrap().u, &clean).unwrap();
    let map = grid_search(
        &z,
        &GridSpec::square(20),
        &GridObjective::TrueQuadraticError(&clean),
        &solver,
        &op,
    )
    .unwrap();
    let best = psnr(&slpam_solve(&z, map.argmin, &solver, &op).unwrap().u, &clean).unwrap();

    let formula = OptimConfig {
        start: dms_core::hyperopt::StartPolicy::Formula,
        ..OptimConfig::default()
    };
    match sugar_descent(&z, &stein, &formula, &solver, &op) {
        Ok((t, _)) => {
            let p = psnr(&slpam_solve(&z, t, &solver, &op).unwrap().u, &clean).unwrap();
            println!(
                "INFO criterion  6: descent started from the closed-form initialization reaches beta={:.4} lambda={:.4}, PSNR {p:.2} dB",
                t.beta, t.lambda
            );
        }
        Err(e) => println!("INFO criterion  6: closed-form start failed: {e}"),
    }

    outcome(
        tuned >= best - 1.5,
        format!(
            "tuned beta={:.4} lambda={:.4} PSNR {tuned:.2} dB after {} iterations ({:?}); 20x20 true-error optimum beta={:.4} lambda={:.4} PSNR {best:.2} dB (tol 1.5 dB)",
            theta.beta,
            theta.lambda,
            trace.iterates.len() - 1,
            trace.termination,
            map.argmin.beta,
            map.argmin.lambda
        ),
    )
}

fn log_dispersion(thetas: &[HyperParams]) -> f64 {
    let lb: Vec<f64> = thetas.iter().map(|t| t.beta.ln()).collect();
    let ll: Vec<f64> = thetas.iter().map(|t| t.lambda.ln()).collect();
    (variance(&lb) + variance(&ll)).sqrt()
}

fn variance_reduction() -> Outcome {
    let (_, z, op) = standard_instance();
    let solver = SolverConfig::default();
    let optim = OptimConfig::default();
    let run = |replicates| -> Vec<HyperParams> {
        (0..10u64)
            .map(|seed| {
                let stein = SteinConfig::new(0.05).with_replicates(replicates).with_seed(7000 + seed);
                sugar_descent(&z, &stein, &optim, &solver, &op).unwrap().0
            })
            .collect()
    };
    let d5 = log_dispersion(&run(5));
    let d1 = log_dispersion(&run(1));
    outcome(
        d5 < d1,
        format!("log-scale dispersion of the tuned parameters: R=5 {d5:.4}, R=1 {d1:.4}"),
    )
}

fn table_trends() -> Outcome {
    let cfg = TableConfig::full();
    let cells = run_table(&cfg, |c| {
        println!(
            "INFO criterion  8: {} sigma={} {}: {:.2} +- {:.2} dB ({} ok, {} failed)",
            c.geometry.name(),
            c.sigma,
            c.policy.name(),
            c.mean,
            c.half_width,
            c.psnr.len(),
            c.failures.len()
        )
    })
    .unwrap();
    let find = |g: Geometry, s: f64, p: SigmaPolicy| -> &TableCell {
        cells
            .iter()
            .find(|c| c.geometry == g && c.sigma == s && c.policy == p)
            .unwrap()
    };
    let mut ok = true;
    let mut notes = Vec::new();
    for g in Geometry::ALL {
        for p in SigmaPolicy::ALL {
            let row: Vec<&TableCell> = cfg.sigmas.iter().map(|&s| find(g, s, p)).collect();
            let inv = count_inversions(&row);
            ok &= inv <= 1;
            notes.push(format!("{}/{} inversions {inv}", g.name(), p.name()));
        }
        for &s in &cfg.sigmas {
            let gap = (find(g, s, SigmaPolicy::Mad).mean - find(g, s, SigmaPolicy::Given).mean).abs();
            ok &= gap <= 4.0;
            if gap > 4.0 {
                notes.push(format!("{} sigma={s} policy gap {gap:.2} dB", g.name()));
            }
        }
    }
    let top = find(Geometry::Diamond, 0.01, SigmaPolicy::Given).mean;
    ok &= top > 50.0;
    notes.push(format!("diamond sigma=0.01 given {top:.2} dB"));
    outcome(ok, notes.join("; "))
}

fn speedup() -> Outcome {
    let (_, z, op) = standard_instance();
    let solver = SolverConfig::default();
    let stein = SteinConfig::new(0.05);
    let t0 = Instant::now();
    let (_, trace) = sugar_descent(&z, &stein, &OptimConfig::default(), &solver, &op).unwrap();
    let descent = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let map = grid_search(&z, &GridSpec::default(), &GridObjective::AveragedSure(stein), &solver, &op)
        .unwrap();
    let grid = t1.elapsed().as_secs_f64();
    let ratio = descent / grid;
    println!(
        "INFO criterion  9: final averaged SURE {:.4} after descent, grid minimum {:.4} at beta={:.4} lambda={:.4}",
        trace.last().sure,
        map.min_value,
        map.argmin.beta,
        map.argmin.lambda
    );
    outcome(
        ratio <= 0.25,
        format!("descent {descent:.1}s vs 40x40 grid {grid:.1}s, ratio {ratio:.3} (need <= 0.25)"),
    )
}

fn mad_estimator() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let z = gaussian_image(256, 256, 10_000 + seed, 0).scaled(0.1);
        let s = estimate_sigma_mad(&z).unwrap().sigma;
        worst = worst.max((s - 0.1).abs() / 0.1);
    }
    let z = gaussian_image(256, 256, 99, 0).scaled(0.1);
    let base = estimate_sigma_mad(&z).unwrap().sigma;
    let mut eq = 0.0f64;
    for c in [3.7, -2.5, 0.01] {
        eq = eq.max((estimate_sigma_mad(&z.scaled(c)).unwrap().sigma - c.abs() * base).abs());
    }
    let mut shift = 0.0f64;
    for c in [0.5, -3.0, 17.0] {
        let shifted = z.map(|v| v + c);
        shift = shift.max((estimate_sigma_mad(&shifted).unwrap().sigma - base).abs());
    }
    outcome(
        worst <= 0.1 && eq <= 1e-12 && shift <= 1e-12,
        format!("max relative error {worst:.4} over 20 seeds (tol 0.1); scale err {eq:.1e}, shift err {shift:.1e} (tol 1e-12)"),
    )
}

