mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dms_core::experiment::{
    auto_tune, resolve_sigma, run_table, write_table_csv, SigmaPolicy, TableConfig, TABLE_SIGMAS,
};
use dms_core::hyperopt::{grid_search, GridObjective, GridSpec};
use dms_core::imageio::{read_image, write_edge_field, write_image, write_overlay, ImageFormat};
use dms_core::noise::{add_noise, psnr, NoiseModel};
use dms_core::phantom::{make_phantom, Geometry};
use dms_core::solver::slpam_solve;
use dms_core::stein::{averaged_sure, DmsEstimator, MonteCarloSet};
use dms_core::{DifferenceOperator, DmsError, HyperParams, Image};
use serde_json::json;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "dms", version, about = "Mumford-Shah denoising and contour detection with SURE-based tuning")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a phantom, noisy copies of it and its contour mask.
    Synth(SynthArgs),
    /// Denoise an image at fixed or automatically tuned (beta, lambda).
    Denoise(DenoiseArgs),
    /// Evaluate averaged SURE or the true error over a log grid.
    Riskmap(RiskmapArgs),
    /// PSNR table over geometries, noise levels and sigma policies.
    ReproduceTable(TableArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Pgm,
    Png,
}

impl Format {
    fn image_format(self) -> ImageFormat {
        match self {
            Format::Pgm => ImageFormat::Pgm { bits: 16 },
            Format::Png => ImageFormat::Png,
        }
    }

    fn ext(self) -> &'static str {
        match self {
            Format::Pgm => "pgm",
            Format::Png => "png",
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "diamond")]
    geometry: Geometry,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, value_delimiter = ',', default_values_t = TABLE_SIGMAS.to_vec())]
    sigmas: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "pgm")]
    format: Format,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct Common {
    /// TOML run config, or a manifest written by an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Noisy input image (PGM or PNG).
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    sigma_policy: Option<SigmaPolicy>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DenoiseArgs {
    #[command(flatten)]
    common: Common,
    /// Fixed beta; requires --lambda and skips tuning.
    #[arg(long, requires = "lambda")]
    beta: Option<f64>,
    #[arg(long, requires = "beta")]
    lambda: Option<f64>,
    #[arg(long, value_enum, default_value = "png")]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Objective {
    Sure,
    TrueError,
}

#[derive(Args)]
struct RiskmapArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "sure")]
    objective: Objective,
    /// Nodes per axis.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    beta_range: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    lambda_range: Option<Vec<f64>>,
}

#[derive(Args)]
struct TableArgs {
    /// 256x256 images and 10 realizations per cell.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 3 for numerical failures of the solver or its derivatives, 2 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .any(|e| e.downcast_ref::<DmsError>().is_some_and(DmsError::is_numerical));
    if numerical {
        3
    } else {
        2
    }
}

fn run(cli: Cli) -> Result<()> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = cli.jobs {
            if j == 0 {
                bail!("--jobs must be positive");
            }
            b = b.num_threads(j);
        }
        b.build().context("cannot start worker pool")?
    };
    pool.install(|| match cli.command {
        Command::Synth(a) => synth(a),
        Command::Denoise(a) => denoise(a),
        Command::Riskmap(a) => riskmap(a),
        Command::ReproduceTable(a) => reproduce_table(a),
    })
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn apply_common(cfg: &mut RunConfig, c: &Common) -> Result<PathBuf> {
    if let Some(p) = &c.input {
        cfg.input = Some(p.clone());
        cfg.synthetic = None;
    }
    if c.ground_truth.is_some() {
        cfg.ground_truth.clone_from(&c.ground_truth);
    }
    if c.sigma.is_some() {
        cfg.sigma = c.sigma;
    }
    if c.sigma_policy.is_some() {
        cfg.sigma_policy = c.sigma_policy;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(r) = c.replicates {
        cfg.stein.replicates = r;
    }
    if c.out.is_some() {
        cfg.output.clone_from(&c.out);
    }
    cfg.validate()?;
    let out = cfg.output.clone().context("no output directory (use --out)")?;
    fs::create_dir_all(&out).with_context(|| format!("cannot create '{}'", out.display()))?;
    Ok(out)
}

/// Noisy input and optional ground truth.
fn load_input(cfg: &RunConfig) -> Result<(Image, Option<Image>)> {
    if let Some(s) = cfg.synthetic {
        let ph = make_phantom(s.geometry, s.size, s.size, &cfg.phantom)?;
        let z = add_noise(&ph.clean, NoiseModel::new(s.sigma, s.noise_seed)?);
        return Ok((z, Some(ph.clean)));
    }
    let path = cfg.input.as_ref().context("no input image (use --input)")?;
    let z = read_image(path).with_context(|| format!("cannot read '{}'", path.display()))?;
    let truth = match &cfg.ground_truth {
        Some(p) => {
            let t = read_image(p).with_context(|| format!("cannot read '{}'", p.display()))?;
            if !z.same_shape(&t) {
                bail!(
                    "ground truth is {}x{} but input is {}x{}",
                    t.height(),
                    t.width(),
                    z.height(),
                    z.width()
                );
            }
            Some(t)
        }
        None => None,
    };
    Ok((z, truth))
}

fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, extra: serde_json::Value) -> Result<()> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "argv": std::env::args().collect::<Vec<_>>(),
        "config": cfg,
        "results": extra,
    });
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("cannot write '{}'", path.display()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    if a.sigmas.is_empty() {
        bail!("--sigmas is empty");
    }
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create '{}'", a.out.display()))?;
    let ph = make_phantom(a.geometry, a.size, a.size, &cfg.phantom)?;
    let fmt = a.format;
    let mut files = vec![];
    let clean = format!("clean.{}", fmt.ext());
    write_image(&a.out.join(&clean), &ph.clean, fmt.image_format())?;
    files.push(json!({"file": clean}));
    for (i, &sigma) in a.sigmas.iter().enumerate() {
        let seed = a.seed.wrapping_add(i as u64);
        let z = add_noise(&ph.clean, NoiseModel::new(sigma, seed)?);
        let name = format!("noisy_sigma{sigma}.{}", fmt.ext());
        write_image(&a.out.join(&name), &z, fmt.image_format())?;
        files.push(json!({"file": name, "sigma": sigma, "seed": seed}));
    }
    write_edge_field(&a.out.join("contours.txt"), &ph.contours)?;
    files.push(json!({"file": "contours.txt"}));
    let run = RunConfig {
        seed: a.seed,
        output: Some(a.out.clone()),
        ..cfg
    };
    write_manifest(
        &a.out,
        "synth",
        &run,
        json!({
            "geometry": a.geometry,
            "size": a.size,
            "contour_edges": ph.contour_length(),
            "files": files,
        }),
    )?;
    println!("wrote {} files to {}", files.len() + 1, a.out.display());
    Ok(())
}

fn denoise(a: DenoiseArgs) -> Result<()> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    if let (Some(beta), Some(lambda)) = (a.beta, a.lambda) {
        cfg.theta = Some(HyperParams::new(beta, lambda)?);
    }
    let out = apply_common(&mut cfg, &a.common)?;
    let (z, truth) = load_input(&cfg)?;
    let op = DifferenceOperator::new(z.height(), z.width())?;
    let policy = cfg.policy();
    let sigma = resolve_sigma(&z, policy, cfg.sigma);

    let (theta, solution, sure, trace) = match cfg.theta {
        Some(theta) => {
            let solution = slpam_solve(&z, theta, &cfg.solver, &op)?;
            // SURE needs a noise level; report it only when one is available.
            let sure = match &sigma {
                Ok(s) => {
                    let stein = cfg.stein_config(*s);
                    let probes = MonteCarloSet::for_config(&z, &stein);
                    let est = DmsEstimator::new(&op, cfg.solver);
                    Some(averaged_sure(&z, theta, &stein, &probes, &est)?)
                }
                Err(_) => None,
            };
            (theta, solution, sure, None)
        }
        None => {
            let s = *sigma.as_ref().map_err(|e| anyhow::anyhow!("{e}"))?;
            let tuned = auto_tune(&z, &cfg.stein_config(s), &cfg.optim, &cfg.solver)?;
            let sure = tuned.trace.last().sure;
            (tuned.theta, tuned.solution, Some(sure), Some(tuned.trace))
        }
    };

    let fmt = a.format;
    let image_name = format!("denoised.{}", fmt.ext());
    write_image(&out.join(&image_name), &solution.u, fmt.image_format())?;
    write_overlay(&out.join("contours.png"), &solution.u, &solution.e, cfg.overlay_threshold)?;
    write_edge_field(&out.join("edges.txt"), &solution.e)?;
    if let Some(t) = &trace {
        let f = fs::File::create(out.join("trace.csv"))?;
        t.write_csv(std::io::BufWriter::new(f))?;
    }
    let quality = match &truth {
        Some(t) => Some(psnr(&solution.u, t)?),
        None => None,
    };
    let sigma_used = sigma.ok();
    let results = json!({
        "beta": theta.beta,
        "lambda": theta.lambda,
        "sigma": sigma_used,
        "sigma_policy": policy,
        "sure": sure,
        "psnr": quality.filter(|p| p.is_finite()),
        "iterations": solution.iterations,
        "termination": trace.as_ref().map(|t| t.termination),
        "evaluations": trace.as_ref().map(|t| t.evaluations),
        "files": [image_name, "contours.png", "edges.txt"],
    });
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&results)? + "\n")?;
    write_manifest(&out, "denoise", &cfg, results)?;

    println!("beta = {:.6e}", theta.beta);
    println!("lambda = {:.6e}", theta.lambda);
    if let Some(s) = sigma_used {
        println!("sigma = {s:.6e} ({})", policy.name());
    }
    if let Some(s) = sure {
        println!("sure = {s:.6e}");
    }
    if let Some(p) = quality {
        println!("psnr = {p:.3} dB");
    }
    Ok(())
}

fn riskmap(a: RiskmapArgs) -> Result<()> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    if let Some(n) = a.steps {
        cfg.grid.beta_steps = n;
        cfg.grid.lambda_steps = n;
    }
    if let Some(r) = &a.beta_range {
        cfg.grid.beta_range = (r[0], r[1]);
    }
    if let Some(r) = &a.lambda_range {
        cfg.grid.lambda_range = (r[0], r[1]);
    }
    let out = apply_common(&mut cfg, &a.common)?;
    let (z, truth) = load_input(&cfg)?;
    let op = DifferenceOperator::new(z.height(), z.width())?;
    let grid: GridSpec = cfg.grid;
    let (map, sigma) = match a.objective {
        Objective::Sure => {
            let s = resolve_sigma(&z, cfg.policy(), cfg.sigma)?;
            let stein = cfg.stein_config(s);
            (grid_search(&z, &grid, &GridObjective::AveragedSure(stein), &cfg.solver, &op)?, Some(s))
        }
        Objective::TrueError => {
            let t = truth.as_ref().context("--objective true-error needs --ground-truth")?;
            (grid_search(&z, &grid, &GridObjective::TrueQuadraticError(t), &cfg.solver, &op)?, None)
        }
    };
    let f = fs::File::create(out.join("riskmap.csv"))?;
    map.write_csv(std::io::BufWriter::new(f))?;
    let best_psnr = match &truth {
        Some(t) => Some(psnr(&slpam_solve(&z, map.argmin, &cfg.solver, &op)?.u, t)?),
        None => None,
    };
    let results = json!({
        "objective": if a.objective == Objective::Sure { "sure" } else { "true_error" },
        "sigma": sigma,
        "argmin": map.argmin,
        "min_value": map.min_value,
        "psnr_at_argmin": best_psnr,
        "files": ["riskmap.csv"],
    });
    write_manifest(&out, "riskmap", &cfg, results)?;
    println!("argmin beta = {:.6e}", map.argmin.beta);
    println!("argmin lambda = {:.6e}", map.argmin.lambda);
    println!("min value = {:.6e}", map.min_value);
    if let Some(p) = best_psnr {
        println!("psnr at argmin = {p:.3} dB");
    }
    Ok(())
}

/// The table settings stored in a manifest from an earlier `reproduce-table` run.
fn table_manifest(path: &Path) -> Result<Option<TableConfig>> {
    if !path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        return Ok(None);
    }
    let text = fs::read_to_string(path).with_context(|| format!("cannot read '{}'", path.display()))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    match value.get_mut("table").map(serde_json::Value::take) {
        Some(t) => Ok(Some(serde_json::from_value(t).context("invalid table settings")?)),
        None => Ok(None),
    }
}

fn reproduce_table(a: TableArgs) -> Result<()> {
    let mut cfg = match a.config.as_deref().map(table_manifest).transpose()? {
        Some(Some(table)) => table,
        _ => {
            let run = load_config(a.config.as_deref())?;
            TableConfig {
                solver: run.solver,
                optim: run.optim,
                phantom: run.phantom,
                alpha: run.stein.alpha,
                replicates: run.stein.replicates,
                seed: run.seed,
                ..if a.full { TableConfig::full() } else { TableConfig::default() }
            }
        }
    };
    if a.full {
        let full = TableConfig::full();
        cfg.size = full.size;
        cfg.realizations = full.realizations;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.size {
        cfg.size = n;
    }
    if let Some(n) = a.realizations {
        cfg.realizations = n;
    }
    if let Some(s) = a.sigmas {
        cfg.sigmas = s;
    }
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create '{}'", a.out.display()))?;
    let cells = run_table(&cfg, |c| {
        eprintln!(
            "{:<8} sigma={:<5} {:<5} {:>7.2} +- {:.2} dB{}",
            c.geometry.name(),
            c.sigma,
            c.policy.name(),
            c.mean,
            c.half_width,
            if c.failures.is_empty() {
                String::new()
            } else {
                format!(" ({} failed)", c.failures.len())
            }
        )
    })?;
    let f = fs::File::create(a.out.join("table.csv"))?;
    write_table_csv(&cells, std::io::BufWriter::new(f))?;
    let failures: Vec<_> = cells
        .iter()
        .flat_map(|c| {
            c.failures.iter().map(move |m| {
                json!({"geometry": c.geometry, "sigma": c.sigma, "policy": c.policy, "error": m})
            })
        })
        .collect();
    let manifest = json!({
        "command": "reproduce-table",
        "version": env!("CARGO_PKG_VERSION"),
        "argv": std::env::args().collect::<Vec<_>>(),
        "table": cfg,
        "results": {"cells": cells.len(), "failures": failures, "files": ["table.csv"]},
    });
    fs::write(a.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    println!("wrote {} cells to {}", cells.len(), a.out.join("table.csv").display());
    Ok(())
}
