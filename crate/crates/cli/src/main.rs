//! Command-line front end for the pathwise characteristics solver.
//!
//! Five subcommands cover the pipeline end to end: `simulate` integrates a
//! scenario's characteristic fan on a sampled path, `closed-form` tabulates a
//! catalog entry, `verify` runs the residual sweep plus the surface
//! cross-check, `stopping-time` reports where solutions stop being valid, and
//! `paths` dumps the driving processes themselves.  All artifacts are CSV,
//! written atomically, and byte-identical across reruns with the same flags.

use clap::{ArgGroup, Args, Parser, Subcommand};
use lwr_sc::{
    build_surface, cross_validate, driver_for, estimate_sigma_many, fan_csv, integrate_fan,
    linspace, lookup, path_integral_exp, paths_csv, residual_csv, sample_brownian, sigma_csv,
    sigma_compare_csv, surface_csv, sweep_residuals, to_geometric, write_atomic, zero_path,
    CatalogId, ClosedFormSolution, InitialCondition, NoiseKind, NoisePath, PerturbationForm,
    Scenario, SolutionSurface, TimeGrid, ALL_IDS,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "lwr-sc",
    version,
    about = "Pathwise characteristics solver for a stochastically perturbed traffic model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario on a sampled path; writes surface, fan, and sigma CSVs
    Simulate(SimulateArgs),
    /// Tabulate an exact catalog entry over the grid; writes a surface CSV
    ClosedForm(ClosedFormArgs),
    /// Residual sweep and surface cross-check for one or all catalog entries
    Verify(VerifyArgs),
    /// Stopping times over the position grid, with a formula column where one exists
    StoppingTime(StoppingTimeArgs),
    /// Sample the driving processes and dump t,W,S
    Paths(PathsArgs),
}

/// Flags shared by every subcommand.  All optional here so that values from
/// `--config` can fill the gaps; defaults apply last.
#[derive(Args)]
struct Common {
    /// RNG seed for the driving path
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Time step of the uniform grid
    #[arg(long, value_name = "DT")]
    dt: Option<f64>,
    /// Number of points on the position grid
    #[arg(long, value_name = "N")]
    nx: Option<usize>,
    /// Time horizon
    #[arg(long = "T", value_name = "T")]
    horizon: Option<f64>,
    /// Output directory for CSV artifacts
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// key=value config file; flags override its values
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Named scenario (d1..d4, s1, s2, b1..b3, g1..g3)
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ClosedFormArgs {
    /// Catalog entry (D1..D4, S1, S2, B1..B3, G1..G3)
    #[arg(long, value_name = "ID")]
    id: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
#[command(group(ArgGroup::new("target").required(true).args(["id", "all"])))]
struct VerifyArgs {
    /// Catalog entry to check
    #[arg(long, value_name = "ID")]
    id: Option<String>,
    /// Check every catalog entry
    #[arg(long)]
    all: bool,
    /// Number of residual probes per entry
    #[arg(long, value_name = "N", default_value_t = 1000)]
    probes: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct StoppingTimeArgs {
    /// Named scenario (d1..d4, s1, s2, b1..b3, g1..g3)
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct PathsArgs {
    #[command(flatten)]
    common: Common,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a).map(|_| true),
        Command::ClosedForm(a) => cmd_closed_form(&a).map(|_| true),
        Command::Verify(a) => cmd_verify(&a),
        Command::StoppingTime(a) => cmd_stopping_time(&a).map(|_| true),
        Command::Paths(a) => cmd_paths(&a).map(|_| true),
    }
}

/// Settings left by a config file, before flags override them.
#[derive(Default)]
struct FileConfig {
    ic: Option<InitialCondition>,
    perturbation: Option<PerturbationForm>,
    noise: Option<NoiseKind>,
    horizon: Option<f64>,
    seed: Option<u64>,
    dt: Option<f64>,
    nx: Option<usize>,
}

fn parse_config(text: &str, origin: &Path) -> Result<FileConfig, String> {
    let mut cfg = FileConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            format!(
                "{}:{}: expected key=value, got `{line}`",
                origin.display(),
                lineno + 1
            )
        })?;
        let key = key.trim();
        let value = value.trim();
        let at = |what: &str| format!("{}:{}: {what}", origin.display(), lineno + 1);
        match key {
            "ic" => cfg.ic = Some(InitialCondition::parse(value).map_err(|e| at(&e.to_string()))?),
            "perturbation" => {
                cfg.perturbation =
                    Some(PerturbationForm::parse(value).map_err(|e| at(&e.to_string()))?)
            }
            "noise" => cfg.noise = Some(NoiseKind::parse(value).map_err(|e| at(&e.to_string()))?),
            "T" => {
                cfg.horizon = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| at(&format!("T must be a number, got `{value}`")))?,
                )
            }
            "seed" => {
                cfg.seed = Some(
                    value
                        .parse::<u64>()
                        .map_err(|_| at(&format!("seed must be a nonnegative integer, got `{value}`")))?,
                )
            }
            "dt" => {
                cfg.dt = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| at(&format!("dt must be a number, got `{value}`")))?,
                )
            }
            "nx" => {
                cfg.nx = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| at(&format!("nx must be a positive integer, got `{value}`")))?,
                )
            }
            other => {
                return Err(at(&format!(
                    "unknown config key `{other}` (expected ic, perturbation, noise, T, seed, dt, nx)"
                )))
            }
        }
    }
    Ok(cfg)
}

/// Fully resolved run settings: defaults, overridden by the config file,
/// overridden by flags.
struct Resolved {
    seed: u64,
    dt: f64,
    nx: usize,
    horizon: f64,
    out: PathBuf,
    /// Scenario components the config file supplied, if any.
    parts: Option<(InitialCondition, PerturbationForm, NoiseKind)>,
}

fn resolve(common: &Common) -> Result<Resolved, String> {
    let cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            parse_config(&text, path)?
        }
        None => FileConfig::default(),
    };
    let resolved = Resolved {
        seed: common.seed.or(cfg.seed).unwrap_or(0),
        dt: common.dt.or(cfg.dt).unwrap_or(1e-3),
        nx: common.nx.or(cfg.nx).unwrap_or(101),
        horizon: common.horizon.or(cfg.horizon).unwrap_or(1.0),
        out: common.out.clone().unwrap_or_else(|| PathBuf::from("runs")),
        parts: match (cfg.ic, cfg.perturbation, cfg.noise) {
            (Some(ic), Some(form), Some(noise)) => Some((ic, form, noise)),
            (None, None, None) => None,
            (ic, form, noise) => {
                let mut missing = Vec::new();
                if ic.is_none() {
                    missing.push("ic");
                }
                if form.is_none() {
                    missing.push("perturbation");
                }
                if noise.is_none() {
                    missing.push("noise");
                }
                return Err(format!(
                    "config scenario needs ic, perturbation, and noise together (missing: {})",
                    missing.join(", ")
                ));
            }
        },
    };
    if !(resolved.dt > 0.0 && resolved.dt.is_finite()) {
        return Err("dt must be positive".into());
    }
    if resolved.nx < 2 {
        return Err(format!("nx must be at least 2, got {}", resolved.nx));
    }
    if !(resolved.horizon > 0.0 && resolved.horizon.is_finite()) {
        return Err("T must be positive and finite".into());
    }
    Ok(resolved)
}

/// Scenario from `--scenario`, else from config components, else an error.
/// Returns the scenario with the tag used in output file names.
fn scenario_for(name: &Option<String>, r: &Resolved) -> Result<(Scenario, String), String> {
    if let Some(n) = name {
        let scenario = Scenario::named(n, r.horizon).map_err(|e| e.to_string())?;
        return Ok((scenario, n.trim().to_ascii_lowercase()));
    }
    match &r.parts {
        Some((ic, form, noise)) => {
            let scenario =
                Scenario::new(ic.clone(), *form, *noise, r.horizon).map_err(|e| e.to_string())?;
            Ok((scenario, "custom".into()))
        }
        None => Err(
            "missing scenario: pass --scenario or set ic, perturbation, noise in the config file"
                .into(),
        ),
    }
}

fn driving_path(noise: NoiseKind, seed: u64, grid: &TimeGrid) -> Result<NoisePath, String> {
    match noise {
        NoiseKind::Zero => Ok(zero_path(grid)),
        NoiseKind::Brownian => Ok(sample_brownian(seed, grid)),
        NoiseKind::GeometricBrownian => {
            to_geometric(&sample_brownian(seed, grid)).map_err(|e| e.to_string())
        }
    }
}

/// Launch points for a scenario's fan.  The square-root form's noise
/// coefficient is degenerate at the data boundary (infinite derivative), so
/// its fan starts strictly inside, matching the library's own comparisons.
fn fan_starts_for(scenario: &Scenario, nx: usize) -> Vec<f64> {
    match scenario.perturbation.form {
        PerturbationForm::SqrtConservation => linspace(0.05, 0.95, nx),
        _ => linspace(0.0, 1.0, nx),
    }
}

/// The catalog entry solving this exact scenario, if there is one.
fn matching_entry(scenario: &Scenario) -> Option<ClosedFormSolution> {
    ALL_IDS.into_iter().map(lookup).find(|entry| {
        entry.scenario(scenario.horizon).is_ok_and(|bound| {
            bound.ic.id() == scenario.ic.id() && bound.perturbation == scenario.perturbation
        })
    })
}

fn emit(path: &Path, content: &str) -> Result<(), String> {
    write_atomic(path, content).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), String> {
    let r = resolve(&args.common)?;
    let (scenario, tag) = scenario_for(&args.scenario, &r)?;
    let grid = TimeGrid::uniform(r.horizon, r.dt).map_err(|e| e.to_string())?;
    let path = driving_path(scenario.perturbation.noise, r.seed, &grid)?;
    let xs = linspace(0.0, 1.0, r.nx);
    let fan = integrate_fan(&scenario, &path, &fan_starts_for(&scenario, r.nx))
        .map_err(|e| e.to_string())?;
    let surface = build_surface(&fan, &xs).map_err(|e| e.to_string())?;
    let sigma = estimate_sigma_many(&fan, &xs);
    let stem = format!("{tag}_seed{}", r.seed);
    emit(
        &r.out.join(format!("{stem}_surface.csv")),
        &surface_csv(&surface, None).map_err(|e| e.to_string())?,
    )?;
    emit(&r.out.join(format!("{stem}_fan.csv")), &fan_csv(&fan))?;
    emit(
        &r.out.join(format!("{stem}_sigma.csv")),
        &sigma_csv(&xs, &sigma).map_err(|e| e.to_string())?,
    )?;
    Ok(())
}

fn cmd_closed_form(args: &ClosedFormArgs) -> Result<(), String> {
    let r = resolve(&args.common)?;
    let id = CatalogId::parse(&args.id).map_err(|e| e.to_string())?;
    let entry = lookup(id);
    let grid = TimeGrid::uniform(r.horizon, r.dt).map_err(|e| e.to_string())?;
    let seed = match entry.noise {
        NoiseKind::Zero => None,
        _ => Some(r.seed),
    };
    let (path, functional) = driver_for(&entry, seed, &grid).map_err(|e| e.to_string())?;
    let xs = linspace(0.0, 1.0, r.nx);
    let ts = grid.points().to_vec();
    let mut u = vec![vec![f64::NAN; ts.len()]; xs.len()];
    let mut valid = vec![vec![false; ts.len()]; xs.len()];
    for (i, &x) in xs.iter().enumerate() {
        for (j, &t) in ts.iter().enumerate() {
            let state = entry
                .state_at(t, &path, functional.as_ref())
                .map_err(|e| e.to_string())?;
            if entry.is_valid(x, t, &state) {
                u[i][j] = entry.evaluate(x, t, &state).map_err(|e| e.to_string())?;
                valid[i][j] = true;
            }
        }
    }
    let surface = SolutionSurface { x: xs, t: ts, u, valid };
    let functional_column = functional.as_ref().map(|f| f.values.as_slice());
    emit(
        &r.out.join(format!("closed_form_{id}_seed{}.csv", r.seed)),
        &surface_csv(&surface, functional_column).map_err(|e| e.to_string())?,
    )
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool, String> {
    let r = resolve(&args.common)?;
    let ids: Vec<CatalogId> = if args.all {
        ALL_IDS.to_vec()
    } else {
        vec![CatalogId::parse(args.id.as_deref().expect("clap group")).map_err(|e| e.to_string())?]
    };
    let mut all_ok = true;
    for id in ids {
        let entry = lookup(id);
        let sweep = sweep_residuals(id, args.probes, r.seed).map_err(|e| e.to_string())?;
        let seed = match entry.noise {
            NoiseKind::Zero => None,
            _ => Some(r.seed),
        };
        let cross = cross_validate(id, seed, r.dt, r.nx).map_err(|e| e.to_string())?;
        let ok = sweep.passed() && cross.passed();
        all_ok &= ok;
        println!(
            "{id},{:e},{:e},{}",
            sweep.max_residual.unwrap_or(f64::NAN),
            cross.sup_error.unwrap_or(f64::NAN),
            if ok { "PASS" } else { "FAIL" }
        );
        for failure in sweep.failures.iter().chain(&cross.failures) {
            eprintln!("{id}: {failure}");
        }
        write_atomic(
            &r.out.join(format!("verify_{id}_residuals.csv")),
            &residual_csv(&sweep),
        )
        .map_err(|e| format!("cannot write residual table: {e}"))?;
    }
    Ok(all_ok)
}

fn cmd_stopping_time(args: &StoppingTimeArgs) -> Result<(), String> {
    let r = resolve(&args.common)?;
    let (scenario, tag) = scenario_for(&args.scenario, &r)?;
    let grid = TimeGrid::uniform(r.horizon, r.dt).map_err(|e| e.to_string())?;
    let path = driving_path(scenario.perturbation.noise, r.seed, &grid)?;
    let xs = linspace(0.0, 1.0, r.nx);
    let fan = integrate_fan(&scenario, &path, &fan_starts_for(&scenario, r.nx))
        .map_err(|e| e.to_string())?;
    let numeric = estimate_sigma_many(&fan, &xs);
    let target = r.out.join(format!("stopping_time_{tag}_seed{}.csv", r.seed));
    match matching_entry(&scenario) {
        Some(entry) => {
            let functional = match entry.needs_functional {
                Some(kind) => {
                    Some(path_integral_exp(&path, kind.nested()).map_err(|e| e.to_string())?)
                }
                None => None,
            };
            let mut formula = Vec::with_capacity(xs.len());
            for &x in &xs {
                formula.push(
                    entry
                        .closed_form_sigma(x, &path, functional.as_ref())
                        .map_err(|e| e.to_string())?,
                );
            }
            emit(
                &target,
                &sigma_compare_csv(&xs, &numeric, &formula).map_err(|e| e.to_string())?,
            )
        }
        None => emit(&target, &sigma_csv(&xs, &numeric).map_err(|e| e.to_string())?),
    }
}

fn cmd_paths(args: &PathsArgs) -> Result<(), String> {
    let r = resolve(&args.common)?;
    let grid = TimeGrid::uniform(r.horizon, r.dt).map_err(|e| e.to_string())?;
    let w = sample_brownian(r.seed, &grid);
    let s = to_geometric(&w).map_err(|e| e.to_string())?;
    emit(
        &r.out.join(format!("paths_seed{}.csv", r.seed)),
        &paths_csv(&w, &s).map_err(|e| e.to_string())?,
    )
}
