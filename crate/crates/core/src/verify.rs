//! Automated checks that the catalog really solves the transport equation.
//!
//! Two independent routes are compared.  The residual route differentiates
//! each entry analytically and substitutes into the perturbed equation
//! `u_t + (1 - 2u) u_x - h(x, u, u_x, t) * m_dot`, where the path's formal
//! rate `m_dot` is a free probe variable; the identity must hold for every
//! value of it.  The cross-validation route integrates the characteristic
//! fan on a sampled path and compares the rebuilt surface against the entry
//! pointwise.  A convergence study repeats the comparison on a common path
//! refined across step sizes.

use crate::characteristics::{build_surface, integrate_fan, linspace};
use crate::closedform::{lookup, CatalogId, ClosedFormSolution, PathState, ALL_IDS};
use crate::error::{Error, Result};
use crate::process::{
    path_integral_exp, sample_brownian, stream_rng, to_geometric, zero_path, NoiseKind,
    NoisePath, PathFunctional, TimeGrid, DOMAIN_PROBE,
};
use rand::Rng;
use rayon::prelude::*;

/// Residual magnitude above which a probe counts as a failure.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Perturbation used by the fault-injection sensitivity check.
pub const FAULT_SIZE: f64 = 1e-6;

/// A faulted evaluator must push some residual above this.
pub const FAULT_DETECT: f64 = 1e-8;

/// Internal fan density used for cross-validation; much denser than the
/// output grid so interpolation error stays well under the thresholds.
const FAN_POINTS: usize = 4001;

/// Launch grid for the comparison fan.  The square-root perturbation has an
/// unbounded coefficient derivative at the data boundary, so starts on the
/// boundary make adjacent characteristics cross at noise scale immediately;
/// those two scenarios are compared on the interior flow instead.
fn fan_starts(id: CatalogId) -> Vec<f64> {
    match id {
        CatalogId::B3 | CatalogId::G3 => linspace(0.05, 0.95, FAN_POINTS),
        _ => linspace(0.0, 1.0, FAN_POINTS),
    }
}

/// One evaluation point for the residual identity.
#[derive(Debug, Clone, Copy)]
pub struct ResidualProbe {
    pub x: f64,
    pub t: f64,
    pub state: PathState,
    pub m_dot: f64,
}

/// Flat record of a probe and its residual, for CSV emission.
#[derive(Debug, Clone, Copy)]
pub struct ProbeRecord {
    pub x: f64,
    pub t: f64,
    pub m: f64,
    pub m_dot: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct GridParams {
    pub dt: f64,
    pub nx: usize,
}

/// Outcome of a residual sweep or a cross-validation run.
#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub id: CatalogId,
    pub probes: usize,
    /// Largest |residual| seen (residual sweeps).
    pub max_residual: Option<f64>,
    /// Sup-norm surface disagreement (cross-validation).
    pub sup_error: Option<f64>,
    pub grid: Option<GridParams>,
    pub failures: Vec<String>,
    pub records: Vec<ProbeRecord>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// One-line summary: `id,measure,PASS|FAIL`.
    pub fn summary_line(&self) -> String {
        let measure = self.max_residual.or(self.sup_error).unwrap_or(f64::NAN);
        format!(
            "{},{:e},{}",
            self.id,
            measure,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// The perturbed transport equation's left-hand side at one probe.
pub fn residual(entry: &ClosedFormSolution, probe: &ResidualProbe) -> Result<f64> {
    let u = entry.evaluate(probe.x, probe.t, &probe.state)?;
    let (u_t, u_x) = entry.partials(probe.x, probe.t, &probe.state, probe.m_dot)?;
    let h = entry.form.eval(probe.x, u, u_x, probe.t).h;
    Ok(u_t + (1.0 - 2.0 * u) * u_x - h * probe.m_dot)
}

/// Residual with the evaluator's value faulted by `fault`, derivatives left
/// honest.  A healthy detector must notice the inconsistency.
pub fn residual_with_fault(
    entry: &ClosedFormSolution,
    probe: &ResidualProbe,
    fault: f64,
) -> Result<f64> {
    let u = entry.evaluate(probe.x, probe.t, &probe.state)? + fault;
    let (u_t, u_x) = entry.partials(probe.x, probe.t, &probe.state, probe.m_dot)?;
    let h = entry.form.eval(probe.x, u, u_x, probe.t).h;
    Ok(u_t + (1.0 - 2.0 * u) * u_x - h * probe.m_dot)
}

/// Draws `n` probes inside the entry's validity region.  Positions and times
/// are uniform over the region, path values range over broad brackets, and
/// the rate probe is uniform in [-10, 10].  Entries with a structural
/// singularity at t = 1/2 exclude |t - 1/2| < 0.05; the square-root entries
/// keep their radicand at least 1e-6 and their value away from the interval
/// ends, where the perturbation's slope factor degenerates.
pub fn sample_probes(id: CatalogId, n: usize, seed: u64) -> Result<Vec<ResidualProbe>> {
    let entry = lookup(id);
    let idx = ALL_IDS.iter().position(|i| *i == id).unwrap() as u64;
    let mut rng = stream_rng(seed, DOMAIN_PROBE, idx);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    let cap = 2000 * n + 10_000;
    while out.len() < n && tries < cap {
        tries += 1;
        let x: f64 = rng.random_range(0.02..0.98);
        let t: f64 = rng.random_range(0.01..0.99);
        let m_dot: f64 = rng.random_range(-10.0..10.0);
        let m: f64 = match entry.noise {
            NoiseKind::Zero => 0.0,
            NoiseKind::Brownian => rng.random_range(-0.6..0.6),
            NoiseKind::GeometricBrownian => rng.random_range(0.5..1.6),
        };
        let functional = match id {
            CatalogId::B2 => Some(rng.random_range(0.0..0.45)),
            CatalogId::G2 => Some(rng.random_range(0.0..1.2)),
            _ => None,
        };
        let state = PathState { m, functional };
        match id {
            CatalogId::D3 | CatalogId::G1 if (t - 0.5).abs() < 0.05 => continue,
            CatalogId::B3 | CatalogId::G3 => {
                let v = if id == CatalogId::B3 { m } else { m - 1.0 };
                let radicand = v * v + 4.0 * (x - t) * (1.0 - x - t);
                if radicand < 1e-6 {
                    continue;
                }
            }
            _ => {}
        }
        if !entry.is_valid(x, t, &state) {
            continue;
        }
        if matches!(id, CatalogId::B3 | CatalogId::G3) {
            let u = entry.evaluate(x, t, &state)?;
            if !(1e-4..=1.0 - 1e-4).contains(&u) {
                continue;
            }
        }
        if entry.partials(x, t, &state, m_dot).is_err() {
            continue;
        }
        out.push(ResidualProbe { x, t, state, m_dot });
    }
    if out.len() < n {
        return Err(Error::InvalidArgument(format!(
            "only {} of {n} probes found for {id} in {tries} draws",
            out.len()
        )));
    }
    Ok(out)
}

/// Evaluates the residual identity at `n_probes` random points of the
/// entry's validity region.
pub fn sweep_residuals(id: CatalogId, n_probes: usize, seed: u64) -> Result<VerificationReport> {
    let entry = lookup(id);
    let probes = sample_probes(id, n_probes, seed)?;
    let records: Vec<ProbeRecord> = probes
        .par_iter()
        .map(|p| {
            let r = residual(&entry, p).expect("probe was sampled inside the validity region");
            ProbeRecord {
                x: p.x,
                t: p.t,
                m: p.state.m,
                m_dot: p.m_dot,
                residual: r,
            }
        })
        .collect();
    let max_residual = records.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let failures = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.residual.abs() > RESIDUAL_TOL)
        .map(|(i, r)| {
            format!(
                "probe {i} at (x={}, t={}, M={}, m_dot={}): residual {:e}",
                r.x, r.t, r.m, r.m_dot, r.residual
            )
        })
        .collect();
    Ok(VerificationReport {
        id,
        probes: records.len(),
        max_residual: Some(max_residual),
        sup_error: None,
        grid: None,
        failures,
        records,
    })
}

/// Residual sweep over the whole catalog.
pub fn sweep_all(n_probes: usize, seed: u64) -> Result<Vec<VerificationReport>> {
    ALL_IDS
        .iter()
        .map(|id| sweep_residuals(*id, n_probes, seed))
        .collect()
}

/// Largest faulted residual over the entry's probes; a working detector
/// reports well above [`FAULT_DETECT`].
pub fn fault_sensitivity(id: CatalogId, n_probes: usize, seed: u64) -> Result<f64> {
    let entry = lookup(id);
    let probes = sample_probes(id, n_probes, seed)?;
    let mut worst: f64 = 0.0;
    for p in &probes {
        worst = worst.max(residual_with_fault(&entry, p, FAULT_SIZE)?.abs());
    }
    Ok(worst)
}

/// Horizon on which an entry is compared against the numerical pipeline;
/// entries with structure at t = 1/2 stop at 0.45.
fn comparison_horizon(id: CatalogId) -> f64 {
    match id {
        CatalogId::D1 | CatalogId::D2 | CatalogId::S1 | CatalogId::S2 | CatalogId::B1 => 1.0,
        _ => 0.45,
    }
}

/// Sup-error threshold for cross-validation failures.  Deterministic
/// scenarios are interpolation-limited; node-exact stochastic ones add only
/// path bookkeeping; the genuinely discretization-limited entries get the
/// loosest bound.
fn cross_tolerance(id: CatalogId) -> f64 {
    match id {
        CatalogId::D1 | CatalogId::D2 | CatalogId::D3 | CatalogId::D4 => 1e-6,
        CatalogId::S1 | CatalogId::S2 | CatalogId::B1 | CatalogId::G1 => 1e-4,
        CatalogId::B2 | CatalogId::G2 | CatalogId::B3 | CatalogId::G3 => 1e-3,
    }
}

/// Margin kept between a comparison point and a path-dependent blowup of
/// the reference solution.  Inside that margin the solution value is
/// arbitrarily badly conditioned in the path, and which near-singular
/// nodes survive validity gating shifts with the grid, so sup errors taken
/// there measure conditioning rather than integration accuracy.  Entries
/// whose blowup time is fixed (independent of the path) keep their full
/// valid region; it is identical across grids.
const CONDITIONING_MARGIN: f64 = 0.2;

fn well_conditioned(entry: &ClosedFormSolution, state: &PathState) -> bool {
    let den = match (entry.id, state.functional) {
        (CatalogId::B2, Some(i)) => 1.0 - 2.0 * i,
        (CatalogId::G2, Some(j)) => 1.0 - 2.0 * j / std::f64::consts::E,
        _ => return true,
    };
    den >= CONDITIONING_MARGIN
}

/// Driving path and functional for an entry: sampled under `seed`, or the
/// quiet path when `seed` is `None` (zero for a Brownian driver, the
/// deterministic decay for a geometric one).
pub fn driver_for(
    entry: &ClosedFormSolution,
    seed: Option<u64>,
    grid: &TimeGrid,
) -> Result<(NoisePath, Option<PathFunctional>)> {
    let base = match seed {
        Some(s) => sample_brownian(s, grid),
        None => zero_path(grid),
    };
    let path = match entry.noise {
        NoiseKind::Zero | NoiseKind::Brownian => base,
        NoiseKind::GeometricBrownian => to_geometric(&base)?,
    };
    let functional = match entry.needs_functional {
        Some(kind) => Some(path_integral_exp(&path, kind.nested())?),
        None => None,
    };
    Ok((path, functional))
}

/// Integrates the scenario bound to `id` on a driving path, rebuilds the
/// surface, and reports the sup disagreement against the entry on the
/// jointly valid region.
pub fn cross_validate(
    id: CatalogId,
    seed: Option<u64>,
    dt: f64,
    nx: usize,
) -> Result<VerificationReport> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if nx < 2 {
        return Err(Error::InvalidArgument(format!("nx must be at least 2, got {nx}")));
    }
    let entry = lookup(id);
    let horizon = comparison_horizon(id);
    let scenario = entry.scenario(horizon)?;
    let grid = TimeGrid::uniform(horizon, dt)?;
    let (path, functional) = driver_for(&entry, seed, &grid)?;
    let fan = integrate_fan(&scenario, &path, &fan_starts(id))?;
    let xs = linspace(0.0, 1.0, nx);
    let surface = build_surface(&fan, &xs)?;
    let mut sup: f64 = 0.0;
    let mut compared = 0usize;
    for (i, &x) in xs.iter().enumerate() {
        for (j, &t) in surface.t.iter().enumerate() {
            if !surface.valid[i][j] {
                continue;
            }
            let state = entry.state_at(t, &path, functional.as_ref())?;
            if !entry.is_valid(x, t, &state) || !well_conditioned(&entry, &state) {
                continue;
            }
            let u = entry.evaluate(x, t, &state)?;
            sup = sup.max((surface.u[i][j] - u).abs());
            compared += 1;
        }
    }
    if compared == 0 {
        return Err(Error::InvalidArgument(format!(
            "no jointly valid points to compare for {id}"
        )));
    }
    let tol = cross_tolerance(id);
    let failures = if sup > tol {
        vec![format!(
            "sup error {sup:e} over {compared} points exceeds {tol:e}"
        )]
    } else {
        Vec::new()
    };
    Ok(VerificationReport {
        id,
        probes: compared,
        max_residual: None,
        sup_error: Some(sup),
        grid: Some(GridParams { dt, nx }),
        failures,
        records: Vec::new(),
    })
}

/// One row of a convergence study.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub sup_error: f64,
    pub compared: usize,
}

/// Repeats the cross-validation on one common path restricted to a chain of
/// step sizes nested by factor 2 (finer levels are bridge-refined from the
/// coarsest draw, so all levels see the same underlying path).  Expected to
/// show shrinking errors for discretization-limited scenarios and a flat
/// interpolation floor for node-exact ones.
pub fn convergence_study(
    id: CatalogId,
    seed: Option<u64>,
    dt_list: &[f64],
) -> Result<Vec<ConvergenceRow>> {
    if dt_list.is_empty() {
        return Err(Error::InvalidArgument(
            "dt list must not be empty".into(),
        ));
    }
    for w in dt_list.windows(2) {
        let ratio = w[0] / w[1];
        // Negated so a NaN ratio (zero steps) fails validation too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !((ratio - 2.0).abs() < 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "dt list must halve at each level, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    let entry = lookup(id);
    // A horizon that all levels divide exactly, inside the validity window.
    let horizon = if comparison_horizon(id) >= 1.0 { 1.0 } else { 0.4 };
    let scenario = entry.scenario(horizon)?;
    let nx = 101;
    let xs = linspace(0.0, 1.0, nx);
    let mut rows = Vec::with_capacity(dt_list.len());
    // Brownian source for the current level; None for a quiet driver.
    let mut source: Option<NoisePath> = None;
    for (level, &dt) in dt_list.iter().enumerate() {
        let grid = TimeGrid::uniform(horizon, dt)?;
        let path = match entry.noise {
            NoiseKind::Zero => zero_path(&grid),
            _ => {
                let w = match (&source, seed) {
                    (None, Some(s)) => sample_brownian(s, &grid),
                    (None, None) => zero_path(&grid),
                    (Some(prev), _) => crate::process::bridge_refine(prev, 2)?,
                };
                let path = if entry.noise == NoiseKind::GeometricBrownian {
                    to_geometric(&w)?
                } else {
                    w.clone()
                };
                source = Some(w);
                path
            }
        };
        if entry.noise == NoiseKind::Zero || seed.is_none() {
            // Quiet levels are rebuilt directly; nothing to refine.
            source = None;
        }
        let functional = match entry.needs_functional {
            Some(kind) => Some(path_integral_exp(&path, kind.nested())?),
            None => None,
        };
        let fan = integrate_fan(&scenario, &path, &fan_starts(id))?;
        let surface = build_surface(&fan, &xs)?;
        // Levels are compared at the coarsest level's node times only, so
        // every row measures the same set of physical points and the ratios
        // are not skewed by finer grids reaching closer to the validity
        // boundary.
        let stride = (dt_list[0] / dt).round() as usize;
        let mut sup: f64 = 0.0;
        let mut compared = 0usize;
        for (i, &x) in xs.iter().enumerate() {
            for (j, &t) in surface.t.iter().enumerate().step_by(stride) {
                if !surface.valid[i][j] {
                    continue;
                }
                let state = entry.state_at(t, &path, functional.as_ref())?;
                if !entry.is_valid(x, t, &state) || !well_conditioned(&entry, &state) {
                    continue;
                }
                let u = entry.evaluate(x, t, &state)?;
                sup = sup.max((surface.u[i][j] - u).abs());
                compared += 1;
            }
        }
        if compared == 0 {
            return Err(Error::InvalidArgument(format!(
                "level {level} (dt={dt}) has no jointly valid points for {id}"
            )));
        }
        rows.push(ConvergenceRow { dt, sup_error: sup, compared });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_examples() {
        // The conservation-form entry satisfies the identity to roundoff at
        // arbitrary probes, rate probe included.
        let s1 = lookup(CatalogId::S1);
        for (x, t, m, m_dot) in [
            (0.4, 0.5, -0.2, 0.7),
            (0.1, 0.9, 0.35, -9.5),
            (0.85, 0.05, 0.0, 3.3),
        ] {
            let probe = ResidualProbe {
                x,
                t,
                state: PathState::brownian(m),
                m_dot,
            };
            let r = residual(&s1, &probe).unwrap();
            assert!(
                r.abs() <= 1e-12,
                "residual {r:e} at (x={x}, t={t}, M={m}, m_dot={m_dot})"
            );
        }
        let d1 = lookup(CatalogId::D1);
        let probe = ResidualProbe {
            x: 0.3,
            t: 0.6,
            state: PathState::none(),
            m_dot: 123.0,
        };
        assert!(residual(&d1, &probe).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn sweep_whole_catalog() {
        println!("id    probes  max|residual|");
        for id in ALL_IDS {
            let report = sweep_residuals(id, 300, 1).unwrap();
            println!(
                "{:<4}  {:>6}  {:e}",
                id.as_str(),
                report.probes,
                report.max_residual.unwrap()
            );
            assert_eq!(report.probes, 300);
            assert!(
                report.passed(),
                "{id}: {:?}",
                report.failures.first()
            );
            assert!(report.max_residual.unwrap() <= RESIDUAL_TOL);
            let line = report.summary_line();
            assert!(line.starts_with(id.as_str()));
            assert!(line.ends_with("PASS"));
        }
    }

    #[test]
    fn probe_constraints_respected() {
        for p in sample_probes(CatalogId::D3, 200, 3).unwrap() {
            assert!((p.t - 0.5).abs() >= 0.05, "probe at excluded t={}", p.t);
        }
        for p in sample_probes(CatalogId::G1, 200, 3).unwrap() {
            assert!((p.t - 0.5).abs() >= 0.05);
            assert!(p.state.m > 0.0, "geometric path value must be positive");
        }
        for p in sample_probes(CatalogId::B3, 200, 3).unwrap() {
            let v = p.state.m;
            let radicand = v * v + 4.0 * (p.x - p.t) * (1.0 - p.x - p.t);
            assert!(radicand >= 1e-6, "radicand {radicand:e} below the probe floor");
        }
        for p in sample_probes(CatalogId::B2, 200, 3).unwrap() {
            assert!(p.state.functional.is_some());
            assert!(p.m_dot.abs() <= 10.0);
        }
    }

    #[test]
    fn fault_injection_is_detected() {
        println!("id    max faulted residual");
        for id in ALL_IDS {
            let worst = fault_sensitivity(id, 200, 2).unwrap();
            println!("{:<4}  {worst:e}", id.as_str());
            assert!(
                worst > FAULT_DETECT,
                "{id}: faulted residual {worst:e} went undetected"
            );
        }
    }

    #[test]
    fn residual_is_linear_in_rate_probe() {
        let g2 = lookup(CatalogId::G2);
        let state = PathState::geometric(1.2).with_functional(0.3);
        let base = ResidualProbe { x: 0.6, t: 0.25, state, m_dot: 0.0 };
        let r = |m_dot: f64| {
            residual(&g2, &ResidualProbe { m_dot, ..base }).unwrap()
        };
        let (r0, r1, r2) = (r(-4.0), r(1.0), r(6.0));
        // Three equally spaced rates must be collinear.
        assert!(
            (r2 - 2.0 * r1 + r0).abs() <= 1e-10,
            "nonlinear in the rate probe: {r0:e}, {r1:e}, {r2:e}"
        );
    }

    #[test]
    fn cross_validation_quiet_paths() {
        let report = cross_validate(CatalogId::D1, None, 1e-3, 101).unwrap();
        println!("D1 quiet: sup {:e} over {}", report.sup_error.unwrap(), report.probes);
        assert!(report.passed());
        assert!(report.sup_error.unwrap() <= 1e-6);
        assert!(report.probes > 10_000);

        let report = cross_validate(CatalogId::S2, None, 1e-3, 101).unwrap();
        println!("S2 quiet: sup {:e} over {}", report.sup_error.unwrap(), report.probes);
        assert!(report.sup_error.unwrap() <= 1e-4);
    }

    #[test]
    fn cross_validation_sampled_path() {
        let report = cross_validate(CatalogId::S1, Some(1), 1e-3, 101).unwrap();
        println!("S1 seed 1: sup {:e} over {}", report.sup_error.unwrap(), report.probes);
        assert!(report.passed());
        assert!(report.sup_error.unwrap() <= 1e-4);
    }

    #[test]
    fn cross_validation_rejects_bad_grid() {
        assert!(cross_validate(CatalogId::D1, None, 0.0, 101).is_err());
        assert!(cross_validate(CatalogId::D1, None, 1e-3, 1).is_err());
    }

    #[test]
    #[ignore]
    fn convergence_seed_scan() {
        for seed in 1..=30u64 {
            match convergence_study(CatalogId::B2, Some(seed), &[4e-3, 2e-3, 1e-3]) {
                Ok(rows) => {
                    let r1 = rows[0].sup_error / rows[1].sup_error;
                    let r2 = rows[1].sup_error / rows[2].sup_error;
                    println!(
                        "seed {seed:>2}: sups {:.3e} {:.3e} {:.3e}  ratios {r1:.2} {r2:.2}",
                        rows[0].sup_error, rows[1].sup_error, rows[2].sup_error
                    );
                }
                Err(e) => println!("seed {seed:>2}: {e}"),
            }
        }
    }

    #[test]
    fn convergence_rows_shrink_for_rough_scenario() {
        let rows = convergence_study(CatalogId::B2, Some(21), &[4e-3, 2e-3, 1e-3]).unwrap();
        println!("dt        sup error     compared");
        for r in &rows {
            println!("{:.1e}   {:e}   {}", r.dt, r.sup_error, r.compared);
        }
        for w in rows.windows(2) {
            let ratio = w[0].sup_error / w[1].sup_error;
            assert!(
                ratio >= 1.5,
                "halving dt from {} only improved the error by x{ratio:.2}",
                w[0].dt
            );
        }
    }

    #[test]
    fn convergence_floor_for_node_exact_scenario() {
        let rows = convergence_study(CatalogId::D1, None, &[4e-3, 2e-3]).unwrap();
        for r in &rows {
            println!("D1 dt={:.1e}: sup {:e}", r.dt, r.sup_error);
            assert!(r.sup_error <= 1e-6, "floor exceeded: {:e}", r.sup_error);
        }
    }

    #[test]
    fn convergence_rejects_bad_dt_lists() {
        assert!(matches!(
            convergence_study(CatalogId::B2, Some(1), &[]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(convergence_study(CatalogId::B2, Some(1), &[4e-3, 3e-3]).is_err());
    }
}
