//! The nine end-to-end guarantees this crate is built around, one test
//! each.  Every test prints a single summary line so a full run reads as a
//! checklist, and the tolerances sit next to the assertions they feed.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use lwr_sc::{
    build_surface, convergence_study, cross_validate, estimate_sigma_many, fault_sensitivity,
    integrate_fan, linspace, lookup, sample_brownian, sample_brownian_stream, sweep_all,
    to_geometric, zero_path, CatalogId, PathState, TimeGrid, ALL_IDS, FAULT_DETECT, RESIDUAL_TOL,
};

fn secs(t0: Instant) -> f64 {
    t0.elapsed().as_secs_f64()
}

/// Quiet-path pipeline runs reproduce all four deterministic formulas to
/// within the interpolation budget on a 101-point grid.
#[test]
fn a1_quiet_path_surfaces_match_deterministic_formulas() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for id in [CatalogId::D1, CatalogId::D2, CatalogId::D3, CatalogId::D4] {
        let report = cross_validate(id, None, 1e-3, 101).unwrap();
        let sup = report.sup_error.unwrap();
        assert!(
            sup <= 1e-6,
            "{id}: quiet-path sup error {sup:e} above 1e-6 over {} points",
            report.probes
        );
        worst = worst.max(sup);
    }
    let el = secs(t0);
    assert!(el < 5.0, "quiet-path comparisons took {el:.2}s, budget is 5s");
    println!(
        "acceptance 1 PASS: quiet-path surfaces within 1e-6 of the deterministic formulas \
         (worst sup {worst:.2e}, {el:.2}s)"
    );
}

/// Every catalog entry passes a 1000-probe residual sweep at 1e-9, and the
/// sweep itself is sharp: a 1e-6 perturbation of the value moves some
/// residual above 1e-8 for every entry.
#[test]
fn a2_residual_sweep_and_fault_injection() {
    let t0 = Instant::now();
    let reports = sweep_all(1000, 1).unwrap();
    let mut worst: f64 = 0.0;
    for r in &reports {
        assert!(r.passed(), "{}: {:?}", r.id, r.failures);
        worst = worst.max(r.max_residual.unwrap());
    }
    let el = secs(t0);
    assert!(el < 5.0, "residual sweep took {el:.2}s, budget is 5s");
    for &id in ALL_IDS.iter() {
        let moved = fault_sensitivity(id, 200, 1).unwrap();
        assert!(
            moved > FAULT_DETECT,
            "{id}: a 1e-6 value fault only moved the worst residual to {moved:e}"
        );
    }
    println!(
        "acceptance 2 PASS: 12 x 1000 residual probes within {RESIDUAL_TOL:.0e} \
         (worst {worst:.2e}, {el:.2}s); injected faults detected on every entry"
    );
}

/// The linear conserved scenario transports a constant slope, so the
/// position ODE has constant coefficients and the integrator lands on every
/// node exactly; the rebuilt surface then tracks the matching closed form.
#[test]
fn a3_node_exact_flow_and_surface_for_linear_conserved_data() {
    let entry = lookup(CatalogId::S1);
    let scenario = entry.scenario(1.0).unwrap();
    let grid = TimeGrid::uniform(1.0, 1e-3).unwrap();
    let x0s = linspace(0.0, 1.0, 101);
    let mut worst_node: f64 = 0.0;
    let mut worst_sup: f64 = 0.0;
    for seed in 1..=10u64 {
        let path = sample_brownian(seed, &grid);
        let fan = integrate_fan(&scenario, &path, &x0s).unwrap();
        for (i, tr) in fan.trajectories.iter().enumerate() {
            let x0 = fan.x0[i];
            let speed = 1.0 - 2.0 * scenario.ic.value(x0);
            for (j, &t) in grid.points().iter().enumerate() {
                if !tr.alive[j] {
                    break;
                }
                let exact = x0 + speed * (t + path.values[j]);
                let err = (tr.states[j].xi - exact).abs();
                assert!(
                    err <= 1e-12,
                    "seed {seed}, x0 {x0}, t {t}: node error {err:e} above 1e-12"
                );
                worst_node = worst_node.max(err);
            }
            // The slope blows up exactly where 1 + 2(t + W) hits zero, so
            // the only admissible reason to stop early is that the path
            // really drives the fan into its fold.
            if tr.explosion_t.is_finite() {
                let pole = grid
                    .points()
                    .iter()
                    .zip(path.values.iter())
                    .find(|(&t, &w)| 1.0 + 2.0 * (t + w) <= 0.0)
                    .map(|(&t, _)| t);
                match pole {
                    Some(tp) => {
                        let lag = tr.explosion_t - tp;
                        assert!(
                            (-2e-3..=25e-3).contains(&lag),
                            "seed {seed}, x0 {x0}: died at {} but the slope pole sits at {tp}",
                            tr.explosion_t
                        );
                    }
                    None => panic!(
                        "seed {seed}, x0 {x0}: died at {} with no slope pole on the path",
                        tr.explosion_t
                    ),
                }
            }
        }
        let report = cross_validate(CatalogId::S1, Some(seed), 1e-3, 101).unwrap();
        let sup = report.sup_error.unwrap();
        assert!(sup <= 1e-4, "seed {seed}: surface sup error {sup:e} above 1e-4");
        worst_sup = worst_sup.max(sup);
    }
    println!(
        "acceptance 3 PASS: 10 seeds node-exact to {worst_node:.2e} (tol 1e-12), \
         surfaces within 1e-4 of the linear form (worst sup {worst_sup:.2e})"
    );
}

/// The quiet geometric driver reproduces the parabolic closed form, and the
/// surface's t = 0 row is the initial parabola bit for bit.
#[test]
fn a4_quiet_geometric_driver_matches_parabolic_form() {
    let report = cross_validate(CatalogId::S2, None, 1e-3, 101).unwrap();
    let sup = report.sup_error.unwrap();
    assert!(sup <= 1e-4, "quiet geometric sup error {sup:e} above 1e-4");

    let entry = lookup(CatalogId::S2);
    let scenario = entry.scenario(1.0).unwrap();
    let grid = TimeGrid::uniform(1.0, 1e-3).unwrap();
    let path = to_geometric(&zero_path(&grid)).unwrap();
    let fan = integrate_fan(&scenario, &path, &linspace(0.0, 1.0, 4001)).unwrap();
    let xs = linspace(0.0, 1.0, 101);
    let surface = build_surface(&fan, &xs).unwrap();
    for (i, &x) in xs.iter().enumerate() {
        assert!(surface.valid[i][0], "t = 0 node at x {x} marked invalid");
        let want = 1.0 - x * x;
        assert_eq!(
            surface.u[i][0].to_bits(),
            want.to_bits(),
            "t = 0 row differs from the initial parabola at x {x}"
        );
    }
    println!(
        "acceptance 4 PASS: quiet geometric surface within 1e-4 of the parabolic form \
         (sup {sup:.2e}); t = 0 row exact to the bit"
    );
}

/// Stopping times come out where the formulas put them: the deterministic
/// fold of the identity profile at t = 1/2, and the per-position failure
/// times of the linear conserved scenario along sampled paths.
#[test]
fn a5_stopping_times_located() {
    let d3 = lookup(CatalogId::D3);
    let scenario = d3.scenario(1.0).unwrap();
    let grid = TimeGrid::uniform(1.0, 1e-3).unwrap();
    let quiet = zero_path(&grid);
    let fan = integrate_fan(&scenario, &quiet, &linspace(0.0, 1.0, 4001)).unwrap();
    let tau_inv = fan.tau_inv();
    assert!(
        (tau_inv - 0.5).abs() <= 2e-3,
        "identity-profile fold found at {tau_inv}, expected 0.5 within 2e-3"
    );

    let s1 = lookup(CatalogId::S1);
    let s1_scenario = s1.scenario(1.0).unwrap();
    let queries = linspace(0.0, 1.0, 11);
    let mut checked = 0usize;
    for seed in 1..=10u64 {
        let path = sample_brownian(seed, &grid);
        let fan = integrate_fan(&s1_scenario, &path, &linspace(0.0, 1.0, 4001)).unwrap();
        let numeric = estimate_sigma_many(&fan, &queries);
        for (&x, &sn) in queries.iter().zip(numeric.iter()) {
            let sf = s1.closed_form_sigma(x, &path, None).unwrap();
            let agree = if sn.is_finite() && sf.is_finite() {
                (sn - sf).abs() <= 2e-3 + 1e-12
            } else {
                // One side never fails on the grid: the other must survive
                // to within a step pair of the horizon.
                sn.min(sf) >= 1.0 - 2e-3
            };
            assert!(
                agree,
                "seed {seed}, x {x}: numeric sigma {sn} vs formula sigma {sf}"
            );
            checked += 1;
        }
    }
    assert!(checked == 110, "expected 110 sigma comparisons, made {checked}");
    println!(
        "acceptance 5 PASS: fold of the identity profile at {tau_inv:.4} (target 0.5); \
         110 per-position stopping times within 2e-3 of the formula scan"
    );
}

/// At zero noise the stochastic formulas collapse onto their deterministic
/// counterparts pointwise.
#[test]
fn a6_stochastic_forms_collapse_to_deterministic_at_zero_noise() {
    let s1 = lookup(CatalogId::S1);
    let d1 = lookup(CatalogId::D1);
    let b2 = lookup(CatalogId::B2);
    let d3 = lookup(CatalogId::D3);
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x: f64 = rng.random_range(0.0..1.0);
        let t: f64 = rng.random_range(0.0..1.0);
        let u_s1 = s1.evaluate(x, t, &PathState::brownian(0.0)).unwrap();
        let u_d1 = d1.evaluate(x, t, &PathState::none()).unwrap();
        let d_linear = (u_s1 - u_d1).abs();
        assert!(
            d_linear <= 1e-12,
            "linear pair differs by {d_linear:e} at ({x}, {t})"
        );

        // The multiplicative entry rides a running integral that equals t on
        // the quiet path; both formulas share the fold at t = 1/2, so the
        // draw is kept below it.
        let tb = t * 0.44;
        let u_b2 = b2
            .evaluate(x, tb, &PathState::brownian(0.0).with_functional(tb))
            .unwrap();
        let u_d3 = d3.evaluate(x, tb, &PathState::none()).unwrap();
        let d_ident = (u_b2 - u_d3).abs();
        assert!(
            d_ident <= 1e-12,
            "identity pair differs by {d_ident:e} at ({x}, {tb})"
        );
        worst = worst.max(d_linear).max(d_ident);
    }
    println!(
        "acceptance 6 PASS: 1000 random points, zero-noise collapse exact to {worst:.2e} \
         (tol 1e-12)"
    );
}

/// Halving the step on one bridge-refined path keeps cutting the surface
/// error against the rough multiplicative form by at least 1.5x.
#[test]
fn a7_step_halving_shrinks_rough_scenario_error() {
    let t0 = Instant::now();
    let rows = convergence_study(CatalogId::B2, Some(21), &[4e-3, 2e-3, 1e-3]).unwrap();
    println!("dt        sup error      compared");
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
    let el = secs(t0);
    assert!(el < 30.0, "convergence study took {el:.2}s, budget is 30s");
    println!(
        "acceptance 7 PASS: error ratios {:.2} and {:.2} across dt 4e-3 -> 1e-3 \
         (threshold 1.5, {el:.2}s)",
        rows[0].sup_error / rows[1].sup_error,
        rows[1].sup_error / rows[2].sup_error
    );
}

/// The conservation-form scenarios carry the initial density unchanged
/// along every characteristic, to the last bit, for as long as the
/// trajectory lives.
#[test]
fn a8_conserved_density_is_bit_stable_along_characteristics() {
    let cases = [
        (CatalogId::S1, 1.0),
        (CatalogId::S2, 1.0),
        (CatalogId::B3, 0.45),
        (CatalogId::G3, 0.45),
    ];
    let mut worst: f64 = 0.0;
    for (id, horizon) in cases {
        let entry = lookup(id);
        let scenario = entry.scenario(horizon).unwrap();
        let grid = TimeGrid::uniform(horizon, 1e-3).unwrap();
        let base = sample_brownian(5, &grid);
        let path = match scenario.perturbation.noise {
            lwr_sc::NoiseKind::GeometricBrownian => to_geometric(&base).unwrap(),
            _ => base,
        };
        let fan = integrate_fan(&scenario, &path, &linspace(0.05, 0.95, 51)).unwrap();
        for (i, tr) in fan.trajectories.iter().enumerate() {
            let g0 = scenario.ic.value(fan.x0[i]);
            let mut dev: f64 = 0.0;
            for (j, st) in tr.states.iter().enumerate() {
                if !tr.alive[j] {
                    break;
                }
                dev = dev.max((st.eta - g0).abs());
            }
            assert!(
                dev <= 1e-12,
                "{id}, x0 {}: carried density drifted by {dev:e}",
                fan.x0[i]
            );
            worst = worst.max(dev);
        }
    }
    println!(
        "acceptance 8 PASS: carried density constant to {worst:.2e} (tol 1e-12) \
         on all four conservation-form scenarios"
    );
}

/// The path sampler has the statistics it claims: pooled increment variance
/// over 1e5 streams matches the step within 5 percent.
#[test]
fn a9_brownian_increment_statistics() {
    let t0 = Instant::now();
    let grid = TimeGrid::uniform(0.1, 0.01).unwrap();
    let mut sum = 0.0f64;
    let mut sumsq = 0.0f64;
    let mut count = 0u64;
    for k in 0..100_000u64 {
        let p = sample_brownian_stream(1, k, &grid);
        for j in 1..p.values.len() {
            let d = p.values[j] - p.values[j - 1];
            sum += d;
            sumsq += d * d;
            count += 1;
        }
    }
    let mean = sum / count as f64;
    let var = sumsq / count as f64 - mean * mean;
    let rel = (var - 0.01).abs() / 0.01;
    assert!(
        rel <= 0.05,
        "pooled increment variance {var:e} is {rel:.1}x off the step 1e-2"
    );
    let el = secs(t0);
    assert!(el < 10.0, "sampling 1e5 paths took {el:.2}s, budget is 10s");
    println!(
        "acceptance 9 PASS: increment variance {var:.4e} vs step 1e-2 \
         ({count} increments, {el:.2}s)"
    );
}
