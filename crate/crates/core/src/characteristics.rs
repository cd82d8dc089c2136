//! Characteristic-fan integration, flow inversion, and stopping times.
//!
//! The solver never discretizes the PDE itself.  It launches a fan of
//! characteristics from a grid of initial points, integrates the coupled
//! `(xi, eta, chi)` system along one shared driving path with a Heun
//! (midpoint-corrected) scheme, and reconstructs the solution surface by
//! inverting the position map `x0 -> xi_t(x0)` at every query point.  The
//! construction is valid only until the fan folds (characteristics cross) or
//! a query point leaves the fan's range; those events define the reported
//! stopping times.

use crate::error::{Error, Result};
use crate::model::{sce_rhs, Scenario, SceState};
use crate::process::{NoiseKind, NoisePath, TimeGrid};
use rayon::prelude::*;
use std::sync::OnceLock;

/// Fold threshold: a pair of adjacent characteristics counts as crossed when
/// their spacing drops below this fraction of the initial spacing.  Finite
/// difference Jacobians never hit exact zero on a grid, so the cut is relative.
pub const EPS_DET: f64 = 1e-8;

/// A characteristic whose position leaves `[-EXPLOSION_BOUND, EXPLOSION_BOUND]`
/// counts as exploded; the state space of interest is `[0,1]`, so the margin
/// is unambiguous.
pub const EXPLOSION_BOUND: f64 = 1e3;

/// Saturation ceiling for the transported slope.  None of the catalog
/// perturbations feed the slope back into the position or density equations,
/// so a slope heading for a pole is pinned at this magnitude instead of
/// killing the trajectory: explicit steps overshoot poles in the slope
/// variable by a noise-scale window, and letting that overshoot end the
/// trajectory would blur every fold time by that window.  With the slope
/// saturated, folds are located by the fan geometry itself.
pub const SLOPE_CEIL: f64 = 1e6;

/// Evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points, got {n}");
    let mut v: Vec<f64> = (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect();
    v[n - 1] = b;
    v
}

/// One characteristic: state per grid node, liveness, and explosion record.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub x0: f64,
    pub states: Vec<SceState>,
    /// False from the first non-finite or exploded node onward; the state is
    /// frozen at its last alive value there.
    pub alive: Vec<bool>,
    /// Grid time of the first dead node, `inf` if the trajectory survives.
    pub explosion_t: f64,
    /// True when a degenerate perturbation form was evaluated with its
    /// boundary clamp active at any visited state.
    pub boundary_flagged: bool,
    /// True when the transported slope was pinned at [`SLOPE_CEIL`] at some
    /// node; position and density are unaffected, but the reported slope is
    /// a saturated stand-in for a diverging value from that node on.
    pub slope_saturated: bool,
}

fn check_path(scenario: &Scenario, path: &NoisePath) -> Result<()> {
    let horizon = path.grid.horizon();
    if (horizon - scenario.horizon).abs() > 1e-12 * scenario.horizon.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "path horizon {horizon} does not match scenario horizon {}",
            scenario.horizon
        )));
    }
    let want = scenario.perturbation.noise;
    let got = path.kind;
    // A zero path is the degenerate Brownian sample, so it may stand in for
    // one; geometric drivers must really be geometric.
    let ok = got == want
        || (want == NoiseKind::Brownian && got == NoiseKind::Zero)
        || (want == NoiseKind::Zero && got == NoiseKind::Brownian);
    if !ok {
        return Err(Error::PathKind {
            expected: want.as_str(),
            got: got.as_str(),
        });
    }
    Ok(())
}

/// Integrates one characteristic from `x0` along `path`.
///
/// One step of the scheme evaluates the increment coefficients at the left
/// state, forms a full predictor step, re-evaluates at the predicted state,
/// and applies the averaged increments against the same `(dt, dm)`.  When the
/// coefficients are constant along the trajectory the two evaluations agree
/// and the scheme reproduces the exact flow at the nodes.
pub fn integrate_sce(scenario: &Scenario, path: &NoisePath, x0: f64) -> Result<Trajectory> {
    check_path(scenario, path)?;
    if !(0.0..=1.0).contains(&x0) {
        return Err(Error::InvalidArgument(format!(
            "initial point must lie in [0,1], got {x0}"
        )));
    }
    let form = scenario.perturbation.form;
    let grid = &path.grid;
    let n = grid.len();
    let mut states = Vec::with_capacity(n);
    let mut alive = vec![true; n];
    let mut explosion_t = f64::INFINITY;

    let mut state = SceState::initial(&scenario.ic, x0);
    let mut boundary_flagged = form.near_boundary(state.eta);
    let mut slope_saturated = false;
    if state.chi.abs() > SLOPE_CEIL {
        state.chi = SLOPE_CEIL.copysign(state.chi);
        slope_saturated = true;
    }
    let mut dead = !state.is_finite() || state.xi.abs() > EXPLOSION_BOUND;
    if dead {
        explosion_t = 0.0;
        alive[0] = false;
    }
    states.push(state);

    for i in 0..grid.steps() {
        if dead {
            alive[i + 1] = false;
            states.push(state);
            continue;
        }
        let (dt, dm) = path.increment(i);
        let t0 = grid.points()[i];
        let t1 = grid.points()[i + 1];
        let k1 = sce_rhs(&form, state, t0, dt, dm);
        let pred = SceState {
            xi: state.xi + k1.d_xi,
            eta: state.eta + k1.d_eta,
            chi: state.chi + k1.d_chi,
        };
        let k2 = if pred.is_finite() {
            sce_rhs(&form, pred, t1, dt, dm)
        } else {
            k1
        };
        let mut next = SceState {
            xi: state.xi + 0.5 * (k1.d_xi + k2.d_xi),
            eta: state.eta + 0.5 * (k1.d_eta + k2.d_eta),
            chi: state.chi + 0.5 * (k1.d_chi + k2.d_chi),
        };
        // NaN slips through (the comparison is false) and still kills the
        // trajectory below.
        if next.chi.abs() > SLOPE_CEIL {
            next.chi = SLOPE_CEIL.copysign(next.chi);
            slope_saturated = true;
        }
        if !next.is_finite() || next.xi.abs() > EXPLOSION_BOUND {
            dead = true;
            explosion_t = t1;
            alive[i + 1] = false;
            states.push(state);
        } else {
            state = next;
            boundary_flagged |= form.near_boundary(state.eta);
            states.push(state);
        }
    }
    Ok(Trajectory {
        x0,
        states,
        alive,
        explosion_t,
        boundary_flagged,
        slope_saturated,
    })
}

/// A family of characteristics launched from sorted initial points along one
/// shared path.
#[derive(Debug)]
pub struct CharacteristicFan {
    pub scenario: Scenario,
    pub grid: TimeGrid,
    pub x0: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    tau_inv_cache: OnceLock<f64>,
}

impl CharacteristicFan {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn xi(&self, i: usize, j: usize) -> f64 {
        self.trajectories[i].states[j].xi
    }

    pub fn eta(&self, i: usize, j: usize) -> f64 {
        self.trajectories[i].states[j].eta
    }

    pub fn chi(&self, i: usize, j: usize) -> f64 {
        self.trajectories[i].states[j].chi
    }

    pub fn alive(&self, i: usize, j: usize) -> bool {
        self.trajectories[i].alive[j]
    }

    /// First fold time of the fan (cached after the first call).
    pub fn tau_inv(&self) -> f64 {
        *self.tau_inv_cache.get_or_init(|| compute_tau_inv(self))
    }

    /// Earliest explosion time over all trajectories, `inf` if none.
    pub fn explosion_time(&self) -> f64 {
        self.trajectories
            .iter()
            .map(|tr| tr.explosion_t)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Integrates one trajectory per initial point, all against the same path.
/// Trajectories are independent and run in parallel.
pub fn integrate_fan(
    scenario: &Scenario,
    path: &NoisePath,
    x0_grid: &[f64],
) -> Result<CharacteristicFan> {
    if x0_grid.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "fan needs at least two initial points, got {}",
            x0_grid.len()
        )));
    }
    for w in x0_grid.windows(2) {
        // Negated so a NaN launch point fails validation too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(w[1] > w[0]) {
            return Err(Error::InvalidArgument(format!(
                "initial points must increase strictly, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    let trajectories: Vec<Trajectory> = x0_grid
        .par_iter()
        .map(|&x0| integrate_sce(scenario, path, x0))
        .collect::<Result<_>>()?;
    Ok(CharacteristicFan {
        scenario: scenario.clone(),
        grid: path.grid.clone(),
        x0: x0_grid.to_vec(),
        trajectories,
        tau_inv_cache: OnceLock::new(),
    })
}

/// Finite-difference estimate of the position map's spatial derivative at
/// every (initial point, time) node: centered in the interior, one-sided at
/// the edges.  Entries touching a dead node are NaN rather than an error, so
/// degenerate regions stay visible.
pub fn jacobian(fan: &CharacteristicFan) -> Result<Vec<Vec<f64>>> {
    let n = fan.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "jacobian needs a fan of at least two characteristics".into(),
        ));
    }
    let m = fan.grid.len();
    let mut out = vec![vec![f64::NAN; m]; n];
    for (i, row) in out.iter_mut().enumerate() {
        let (lo, hi) = if i == 0 {
            (0, 1)
        } else if i == n - 1 {
            (n - 2, n - 1)
        } else {
            (i - 1, i + 1)
        };
        let dx = fan.x0[hi] - fan.x0[lo];
        for (j, cell) in row.iter_mut().enumerate() {
            if fan.alive(lo, j) && fan.alive(hi, j) {
                *cell = (fan.xi(hi, j) - fan.xi(lo, j)) / dx;
            }
        }
    }
    Ok(out)
}

fn compute_tau_inv(fan: &CharacteristicFan) -> f64 {
    for j in 1..fan.grid.len() {
        for i in 0..fan.len() - 1 {
            if fan.alive(i, j) && fan.alive(i + 1, j) {
                let spacing = fan.xi(i + 1, j) - fan.xi(i, j);
                if spacing <= EPS_DET * (fan.x0[i + 1] - fan.x0[i]) {
                    return fan.grid.points()[j];
                }
            }
        }
    }
    f64::INFINITY
}

/// First time adjacent characteristics meet (relative spacing below
/// [`EPS_DET`]), `inf` if the fan stays ordered on the whole grid.
pub fn detect_tau_inv(fan: &CharacteristicFan) -> f64 {
    fan.tau_inv()
}

/// Result of inverting the position map at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvertedPoint {
    /// Initial point mapped to the query position.
    pub x0: f64,
    /// Carried solution value interpolated at the query position.
    pub u: f64,
}

/// Longest contiguous run of trajectories alive at node `j`, as an inclusive
/// index pair; `None` when fewer than two adjacent trajectories survive.
fn alive_window(fan: &CharacteristicFan, j: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut run_start = None;
    for i in 0..=fan.len() {
        let alive = i < fan.len() && fan.alive(i, j);
        match (alive, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                if i - s >= 2 && best.is_none_or(|(lo, hi)| i - 1 - s > hi - lo) {
                    best = Some((s, i - 1));
                }
                run_start = None;
            }
            _ => {}
        }
    }
    best
}

fn invert_in_window(
    fan: &CharacteristicFan,
    j: usize,
    lo: usize,
    hi: usize,
    y: f64,
) -> Option<InvertedPoint> {
    let xi = |i: usize| fan.xi(i, j);
    if y < xi(lo) || y > xi(hi) {
        return None;
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > 1 {
        let mid = (a + b) / 2;
        if xi(mid) <= y {
            a = mid;
        } else {
            b = mid;
        }
    }
    let (xa, xb) = (xi(a), xi(a + 1));
    let span = xb - xa;
    // Negated so a NaN span (dead node slipping through) bails out too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(span > 0.0) {
        return None;
    }
    let w = ((y - xa) / span).clamp(0.0, 1.0);
    let (ea, eb) = (fan.eta(a, j), fan.eta(a + 1, j));
    Some(InvertedPoint {
        x0: fan.x0[a] + w * (fan.x0[a + 1] - fan.x0[a]),
        u: ea + w * (eb - ea),
    })
}

/// Inverts the position map: finds the initial point whose characteristic
/// sits at `y` at grid time `t`, with the carried value interpolated there.
pub fn invert_xi(fan: &CharacteristicFan, y: f64, t: f64) -> Result<InvertedPoint> {
    let j = fan
        .grid
        .node_index(t)
        .ok_or_else(|| Error::InvalidArgument(format!("t={t} is not a node of the fan's grid")))?;
    let tau_inv = fan.tau_inv();
    let t = fan.grid.points()[j];
    if t > tau_inv {
        return Err(Error::PastTauInv { t, tau_inv });
    }
    let (lo, hi) = alive_window(fan, j).ok_or(Error::NotCovered { y, t })?;
    invert_in_window(fan, j, lo, hi, y).ok_or(Error::NotCovered { y, t })
}

fn alive_windows(fan: &CharacteristicFan) -> Vec<Option<(usize, usize)>> {
    (0..fan.grid.len()).map(|j| alive_window(fan, j)).collect()
}

/// Inversion attempt at node `j` with precomputed windows; `None` encodes any
/// failure (past the fold time, no alive window, not covered, degenerate).
fn invert_node(
    fan: &CharacteristicFan,
    windows: &[Option<(usize, usize)>],
    tau_inv: f64,
    y: f64,
    j: usize,
) -> Option<InvertedPoint> {
    if fan.grid.points()[j] >= tau_inv {
        return None;
    }
    let (lo, hi) = windows[j]?;
    invert_in_window(fan, j, lo, hi, y)
}

fn sigma_one(
    fan: &CharacteristicFan,
    windows: &[Option<(usize, usize)>],
    tau_inv: f64,
    y: f64,
) -> f64 {
    for j in 1..fan.grid.len() {
        if invert_node(fan, windows, tau_inv, y, j).is_none() {
            return fan.grid.points()[j];
        }
    }
    f64::INFINITY
}

/// First grid time at which the construction fails at `y`: the fan folds, `y`
/// leaves the covered range, or the covering trajectories die.  `inf` when
/// the construction survives the whole grid.
pub fn estimate_sigma(fan: &CharacteristicFan, y: f64) -> f64 {
    let windows = alive_windows(fan);
    sigma_one(fan, &windows, fan.tau_inv(), y)
}

/// [`estimate_sigma`] for many query points with the bookkeeping shared.
pub fn estimate_sigma_many(fan: &CharacteristicFan, ys: &[f64]) -> Vec<f64> {
    let windows = alive_windows(fan);
    let tau_inv = fan.tau_inv();
    ys.iter().map(|&y| sigma_one(fan, &windows, tau_inv, y)).collect()
}

/// Global and per-query stopping information for one fan.
#[derive(Debug, Clone)]
pub struct StoppingTimeEstimate {
    /// First fold time of the fan.
    pub tau_inv: f64,
    /// Earliest trajectory explosion.
    pub explosion_t: f64,
    /// The smaller of the two.
    pub tau: f64,
    /// Per-query first failure time, aligned with the query slice.
    pub sigma: Vec<f64>,
}

pub fn stopping_times(fan: &CharacteristicFan, queries: &[f64]) -> StoppingTimeEstimate {
    let tau_inv = fan.tau_inv();
    let explosion_t = fan.explosion_time();
    StoppingTimeEstimate {
        tau_inv,
        explosion_t,
        tau: tau_inv.min(explosion_t),
        sigma: estimate_sigma_many(fan, queries),
    }
}

/// Solution values on a space-time grid, with a validity mask.
///
/// Storage is position-major: `u[i][j]` is the value at `(x[i], t[j])`.
/// Invalid nodes hold NaN.
#[derive(Debug, Clone)]
pub struct SolutionSurface {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub valid: Vec<Vec<bool>>,
}

/// Builds the solution surface over `x_grid` and the fan's time grid.
///
/// The row at `t = 0` is the initial profile itself.  Later rows hold the
/// carried value interpolated at the inverted position; a column goes (and
/// stays) invalid from its first inversion failure, which is exactly the
/// per-query stopping time.
pub fn build_surface(fan: &CharacteristicFan, x_grid: &[f64]) -> Result<SolutionSurface> {
    if x_grid.is_empty() {
        return Err(Error::InvalidArgument("empty position grid".into()));
    }
    if x_grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("position grid must be finite".into()));
    }
    let windows = alive_windows(fan);
    let tau_inv = fan.tau_inv();
    let m = fan.grid.len();
    let columns: Vec<(Vec<f64>, Vec<bool>)> = x_grid
        .par_iter()
        .map(|&x| {
            let mut u = vec![f64::NAN; m];
            let mut valid = vec![false; m];
            u[0] = fan.scenario.ic.value(x);
            valid[0] = true;
            for j in 1..m {
                match invert_node(fan, &windows, tau_inv, x, j) {
                    Some(ip) => {
                        u[j] = ip.u;
                        valid[j] = true;
                    }
                    None => break,
                }
            }
            (u, valid)
        })
        .collect();
    let mut u = Vec::with_capacity(x_grid.len());
    let mut valid = Vec::with_capacity(x_grid.len());
    for (cu, cv) in columns {
        u.push(cu);
        valid.push(cv);
    }
    Ok(SolutionSurface {
        x: x_grid.to_vec(),
        t: fan.grid.points().to_vec(),
        u,
        valid,
    })
}
