//! Time grids and piecewise linear driving paths.
//!
//! Driving noise is handled pathwise: a path is the vector of its values on
//! the nodes of a [`TimeGrid`], interpreted as linear between nodes, and every
//! downstream computation (characteristic integration, quadrature, closed-form
//! evaluation) consumes those node values directly.  Sampling is splittable and
//! counter based: every draw comes from a ChaCha stream keyed by
//! `(seed, domain, index)`, so ensembles are reproducible and independent of
//! evaluation order, and bridge refinement never reuses the randomness that
//! produced the coarse path.
//!
//! Geometric paths are derived, never integrated: `S_t = exp(-t/2 + W_t)`
//! is evaluated from the Brownian values node by node, and the Brownian
//! source is kept alongside the derived values.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Relative slack used when comparing grid spans and steps.
const GRID_REL_TOL: f64 = 1e-9;

/// Strictly increasing time nodes starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid on `[0, horizon]` with a step as close to `dt` as an
    /// integer number of steps allows.  The step actually used is
    /// `horizon / n` with `n = round(horizon / dt)`.
    pub fn uniform(horizon: f64, dt: f64) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        let n = (horizon / dt).round().max(1.0);
        if n > 1e8 {
            return Err(Error::InvalidGrid(format!(
                "horizon/dt = {n} steps is unreasonably large"
            )));
        }
        let n = n as usize;
        let mut points = Vec::with_capacity(n + 1);
        for j in 0..n {
            points.push(j as f64 * horizon / n as f64);
        }
        points.push(horizon);
        Self::from_points(points)
    }

    /// Wraps explicit nodes; they must be finite, start at zero, and increase
    /// strictly.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid("need at least two nodes".into()));
        }
        if points[0] != 0.0 {
            return Err(Error::InvalidGrid(format!(
                "first node must be 0, got {}",
                points[0]
            )));
        }
        for w in points.windows(2) {
            if !w[1].is_finite() || w[1] <= w[0] {
                return Err(Error::InvalidGrid(format!(
                    "nodes must increase strictly, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of nodes (steps + 1).
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.points.last().expect("grid has nodes")
    }

    /// Step `i`, between nodes `i` and `i + 1`.
    pub fn dt(&self, i: usize) -> f64 {
        self.points[i + 1] - self.points[i]
    }

    /// Largest step on the grid.
    pub fn max_dt(&self) -> f64 {
        (0..self.steps()).map(|i| self.dt(i)).fold(0.0, f64::max)
    }

    /// True when all steps agree to relative tolerance.
    pub fn is_uniform(&self) -> bool {
        let h = self.dt(0);
        (0..self.steps()).all(|i| (self.dt(i) - h).abs() <= GRID_REL_TOL * h.max(1e-300))
    }

    /// Index of the node equal to `t` (within a small absolute tolerance
    /// scaled by the local step).
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let i = self.points.partition_point(|&p| p < t);
        let tol = GRID_REL_TOL * self.horizon().max(1.0);
        if i < self.points.len() && (self.points[i] - t).abs() <= tol {
            return Some(i);
        }
        if i > 0 && (self.points[i - 1] - t).abs() <= tol {
            return Some(i - 1);
        }
        None
    }

    /// Interval index such that `points[i] <= t <= points[i+1]`.
    fn interval_of(&self, t: f64) -> Option<usize> {
        if t < 0.0 || t > self.horizon() {
            return None;
        }
        let i = self.points.partition_point(|&p| p <= t);
        Some(i.saturating_sub(1).min(self.steps() - 1))
    }
}

/// Kind of driving path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    Zero,
    Brownian,
    GeometricBrownian,
}

impl NoiseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseKind::Zero => "zero",
            NoiseKind::Brownian => "brownian",
            NoiseKind::GeometricBrownian => "geometric-brownian",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zero" => Ok(NoiseKind::Zero),
            "brownian" => Ok(NoiseKind::Brownian),
            "geometric-brownian" => Ok(NoiseKind::GeometricBrownian),
            other => Err(Error::InvalidArgument(format!(
                "unknown noise kind `{other}` (expected zero, brownian, or geometric-brownian)"
            ))),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A driving path sampled on a time grid.
///
/// Invariants: `values.len() == grid.len()`; Brownian and zero paths start at
/// 0; geometric paths start at 1 and carry the Brownian values they were
/// derived from in `underlying`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub grid: TimeGrid,
    pub kind: NoiseKind,
    pub values: Vec<f64>,
    /// Brownian source for derived (geometric) paths.
    pub underlying: Option<Vec<f64>>,
    pub seed: u64,
    /// Ensemble stream the path was drawn on; part of the path's identity so
    /// that derived draws (bridge refinement) stay independent across an
    /// ensemble under one seed.
    pub stream: u64,
}

impl NoisePath {
    /// Builds a path from explicit node values, enforcing the kind invariants.
    pub fn from_values(grid: TimeGrid, kind: NoiseKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("path values must be finite".into()));
        }
        let start = values[0];
        match kind {
            NoiseKind::Zero | NoiseKind::Brownian if start != 0.0 => {
                return Err(Error::InvalidArgument(format!(
                    "{kind} path must start at 0, got {start}"
                )));
            }
            NoiseKind::GeometricBrownian if start != 1.0 => {
                return Err(Error::InvalidArgument(format!(
                    "geometric-brownian path must start at 1, got {start}"
                )));
            }
            _ => {}
        }
        Ok(Self {
            grid,
            kind,
            values,
            underlying: None,
            seed: 0,
            stream: 0,
        })
    }

    /// Piecewise linear value at `t` in `[0, horizon]`.
    pub fn value_at(&self, t: f64) -> f64 {
        interp_nodes(&self.grid, &self.values, t)
    }

    /// Increment `(dt, dm)` over step `i`.
    pub fn increment(&self, i: usize) -> (f64, f64) {
        (self.grid.dt(i), self.values[i + 1] - self.values[i])
    }
}

fn interp_nodes(grid: &TimeGrid, values: &[f64], t: f64) -> f64 {
    let i = grid
        .interval_of(t)
        .unwrap_or_else(|| panic!("t={t} outside [0, {}]", grid.horizon()));
    let (t0, t1) = (grid.points()[i], grid.points()[i + 1]);
    if t == t0 {
        return values[i];
    }
    let w = (t - t0) / (t1 - t0);
    values[i] + w * (values[i + 1] - values[i])
}

// Stream domains.  Domains separate the uses of a seed so that, for example,
// bridge refinement is independent of the coarse draw it refines.
const DOMAIN_SAMPLE: u64 = 1;
const DOMAIN_BRIDGE: u64 = 2;
pub(crate) const DOMAIN_PROBE: u64 = 3;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based generator for `(seed, domain, index)`.  The seed is expanded
/// into the ChaCha key, domain and index select the stream.
pub(crate) fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha12Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream((domain << 48) ^ (index & 0x0000_ffff_ffff_ffff));
    rng
}

/// The identically zero path.
pub fn zero_path(grid: &TimeGrid) -> NoisePath {
    NoisePath {
        grid: grid.clone(),
        kind: NoiseKind::Zero,
        values: vec![0.0; grid.len()],
        underlying: None,
        seed: 0,
        stream: 0,
    }
}

/// Samples a Brownian path on `grid`: independent `N(0, dt)` increments.
pub fn sample_brownian(seed: u64, grid: &TimeGrid) -> NoisePath {
    sample_brownian_stream(seed, 0, grid)
}

/// Ensemble member `stream` under `seed`.  Members with distinct streams are
/// independent; the draw order does not matter.
pub fn sample_brownian_stream(seed: u64, stream: u64, grid: &TimeGrid) -> NoisePath {
    let mut rng = stream_rng(seed, DOMAIN_SAMPLE, stream);
    let mut values = Vec::with_capacity(grid.len());
    values.push(0.0);
    for i in 0..grid.steps() {
        let z: f64 = rng.sample(StandardNormal);
        values.push(values[i] + grid.dt(i).sqrt() * z);
    }
    NoisePath {
        grid: grid.clone(),
        kind: NoiseKind::Brownian,
        values,
        underlying: None,
        seed,
        stream,
    }
}

/// Derives the geometric path `S_t = exp(-t/2 + W_t)` node by node.
///
/// A zero path counts as the degenerate Brownian sample, giving the
/// deterministic path `exp(-t/2)`.
pub fn to_geometric(path: &NoisePath) -> Result<NoisePath> {
    match path.kind {
        NoiseKind::Brownian | NoiseKind::Zero => {}
        other => {
            return Err(Error::PathKind {
                expected: "brownian",
                got: other.as_str(),
            })
        }
    }
    let values = path
        .grid
        .points()
        .iter()
        .zip(&path.values)
        .map(|(&t, &w)| (-0.5 * t + w).exp())
        .collect();
    Ok(NoisePath {
        grid: path.grid.clone(),
        kind: NoiseKind::GeometricBrownian,
        values,
        underlying: Some(path.values.clone()),
        seed: path.seed,
        stream: path.stream,
    })
}

/// Refines a Brownian path by an integer factor with Brownian bridge
/// conditioning.  Coarse node values are copied bit for bit; interior nodes
/// are drawn sequentially from the conditional law given the previously
/// placed left node and the coarse right endpoint.  Deterministic in
/// `(path.seed, factor, path length)`.
pub fn bridge_refine(path: &NoisePath, factor: usize) -> Result<NoisePath> {
    if path.kind != NoiseKind::Brownian {
        return Err(Error::PathKind {
            expected: "brownian",
            got: path.kind.as_str(),
        });
    }
    if factor < 2 {
        return Err(Error::InvalidArgument(format!(
            "refinement factor must be at least 2, got {factor}"
        )));
    }
    if !path.grid.is_uniform() {
        return Err(Error::InvalidGrid(
            "bridge refinement requires a uniform grid".into(),
        ));
    }
    let n_coarse = path.grid.steps();
    let n_fine = n_coarse * factor;
    let fine = TimeGrid::uniform(path.grid.horizon(), path.grid.horizon() / n_fine as f64)?;
    let tf = fine.points();
    let mut values = vec![0.0; fine.len()];
    // Key the conditional draws on the path's full identity plus the
    // refinement shape, so refining distinct ensemble members stays
    // independent and re-refining the same path is reproducible.
    let mut mix = path.stream ^ ((factor as u64) << 32) ^ (n_coarse as u64);
    let index = splitmix64(&mut mix);
    let mut rng = stream_rng(path.seed, DOMAIN_BRIDGE, index);
    for i in 0..n_coarse {
        values[i * factor] = path.values[i];
        let (t_end, w_end) = (tf[(i + 1) * factor], path.values[i + 1]);
        let mut t_prev = tf[i * factor];
        let mut w_prev = path.values[i];
        for j in 1..factor {
            let idx = i * factor + j;
            let t = tf[idx];
            // Conditional law of W(t) given W(t_prev) and W(t_end).
            let frac = (t - t_prev) / (t_end - t_prev);
            let mean = w_prev + frac * (w_end - w_prev);
            let var = (t - t_prev) * (t_end - t) / (t_end - t_prev);
            let z: f64 = rng.sample(StandardNormal);
            values[idx] = mean + var.sqrt() * z;
            t_prev = t;
            w_prev = values[idx];
        }
    }
    values[n_fine] = path.values[n_coarse];
    Ok(NoisePath {
        grid: fine,
        kind: NoiseKind::Brownian,
        values,
        underlying: None,
        seed: path.seed,
        stream: path.stream,
    })
}

/// Cumulative quadrature of `exp` of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFunctional {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    /// False: `exp` of a Brownian (or zero) path.  True: `exp` of a geometric
    /// path, so the integrand is already an exponential of an exponential.
    pub nested: bool,
}

impl PathFunctional {
    /// Piecewise linear value at `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        interp_nodes(&self.grid, &self.values, t)
    }
}

/// Cumulative trapezoidal quadrature of `exp(M_s)` along the path.
///
/// `nested = false` expects a Brownian or zero path, `nested = true` expects a
/// geometric path; the flag records which integrand family the result belongs
/// to.
pub fn path_integral_exp(path: &NoisePath, nested: bool) -> Result<PathFunctional> {
    match (nested, path.kind) {
        (false, NoiseKind::Brownian | NoiseKind::Zero) => {}
        (true, NoiseKind::GeometricBrownian) => {}
        (false, got) => {
            return Err(Error::PathKind {
                expected: "brownian",
                got: got.as_str(),
            })
        }
        (true, got) => {
            return Err(Error::PathKind {
                expected: "geometric-brownian",
                got: got.as_str(),
            })
        }
    }
    let e: Vec<f64> = path.values.iter().map(|v| v.exp()).collect();
    let mut values = Vec::with_capacity(path.values.len());
    values.push(0.0);
    for i in 0..path.grid.steps() {
        let inc = 0.5 * (e[i] + e[i + 1]) * path.grid.dt(i);
        values.push(values[i] + inc);
    }
    Ok(PathFunctional {
        grid: path.grid.clone(),
        values,
        nested,
    })
}
