//! Catalog of explicit pathwise solutions with analytic partial derivatives.
//!
//! Each entry is the exact solution of the transport problem for one binding
//! of initial profile, perturbation form, and driving-path kind.  Entries are
//! written as the initial profile evaluated at the inverted characteristic
//! position, so every evaluator exposes that inverted point too; physical
//! validity is precisely `inverted point in [0,1]`.
//!
//! Partial derivatives treat the path value `M_t`, its formal rate `m_dot`,
//! and any path functional as independent variables.  The time derivative
//! returned by [`ClosedFormSolution::partials`] is the total one: it includes
//! the chain-rule contribution of the path (scaled by the caller's `m_dot`
//! probe) and, where a running integral appears, the contribution of its
//! integrand.  Algebraic layouts are chosen so that limit branches are exact:
//! every entry returns the initial profile bit for bit at `t = 0`, and the
//! stochastic entries collapse onto their deterministic counterparts bit for
//! bit when the path vanishes.

use crate::error::{Error, Result};
use crate::model::{InitialCondition, PerturbationForm, Scenario};
use crate::process::{NoiseKind, NoisePath, PathFunctional};
use std::f64::consts::E;

/// Denominators smaller than this count as singular.
const DEN_TOL: f64 = 1e-12;

/// Slack for the `[0,1]` range predicate.
const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CatalogId {
    D1,
    D2,
    D3,
    D4,
    S1,
    S2,
    B1,
    B2,
    B3,
    G1,
    G2,
    G3,
}

pub const ALL_IDS: [CatalogId; 12] = [
    CatalogId::D1,
    CatalogId::D2,
    CatalogId::D3,
    CatalogId::D4,
    CatalogId::S1,
    CatalogId::S2,
    CatalogId::B1,
    CatalogId::B2,
    CatalogId::B3,
    CatalogId::G1,
    CatalogId::G2,
    CatalogId::G3,
];

impl CatalogId {
    pub fn as_str(&self) -> &'static str {
        match self {
            CatalogId::D1 => "D1",
            CatalogId::D2 => "D2",
            CatalogId::D3 => "D3",
            CatalogId::D4 => "D4",
            CatalogId::S1 => "S1",
            CatalogId::S2 => "S2",
            CatalogId::B1 => "B1",
            CatalogId::B2 => "B2",
            CatalogId::B3 => "B3",
            CatalogId::G1 => "G1",
            CatalogId::G2 => "G2",
            CatalogId::G3 => "G3",
        }
    }

    /// Name of the named scenario this entry solves.
    pub fn scenario_name(&self) -> &'static str {
        match self {
            CatalogId::D1 => "d1",
            CatalogId::D2 => "d2",
            CatalogId::D3 => "d3",
            CatalogId::D4 => "d4",
            CatalogId::S1 => "s1",
            CatalogId::S2 => "s2",
            CatalogId::B1 => "b1",
            CatalogId::B2 => "b2",
            CatalogId::B3 => "b3",
            CatalogId::G1 => "g1",
            CatalogId::G2 => "g2",
            CatalogId::G3 => "g3",
        }
    }

    /// Case-insensitive id or scenario-name lookup.
    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        for id in ALL_IDS {
            if lower == id.scenario_name() {
                return Ok(id);
            }
        }
        Err(Error::UnknownId(format!(
            "unknown catalog id `{s}` (expected one of D1..D4, S1, S2, B1..B3, G1..G3)"
        )))
    }
}

impl std::fmt::Display for CatalogId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which running integral of the driving path an entry needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalKind {
    /// Integral of `exp` of a Brownian path.
    ExpOfPath,
    /// Integral of `exp` of a geometric path.
    ExpOfExpPath,
}

impl FunctionalKind {
    pub fn nested(&self) -> bool {
        matches!(self, FunctionalKind::ExpOfExpPath)
    }
}

/// Path data a closed form consumes at one time: the path value and, where
/// needed, the running integral's value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub m: f64,
    pub functional: Option<f64>,
}

impl PathState {
    /// State of the zero path (and of any Brownian path at `t = 0`).
    pub fn none() -> Self {
        PathState { m: 0.0, functional: None }
    }

    pub fn brownian(w: f64) -> Self {
        PathState { m: w, functional: None }
    }

    pub fn geometric(s: f64) -> Self {
        PathState { m: s, functional: None }
    }

    pub fn with_functional(mut self, value: f64) -> Self {
        self.functional = Some(value);
        self
    }
}

/// One catalog entry: identity, scenario binding, and evaluators.
#[derive(Debug, Clone)]
pub struct ClosedFormSolution {
    pub id: CatalogId,
    pub ic: InitialCondition,
    pub form: PerturbationForm,
    pub noise: NoiseKind,
    pub needs_functional: Option<FunctionalKind>,
}

/// Returns the immutable catalog entry for `id`.
pub fn lookup(id: CatalogId) -> ClosedFormSolution {
    use CatalogId::*;
    use InitialCondition as Ic;
    use NoiseKind as Nk;
    use PerturbationForm as Pf;
    let (ic, form, noise, needs_functional) = match id {
        D1 => (Ic::OneMinusX, Pf::None, Nk::Zero, None),
        D2 => (Ic::OneMinusXSquared, Pf::None, Nk::Zero, None),
        D3 => (Ic::Identity, Pf::None, Nk::Zero, None),
        D4 => (Ic::XMinusXSquared, Pf::None, Nk::Zero, None),
        S1 => (Ic::OneMinusX, Pf::ConservationLwr, Nk::Brownian, None),
        S2 => (Ic::OneMinusXSquared, Pf::ConservationLwr, Nk::GeometricBrownian, None),
        B1 => (Ic::OneMinusXSquared, Pf::Advective, Nk::Brownian, None),
        B2 => (Ic::Identity, Pf::Multiplicative, Nk::Brownian, Some(FunctionalKind::ExpOfPath)),
        B3 => (Ic::Identity, Pf::SqrtConservation, Nk::Brownian, None),
        G1 => (Ic::Identity, Pf::Advective, Nk::GeometricBrownian, None),
        G2 => (Ic::Identity, Pf::Multiplicative, Nk::GeometricBrownian, Some(FunctionalKind::ExpOfExpPath)),
        G3 => (Ic::Identity, Pf::SqrtConservation, Nk::GeometricBrownian, None),
    };
    ClosedFormSolution { id, ic, form, noise, needs_functional }
}

/// Value and inverted characteristic position at one evaluation point.
#[derive(Debug, Clone, Copy)]
struct Eval {
    u: f64,
    x0: f64,
}

fn domain(x: f64, t: f64, reason: impl Into<String>) -> Error {
    Error::Domain { x, t, reason: reason.into() }
}

fn checked_sqrt(v: f64, x: f64, t: f64, what: &str) -> Result<f64> {
    if v < 0.0 {
        Err(domain(x, t, format!("{what} is negative ({v:.6e})")))
    } else {
        Ok(v.sqrt())
    }
}

fn checked_den(d: f64, x: f64, t: f64, what: &str) -> Result<f64> {
    if d.abs() < DEN_TOL {
        Err(domain(x, t, format!("{what} vanishes ({d:.6e})")))
    } else {
        Ok(d)
    }
}

impl ClosedFormSolution {
    fn functional_value(&self, x: f64, t: f64, state: &PathState) -> Result<f64> {
        match (self.needs_functional, state.functional) {
            (Some(_), Some(v)) => Ok(v),
            (Some(_), None) => Err(Error::MissingFunctional(self.id.as_str())),
            (None, _) => Err(domain(x, t, "entry takes no functional")),
        }
    }

    fn eval_inner(&self, x: f64, t: f64, state: &PathState) -> Result<Eval> {
        let m = state.m;
        match self.id {
            CatalogId::D1 => {
                let den = checked_den(1.0 + 2.0 * t, x, t, "1 + 2t")?;
                Ok(Eval { u: (1.0 - x + t) / den, x0: (x + t) / den })
            }
            CatalogId::D2 => {
                let r = checked_sqrt(1.0 + 8.0 * t * (x + t), x, t, "square-root argument")?;
                let q = 2.0 * (x + t) / (1.0 + r);
                Ok(Eval { u: 1.0 - q * q, x0: q })
            }
            CatalogId::D3 => {
                let den = checked_den(1.0 - 2.0 * t, x, t, "1 - 2t")?;
                let q = (x - t) / den;
                Ok(Eval { u: q, x0: q })
            }
            CatalogId::D4 => {
                let r = checked_sqrt(
                    1.0 - 4.0 * t - 4.0 * t * t + 8.0 * t * x,
                    x,
                    t,
                    "square-root argument",
                )?;
                let den = checked_den(1.0 - 2.0 * t + r, x, t, "inversion denominator")?;
                let q = 2.0 * (x - t) / den;
                Ok(Eval { u: q - q * q, x0: q })
            }
            CatalogId::S1 => {
                let den = checked_den((1.0 + 2.0 * t) + 2.0 * m, x, t, "1 + 2t + 2M")?;
                Ok(Eval {
                    u: ((1.0 - x + t) + m) / den,
                    x0: ((x + t) + m) / den,
                })
            }
            CatalogId::S2 => {
                let theta = t + m - 1.0;
                let z = x + theta;
                let r = checked_sqrt(1.0 + 8.0 * theta * z, x, t, "square-root argument")?;
                let q = 2.0 * z / (1.0 + r);
                Ok(Eval { u: 1.0 - q * q, x0: q })
            }
            CatalogId::B1 => {
                let z = (x + t) + m;
                let r = checked_sqrt(1.0 + 8.0 * t * z, x, t, "square-root argument")?;
                let q = 2.0 * z / (1.0 + r);
                Ok(Eval { u: 1.0 - q * q, x0: q })
            }
            CatalogId::B2 => {
                let i = self.functional_value(x, t, state)?;
                let den = checked_den(1.0 - 2.0 * i, x, t, "1 - 2 I(t)")?;
                let q = (x - t) / den;
                Ok(Eval { u: m.exp() * q, x0: q })
            }
            CatalogId::B3 => eval_sqrt_family(x, t, m),
            CatalogId::G1 => {
                let den = checked_den(1.0 - 2.0 * t, x, t, "1 - 2t")?;
                let q = ((x - t) + (m - 1.0)) / den;
                Ok(Eval { u: q, x0: q })
            }
            CatalogId::G2 => {
                let j = self.functional_value(x, t, state)?;
                let den = checked_den(1.0 - 2.0 * j / E, x, t, "1 - 2 J(t)/e")?;
                let q = (x - t) / den;
                Ok(Eval { u: (m - 1.0).exp() * q, x0: q })
            }
            CatalogId::G3 => eval_sqrt_family(x, t, m - 1.0),
        }
    }

    /// Value of the entry at `(x, t)` under the given path state.
    /// Fails only on computability (singular denominator, negative radicand,
    /// missing functional), never on physical range.
    pub fn evaluate(&self, x: f64, t: f64, state: &PathState) -> Result<f64> {
        Ok(self.eval_inner(x, t, state)?.u)
    }

    /// Initial point the formula maps to `(x, t)`; the entry is physically
    /// meaningful exactly when this lies in `[0,1]`.
    pub fn inverted_point(&self, x: f64, t: f64, state: &PathState) -> Result<f64> {
        Ok(self.eval_inner(x, t, state)?.x0)
    }

    /// True when the formula is numerically evaluable at the point.
    pub fn is_computable(&self, x: f64, t: f64, state: &PathState) -> bool {
        self.eval_inner(x, t, state).is_ok()
    }

    /// True when the inverted point lies in `[0,1]` and, for the square-root
    /// entries, actually maps back to `(x, t)` (requires computability).
    ///
    /// The square-root entries invert a squared relation, so the algebraic
    /// root can be spurious where no launch point reaches `(x, t)` at all;
    /// the unsquared relation requires `x0 (1-2t) - (x-t)` to carry the sign
    /// of the integrated noise.
    pub fn in_range(&self, x: f64, t: f64, state: &PathState) -> bool {
        match self.eval_inner(x, t, state) {
            Ok(e) => {
                if !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&e.x0) {
                    return false;
                }
                match self.id {
                    CatalogId::B3 => branch_consistent(x, t, state.m, e.x0),
                    CatalogId::G3 => branch_consistent(x, t, state.m - 1.0, e.x0),
                    _ => true,
                }
            }
            Err(_) => false,
        }
    }

    /// Computable and in range.
    pub fn is_valid(&self, x: f64, t: f64, state: &PathState) -> bool {
        self.is_computable(x, t, state) && self.in_range(x, t, state)
    }

    /// Analytic partials `(u_t, u_x)` at the point.  `u_t` is the total time
    /// derivative: it contains the path's chain-rule term scaled by the
    /// formal rate probe `m_dot`, and the integrand term of any functional.
    pub fn partials(&self, x: f64, t: f64, state: &PathState, m_dot: f64) -> Result<(f64, f64)> {
        let m = state.m;
        match self.id {
            CatalogId::D1 => {
                let den = checked_den(1.0 + 2.0 * t, x, t, "1 + 2t")?;
                let u_x = -1.0 / den;
                let u_t = (2.0 * x - 1.0) / (den * den);
                Ok((u_t, u_x))
            }
            CatalogId::D2 => {
                let r = checked_sqrt(1.0 + 8.0 * t * (x + t), x, t, "square-root argument")?;
                let rg = checked_den(r, x, t, "flow derivative")?;
                let q = 2.0 * (x + t) / (1.0 + r);
                let u_x = -2.0 * q / rg;
                let u_t = -2.0 * q * (1.0 - 2.0 * q * q) / rg;
                Ok((u_t, u_x))
            }
            CatalogId::D3 => {
                let den = checked_den(1.0 - 2.0 * t, x, t, "1 - 2t")?;
                Ok(((2.0 * x - 1.0) / (den * den), 1.0 / den))
            }
            CatalogId::D4 => {
                let rad = 1.0 - 4.0 * t - 4.0 * t * t + 8.0 * t * x;
                let r = checked_sqrt(rad, x, t, "square-root argument")?;
                let rg = checked_den(r, x, t, "flow derivative")?;
                let den = checked_den(1.0 - 2.0 * t + r, x, t, "inversion denominator")?;
                let q = 2.0 * (x - t) / den;
                let u_x = (1.0 - 2.0 * q) / rg;
                let u_t = -(1.0 - 2.0 * q) * (1.0 - 2.0 * q + 2.0 * q * q) / rg;
                Ok((u_t, u_x))
            }
            CatalogId::S1 => {
                let den = checked_den((1.0 + 2.0 * t) + 2.0 * m, x, t, "1 + 2t + 2M")?;
                let n = (1.0 - x + t) + m;
                let u_x = -1.0 / den;
                let u_t = (den - 2.0 * n) / (den * den) * (1.0 + m_dot);
                Ok((u_t, u_x))
            }
            CatalogId::S2 => {
                let theta = t + m - 1.0;
                let z = x + theta;
                let r = checked_sqrt(1.0 + 8.0 * theta * z, x, t, "square-root argument")?;
                let rg = checked_den(r, x, t, "flow derivative")?;
                let q = 2.0 * z / (1.0 + r);
                let u_x = -2.0 * q / rg;
                let u_t = -2.0 * q * (1.0 - 2.0 * q * q) * (1.0 + m_dot) / rg;
                Ok((u_t, u_x))
            }
            CatalogId::B1 => {
                let z = (x + t) + m;
                let r = checked_sqrt(1.0 + 8.0 * t * z, x, t, "square-root argument")?;
                let rg = checked_den(r, x, t, "flow derivative")?;
                let q = 2.0 * z / (1.0 + r);
                let u_x = -2.0 * q / rg;
                let u_t = -2.0 * q * ((1.0 - 2.0 * q * q) + m_dot) / rg;
                Ok((u_t, u_x))
            }
            CatalogId::B2 => {
                let i = self.functional_value(x, t, state)?;
                let den = checked_den(1.0 - 2.0 * i, x, t, "1 - 2 I(t)")?;
                let growth = m.exp();
                let u = growth * (x - t) / den;
                let u_x = growth / den;
                // Time, path, and functional contributions; the functional's
                // rate is the exponential of the current path value.
                let u_t = -growth / den + u * m_dot + 2.0 * growth * growth * (x - t) / (den * den);
                Ok((u_t, u_x))
            }
            CatalogId::B3 => partials_sqrt_family(x, t, m, m_dot),
            CatalogId::G1 => {
                let den = checked_den(1.0 - 2.0 * t, x, t, "1 - 2t")?;
                let n = (x - t) + (m - 1.0);
                let u_x = 1.0 / den;
                let u_t = (m_dot - 1.0) / den + 2.0 * n / (den * den);
                Ok((u_t, u_x))
            }
            CatalogId::G2 => {
                let j = self.functional_value(x, t, state)?;
                let den = checked_den(1.0 - 2.0 * j / E, x, t, "1 - 2 J(t)/e")?;
                let growth = (m - 1.0).exp();
                let u = growth * (x - t) / den;
                let u_x = growth / den;
                let u_t = -growth / den
                    + u * m_dot
                    + (2.0 / E) * growth * (x - t) * m.exp() / (den * den);
                Ok((u_t, u_x))
            }
            CatalogId::G3 => partials_sqrt_family(x, t, m - 1.0, m_dot),
        }
    }

    /// Scenario this entry solves.
    pub fn scenario(&self, horizon: f64) -> Result<Scenario> {
        Scenario::named(self.id.scenario_name(), horizon)
    }

    fn check_path(&self, path: &NoisePath) -> Result<()> {
        let ok = path.kind == self.noise
            || (self.noise == NoiseKind::Brownian && path.kind == NoiseKind::Zero)
            || (self.noise == NoiseKind::Zero && path.kind == NoiseKind::Brownian)
            || (self.noise == NoiseKind::Zero && path.kind == NoiseKind::Zero);
        if !ok {
            return Err(Error::PathKind {
                expected: self.noise.as_str(),
                got: path.kind.as_str(),
            });
        }
        Ok(())
    }

    fn check_functional(&self, functional: Option<&PathFunctional>, path: &NoisePath) -> Result<()> {
        if let Some(kind) = self.needs_functional {
            let f = functional.ok_or(Error::MissingFunctional(self.id.as_str()))?;
            if f.nested != kind.nested() {
                return Err(Error::InvalidArgument(format!(
                    "functional integrand family does not match entry {}",
                    self.id
                )));
            }
            if (f.grid.horizon() - path.grid.horizon()).abs() > 1e-12 {
                return Err(Error::GridMismatch(
                    "functional and path cover different horizons".into(),
                ));
            }
        }
        Ok(())
    }

    /// Assembles the path state at time `t` (piecewise-linear path values).
    pub fn state_at(
        &self,
        t: f64,
        path: &NoisePath,
        functional: Option<&PathFunctional>,
    ) -> Result<PathState> {
        self.check_path(path)?;
        self.check_functional(functional, path)?;
        let m = match (self.noise, path.kind) {
            // Deterministic entries ignore the path; zero standing in for
            // Brownian reads as the zero value.
            (NoiseKind::Zero, _) => 0.0,
            (_, _) => path.value_at(t),
        };
        let functional = self
            .needs_functional
            .map(|_| functional.expect("checked above").value_at(t));
        Ok(PathState { m, functional })
    }

    /// Evaluates the entry along a sampled path.
    pub fn evaluate_on_path(
        &self,
        x: f64,
        t: f64,
        path: &NoisePath,
        functional: Option<&PathFunctional>,
    ) -> Result<f64> {
        let state = self.state_at(t, path, functional)?;
        self.evaluate(x, t, &state)
    }

    /// First grid time at which this entry's own stopping condition fails at
    /// `x` along the discretized path: the formula stops being computable,
    /// the inverted point leaves `[0,1]` (range-tracking entries), or the
    /// time hits a structural singularity.  `inf` when the whole grid passes.
    pub fn closed_form_sigma(
        &self,
        x: f64,
        path: &NoisePath,
        functional: Option<&PathFunctional>,
    ) -> Result<f64> {
        self.check_path(path)?;
        self.check_functional(functional, path)?;
        let window = 2.0 * path.grid.max_dt();
        for j in 1..path.grid.len() {
            let t = path.grid.points()[j];
            let state = self.state_at(t, path, functional)?;
            let failed = match self.id {
                // Globally valid on the strip.
                CatalogId::D1 | CatalogId::D2 => false,
                // Structural singularity; position plays no role.
                CatalogId::D3 | CatalogId::G1 => (t - 0.5).abs() < window,
                // Real-branch loss.
                CatalogId::D4 | CatalogId::B1 => !self.is_computable(x, t, &state),
                // Range exit of the inverted point (the explicit stopping
                // rule for the conservation-form entries).  The linear entry
                // additionally folds where its denominator changes sign,
                // which range tracking alone cannot see: numerator and
                // denominator flip together there.
                CatalogId::S1 => {
                    1.0 + 2.0 * (t + state.m) <= 0.0 || !self.is_valid(x, t, &state)
                }
                CatalogId::S2 => !self.is_valid(x, t, &state),
                // Denominator sign change of the running integral.
                CatalogId::B2 => state.functional.is_none_or(|i| 1.0 - 2.0 * i <= 0.0),
                CatalogId::G2 => state.functional.is_none_or(|j| 1.0 - 2.0 * j / E <= 0.0),
                // Real-branch loss, spurious root, or degenerate denominator.
                CatalogId::B3 | CatalogId::G3 => !self.is_valid(x, t, &state),
            };
            if failed {
                return Ok(t);
            }
        }
        Ok(f64::INFINITY)
    }
}

/// True when the root of the squared inversion relation also solves the
/// unsquared one at `(x, t)`.
fn branch_consistent(x: f64, t: f64, v: f64, x0: f64) -> bool {
    let psi = x0 * (1.0 - 2.0 * t) - (x - t);
    psi * v >= -1e-10
}

/// Shared evaluator of the two square-root-perturbation entries; `v` is the
/// integrated noise (the path value for a Brownian driver, the path value
/// minus one for a geometric driver).
fn eval_sqrt_family(x: f64, t: f64, v: f64) -> Result<Eval> {
    let a = 1.0 - 2.0 * t;
    let b = x - t;
    let c = 1.0 - x - t;
    let p = v * v + 4.0 * b * c;
    let sq = checked_sqrt(p, x, t, "square-root argument")?;
    let den = checked_den(2.0 * (a * a + v * v), x, t, "inversion denominator")?;
    let n = 2.0 * a * b + v * v + v * sq;
    let q = n / den;
    Ok(Eval { u: q, x0: q })
}

fn partials_sqrt_family(x: f64, t: f64, v: f64, m_dot: f64) -> Result<(f64, f64)> {
    let a = 1.0 - 2.0 * t;
    let b = x - t;
    let c = 1.0 - x - t;
    let p = v * v + 4.0 * b * c;
    let sq = checked_sqrt(p, x, t, "square-root argument")?;
    let sq = checked_den(sq, x, t, "square-root branch")?;
    let den = checked_den(2.0 * (a * a + v * v), x, t, "inversion denominator")?;
    let n = 2.0 * a * b + v * v + v * sq;
    let n_x = 2.0 * a + 2.0 * v * (1.0 - 2.0 * x) / sq;
    let n_t = -4.0 * b - 2.0 * a - 2.0 * v * a / sq;
    let n_v = 2.0 * v + sq + v * v / sq;
    let d_t = -8.0 * a;
    let d_v = 4.0 * v;
    let u_x = n_x / den;
    let u_t_partial = (n_t * den - n * d_t) / (den * den);
    let u_v = (n_v * den - n * d_v) / (den * den);
    Ok((u_t_partial + u_v * m_dot, u_x))
}
