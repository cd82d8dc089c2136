//! Flux, initial conditions, and the perturbation catalog.
//!
//! The underlying transport problem is a density on `[0,1]` with flux
//! `u(1-u)`, so characteristics move at speed `1 - 2u`.  A perturbation form
//! `h(x,u,p,t)` couples the state to a driving path; the catalog contains the
//! forms this crate's closed-form solutions are bound to, each with analytic
//! partials so the characteristic system can be assembled without any
//! numerical differentiation.

use crate::error::{Error, Result};
use crate::process::NoiseKind;
use rand::Rng;
use std::fmt;
use std::sync::Arc;

/// Lower clamp for `u` inside the square-root form; keeps `h_u` finite at the
/// domain boundary.
pub const SQRT_FORM_EPS: f64 = 1e-9;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Initial density profile `g` with its exact derivative.
#[derive(Clone)]
pub enum InitialCondition {
    /// g(x) = 1 - x
    OneMinusX,
    /// g(x) = x
    Identity,
    /// g(x) = 1 - x^2
    OneMinusXSquared,
    /// g(x) = x - x^2
    XMinusXSquared,
    /// User-supplied profile; the derivative must be provided explicitly.
    Custom {
        name: String,
        g: ScalarFn,
        dg: ScalarFn,
    },
}

impl InitialCondition {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            InitialCondition::OneMinusX => 1.0 - x,
            InitialCondition::Identity => x,
            InitialCondition::OneMinusXSquared => 1.0 - x * x,
            InitialCondition::XMinusXSquared => x - x * x,
            InitialCondition::Custom { g, .. } => g(x),
        }
    }

    pub fn slope(&self, x: f64) -> f64 {
        match self {
            InitialCondition::OneMinusX => -1.0,
            InitialCondition::Identity => 1.0,
            InitialCondition::OneMinusXSquared => -2.0 * x,
            InitialCondition::XMinusXSquared => 1.0 - 2.0 * x,
            InitialCondition::Custom { dg, .. } => dg(x),
        }
    }

    pub fn id(&self) -> &str {
        match self {
            InitialCondition::OneMinusX => "one-minus-x",
            InitialCondition::Identity => "x",
            InitialCondition::OneMinusXSquared => "one-minus-x-squared",
            InitialCondition::XMinusXSquared => "x-minus-x-squared",
            InitialCondition::Custom { name, .. } => name,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "one-minus-x" => Ok(InitialCondition::OneMinusX),
            "x" => Ok(InitialCondition::Identity),
            "one-minus-x-squared" => Ok(InitialCondition::OneMinusXSquared),
            "x-minus-x-squared" => Ok(InitialCondition::XMinusXSquared),
            other => Err(Error::InvalidArgument(format!(
                "unknown initial condition `{other}` (expected one-minus-x, x, \
                 one-minus-x-squared, or x-minus-x-squared)"
            ))),
        }
    }
}

impl fmt::Debug for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InitialCondition({})", self.id())
    }
}

/// `h` and its partials at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HValues {
    pub h: f64,
    pub h_x: f64,
    pub h_u: f64,
    pub h_p: f64,
}

/// Catalog of perturbation forms `h(x, u, p, t)`.
///
/// For the conservation-style forms (`ConservationLwr`, `SqrtConservation`)
/// `h` is linear in `p` with coefficient `h_p`, and [`PerturbationForm::eval`]
/// computes `h` as that exact product.  `h - p * h_p` then cancels bit for
/// bit, which is what keeps the solution value constant along characteristics
/// in those scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PerturbationForm {
    None,
    /// h = -(1 - 2u) p: the transport operator itself re-enters as noise.
    ConservationLwr,
    /// h = p: random advection.
    Advective,
    /// h = u: multiplicative forcing of the value.
    Multiplicative,
    /// h = sqrt(u - u^2) p: conservation form with a degenerate coefficient.
    SqrtConservation,
}

impl PerturbationForm {
    pub fn eval(&self, _x: f64, u: f64, p: f64, _t: f64) -> HValues {
        match self {
            PerturbationForm::None => HValues {
                h: 0.0,
                h_x: 0.0,
                h_u: 0.0,
                h_p: 0.0,
            },
            PerturbationForm::ConservationLwr => {
                let hp = -(1.0 - 2.0 * u);
                HValues {
                    h: hp * p,
                    h_x: 0.0,
                    h_u: 2.0 * p,
                    h_p: hp,
                }
            }
            PerturbationForm::Advective => HValues {
                h: p,
                h_x: 0.0,
                h_u: 0.0,
                h_p: 1.0,
            },
            PerturbationForm::Multiplicative => HValues {
                h: u,
                h_x: 0.0,
                h_u: 1.0,
                h_p: 0.0,
            },
            PerturbationForm::SqrtConservation => {
                let uc = u.clamp(SQRT_FORM_EPS, 1.0 - SQRT_FORM_EPS);
                let root = (uc - uc * uc).sqrt();
                HValues {
                    h: root * p,
                    h_x: 0.0,
                    h_u: (1.0 - 2.0 * uc) * p / (2.0 * root),
                    h_p: root,
                }
            }
        }
    }

    /// True when the degenerate form is being evaluated close enough to the
    /// boundary of `[0,1]` that its clamp is active.
    pub fn near_boundary(&self, u: f64) -> bool {
        matches!(self, PerturbationForm::SqrtConservation)
            && !(SQRT_FORM_EPS..=1.0 - SQRT_FORM_EPS).contains(&u)
    }

    pub fn id(&self) -> &'static str {
        match self {
            PerturbationForm::None => "none",
            PerturbationForm::ConservationLwr => "conservation-lwr",
            PerturbationForm::Advective => "advective",
            PerturbationForm::Multiplicative => "multiplicative",
            PerturbationForm::SqrtConservation => "sqrt-conservation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(PerturbationForm::None),
            "conservation-lwr" => Ok(PerturbationForm::ConservationLwr),
            "advective" => Ok(PerturbationForm::Advective),
            "multiplicative" => Ok(PerturbationForm::Multiplicative),
            "sqrt-conservation" => Ok(PerturbationForm::SqrtConservation),
            other => Err(Error::InvalidArgument(format!(
                "unknown perturbation `{other}` (expected none, conservation-lwr, \
                 advective, multiplicative, or sqrt-conservation)"
            ))),
        }
    }
}

impl fmt::Display for PerturbationForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// A perturbation form paired with the kind of path that drives it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub form: PerturbationForm,
    pub noise: NoiseKind,
}

/// Everything needed to pose one pathwise problem: initial profile,
/// perturbation, driving-path kind, and time horizon.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub ic: InitialCondition,
    pub perturbation: PerturbationSpec,
    pub horizon: f64,
}

/// Named scenarios exposed by the CLI, in catalog order.
pub const SCENARIO_NAMES: [&str; 12] = [
    "d1", "d2", "d3", "d4", "s1", "s2", "b1", "b2", "b3", "g1", "g2", "g3",
];

impl Scenario {
    pub fn new(
        ic: InitialCondition,
        form: PerturbationForm,
        noise: NoiseKind,
        horizon: f64,
    ) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        Ok(Self {
            ic,
            perturbation: PerturbationSpec { form, noise },
            horizon,
        })
    }

    /// One of the named catalog scenarios (case-insensitive).
    pub fn named(name: &str, horizon: f64) -> Result<Self> {
        use InitialCondition as Ic;
        use NoiseKind as Nk;
        use PerturbationForm as Pf;
        let (ic, form, noise) = match name.trim().to_ascii_lowercase().as_str() {
            "d1" => (Ic::OneMinusX, Pf::None, Nk::Zero),
            "d2" => (Ic::OneMinusXSquared, Pf::None, Nk::Zero),
            "d3" => (Ic::Identity, Pf::None, Nk::Zero),
            "d4" => (Ic::XMinusXSquared, Pf::None, Nk::Zero),
            "s1" => (Ic::OneMinusX, Pf::ConservationLwr, Nk::Brownian),
            "s2" => (Ic::OneMinusXSquared, Pf::ConservationLwr, Nk::GeometricBrownian),
            "b1" => (Ic::OneMinusXSquared, Pf::Advective, Nk::Brownian),
            "b2" => (Ic::Identity, Pf::Multiplicative, Nk::Brownian),
            "b3" => (Ic::Identity, Pf::SqrtConservation, Nk::Brownian),
            "g1" => (Ic::Identity, Pf::Advective, Nk::GeometricBrownian),
            "g2" => (Ic::Identity, Pf::Multiplicative, Nk::GeometricBrownian),
            "g3" => (Ic::Identity, Pf::SqrtConservation, Nk::GeometricBrownian),
            other => {
                return Err(Error::UnknownId(format!(
                    "unknown scenario `{other}` (expected one of {})",
                    SCENARIO_NAMES.join(", ")
                )))
            }
        };
        Scenario::new(ic, form, noise, horizon)
    }
}

/// Drift contribution of the coupling functional: `-(1 - 2u) p`.
pub fn f_drift(u: f64, p: f64) -> f64 {
    -(1.0 - 2.0 * u) * p
}

/// Flux of the transport model.
pub fn flux(u: f64) -> f64 {
    u * (1.0 - u)
}

/// Characteristic speed, the flux derivative `1 - 2u`.
pub fn characteristic_speed(u: f64) -> f64 {
    1.0 - 2.0 * u
}

/// State of one characteristic: position, carried value, carried slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceState {
    pub xi: f64,
    pub eta: f64,
    pub chi: f64,
}

impl SceState {
    pub fn initial(ic: &InitialCondition, x0: f64) -> Self {
        Self {
            xi: x0,
            eta: ic.value(x0),
            chi: ic.slope(x0),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.xi.is_finite() && self.eta.is_finite() && self.chi.is_finite()
    }
}

/// Additive increment of the characteristic state over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceIncrement {
    pub d_xi: f64,
    pub d_eta: f64,
    pub d_chi: f64,
}

/// One-step increment contributions of the characteristic system against the
/// step `(dt, dm)`, with coefficients evaluated at `state`:
///
/// ```text
/// d xi  = (1 - 2 eta) dt - h_p dm
/// d eta = (h - chi h_p) dm
/// d chi = 2 chi^2 dt + (h_x + h_u chi) dm
/// ```
///
/// The caller owns the choice of evaluation points (this crate's integrator
/// averages left and predicted right evaluations, see the characteristics
/// module).
pub fn sce_rhs(form: &PerturbationForm, state: SceState, t: f64, dt: f64, dm: f64) -> SceIncrement {
    let hv = form.eval(state.xi, state.eta, state.chi, t);
    SceIncrement {
        d_xi: (1.0 - 2.0 * state.eta) * dt - hv.h_p * dm,
        d_eta: (hv.h - state.chi * hv.h_p) * dm,
        d_chi: 2.0 * state.chi * state.chi * dt + (hv.h_x + hv.h_u * state.chi) * dm,
    }
}

/// Result of scenario validation; empty `violations` means valid.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub g_range: (f64, f64),
    pub max_deriv_deviation: f64,
    pub max_partial_deviation: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Max absolute deviation between supplied partials and central differences
/// of `h` (step 1e-6) at `n` seeded random interior points.
pub fn check_partials(
    h: &dyn Fn(f64, f64, f64, f64) -> f64,
    h_x: &dyn Fn(f64, f64, f64, f64) -> f64,
    h_u: &dyn Fn(f64, f64, f64, f64) -> f64,
    h_p: &dyn Fn(f64, f64, f64, f64) -> f64,
    n: usize,
    seed: u64,
) -> f64 {
    const STEP: f64 = 1e-6;
    let mut rng = crate::process::stream_rng(seed, crate::process::DOMAIN_PROBE, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        // Interior points only: the degenerate form has unbounded h_u near
        // u in {0,1}, where a fixed FD step cannot track it.
        let x = rng.random_range(0.0..1.0);
        let u = rng.random_range(0.05..0.95);
        let p = rng.random_range(-2.0..2.0);
        let t = rng.random_range(0.0..1.0);
        let fd_x = (h(x + STEP, u, p, t) - h(x - STEP, u, p, t)) / (2.0 * STEP);
        let fd_u = (h(x, u + STEP, p, t) - h(x, u - STEP, p, t)) / (2.0 * STEP);
        let fd_p = (h(x, u, p + STEP, t) - h(x, u, p - STEP, t)) / (2.0 * STEP);
        worst = worst
            .max((fd_x - h_x(x, u, p, t)).abs())
            .max((fd_u - h_u(x, u, p, t)).abs())
            .max((fd_p - h_p(x, u, p, t)).abs());
    }
    worst
}

/// Checks the scenario invariants and reports every violation found: `g` must
/// map `[0,1]` into `[0,1]`, the supplied derivative must match central
/// differences of `g`, the perturbation partials must match central
/// differences of `h`, and a nontrivial perturbation needs a stochastic
/// driving path.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut violations = Vec::new();

    if !s.horizon.is_finite() || s.horizon <= 0.0 {
        violations.push(format!("horizon must be positive and finite, got {}", s.horizon));
    }

    let mut g_min = f64::INFINITY;
    let mut g_max = f64::NEG_INFINITY;
    let mut max_deriv_dev: f64 = 0.0;
    const N_SAMPLES: usize = 1001;
    const STEP: f64 = 1e-6;
    for i in 0..N_SAMPLES {
        let x = i as f64 / (N_SAMPLES - 1) as f64;
        let g = s.ic.value(x);
        g_min = g_min.min(g);
        g_max = g_max.max(g);
        if x > STEP && x < 1.0 - STEP {
            let fd = (s.ic.value(x + STEP) - s.ic.value(x - STEP)) / (2.0 * STEP);
            max_deriv_dev = max_deriv_dev.max((fd - s.ic.slope(x)).abs());
        }
    }
    if g_min < -1e-12 || g_max > 1.0 + 1e-12 {
        violations.push(format!(
            "initial condition `{}` leaves [0,1]: range [{g_min}, {g_max}]",
            s.ic.id()
        ));
    }
    if max_deriv_dev > 1e-6 {
        violations.push(format!(
            "initial-condition derivative deviates from central differences by {max_deriv_dev:.3e}"
        ));
    }

    let form = s.perturbation.form;
    let max_partial_dev = check_partials(
        &|x, u, p, t| form.eval(x, u, p, t).h,
        &|x, u, p, t| form.eval(x, u, p, t).h_x,
        &|x, u, p, t| form.eval(x, u, p, t).h_u,
        &|x, u, p, t| form.eval(x, u, p, t).h_p,
        200,
        0xC0FFEE,
    );
    if max_partial_dev > 1e-6 {
        violations.push(format!(
            "perturbation partials deviate from central differences by {max_partial_dev:.3e}"
        ));
    }

    if form != PerturbationForm::None && s.perturbation.noise == NoiseKind::Zero {
        violations.push(format!(
            "perturbation `{form}` is driven by the zero path; use a stochastic path kind"
        ));
    }

    ValidationReport {
        violations,
        g_range: (g_min, g_max),
        max_deriv_deviation: max_deriv_dev,
        max_partial_deviation: max_partial_dev,
    }
}
