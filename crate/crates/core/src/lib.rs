//! Pathwise characteristics solver for a scalar traffic-density transport
//! equation under rough perturbations, with a catalog of exact solutions and
//! automated residual verification.
//!
//! The crate is organized around one pipeline: sample or construct a driving
//! path ([`process`]), bind it to an initial profile and perturbation form
//! ([`model`]), integrate the characteristic system and invert the flow into
//! a density surface with stopping-time estimates ([`characteristics`]), and
//! compare against exact solutions ([`closedform`]) or differentiate those
//! solutions directly to confirm they satisfy the transport equation
//! ([`verify`]).

pub mod characteristics;
pub mod closedform;
pub mod error;
pub mod io;
pub mod model;
pub mod process;
pub mod verify;

pub use characteristics::{
    build_surface, detect_tau_inv, estimate_sigma, estimate_sigma_many, integrate_fan,
    integrate_sce, invert_xi, jacobian, linspace, stopping_times, CharacteristicFan,
    InvertedPoint, SolutionSurface, StoppingTimeEstimate, Trajectory, EPS_DET, EXPLOSION_BOUND,
};
pub use closedform::{
    lookup, CatalogId, ClosedFormSolution, FunctionalKind, PathState, ALL_IDS,
};
pub use error::{Error, Result};
pub use io::{
    fan_csv, fmt_flag, fmt_float, paths_csv, residual_csv, sigma_compare_csv, sigma_csv,
    surface_csv, write_atomic,
};
pub use model::{
    validate_scenario, HValues, InitialCondition, PerturbationForm, PerturbationSpec, Scenario,
    SceIncrement, SceState, ValidationReport, SCENARIO_NAMES, SQRT_FORM_EPS,
};
pub use process::{
    bridge_refine, path_integral_exp, sample_brownian, sample_brownian_stream, to_geometric,
    zero_path, NoiseKind, NoisePath, PathFunctional, TimeGrid,
};
pub use verify::{
    convergence_study, cross_validate, driver_for, fault_sensitivity, residual,
    residual_with_fault, sample_probes, sweep_all, sweep_residuals, ConvergenceRow, GridParams,
    ProbeRecord, ResidualProbe, VerificationReport, FAULT_DETECT, FAULT_SIZE, RESIDUAL_TOL,
};
