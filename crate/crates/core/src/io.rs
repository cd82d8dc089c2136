//! CSV emission and atomic file writes.
//!
//! All numeric columns use a fixed 17-significant-digit scientific format so
//! reruns are byte-identical and round-trip through f64 exactly.  Flags are
//! written as 0/1, non-finite values as `inf`, `-inf`, `nan`.

use crate::characteristics::{CharacteristicFan, SolutionSurface};
use crate::error::{Error, Result};
use crate::process::NoisePath;
use crate::verify::VerificationReport;
use std::fs;
use std::io::Write;
use std::path::Path;

pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn fmt_flag(b: bool) -> &'static str {
    if b { "1" } else { "0" }
}

/// Writes `content` to `path` via a temporary file in the same directory plus
/// a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, content: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// `t,W,S` rows of a Brownian path and its derived geometric path.
pub fn paths_csv(w: &NoisePath, s: &NoisePath) -> Result<String> {
    if w.grid.points() != s.grid.points() {
        return Err(Error::GridMismatch(
            "path columns must share one grid".into(),
        ));
    }
    let mut out = String::with_capacity(64 * w.grid.len());
    out.push_str("t,W,S\n");
    for (i, &t) in w.grid.points().iter().enumerate() {
        out.push_str(&fmt_float(t));
        out.push(',');
        out.push_str(&fmt_float(w.values[i]));
        out.push(',');
        out.push_str(&fmt_float(s.values[i]));
        out.push('\n');
    }
    Ok(out)
}

/// `t,x0,xi,eta,chi,alive` rows, one block per launch point.
pub fn fan_csv(fan: &CharacteristicFan) -> String {
    let times = fan.grid.points();
    let mut out = String::with_capacity(128 * fan.len() * times.len());
    out.push_str("t,x0,xi,eta,chi,alive\n");
    for traj in &fan.trajectories {
        for (j, &t) in times.iter().enumerate() {
            let s = &traj.states[j];
            out.push_str(&fmt_float(t));
            out.push(',');
            out.push_str(&fmt_float(traj.x0));
            out.push(',');
            out.push_str(&fmt_float(s.xi));
            out.push(',');
            out.push_str(&fmt_float(s.eta));
            out.push(',');
            out.push_str(&fmt_float(s.chi));
            out.push(',');
            out.push_str(fmt_flag(traj.alive[j]));
            out.push('\n');
        }
    }
    out
}

/// `x,t,u,valid` rows, one block per position.  With `functional` given
/// (one value per time level), a trailing column carries it.
pub fn surface_csv(surface: &SolutionSurface, functional: Option<&[f64]>) -> Result<String> {
    if let Some(f) = functional {
        if f.len() != surface.t.len() {
            return Err(Error::GridMismatch(format!(
                "{} functional values for {} time levels",
                f.len(),
                surface.t.len()
            )));
        }
    }
    let mut out = String::with_capacity(96 * surface.x.len() * surface.t.len());
    match functional {
        Some(_) => out.push_str("x,t,u,valid,functional\n"),
        None => out.push_str("x,t,u,valid\n"),
    }
    for (i, &x) in surface.x.iter().enumerate() {
        for (j, &t) in surface.t.iter().enumerate() {
            out.push_str(&fmt_float(x));
            out.push(',');
            out.push_str(&fmt_float(t));
            out.push(',');
            out.push_str(&fmt_float(surface.u[i][j]));
            out.push(',');
            out.push_str(fmt_flag(surface.valid[i][j]));
            if let Some(f) = functional {
                out.push(',');
                out.push_str(&fmt_float(f[j]));
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// `x,sigma` rows.
pub fn sigma_csv(xs: &[f64], sigma: &[f64]) -> Result<String> {
    if xs.len() != sigma.len() {
        return Err(Error::GridMismatch(format!(
            "{} positions for {} stopping times",
            xs.len(),
            sigma.len()
        )));
    }
    let mut out = String::with_capacity(48 * xs.len());
    out.push_str("x,sigma\n");
    for (x, s) in xs.iter().zip(sigma) {
        out.push_str(&fmt_float(*x));
        out.push(',');
        out.push_str(&fmt_float(*s));
        out.push('\n');
    }
    Ok(out)
}

/// `x,sigma_numeric,sigma_formula` rows.
pub fn sigma_compare_csv(xs: &[f64], numeric: &[f64], formula: &[f64]) -> Result<String> {
    if xs.len() != numeric.len() || xs.len() != formula.len() {
        return Err(Error::GridMismatch(
            "stopping-time columns must have one value per position".into(),
        ));
    }
    let mut out = String::with_capacity(72 * xs.len());
    out.push_str("x,sigma_numeric,sigma_formula\n");
    for (i, x) in xs.iter().enumerate() {
        out.push_str(&fmt_float(*x));
        out.push(',');
        out.push_str(&fmt_float(numeric[i]));
        out.push(',');
        out.push_str(&fmt_float(formula[i]));
        out.push('\n');
    }
    Ok(out)
}

/// `probe,x,t,M,m_dot,residual` rows of a residual sweep.
pub fn residual_csv(report: &VerificationReport) -> String {
    let mut out = String::with_capacity(96 * report.records.len());
    out.push_str("probe,x,t,M,m_dot,residual\n");
    for (i, r) in report.records.iter().enumerate() {
        out.push_str(&i.to_string());
        out.push(',');
        out.push_str(&fmt_float(r.x));
        out.push(',');
        out.push_str(&fmt_float(r.t));
        out.push(',');
        out.push_str(&fmt_float(r.m));
        out.push(',');
        out.push_str(&fmt_float(r.m_dot));
        out.push(',');
        out.push_str(&fmt_float(r.residual));
        out.push('\n');
    }
    out
}
