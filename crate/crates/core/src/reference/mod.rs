//! Ground-truth pressure fields.
//!
//! [`image_source_solution`] is exact for frequency-independent walls;
//! [`solve_time_domain`] is a spectral-element solver that also handles
//! frequency-dependent walls through the accumulator ODEs, and
//! [`reference_ir`] resamples its receiver trace onto an audio-rate grid.

mod resample;
mod sem;

pub use resample::resample_bandlimited;
pub use sem::{
    gll_nodes_weights, solve_time_domain, FieldSnapshotSeries, Mesh, TimeDomainSolution, Walls,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    reflection_coefficient, BoundarySpec, DomainSpec, GaussianSource, Normalization, C_NORM,
};

/// Resolution and stepping controls for the spectral-element solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Grid points per shortest wavelength.
    pub points_per_wavelength: f64,
    /// Polynomial order per element.
    pub order: usize,
    /// Courant number against the smallest node spacing. `None` picks 1.0
    /// for frequency-independent walls and 0.1 when a wall carries an admittance model.
    pub cfl: Option<f64>,
    /// Highest resolved frequency, normalized.
    pub f_max: f64,
    pub rho0: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            points_per_wavelength: 20.0,
            order: 4,
            cfl: None,
            f_max: 1000.0 / 343.0,
            rho0: 1.2,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.points_per_wavelength >= 2.0) {
            return Err(Error::config("points_per_wavelength must be at least 2"));
        }
        if self.order < 1 {
            return Err(Error::config("polynomial order must be at least 1"));
        }
        if let Some(cfl) = self.cfl {
            if !(cfl > 0.0 && cfl <= 1.0) {
                return Err(Error::config(format!("CFL must lie in (0, 1], got {cfl}")));
            }
        }
        if !(self.f_max > 0.0 && self.f_max.is_finite()) || !(self.rho0 > 0.0) {
            return Err(Error::config("f_max and rho0 must be positive"));
        }
        Ok(())
    }

    pub fn effective_cfl(&self, walls: &Walls) -> f64 {
        self.cfl.unwrap_or(if walls.is_frequency_dependent() {
            0.1
        } else {
            1.0
        })
    }

    /// Target node spacing `c / (f_max k)`.
    pub fn dx(&self) -> f64 {
        C_NORM / (self.f_max * self.points_per_wavelength)
    }
}

/// Exact field between two identical frequency-independent walls.
///
/// The initial pulse, restricted to the domain, is split into its two
/// travelling halves; each is unfolded across the walls and every wall
/// crossing scales it by `R = (xi - 1)/(xi + 1)`. `xi = f64::INFINITY` is the
/// rigid wall.
pub fn image_source_solution(
    x: f64,
    t: f64,
    src: &GaussianSource,
    xi: f64,
    domain: &DomainSpec,
) -> Result<f64> {
    if !(xi > 0.0) {
        return Err(Error::config(format!(
            "specific impedance must be positive, got {xi}"
        )));
    }
    if t < 0.0 {
        return Err(Error::config(format!("time must be non-negative, got {t}")));
    }
    let r = if xi.is_infinite() {
        1.0
    } else {
        reflection_coefficient(xi)
    };
    let (a, b) = (domain.x_min, domain.x_max);
    let l = b - a;
    let ct = C_NORM * t;
    let mut p = 0.0;
    for dir in [1.0, -1.0] {
        let shift = dir * ct;
        // unfolded cells overlapping the support [a + shift, b + shift]
        let m_lo = (shift / l).floor() as i64 - 1;
        let m_hi = (shift / l).ceil() as i64 + 1;
        for m in m_lo..=m_hi {
            let amp = r.powi(m.unsigned_abs() as i32);
            if amp.abs() < 1e-12 && m != 0 {
                continue;
            }
            let y = if m.rem_euclid(2) == 0 {
                x + m as f64 * l
            } else {
                a + b - x + m as f64 * l
            };
            let z = y - shift;
            if (a..=b).contains(&z) {
                let u = (z - src.x0) / src.sigma0;
                p += 0.5 * amp * (-u * u).exp();
            }
        }
    }
    Ok(p)
}

/// Receiver trace resampled to `fs` (physical Hz) for `duration` physical seconds.
pub fn reference_ir(
    domain: &DomainSpec,
    src: &GaussianSource,
    bc: &BoundarySpec,
    receiver: f64,
    fs: f64,
    duration: f64,
    solver: &SolverConfig,
    norm: &Normalization,
) -> Result<Vec<f64>> {
    solver.validate()?;
    let f_max_phys = norm.to_physical_frequency(solver.f_max);
    if !(fs > 2.0 * f_max_phys) {
        return Err(Error::config(format!(
            "sample rate {fs} Hz does not exceed twice the resolved content {f_max_phys:.1} Hz"
        )));
    }
    let t_out: Vec<f64> = crate::metrics::sample_times(fs, duration)?
        .into_iter()
        .map(|t| norm.to_normalized_time(t))
        .collect();
    let Some(&t_last) = t_out.last() else {
        return Ok(Vec::new());
    };
    if t_last > domain.t_max * (1.0 + 1e-12) {
        return Err(Error::config(format!(
            "duration maps to t = {t_last:.4} beyond the simulated horizon {}",
            domain.t_max
        )));
    }
    reference_trace(
        domain,
        src,
        &Walls::both(bc.clone()),
        receiver,
        &t_out,
        solver,
    )
}

/// Solver trace at `receiver`, band-limited interpolated onto the
/// non-decreasing normalized times `t_out`.
pub fn reference_trace(
    domain: &DomainSpec,
    src: &GaussianSource,
    walls: &Walls,
    receiver: f64,
    t_out: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<f64>> {
    let Some(&t_last) = t_out.last() else {
        return Ok(Vec::new());
    };
    let mesh = Mesh::new(domain, solver)?;
    // run past the last sample so the interpolation kernel never reflects there
    let dt_guess = solver.effective_cfl(walls) * mesh.dx_min() / C_NORM;
    let margin = (resample::HALF_WIDTH as f64 + 2.0) * dt_guess;
    let sol = solve_time_domain(
        domain,
        src,
        walls,
        solver,
        &[receiver],
        t_last + margin,
        None,
    )?;
    resample_bandlimited(&sol.traces[0], sol.dt, t_out)
}
