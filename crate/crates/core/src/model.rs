//! Domain types, physical constants and the normalized-unit conventions.
//!
//! Everything inside the workbench runs in normalized units where the speed
//! of sound is exactly 1. Physical seconds and hertz only appear at the edges
//! (CLI arguments, impulse-response sampling), converted with [`Normalization`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized speed of sound.
pub const C_NORM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConstants {
    /// Physical speed of sound in m/s.
    pub c_phys: f64,
    /// Air density in kg/m^3.
    pub rho0: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            c_phys: 343.0,
            rho0: 1.2,
        }
    }
}

impl PhysicalConstants {
    pub fn new(c_phys: f64, rho0: f64) -> Result<Self> {
        let consts = Self { c_phys, rho0 };
        consts.validate()?;
        Ok(consts)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_phys > 0.0 && self.c_phys.is_finite()) {
            return Err(Error::config(format!(
                "c_phys must be positive, got {}",
                self.c_phys
            )));
        }
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(Error::config(format!(
                "rho0 must be positive, got {}",
                self.rho0
            )));
        }
        Ok(())
    }

    pub fn normalization(&self) -> Normalization {
        Normalization {
            c_phys: self.c_phys,
        }
    }
}

/// Maps between normalized (c = 1) and physical time/frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub c_phys: f64,
}

impl Normalization {
    pub fn new(c_phys: f64) -> Result<Self> {
        if !(c_phys > 0.0 && c_phys.is_finite()) {
            return Err(Error::config(format!(
                "c_phys must be positive, got {c_phys}"
            )));
        }
        Ok(Self { c_phys })
    }

    /// Normalized speed of sound; always 1.
    pub fn c(&self) -> f64 {
        C_NORM
    }

    pub fn to_physical_time(&self, t_norm: f64) -> f64 {
        t_norm / self.c_phys
    }

    pub fn to_normalized_time(&self, t_phys: f64) -> f64 {
        t_phys * self.c_phys
    }

    pub fn to_normalized_frequency(&self, f_phys: f64) -> f64 {
        f_phys / self.c_phys
    }

    pub fn to_physical_frequency(&self, f_norm: f64) -> f64 {
        f_norm * self.c_phys
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub x_min: f64,
    pub x_max: f64,
    /// Normalized time horizon.
    pub t_max: f64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            x_min: -1.0,
            x_max: 1.0,
            t_max: 2.0,
        }
    }
}

impl DomainSpec {
    pub fn new(x_min: f64, x_max: f64, t_max: f64) -> Result<Self> {
        let d = Self {
            x_min,
            x_max,
            t_max,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::config(format!(
                "domain requires x_min < x_max, got [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::config(format!(
                "t_max must be positive, got {}",
                self.t_max
            )));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Rejects sources on or outside the walls.
    pub fn check_source(&self, src: &GaussianSource) -> Result<()> {
        if src.x0 > self.x_min && src.x0 < self.x_max {
            Ok(())
        } else {
            Err(Error::config(format!(
                "source x0 = {} lies outside the open domain ({}, {})",
                src.x0, self.x_min, self.x_max
            )))
        }
    }
}

/// Gaussian pressure pulse released from rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSource {
    pub x0: f64,
    pub sigma0: f64,
}

impl GaussianSource {
    pub fn new(x0: f64, sigma0: f64) -> Result<Self> {
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(Error::config(format!(
                "sigma0 must be positive, got {sigma0}"
            )));
        }
        if !x0.is_finite() {
            return Err(Error::config("source position must be finite"));
        }
        Ok(Self { x0, sigma0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealPole {
    /// Residue `A_k`.
    pub residue: f64,
    /// Pole `lambda_k`; the admittance term is `A_k / (lambda_k - i omega)`.
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexPair {
    /// Real part `B_k` of the residue.
    pub b: f64,
    /// Imaginary part `C_k` of the residue.
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Pole-residue admittance in the variable `-i omega`:
///
/// `Y(w) = Y_inf + sum_k A_k/(lambda_k - i w)
///        + sum_k [(B_k + i C_k)/(alpha_k + i beta_k - i w) + (B_k - i C_k)/(alpha_k - i beta_k - i w)]`
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RationalAdmittance {
    pub y_inf: f64,
    #[serde(default)]
    pub real_poles: Vec<RealPole>,
    #[serde(default)]
    pub complex_pairs: Vec<ComplexPair>,
}

impl RationalAdmittance {
    pub fn constant(y_inf: f64) -> Self {
        Self {
            y_inf,
            ..Self::default()
        }
    }

    /// Number of real poles.
    pub fn q(&self) -> usize {
        self.real_poles.len()
    }

    /// Number of complex-conjugate pole pairs.
    pub fn s(&self) -> usize {
        self.complex_pairs.len()
    }

    /// Accumulator count, `Q + 2S`.
    pub fn n_accumulators(&self) -> usize {
        self.q() + 2 * self.s()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.y_inf.is_finite()
            && self
                .real_poles
                .iter()
                .all(|p| p.residue.is_finite() && p.lambda.is_finite())
            && self.complex_pairs.iter().all(|p| {
                p.b.is_finite() && p.c.is_finite() && p.alpha.is_finite() && p.beta.is_finite()
            });
        if !finite {
            return Err(Error::config("admittance coefficients must be finite"));
        }
        if let Some(p) = self.real_poles.iter().find(|p| p.lambda <= 0.0) {
            return Err(Error::config(format!(
                "unstable real pole lambda = {}",
                p.lambda
            )));
        }
        if let Some(p) = self.complex_pairs.iter().find(|p| p.alpha <= 0.0) {
            return Err(Error::config(format!(
                "unstable complex pole alpha = {}",
                p.alpha
            )));
        }
        Ok(())
    }

    pub fn evaluate(&self, omega: f64) -> Complex64 {
        let s = Complex64::new(0.0, -omega);
        let mut y = Complex64::new(self.y_inf, 0.0);
        for p in &self.real_poles {
            y += p.residue / (p.lambda + s);
        }
        for p in &self.complex_pairs {
            let r = Complex64::new(p.b, p.c);
            let pole = Complex64::new(p.alpha, p.beta);
            y += r / (pole + s) + r.conj() / (pole.conj() + s);
        }
        y
    }
}

/// Boundary condition applied at both walls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundarySpec {
    /// Rigid wall, the `xi -> infinity` limit of the impedance condition.
    Neumann,
    /// `dp/dt = -c xi dp/dn` with specific impedance `xi = Z_s / (rho0 c)`.
    FrequencyIndependent { xi: f64 },
    /// `dp/dn = -rho0 dv_n/dt` with `v_n` reconstructed from accumulators.
    FrequencyDependent { admittance: RationalAdmittance },
}

impl BoundarySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            BoundarySpec::Neumann => Ok(()),
            BoundarySpec::FrequencyIndependent { xi } => {
                if *xi > 0.0 && xi.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config(format!(
                        "impedance xi must be positive, got {xi}"
                    )))
                }
            }
            BoundarySpec::FrequencyDependent { admittance } => admittance.validate(),
        }
    }

    pub fn is_frequency_dependent(&self) -> bool {
        matches!(self, BoundarySpec::FrequencyDependent { .. })
    }

    pub fn admittance(&self) -> Option<&RationalAdmittance> {
        match self {
            BoundarySpec::FrequencyDependent { admittance } => Some(admittance),
            _ => None,
        }
    }
}

/// Plane-wave pressure reflection coefficient of a frequency-independent wall.
pub fn reflection_coefficient(xi: f64) -> f64 {
    (xi - 1.0) / (xi + 1.0)
}

/// d'Alembert solution for a Gaussian pulse released from rest in free field.
pub fn analytic_free_field(x: f64, t: f64, src: &GaussianSource, c: f64) -> f64 {
    let right = (x - src.x0 - c * t) / src.sigma0;
    let left = (x - src.x0 + c * t) / src.sigma0;
    0.5 * (-right * right).exp() + 0.5 * (-left * left).exp()
}

pub fn ic_pressure(x: f64, src: &GaussianSource) -> f64 {
    let u = (x - src.x0) / src.sigma0;
    (-u * u).exp()
}

/// The pulse starts at rest.
pub fn ic_velocity(_x: f64, _src: &GaussianSource) -> f64 {
    0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn src(x0: f64) -> GaussianSource {
        GaussianSource::new(x0, 0.2).unwrap()
    }

    #[test]
    fn free_field_at_origin_is_unity() {
        assert_eq!(analytic_free_field(0.0, 0.0, &src(0.0), 1.0), 1.0);
    }

    #[test]
    fn free_field_after_separation() {
        let v = analytic_free_field(0.5, 0.5, &src(0.0), 1.0);
        assert_relative_eq!(v, 0.5 + 0.5 * (-25.0f64).exp(), epsilon = 1e-15);
        assert!((v - 0.5).abs() < 1e-10);
    }

    #[test]
    fn free_field_decays_at_source_once_pulses_depart() {
        let s = src(0.1);
        let mut prev = analytic_free_field(s.x0, 0.0, &s, 1.0);
        for i in 1..200 {
            let v = analytic_free_field(s.x0, i as f64 * 0.01, &s, 1.0);
            assert!(v <= prev);
            prev = v;
        }
        assert!(prev < 1e-30);
    }

    #[test]
    fn initial_conditions() {
        let s = src(0.3);
        assert_eq!(ic_pressure(0.3, &s), 1.0);
        assert_relative_eq!(ic_pressure(0.5, &s), (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(ic_pressure(0.5, &s), 0.36788, epsilon = 1e-5);
        assert_eq!(ic_velocity(-0.7, &s), 0.0);
    }

    #[test]
    fn time_and_frequency_conversion() {
        let n = Normalization::new(343.0).unwrap();
        assert_eq!(n.c(), 1.0);
        assert_relative_eq!(n.to_physical_time(1.0), 2.9155e-3, epsilon = 1e-7);
        assert_relative_eq!(n.to_normalized_frequency(1000.0), 2.9155, epsilon = 1e-4);
        let t = 0.731;
        assert_relative_eq!(
            n.to_normalized_time(n.to_physical_time(t)),
            t,
            epsilon = 1e-15
        );
        assert!(Normalization::new(0.0).is_err());
    }

    #[test]
    fn invalid_types_are_rejected() {
        assert!(GaussianSource::new(0.0, 0.0).is_err());
        assert!(DomainSpec::new(1.0, -1.0, 1.0).is_err());
        assert!(DomainSpec::new(-1.0, 1.0, 0.0).is_err());
        assert!(PhysicalConstants::new(343.0, -1.0).is_err());
        let d = DomainSpec::default();
        assert!(d.check_source(&src(1.0)).is_err());
        assert!(d.check_source(&src(0.2)).is_ok());
        assert!(BoundarySpec::FrequencyIndependent { xi: 0.0 }
            .validate()
            .is_err());
        let unstable = RationalAdmittance {
            y_inf: 0.1,
            real_poles: vec![RealPole {
                residue: 1.0,
                lambda: -2.0,
            }],
            complex_pairs: vec![],
        };
        assert!(unstable.validate().is_err());
    }

    #[test]
    fn reflection_limits() {
        assert_eq!(reflection_coefficient(1.0), 0.0);
        assert!((reflection_coefficient(1e12) - 1.0).abs() < 1e-11);
    }

    proptest! {
        #[test]
        fn free_field_matches_ic_at_t0(x in -1.0f64..1.0, x0 in -0.5f64..0.5, sigma in 0.05f64..0.5) {
            let s = GaussianSource::new(x0, sigma).unwrap();
            prop_assert_eq!(analytic_free_field(x, 0.0, &s, 1.0), ic_pressure(x, &s));
        }

        #[test]
        fn free_field_starts_at_rest(x in -1.0f64..1.0, x0 in -0.5f64..0.5) {
            let s = src(x0);
            let h = 1e-5;
            let dt = (analytic_free_field(x, h, &s, 1.0) - analytic_free_field(x, -h, &s, 1.0)) / (2.0 * h);
            prop_assert!(dt.abs() <= 1e-8);
        }

        #[test]
        fn free_field_is_symmetric(d in 0.0f64..1.0, t in 0.0f64..2.0, x0 in -0.5f64..0.5) {
            let s = src(x0);
            let a = analytic_free_field(x0 + d, t, &s, 1.0);
            let b = analytic_free_field(x0 - d, t, &s, 1.0);
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }
}
